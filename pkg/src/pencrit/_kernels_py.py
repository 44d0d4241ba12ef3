"""Pure-numpy contrast kernels (fallback backend).

Each kernel evaluates, for one family and one full trajectory, the per-term
contrast values together with (optionally) the gradient, Hessian and per-term
score rows with respect to the full parameter vector.  The Gaussian families
return the per-term values *including* the 1/2 factor, so that
``total = fsum(per_term)`` is the penalized-criterion contrast; gradients,
Hessians and scores are on that same scale.

The compiled backend in ``_ckernels`` implements the same contract with
explicit loops and Kahan-compensated accumulation.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

BACKEND_NAME = "python"


def _lag_column(y: np.ndarray, k: int) -> np.ndarray:
    """y shifted by k with zero truncation for pre-sample indices."""
    out = np.zeros_like(y, dtype=float)
    if k < y.shape[0]:
        out[k:] = y[: y.shape[0] - k]
    return out


def _design(y: np.ndarray, lags: int, transform=None) -> np.ndarray:
    """Columns [1, y_{t-1}, ..., y_{t-lags}] with zero truncation."""
    n = y.shape[0]
    cols = [np.ones(n)]
    base = y if transform is None else transform(y)
    for k in range(1, lags + 1):
        cols.append(_lag_column(base, k))
    return np.column_stack(cols)


def arx_terms(y, x, theta, p, q, h_floor, order, want_scores):
    n = y.shape[0]
    d = 2 + p + q
    vmean = _design(y, p)
    if q > 0:
        xcol = x[:, 0]
        for k in range(1, q + 1):
            vmean = np.column_stack([vmean, _lag_column(xcol, k)])
    beta = theta[: 1 + p + q]
    sigma = theta[-1]
    h = max(sigma * sigma, h_floor)
    clamped = sigma * sigma < h_floor
    e = y - vmean @ beta
    per_term = 0.5 * (e * e / h + np.log(h))
    grad = hess = scores = None
    if order >= 1 or want_scores:
        sc = np.empty((n, d))
        sc[:, : d - 1] = -(e / h)[:, None] * vmean
        sc[:, d - 1] = 0.0 if clamped else (1.0 / sigma) * (1.0 - e * e / h)
        if want_scores:
            scores = sc
        if order >= 1:
            grad = sc.sum(axis=0)
    if order >= 2:
        hess = np.zeros((d, d))
        hess[: d - 1, : d - 1] = vmean.T @ vmean / h
        if not clamped:
            hess[: d - 1, d - 1] = hess[d - 1, : d - 1] = (
                2.0 / sigma**3
            ) * (vmean.T @ e)
            hess[d - 1, d - 1] = float(np.sum(3.0 * e * e / sigma**4 - 1.0 / (sigma * sigma)))
    return per_term, grad, hess, scores


def arch_terms(y, theta, p, h_floor, order, want_scores):
    n = y.shape[0]
    d = 1 + p
    w = _design(y, p, transform=np.square)
    h_raw = w @ theta
    clamped = h_raw < h_floor
    h = np.where(clamped, h_floor, h_raw)
    y2 = y * y
    per_term = 0.5 * (y2 / h + np.log(h))
    grad = hess = scores = None
    if order >= 1 or want_scores:
        u = 0.5 * (1.0 / h - y2 / (h * h))
        u[clamped] = 0.0
        sc = u[:, None] * w
        if want_scores:
            scores = sc
        if order >= 1:
            grad = sc.sum(axis=0)
    if order >= 2:
        v = 0.5 * (-1.0 / (h * h) + 2.0 * y2 / h**3)
        v[clamped] = 0.0
        hess = (w * v[:, None]).T @ w
        hess = 0.5 * (hess + hess.T)
    return per_term, grad, hess, scores


def _poisson_combine(y, lam_raw, dlam, d2lam_pairs, c_floor, order, want_scores, d):
    """Assemble the Poisson contrast pieces for a scalar intensity series.

    dlam: (n, d) intensity gradients; d2lam_pairs: list of (i, j, column)
    giving the nonzero second-derivative columns of the intensity.
    """
    n = y.shape[0]
    clamped = lam_raw < c_floor
    lam = np.where(clamped, c_floor, lam_raw)
    per_term = lam - y * np.log(lam)
    grad = hess = scores = None
    if order >= 1 or want_scores:
        u = 1.0 - y / lam
        dl = dlam.copy()
        dl[clamped] = 0.0
        sc = u[:, None] * dl
        if want_scores:
            scores = sc
        if order >= 1:
            grad = sc.sum(axis=0)
    if order >= 2:
        v = y / (lam * lam)
        dl = dlam.copy()
        dl[clamped] = 0.0
        hess = (dl * v[:, None]).T @ dl
        if d2lam_pairs:
            u = 1.0 - y / lam
            u = np.where(clamped, 0.0, u)
            for i, j, col in d2lam_pairs:
                s = float(np.dot(u, col))
                hess[i, j] += s
                if i != j:
                    hess[j, i] += s
        hess = 0.5 * (hess + hess.T)
    return per_term, grad, hess, scores


def ingarch_p_terms(y, theta, p, c_floor, order, want_scores):
    yf = y.astype(float)
    v = _design(yf, p)
    lam_raw = v @ theta
    return _poisson_combine(yf, lam_raw, v, [], c_floor, order, want_scores, 1 + p)


def _ar1_filter(b1, seed, driver):
    """z_t = driver_t + b1 * z_{t-1} with z_0 = seed, returned for t = 1..n."""
    out, _ = lfilter([1.0], [1.0, -b1], driver, zi=np.array([b1 * seed]))
    return out


def ingarch_11_terms(y, theta, c_floor, order, want_scores):
    """INGARCH(1,1): lambda_t = a0 + a1 Y_{t-1} + b1 lambda_{t-1}.

    The truncated-past recursion is seeded at lambda_0 = a0 / (1 - b1); its
    derivative recursions are first-order linear and solved with lfilter.
    """
    yf = y.astype(float)
    n = yf.shape[0]
    a0, a1, b1 = theta
    omb = 1.0 - b1
    seed = a0 / omb
    ylag = _lag_column(yf, 1)

    lam = _ar1_filter(b1, seed, a0 + a1 * ylag)
    dlam = np.empty((n, 3))
    dlam[:, 0] = 1.0 / omb  # fixed point of d_t = 1 + b1 d_{t-1} from seed 1/omb
    dlam[:, 1] = _ar1_filter(b1, 0.0, ylag)
    lam_prev = np.concatenate(([seed], lam[:-1]))
    dlam[:, 2] = _ar1_filter(b1, a0 / omb**2, lam_prev)

    d2_pairs = []
    if order >= 2:
        dlam_prev_a0 = np.full(n, 1.0 / omb)
        dlam_prev_a1 = np.concatenate(([0.0], dlam[:-1, 1]))
        dlam_prev_b1 = np.concatenate(([a0 / omb**2], dlam[:-1, 2]))
        h_a0b1 = _ar1_filter(b1, 1.0 / omb**2, dlam_prev_a0)
        h_a1b1 = _ar1_filter(b1, 0.0, dlam_prev_a1)
        h_b1b1 = _ar1_filter(b1, 2.0 * a0 / omb**3, 2.0 * dlam_prev_b1)
        d2_pairs = [(0, 2, h_a0b1), (1, 2, h_a1b1), (2, 2, h_b1b1)]

    return _poisson_combine(yf, lam, dlam, d2_pairs, c_floor, order, want_scores, 3)


def biv_ingarch_terms(y, theta, c_floor, order, want_scores):
    """Bivariate linear INGARCH(1): lambda_t = a0 + A Y_{t-1}, theta of length 6."""
    yf = y.astype(float).reshape(-1, 2)
    n = yf.shape[0]
    y1l = _lag_column(yf[:, 0], 1)
    y2l = _lag_column(yf[:, 1], 1)
    ones = np.ones(n)
    zeros = np.zeros(n)
    # component 1 uses coords (a0_1, A11, A12) = (0, 2, 3); component 2 -> (1, 4, 5)
    v1 = np.column_stack([ones, zeros, y1l, y2l, zeros, zeros])
    v2 = np.column_stack([zeros, ones, zeros, zeros, y1l, y2l])
    p1 = _poisson_combine(yf[:, 0], v1 @ theta, v1, [], c_floor, order, want_scores, 6)
    p2 = _poisson_combine(yf[:, 1], v2 @ theta, v2, [], c_floor, order, want_scores, 6)
    per_term = p1[0] + p2[0]
    grad = None if p1[1] is None else p1[1] + p2[1]
    hess = None if p1[2] is None else p1[2] + p2[2]
    scores = None if p1[3] is None else p1[3] + p2[3]
    return per_term, grad, hess, scores


def contrast_terms(kind, y, x, theta, p, q, h_floor, c_floor, order, want_scores):
    """Dispatch to the family kernel.  ``kind`` is the FamilyKind value string."""
    theta = np.asarray(theta, dtype=float)
    if kind == "ARX":
        return arx_terms(np.asarray(y, float), x, theta, p, q, h_floor, order, want_scores)
    if kind == "ARCH":
        return arch_terms(np.asarray(y, float), theta, p, h_floor, order, want_scores)
    if kind == "INGARCH_P":
        return ingarch_p_terms(np.asarray(y), theta, p, c_floor, order, want_scores)
    if kind == "INGARCH_11":
        return ingarch_11_terms(np.asarray(y), theta, c_floor, order, want_scores)
    if kind == "BIV_INGARCH":
        return biv_ingarch_terms(np.asarray(y), theta, c_floor, order, want_scores)
    raise ValueError(f"unknown family kind {kind!r}")
