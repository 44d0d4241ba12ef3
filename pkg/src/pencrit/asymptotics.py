"""Limiting objects behind the bounded-penalty overfitting probability.

For a strictly nested pair m_star < m_tilde, the joint limit of the two
estimators has covariance ``Sigma(m_star, m_tilde)`` built from the blocks
F^-1 G F^-1 with the cross score-covariance block, and twice the contrast gap
between the two fitted models converges to a weighted sum of chi-squares
``W = sum_j lambda_j Z_j^2`` whose weights are the (real) eigenvalues of
``Q Sigma`` with ``Q = blockdiag(-F(m_star), F(m_tilde))``.

A bounded penalty kappa then overfits in the limit with probability
``P(W > 2 kappa (|m_tilde| - |m_star|))``, which is estimated here by Monte
Carlo.

All matrices are on the criterion scale: the per-term values whose sum (with
the Gaussian 1/2 factor) is the penalized contrast.  Note this differs from
``estimate_sandwich``, which reports the unhalved Gaussian convention; the
sandwich Sigma itself is identical on both scales.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .contrast import contrast
from .errors import ConfigError, SingularMatrixError
from .estimate import FitOptions, fit_mce
from .families import FamilySpec, ModelSubset
from .simulate import RngStream, Trajectory

_EIG_REL_TOL = 1e-8
_COUNT_REL_TOL = 1e-6


@dataclass(frozen=True)
class JointLimit:
    """Sigma(m*, m~), Q = blockdiag(-F(m*), F(m~)), eigenvalues of Q Sigma."""

    m_star: ModelSubset
    m_tilde: ModelSubset
    sigma_joint: np.ndarray
    q_matrix: np.ndarray
    eigenvalues: np.ndarray        # sorted ascending
    counts: tuple                  # (negatives, zeros, positives)

    @property
    def delta(self) -> int:
        return self.m_tilde.size - self.m_star.size

    def to_json(self) -> str:
        return json.dumps(
            {
                "m_star": list(self.m_star.indices),
                "m_tilde": list(self.m_tilde.indices),
                "sigma_joint": self.sigma_joint.tolist(),
                "q_matrix": self.q_matrix.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "counts": {"negative": self.counts[0], "zero": self.counts[1],
                           "positive": self.counts[2]},
            },
            indent=2,
        )


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _assemble(f_star, f_tilde, g_star, g_tilde, g_cross, m_star, m_tilde):
    k1, k2 = f_star.shape[0], f_tilde.shape[0]
    for name, mat, k in (("F(m*)", f_star, k1), ("F(m~)", f_tilde, k2),
                         ("G(m*)", g_star, k1), ("G(m~)", g_tilde, k2)):
        if mat.shape != (k, k):
            raise ConfigError(f"{name} has shape {mat.shape}, expected ({k},{k})")
    if g_cross.shape != (k1, k2):
        raise ConfigError(f"G(m*,m~) has shape {g_cross.shape}, expected ({k1},{k2})")
    try:
        fs_inv = np.linalg.inv(f_star)
        ft_inv = np.linalg.inv(f_tilde)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"singular F block: {exc}") from exc

    a11 = fs_inv @ g_star @ fs_inv
    a12 = fs_inv @ g_cross @ ft_inv
    a22 = ft_inv @ g_tilde @ ft_inv
    sigma = np.block([[a11, a12], [a12.T, a22]])
    sigma = 0.5 * (sigma + sigma.T)

    q = np.zeros((k1 + k2, k1 + k2))
    q[:k1, :k1] = -f_star
    q[k1:, k1:] = f_tilde

    # similarity-symmetrized form guarantees a real, ordered spectrum
    root = _psd_sqrt(sigma)
    lam = np.linalg.eigvalsh(root @ q @ root)

    # real-spectrum assertion on the raw product.  Repeated eigenvalues of the
    # nonsymmetric product can split into conjugate pairs of size eps^(1/k),
    # so when the strict imaginary tolerance trips we fall back to checking
    # that the raw real parts agree with the (exactly real) symmetric spectrum.
    raw = np.linalg.eigvals(q @ sigma)
    scale = max(1.0, float(np.max(np.abs(raw))))
    if float(np.max(np.abs(raw.imag))) > _EIG_REL_TOL * scale:
        cluster_tol = 10.0 * scale * math.sqrt(np.finfo(float).eps)
        gap = np.max(np.abs(np.sort(raw.real) - lam))
        if float(np.max(np.abs(raw.imag))) > cluster_tol or gap > cluster_tol:
            raise SingularMatrixError("Q Sigma has non-real eigenvalues")
    # sign-counting tolerance is looser than the realness tolerance: empirical
    # blocks built from n-term score sums leave O(1e-7)-level residue on the
    # structurally zero eigenvalues of nested pairs
    tol = max(_COUNT_REL_TOL * float(np.max(np.abs(lam), initial=0.0)), 1e-12)
    neg = int(np.sum(lam < -tol))
    pos = int(np.sum(lam > tol))
    zero = lam.shape[0] - neg - pos
    return JointLimit(
        m_star=m_star, m_tilde=m_tilde, sigma_joint=sigma, q_matrix=q,
        eigenvalues=np.sort(lam), counts=(neg, zero, pos),
    )


def _require_nested(m_star: ModelSubset, m_tilde: ModelSubset):
    if not (m_tilde.contains(m_star) and m_tilde.size > m_star.size):
        raise ConfigError(
            f"need m* strictly nested in m~; got {m_star.label()} vs {m_tilde.label()}"
        )


def joint_limit_from_population(
    f_star, f_tilde, g_star, g_tilde, g_cross,
    m_star: ModelSubset = None, m_tilde: ModelSubset = None,
) -> JointLimit:
    """Assemble the joint limit from user-supplied population matrices."""
    f_star = np.asarray(f_star, float)
    f_tilde = np.asarray(f_tilde, float)
    g_star = np.asarray(g_star, float)
    g_tilde = np.asarray(g_tilde, float)
    g_cross = np.asarray(g_cross, float)
    k1, k2 = f_star.shape[0], f_tilde.shape[0]
    if m_star is None:
        m_star = ModelSubset(tuple(range(1, k1 + 1)))
    if m_tilde is None:
        m_tilde = ModelSubset(tuple(range(1, k1 + k2 - k1 + 1)))  # placeholder 1..k2
    if m_tilde.size <= m_star.size:
        raise ConfigError("need |m*| < |m~| for a strictly nested pair")
    return _assemble(f_star, f_tilde, g_star, g_tilde, g_cross, m_star, m_tilde)


def joint_limit_matrices(
    spec: FamilySpec,
    traj: Trajectory,
    m_star: ModelSubset,
    m_tilde: ModelSubset,
    fit=None,
    options: FitOptions = FitOptions(),
) -> JointLimit:
    """Empirical joint limit from per-term score rows at theta_hat(m_tilde).

    Both blocks are evaluated at the richer model's estimate so that the
    cross block uses a common consistent point.
    """
    _require_nested(m_star, m_tilde)
    m_star.validate_for(spec)
    m_tilde.validate_for(spec)
    if fit is None:
        fit = fit_mce(spec, traj, m_tilde, options)
    cv = contrast(spec, traj, fit.theta_hat, want=2, per_term=False, scores=True)
    n = traj.n
    fs = m_star.free()
    ft = m_tilde.free()
    hess = cv.hessian
    sc = cv.scores
    f_star = hess[np.ix_(fs, fs)] / n
    f_tilde = hess[np.ix_(ft, ft)] / n
    g_star = sc[:, fs].T @ sc[:, fs] / n
    g_tilde = sc[:, ft].T @ sc[:, ft] / n
    g_cross = sc[:, fs].T @ sc[:, ft] / n
    return _assemble(f_star, f_tilde, g_star, g_tilde, g_cross, m_star, m_tilde)


def overfit_probability(
    jl: JointLimit,
    kappa_limit: float,
    delta: int = None,
    n_draws: int = 100_000,
    rng: RngStream = None,
    chunk: int = 200_000,
):
    """Monte Carlo estimate of P(W > 2 kappa delta) with binomial stderr."""
    if not math.isfinite(kappa_limit) or kappa_limit < 0:
        raise ConfigError("kappa_limit must be finite and nonnegative")
    if delta is None:
        delta = jl.delta
    if n_draws < 10_000:
        raise ConfigError("n_draws must be at least 10^4")
    if rng is None:
        rng = RngStream(0)
    gen = rng.generator()
    lam = jl.eigenvalues
    threshold = 2.0 * kappa_limit * delta
    hits = 0
    done = 0
    while done < n_draws:
        take = min(chunk, n_draws - done)
        z = gen.standard_normal((take, lam.shape[0]))
        w = (z * z) @ lam
        hits += int(np.sum(w > threshold))
        done += take
    p = hits / n_draws
    se = math.sqrt(max(p * (1.0 - p), 1.0 / n_draws) / n_draws)
    return p, se
