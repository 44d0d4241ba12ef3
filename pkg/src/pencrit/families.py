"""Built-in parametric families, their conditional recursions and subset spaces.

A family fixes the functional form of the conditional mean (and conditional
variance or intensity) together with a compact box for the full parameter
vector.  Candidate models are subsets of parameter coordinates; coordinates
outside a subset are pinned to zero.

Built-in families
-----------------
ARX(p, q)      theta = (c, a_1..a_p, b_1..b_q, sigma); constant volatility.
ARCH(p)        theta = (a_0, a_1..a_p); H_t = a_0 + sum a_i Y_{t-i}^2.
INGARCH_P(p)   theta = (a_0, a_1..a_p); lambda_t = a_0 + sum a_i Y_{t-i}.
INGARCH_11     theta = (a_0, a_1, b_1); lambda_t = a_0 + a_1 Y_{t-1} + b_1 lambda_{t-1}.
BIV_INGARCH    theta = (a_01, a_02, A_11, A_12, A_21, A_22); 2-dim counts,
               lambda_t = a_0 + A Y_{t-1}.

Unavailable past values (time indices <= 0) are treated as exactly zero when
evaluating conditionals ("truncated past").  Conditional variances are clamped
below at ``h_floor`` and intensities at ``c_floor``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_H_FLOOR = 1e-6
DEFAULT_C_FLOOR = 1e-6

# Default box bounds (see the README for rationale):
#   location intercept c: [-10, 10]
#   AR / covariate lag coefficients: [-0.99, 0.99]
#   sigma and variance/intensity intercepts: [0.01, 10]
#   ARCH / INGARCH lag coefficients: [0, 0.99] (nonnegativity keeps H, lambda >= 0)
_LOC_INTERCEPT = (-10.0, 10.0)
_LAG = (-0.99, 0.99)
_POS_INTERCEPT = (0.01, 10.0)
_NONNEG_LAG = (0.0, 0.99)


class FamilyKind(enum.Enum):
    ARX = "ARX"
    ARCH = "ARCH"
    INGARCH_P = "INGARCH_P"
    INGARCH_11 = "INGARCH_11"
    BIV_INGARCH = "BIV_INGARCH"


class EnumerationPolicy(enum.Enum):
    ALL_SUBSETS = "ALL_SUBSETS"
    HIERARCHICAL_LAGS = "HIERARCHICAL_LAGS"
    EXPLICIT_LIST = "EXPLICIT_LIST"


_COUNT_KINDS = {FamilyKind.INGARCH_P, FamilyKind.INGARCH_11, FamilyKind.BIV_INGARCH}


def _default_layout(kind: FamilyKind, p: int, q: int):
    """Coordinate names and default box for a family, in storage order."""
    if kind is FamilyKind.ARX:
        names = ["c"] + [f"a{i}" for i in range(1, p + 1)] + [
            f"b{j}" for j in range(1, q + 1)
        ] + ["sigma"]
        box = [_LOC_INTERCEPT] + [_LAG] * (p + q) + [_POS_INTERCEPT]
    elif kind is FamilyKind.ARCH:
        names = ["a0"] + [f"a{i}" for i in range(1, p + 1)]
        box = [_POS_INTERCEPT] + [_NONNEG_LAG] * p
    elif kind is FamilyKind.INGARCH_P:
        names = ["a0"] + [f"a{i}" for i in range(1, p + 1)]
        box = [_POS_INTERCEPT] + [_NONNEG_LAG] * p
    elif kind is FamilyKind.INGARCH_11:
        names = ["a0", "a1", "b1"]
        box = [_POS_INTERCEPT, _NONNEG_LAG, _NONNEG_LAG]
    elif kind is FamilyKind.BIV_INGARCH:
        names = ["a0_1", "a0_2", "A11", "A12", "A21", "A22"]
        box = [_POS_INTERCEPT, _POS_INTERCEPT] + [_NONNEG_LAG] * 4
    else:  # pragma: no cover
        raise ConfigError(f"unknown family kind {kind}")
    return names, box


@dataclass(frozen=True)
class FamilySpec:
    """A parametric model family with full dimension d and parameter box.

    Immutable after construction; safe to share across threads.
    """

    kind: FamilyKind
    p: int = 1
    q: int = 0
    param_box: tuple = None  # tuple of (lo, hi) pairs, length d
    h_floor: float = DEFAULT_H_FLOOR
    c_floor: float = DEFAULT_C_FLOOR

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ConfigError("lag orders must be nonnegative")
        if self.kind is not FamilyKind.ARX and self.q != 0:
            raise ConfigError(f"{self.kind.value} takes no covariate lags")
        if self.kind is FamilyKind.INGARCH_11 and self.p != 1:
            raise ConfigError("INGARCH_11 is fixed at p=1")
        if self.kind is FamilyKind.BIV_INGARCH and self.p != 1:
            raise ConfigError("BIV_INGARCH is fixed at p=1")
        if self.h_floor <= 0 or self.c_floor <= 0:
            raise ConfigError("floors must be strictly positive")
        names, default_box = _default_layout(self.kind, self.p, self.q)
        box = self.param_box
        if box is None:
            box = tuple(default_box)
        else:
            box = tuple((float(lo), float(hi)) for lo, hi in box)
            if len(box) != len(names):
                raise ConfigError(
                    f"param_box has {len(box)} intervals, expected {len(names)}"
                )
            for name, (lo, hi) in zip(names, box):
                if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                    raise ConfigError(f"empty or unbounded box interval for {name}")
            for i, name in enumerate(names):
                if name in ("sigma", "a0", "a0_1", "a0_2") and box[i][0] <= 0:
                    raise ConfigError(
                        f"scale/intercept coordinate {name} needs a positive lower bound"
                    )
        object.__setattr__(self, "param_box", box)

    # -- derived structure ---------------------------------------------------

    @property
    def param_names(self) -> tuple:
        return tuple(_default_layout(self.kind, self.p, self.q)[0])

    @property
    def param_dim(self) -> int:
        return len(self.param_box)

    @property
    def obs_dim(self) -> int:
        return 2 if self.kind is FamilyKind.BIV_INGARCH else 1

    @property
    def cov_dim(self) -> int:
        return 1 if (self.kind is FamilyKind.ARX and self.q > 0) else 0

    @property
    def is_count(self) -> bool:
        return self.kind in _COUNT_KINDS

    def box_arrays(self):
        box = np.asarray(self.param_box, dtype=float)
        return box[:, 0].copy(), box[:, 1].copy()

    def contains(self, theta, atol: float = 0.0) -> bool:
        lo, hi = self.box_arrays()
        th = np.asarray(theta, dtype=float)
        return bool(np.all(th >= lo - atol) and np.all(th <= hi + atol))

    def validate_theta(self, theta, allow_pinned: bool = False) -> np.ndarray:
        """Check shape and box membership; returns theta as a float array.

        With ``allow_pinned`` a coordinate may also be exactly zero even when
        the box excludes zero — the convention for coordinates pinned by a
        subset (e.g. sigma outside the candidate model).
        """
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.param_dim,):
            raise ConfigError(
                f"theta has shape {th.shape}, expected ({self.param_dim},)"
            )
        lo, hi = self.box_arrays()
        ok = (th >= lo - 1e-12) & (th <= hi + 1e-12)
        if allow_pinned:
            ok |= th == 0.0
        if not bool(np.all(ok)):
            raise ConfigError("theta lies outside the parameter box")
        return th

    # -- config serialization ------------------------------------------------

    def to_config(self) -> str:
        """Render as a TOML document (the family config file format)."""
        lines = [
            f'kind = "{self.kind.value}"',
            f"p = {self.p}",
            f"q = {self.q}",
            f"h_floor = {self.h_floor!r}",
            f"c_floor = {self.c_floor!r}",
            "",
            "[box]",
        ]
        for name, (lo, hi) in zip(self.param_names, self.param_box):
            lines.append(f"{name} = [{lo!r}, {hi!r}]")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "FamilySpec":
        data = _load_toml(text)
        try:
            kind = FamilyKind(data["kind"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad or missing family kind: {exc}") from exc
        p = int(data.get("p", 1))
        q = int(data.get("q", 0))
        spec = cls(
            kind=kind,
            p=p,
            q=q,
            h_floor=float(data.get("h_floor", DEFAULT_H_FLOOR)),
            c_floor=float(data.get("c_floor", DEFAULT_C_FLOOR)),
        )
        box_cfg = data.get("box")
        if box_cfg:
            box = []
            for name in spec.param_names:
                if name not in box_cfg:
                    raise ConfigError(f"box is missing coordinate {name}")
                lo, hi = box_cfg[name]
                box.append((float(lo), float(hi)))
            spec = cls(kind=kind, p=p, q=q, param_box=tuple(box),
                       h_floor=spec.h_floor, c_floor=spec.c_floor)
        return spec


def _load_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except Exception as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


@dataclass(frozen=True, order=True)
class ModelSubset:
    """An ordered subset m of parameter coordinates {1, ..., d} (1-based)."""

    indices: tuple = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ConfigError(f"subset indices must be strictly increasing: {idx}")
        if idx and idx[0] < 1:
            raise ConfigError("subset indices are 1-based")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return len(self.indices)

    def free(self) -> np.ndarray:
        """0-based coordinate positions of the subset."""
        return np.asarray(self.indices, dtype=int) - 1

    def contains(self, other: "ModelSubset") -> bool:
        return set(other.indices) <= set(self.indices)

    def validate_for(self, spec: FamilySpec):
        if self.indices and self.indices[-1] > spec.param_dim:
            raise ConfigError(
                f"subset index {self.indices[-1]} exceeds d={spec.param_dim}"
            )

    def label(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"

    @classmethod
    def from_label(cls, text: str) -> "ModelSubset":
        body = text.strip().strip("{}")
        if not body:
            return cls(())
        return cls(tuple(int(tok) for tok in body.split(",")))


def project_to_subset(theta, m: ModelSubset) -> np.ndarray:
    """Zero every coordinate outside m; idempotent."""
    th = np.array(theta, dtype=float, copy=True)
    mask = np.zeros(th.shape[0], dtype=bool)
    free = m.free()
    if free.size and free.max() >= th.shape[0]:
        raise ConfigError("subset index exceeds parameter dimension")
    mask[free] = True
    th[~mask] = 0.0
    return th


def support_subset(theta, mandatory=()) -> ModelSubset:
    """Smallest subset containing the nonzero coordinates of theta plus mandatory."""
    th = np.asarray(theta, dtype=float)
    idx = {i + 1 for i in np.nonzero(th)[0]}
    idx.update(int(i) for i in mandatory)
    return ModelSubset(tuple(sorted(idx)))


def default_mandatory(spec: FamilySpec) -> tuple:
    """Coordinates every candidate should contain (intercept and scale)."""
    names = spec.param_names
    keep = [i + 1 for i, n in enumerate(names)
            if n in ("c", "sigma", "a0", "a0_1", "a0_2")]
    return tuple(keep)


def enumerate_models(
    spec: FamilySpec,
    policy: EnumerationPolicy,
    mandatory=(),
    explicit=None,
) -> list:
    """Deterministic candidate list: ordered by size, then lexicographically.

    Every emitted subset contains ``mandatory``.  HIERARCHICAL_LAGS emits the
    nested Y-lag models 0..p (covariate lags, when present, are controlled by
    the mandatory set).
    """
    d = spec.param_dim
    mandatory = tuple(sorted(set(int(i) for i in mandatory)))
    for i in mandatory:
        if not 1 <= i <= d:
            raise ConfigError(f"mandatory index {i} out of range 1..{d}")

    if policy is EnumerationPolicy.ALL_SUBSETS:
        if d > 20:
            raise ConfigError(f"ALL_SUBSETS refused for d={d} > 20")
        rest = [i for i in range(1, d + 1) if i not in mandatory]
        subsets = []
        for r in range(len(rest) + 1):
            for combo in itertools.combinations(rest, r):
                subsets.append(ModelSubset(tuple(sorted(mandatory + combo))))
    elif policy is EnumerationPolicy.HIERARCHICAL_LAGS:
        names = spec.param_names
        lag_positions = [i + 1 for i, n in enumerate(names)
                         if n.startswith("a") and n != "a0" and n[1:].isdigit()]
        if spec.kind is FamilyKind.INGARCH_11:
            lag_positions = [2, 3]  # a1 then b1
        subsets = []
        for k in range(len(lag_positions) + 1):
            idx = tuple(sorted(set(mandatory) | set(lag_positions[:k])))
            subsets.append(ModelSubset(idx))
    elif policy is EnumerationPolicy.EXPLICIT_LIST:
        if explicit is None:
            raise ConfigError("EXPLICIT_LIST needs an explicit subset list")
        subsets = []
        for m in explicit:
            if not isinstance(m, ModelSubset):
                m = ModelSubset(tuple(m))
            subsets.append(ModelSubset(tuple(sorted(set(m.indices) | set(mandatory)))))
    else:  # pragma: no cover
        raise ConfigError(f"unknown enumeration policy {policy}")

    for m in subsets:
        m.validate_for(spec)
    unique = sorted(set(subsets), key=lambda m: (m.size, m.indices))
    return unique


def _lagged(values, t: int, k: int) -> float:
    """values[t-k] with 1-based t and zero truncation for indices <= 0."""
    idx = t - k
    return float(values[idx - 1]) if idx >= 1 else 0.0


def eval_conditionals(spec: FamilySpec, theta, traj_prefix, t: int):
    """Conditional mean and scale (or intensity) at time index t (1-based).

    Only observations with index < t are used; indices <= 0 are truncated to
    zero.  Returns ``(f, H)`` for real-valued families and ``(lam, lam)`` for
    count families, with floors applied.
    """
    th = spec.validate_theta(theta, allow_pinned=True)
    y = np.asarray(traj_prefix.obs, dtype=float)
    n = y.shape[0]
    if not 1 <= t <= n + 1:
        raise IndexError(f"time index t={t} out of range 1..{n + 1}")

    kind, p, q = spec.kind, spec.p, spec.q
    if kind is FamilyKind.ARX:
        c, a = th[0], th[1 : 1 + p]
        b, sigma = th[1 + p : 1 + p + q], th[-1]
        f = c + sum(a[i - 1] * _lagged(y, t, i) for i in range(1, p + 1))
        if q:
            x = np.asarray(traj_prefix.covariates, dtype=float).reshape(n, -1)[:, 0]
            f += sum(b[j - 1] * _lagged(x, t, j) for j in range(1, q + 1))
        h = max(sigma * sigma, spec.h_floor)
        return np.array([f]), np.array([h])
    if kind is FamilyKind.ARCH:
        a0, a = th[0], th[1:]
        h = a0 + sum(a[i - 1] * _lagged(y, t, i) ** 2 for i in range(1, p + 1))
        return np.array([0.0]), np.array([max(h, spec.h_floor)])
    if kind is FamilyKind.INGARCH_P:
        a0, a = th[0], th[1:]
        lam = a0 + sum(a[i - 1] * _lagged(y, t, i) for i in range(1, p + 1))
        lam = max(lam, spec.c_floor)
        return np.array([lam]), np.array([lam])
    if kind is FamilyKind.INGARCH_11:
        a0, a1, b1 = th
        lam = a0 / (1.0 - b1)  # seed for the all-zero past
        for s in range(1, t + 1):
            lam = a0 + a1 * _lagged(y, s, 1) + b1 * lam if s > 1 else lam
        lam = max(lam, spec.c_floor)
        return np.array([lam]), np.array([lam])
    if kind is FamilyKind.BIV_INGARCH:
        a0 = th[:2]
        amat = th[2:].reshape(2, 2)
        y2 = y.reshape(n, -1)
        prev = y2[t - 2] if t >= 2 else np.zeros(2)
        lam = np.maximum(a0 + amat @ prev, spec.c_floor)
        return lam, lam
    raise ConfigError(f"unknown family kind {kind}")  # pragma: no cover
