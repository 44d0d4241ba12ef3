"""Trajectory generation for the built-in families, plus CSV interchange.

Simulation runs the model recursion on the *untruncated* simulated past,
discards a burn-in prefix, and is fully reproducible from an ``RngStream``.
The ARX covariate process is a built-in linear AR(1):
``X_t = rho X_{t-1} + eta_t`` with standard normal ``eta`` and ``|rho| < 1``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, ExplosiveSimulationError
from .families import FamilyKind, FamilySpec

OVERFLOW_GUARD = 1e12
DEFAULT_BURN_IN = 1000
DEFAULT_COV_RHO = 0.5


class TrajectoryKind(enum.Enum):
    REAL = "REAL"
    COUNT = "COUNT"


class Innovation(enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    STUDENT_STD = "STUDENT_STD"


class Emission(enum.Enum):
    POISSON = "POISSON"
    NEGBIN = "NEGBIN"


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Distinct (seed, stream_id) pairs give statistically independent streams;
    the same pair reproduces identical draws bit-for-bit.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed),
                                    spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Trajectory:
    """Observed series Y_1..Y_n with an optional aligned covariate series."""

    obs: np.ndarray                 # (n,) or (n, d_y)
    kind: TrajectoryKind
    covariates: np.ndarray = None   # (n, d_x) or None

    def __post_init__(self):
        obs = np.asarray(self.obs)
        if obs.ndim not in (1, 2) or obs.shape[0] == 0:
            raise DataFormatError("obs must be a nonempty 1- or 2-dim array")
        if self.kind is TrajectoryKind.COUNT:
            if np.any(obs < 0) or np.any(obs != np.floor(obs)):
                raise DataFormatError("COUNT trajectories must hold nonnegative integers")
            obs = obs.astype(np.int64)
        else:
            obs = obs.astype(float)
        obs.setflags(write=False)
        object.__setattr__(self, "obs", obs)
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float).reshape(obs.shape[0], -1)
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)

    @property
    def n(self) -> int:
        return self.obs.shape[0]

    @property
    def obs_dim(self) -> int:
        return 1 if self.obs.ndim == 1 else self.obs.shape[1]

    # -- CSV interchange: header "t,y1[,y2][,x1..]" --------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        y = self.obs.reshape(self.n, -1)
        dy = y.shape[1]
        cols = ["t"] + [f"y{i+1}" for i in range(dy)]
        dx = 0 if self.covariates is None else self.covariates.shape[1]
        cols += [f"x{j+1}" for j in range(dx)]
        buf.write(",".join(cols) + "\n")
        integer = self.kind is TrajectoryKind.COUNT
        for t in range(self.n):
            row = [str(t + 1)]
            for i in range(dy):
                row.append(str(int(y[t, i])) if integer else repr(float(y[t, i])))
            for j in range(dx):
                row.append(repr(float(self.covariates[t, j])))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kind: TrajectoryKind = None) -> "Trajectory":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DataFormatError("empty trajectory CSV")
        header = [h.strip() for h in lines[0].split(",")]
        if header[0] != "t":
            raise DataFormatError("CSV header must start with 't'")
        ycols = [i for i, h in enumerate(header) if h.startswith("y")]
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        if not ycols:
            raise DataFormatError("CSV header names no y columns")
        rows_y, rows_x = [], []
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split(",")
            if len(parts) != len(header):
                raise DataFormatError(
                    f"row {lineno}: {len(parts)} fields, expected {len(header)}"
                )
            try:
                rows_y.append([float(parts[i]) for i in ycols])
                rows_x.append([float(parts[i]) for i in xcols])
            except ValueError as exc:
                raise DataFormatError(f"row {lineno}: {exc}") from exc
        y = np.asarray(rows_y, dtype=float)
        if y.shape[1] == 1:
            y = y[:, 0]
        x = np.asarray(rows_x, dtype=float) if xcols else None
        if kind is None:
            is_count = bool(np.all(y >= 0) and np.all(y == np.floor(y)))
            kind = TrajectoryKind.COUNT if is_count else TrajectoryKind.REAL
        return cls(obs=y, kind=kind, covariates=x)


def _standardized_innovations(rng, n, innovation, student_df):
    if innovation is Innovation.GAUSSIAN:
        return rng.standard_normal(n)
    if innovation is Innovation.STUDENT_STD:
        nu = float(student_df)
        if nu <= 4:
            raise ConfigError("STUDENT_STD requires nu > 4")
        return rng.standard_t(nu, size=n) * math.sqrt((nu - 2.0) / nu)
    raise ConfigError(f"unknown innovation {innovation}")


def _guard(value, what: str):
    if not np.all(np.isfinite(value)) or np.any(np.abs(value) > OVERFLOW_GUARD):
        raise ExplosiveSimulationError(
            f"{what} exceeded the overflow guard {OVERFLOW_GUARD:g}; "
            "the parameterization appears explosive"
        )


def simulate_acx(
    spec: FamilySpec,
    theta_true,
    n: int,
    burn_in: int = DEFAULT_BURN_IN,
    innovation: Innovation = Innovation.GAUSSIAN,
    rng: RngStream = None,
    student_df: float = None,
    cov_rho: float = DEFAULT_COV_RHO,
) -> Trajectory:
    """Simulate an ARX or ARCH trajectory of length n (after burn-in)."""
    if spec.is_count:
        raise ConfigError("simulate_acx handles the real-valued families only")
    th = spec.validate_theta(theta_true)
    if rng is None:
        rng = RngStream(0)
    gen = rng.generator()
    if not abs(cov_rho) < 1:
        raise ConfigError("covariate AR(1) coefficient must satisfy |rho| < 1")

    total = burn_in + n
    xi = _standardized_innovations(gen, total, innovation, student_df)
    p, q = spec.p, spec.q

    x = None
    if spec.kind is FamilyKind.ARX and q > 0:
        eta = gen.standard_normal(total)
        x = np.empty(total)
        prev = 0.0
        for t in range(total):
            prev = cov_rho * prev + eta[t]
            x[t] = prev

    y = np.empty(total)
    if spec.kind is FamilyKind.ARX:
        c, a = th[0], th[1 : 1 + p]
        b, sigma = th[1 + p : 1 + p + q], th[-1]
        for t in range(total):
            f = c
            for i in range(1, p + 1):
                if t - i >= 0:
                    f += a[i - 1] * y[t - i]
            for j in range(1, q + 1):
                if t - j >= 0:
                    f += b[j - 1] * x[t - j]
            y[t] = f + sigma * xi[t]
            if abs(y[t]) > OVERFLOW_GUARD:
                _guard(y[t], "simulated Y")
    elif spec.kind is FamilyKind.ARCH:
        a0, a = th[0], th[1:]
        for t in range(total):
            h = a0
            for i in range(1, p + 1):
                if t - i >= 0:
                    h += a[i - 1] * y[t - i] ** 2
            h = max(h, spec.h_floor)
            y[t] = math.sqrt(h) * xi[t]
            if abs(y[t]) > OVERFLOW_GUARD:
                _guard(y[t], "simulated Y")
    else:  # pragma: no cover
        raise ConfigError(f"unsupported family {spec.kind}")

    cov = x[burn_in:].reshape(n, 1) if x is not None else None
    return Trajectory(obs=y[burn_in:], kind=TrajectoryKind.REAL, covariates=cov)


def simulate_mod(
    spec: FamilySpec,
    theta_true,
    n: int,
    burn_in: int = DEFAULT_BURN_IN,
    emission: Emission = Emission.POISSON,
    rng: RngStream = None,
    negbin_r: float = None,
) -> Trajectory:
    """Simulate a count trajectory with conditional-mean recursion lambda_t."""
    if not spec.is_count:
        raise ConfigError("simulate_mod handles the count families only")
    th = spec.validate_theta(theta_true)
    if rng is None:
        rng = RngStream(0)
    gen = rng.generator()
    if emission is Emission.NEGBIN and (negbin_r is None or negbin_r <= 0):
        raise ConfigError("NEGBIN emission requires dispersion r > 0")

    # stationarity-style guard on lag coefficient mass
    if spec.kind in (FamilyKind.INGARCH_P, FamilyKind.INGARCH_11):
        coef_sum = float(np.sum(th[1:]))
        if coef_sum >= 1.0:
            raise ConfigError(
                f"lag coefficients sum to {coef_sum:.3f} >= 1; nonstationary"
            )
    elif spec.kind is FamilyKind.BIV_INGARCH:
        if np.max(np.abs(np.linalg.eigvals(th[2:].reshape(2, 2)))) >= 1.0:
            raise ConfigError("lag matrix spectral radius >= 1; nonstationary")

    def draw(lam):
        if emission is Emission.POISSON:
            return gen.poisson(lam)
        pr = negbin_r / (negbin_r + lam)
        return gen.negative_binomial(negbin_r, pr)

    total = burn_in + n
    if spec.kind is FamilyKind.BIV_INGARCH:
        a0 = th[:2]
        amat = th[2:].reshape(2, 2)
        y = np.zeros((total, 2), dtype=np.int64)
        prev = np.zeros(2)
        for t in range(total):
            lam = np.maximum(a0 + amat @ prev, spec.c_floor)
            _guard(lam, "conditional intensity")
            y[t] = [draw(lam[0]), draw(lam[1])]
            prev = y[t].astype(float)
        return Trajectory(obs=y[burn_in:], kind=TrajectoryKind.COUNT)

    p = spec.p
    y = np.zeros(total, dtype=np.int64)
    if spec.kind is FamilyKind.INGARCH_P:
        a0, a = th[0], th[1:]
        for t in range(total):
            lam = a0
            for i in range(1, p + 1):
                if t - i >= 0:
                    lam += a[i - 1] * y[t - i]
            lam = max(lam, spec.c_floor)
            if lam > OVERFLOW_GUARD:
                _guard(lam, "conditional intensity")
            y[t] = draw(lam)
    else:  # INGARCH_11: lambda seeded at the unconditional mean
        a0, a1, b1 = th
        lam = a0 / max(1.0 - a1 - b1, 1e-8)
        for t in range(total):
            lam = max(a0 + (a1 * y[t - 1] if t >= 1 else 0.0) + b1 * lam,
                      spec.c_floor)
            if lam > OVERFLOW_GUARD:
                _guard(lam, "conditional intensity")
            y[t] = draw(lam)
    return Trajectory(obs=y[burn_in:], kind=TrajectoryKind.COUNT)
