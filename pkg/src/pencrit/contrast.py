"""Quasi-likelihood contrast evaluation with analytic derivatives.

Two contrasts are provided: the conditional Gaussian quasi-likelihood for the
real-valued families (per-term ``(Y_t - f_t)^2 / H_t + log H_t`` summed with
the 1/2 factor) and the conditional Poisson quasi-likelihood for the count
families (per-term ``-(Y_t log lambda_t - lambda_t)`` summed componentwise).
Both use the truncated-past convention and the family floors; totals are
accumulated with compensated summation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DataFormatError, PencritError
from .families import FamilySpec
from .simulate import Trajectory, TrajectoryKind


class ContrastKind(enum.Enum):
    GAUSSIAN = "GAUSSIAN"
    POISSON = "POISSON"


@dataclass(frozen=True)
class ContrastValue:
    """Contrast total with optional per-term values and derivatives."""

    total: float
    per_term: np.ndarray = None     # (n,)
    gradient: np.ndarray = None     # (d,)
    hessian: np.ndarray = None      # (d, d), symmetric
    scores: np.ndarray = None       # (n, d) per-term gradients


def contrast_dispatch(spec: FamilySpec) -> ContrastKind:
    """ARX/ARCH use the Gaussian contrast; INGARCH families the Poisson one."""
    return ContrastKind.POISSON if spec.is_count else ContrastKind.GAUSSIAN


def _evaluate(spec, traj, theta, want, want_per_term, want_scores) -> ContrastValue:
    th = spec.validate_theta(theta, allow_pinned=True)
    y = traj.obs
    x = traj.covariates
    if spec.cov_dim > 0 and x is None:
        raise DataFormatError("family expects covariates but trajectory has none")
    per_term, grad, hess, scores = _backend.kernels().contrast_terms(
        spec.kind.value, y, x, th, spec.p, spec.q,
        spec.h_floor, spec.c_floor, int(want), bool(want_scores),
    )
    if not np.all(np.isfinite(per_term)):
        bad = int(np.flatnonzero(~np.isfinite(np.asarray(per_term)))[0]) + 1
        raise PencritError(f"non-finite contrast term at t={bad}")
    total = math.fsum(per_term)
    return ContrastValue(
        total=total,
        per_term=np.asarray(per_term) if want_per_term else None,
        gradient=None if grad is None else np.asarray(grad),
        hessian=None if hess is None else np.asarray(hess),
        scores=None if scores is None else np.asarray(scores),
    )


def gaussian_contrast(spec: FamilySpec, traj: Trajectory, theta, want: int = 0,
                      per_term: bool = True, scores: bool = False) -> ContrastValue:
    """Gaussian quasi-likelihood contrast; ``want`` is the derivative order 0|1|2."""
    if contrast_dispatch(spec) is not ContrastKind.GAUSSIAN:
        raise DataFormatError(f"{spec.kind.value} uses the Poisson contrast")
    if traj.kind is not TrajectoryKind.REAL:
        raise DataFormatError("Gaussian contrast requires a REAL trajectory")
    return _evaluate(spec, traj, theta, want, per_term, scores)


def poisson_contrast(spec: FamilySpec, traj: Trajectory, theta, want: int = 0,
                     per_term: bool = True, scores: bool = False) -> ContrastValue:
    """Poisson quasi-likelihood contrast; ``want`` is the derivative order 0|1|2."""
    if contrast_dispatch(spec) is not ContrastKind.POISSON:
        raise DataFormatError(f"{spec.kind.value} uses the Gaussian contrast")
    if traj.kind is not TrajectoryKind.COUNT:
        raise DataFormatError("Poisson contrast requires a COUNT trajectory")
    return _evaluate(spec, traj, theta, want, per_term, scores)


def contrast(spec: FamilySpec, traj: Trajectory, theta, want: int = 0,
             per_term: bool = True, scores: bool = False) -> ContrastValue:
    """Evaluate the family's natural contrast (dispatching on the family)."""
    if contrast_dispatch(spec) is ContrastKind.GAUSSIAN:
        return gaussian_contrast(spec, traj, theta, want, per_term, scores)
    return poisson_contrast(spec, traj, theta, want, per_term, scores)
