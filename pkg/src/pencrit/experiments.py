"""Monte Carlo harness for consistency, non-consistency and normality checks.

A plan fixes the data-generating family and truth, the candidate subsets, the
penalty schedules, a sample-size grid and a replication budget.  For each
(n, replication) cell one trajectory is simulated on its own derived stream
and every candidate is fitted once; all schedules are then evaluated on the
same fitted table (penalties only move the criterion, not the fits).  Results
are therefore bit-for-bit reproducible from the base seed and independent of
scheduling.
"""

from __future__ import annotations

import io
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ._backend import BACKEND_NAME
from ._version import __version__ as _pkg_version
from .asymptotics import JointLimit, joint_limit_matrices, overfit_probability
from .errors import ConfigError, PencritError
from .estimate import FitOptions, estimate_sandwich, fit_mce
from .families import (
    EnumerationPolicy,
    FamilySpec,
    ModelSubset,
    default_mandatory,
    enumerate_models,
    support_subset,
)
from .select import PenaltyKind, PenaltySchedule, criterion_table, penalty_value
from .simulate import (
    DEFAULT_BURN_IN,
    Emission,
    Innovation,
    RngStream,
    simulate_acx,
    simulate_mod,
)

logger = logging.getLogger("pencrit.experiments")

_STREAM_CELL_STRIDE = 1_000_003     # stream_id = cell * stride + rep; no reuse
_CALIBRATION_STREAM = 999_999_937   # reserved stream for limit calibration
MAX_TOTAL_FITS = 1_000_000


@dataclass
class ExperimentPlan:
    spec: FamilySpec
    theta_true: np.ndarray
    candidates: list
    schedules: list
    n_grid: list
    replications: int
    base_seed: int
    tag: str = "consistency"
    burn_in: int = DEFAULT_BURN_IN
    innovation: str = "gaussian"
    emission: str = "poisson"
    cov_rho: float = 0.5
    threads: int = 1
    output_path: str = None

    def __post_init__(self):
        self.theta_true = self.spec.validate_theta(self.theta_true)
        if list(self.n_grid) != sorted(set(int(n) for n in self.n_grid)):
            raise ConfigError("n_grid must be strictly increasing")
        self.n_grid = [int(n) for n in self.n_grid]
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        for m in self.candidates:
            m.validate_for(self.spec)
        if self.tag == "consistency" and not any(
            m.contains(self.true_subset()) for m in self.candidates
        ):
            raise ConfigError(
                "consistency plan: no candidate contains the true support"
            )
        total = len(self.n_grid) * self.replications * len(self.candidates)
        if total > MAX_TOTAL_FITS:
            raise ConfigError(f"plan needs {total} fits > cap {MAX_TOTAL_FITS}")
        if total > 100_000:
            warnings.warn(f"plan schedules {total} fits; expect a long run")

    def true_subset(self) -> ModelSubset:
        """Smallest candidate containing the support of theta_true."""
        supp = support_subset(self.theta_true)
        fitting = [m for m in self.candidates if m.contains(supp)]
        if not fitting:
            return supp
        return sorted(fitting, key=lambda m: (m.size, m.indices))[0]

    def simulate(self, n: int, rng: RngStream):
        if self.spec.is_count:
            emission, extra = _parse_emission(self.emission)
            return simulate_mod(self.spec, self.theta_true, n, self.burn_in,
                                emission, rng, negbin_r=extra)
        innovation, extra = _parse_innovation(self.innovation)
        return simulate_acx(self.spec, self.theta_true, n, self.burn_in,
                            innovation, rng, student_df=extra,
                            cov_rho=self.cov_rho)

    # -- plan config (TOML) --------------------------------------------------

    @classmethod
    def from_config(cls, text: str) -> "ExperimentPlan":
        from .families import _load_toml

        data = _load_toml(text)
        fam = data.get("family")
        if not isinstance(fam, dict):
            raise ConfigError("plan config needs a [family] table")
        spec = FamilySpec.from_config(_toml_render(fam))
        if "theta_true" not in data:
            raise ConfigError("plan config needs theta_true")
        cands = _parse_candidates(spec, data.get("candidates", "nested"))
        pens = [PenaltySchedule.parse(p) for p in data.get("penalties", ["log"])]
        return cls(
            spec=spec,
            theta_true=np.asarray(data["theta_true"], float),
            candidates=cands,
            schedules=pens,
            n_grid=list(data.get("n_grid", [500, 2000, 8000])),
            replications=int(data.get("replications", 100)),
            base_seed=int(data.get("base_seed", 0)),
            tag=str(data.get("tag", "consistency")),
            burn_in=int(data.get("burn_in", DEFAULT_BURN_IN)),
            innovation=str(data.get("innovation", "gaussian")),
            emission=str(data.get("emission", "poisson")),
            cov_rho=float(data.get("cov_rho", 0.5)),
            threads=int(data.get("threads", 1)),
        )


def _toml_render(table: dict) -> str:
    lines = []
    sub = {}
    for k, v in table.items():
        if isinstance(v, dict):
            sub[k] = v
        elif isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        elif isinstance(v, list):
            lines.append(f"{k} = {list(v)!r}")
        else:
            lines.append(f"{k} = {v!r}")
    for k, v in sub.items():
        lines.append(f"[{k}]")
        for kk, vv in v.items():
            lines.append(f"{kk} = {list(vv)!r}" if isinstance(vv, list) else f"{kk} = {vv!r}")
    return "\n".join(lines) + "\n"


def _parse_candidates(spec, value):
    if isinstance(value, str):
        v = value.strip().lower()
        mandatory = default_mandatory(spec)
        if v in ("nested", "hierarchical") or v.startswith("nested"):
            return enumerate_models(spec, EnumerationPolicy.HIERARCHICAL_LAGS, mandatory)
        if v == "all":
            return enumerate_models(spec, EnumerationPolicy.ALL_SUBSETS, mandatory)
        raise ConfigError(f"unknown candidate policy {value!r}")
    return [ModelSubset(tuple(int(i) for i in m)) for m in value]


def _parse_innovation(text: str):
    t = text.strip().lower()
    if t == "gaussian":
        return Innovation.GAUSSIAN, None
    if t.startswith("student:"):
        return Innovation.STUDENT_STD, float(t.split(":", 1)[1])
    raise ConfigError(f"unknown innovation {text!r}")


def _parse_emission(text: str):
    t = text.strip().lower()
    if t == "poisson":
        return Emission.POISSON, None
    if t.startswith("negbin:"):
        return Emission.NEGBIN, float(t.split(":", 1)[1])
    raise ConfigError(f"unknown emission {text!r}")


@dataclass
class CellResult:
    schedule: str
    n: int
    hit_rate: float
    overfit_rate: float
    underfit_rate: float
    mc_stderr: float
    replications: int
    failures: int


@dataclass
class ExperimentReport:
    cells: list
    m_star: ModelSubset
    normality: dict = None
    predictions: list = None
    metadata: dict = field(default_factory=dict)

    def statistics_payload(self) -> dict:
        """The deterministic part of the report (excludes timing metadata)."""
        return {
            "m_star": list(self.m_star.indices),
            "cells": [vars(c) for c in self.cells],
            "normality": self.normality,
            "predictions": self.predictions,
        }

    def to_json(self) -> str:
        payload = self.statistics_payload()
        payload["metadata"] = self.metadata
        return json.dumps(payload, indent=2, default=_jsonable)

    def cells_csv(self) -> str:
        buf = io.StringIO()
        buf.write("schedule,n,hit_rate,overfit_rate,underfit_rate,mc_stderr,"
                  "replications,failures\n")
        for c in self.cells:
            buf.write(f"{c.schedule},{c.n},{c.hit_rate!r},{c.overfit_rate!r},"
                      f"{c.underfit_rate!r},{c.mc_stderr!r},{c.replications},"
                      f"{c.failures}\n")
        return buf.getvalue()

    def plot_data_csv(self) -> str:
        """Tidy long-format CSV: schedule,n,metric,value."""
        buf = io.StringIO()
        buf.write("schedule,n,metric,value\n")
        for c in self.cells:
            for metric in ("hit_rate", "overfit_rate", "underfit_rate", "mc_stderr"):
                buf.write(f"{c.schedule},{c.n},{metric},{getattr(c, metric)!r}\n")
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, ModelSubset):
        return list(obj.indices)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _rep_fit_candidates(plan: ExperimentPlan, n: int, cell_index: int, rep: int,
                        options: FitOptions):
    """Simulate one replication and fit every candidate; returns contrast rows."""
    stream_id = cell_index * _STREAM_CELL_STRIDE + rep
    rng = RngStream(plan.base_seed, stream_id)
    traj = plan.simulate(n, rng)
    rows = []
    for m in plan.candidates:
        try:
            fit = fit_mce(plan.spec, traj, m, options)
            rows.append((m, fit.contrast_at_min))
        except PencritError as exc:
            logger.warning("rep %d subset %s failed: %s", rep, m.label(), exc)
            rows.append((m, None))
    return rows


def _classify(winner: ModelSubset, m_star: ModelSubset) -> str:
    if winner == m_star:
        return "hit"
    if winner.contains(m_star):
        return "overfit"
    return "underfit"


def _run_cells(plan: ExperimentPlan, options: FitOptions):
    """Fit all cells; returns {(schedule_label, n): outcome counters}."""
    m_star = plan.true_subset()
    results = {}
    n_jobs = plan.threads if plan.threads > 0 else -1
    for cell_index, n in enumerate(plan.n_grid):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            per_rep = Parallel(n_jobs=n_jobs)(
                delayed(_rep_fit_candidates)(plan, n, cell_index, rep, options)
                for rep in range(plan.replications)
            )
        for sched in plan.schedules:
            counts = {"hit": 0, "overfit": 0, "underfit": 0}
            failures = 0
            kappa = penalty_value(sched, n)
            for rows in per_rep:
                ok = [(m, c) for m, c in rows if c is not None]
                if not ok:
                    failures += 1
                    continue
                if len(ok) < len(rows):
                    failures += 1
                _, winner, _ = criterion_table(ok, kappa)
                counts[_classify(winner, m_star)] += 1
            reps = sum(counts.values())
            if reps == 0:
                raise PencritError(f"every replication failed in cell n={n}")
            if failures > 0.1 * plan.replications:
                raise PencritError(
                    f"more than 10% of replications failed in cell n={n}"
                )
            hit = counts["hit"] / reps
            results[(sched.label(), n)] = CellResult(
                schedule=sched.label(), n=n,
                hit_rate=hit,
                overfit_rate=counts["overfit"] / reps,
                underfit_rate=counts["underfit"] / reps,
                mc_stderr=math.sqrt(max(hit * (1 - hit), 1.0 / reps) / reps),
                replications=reps, failures=failures,
            )
    return m_star, results


def _metadata(plan: ExperimentPlan, started: float) -> dict:
    return {
        "base_seed": plan.base_seed,
        "tag": plan.tag,
        "backend": BACKEND_NAME,
        "version": _pkg_version,
        "wall_time_s": round(time.time() - started, 3),
        "stream_rule": f"stream_id = cell * {_STREAM_CELL_STRIDE} + rep",
    }


def run_consistency(plan: ExperimentPlan,
                    options: FitOptions = FitOptions()) -> ExperimentReport:
    """Hit/overfit/underfit rates over the (schedule, n) grid."""
    if plan.tag != "consistency":
        raise ConfigError("plan is not tagged 'consistency'")
    started = time.time()
    m_star, results = _run_cells(plan, options)
    cells = [results[(s.label(), n)] for s in plan.schedules for n in plan.n_grid]
    return ExperimentReport(cells=cells, m_star=m_star,
                            metadata=_metadata(plan, started))


def run_nonconsistency(plan: ExperimentPlan, jl: JointLimit = None,
                       options: FitOptions = FitOptions(),
                       prediction_draws: int = 200_000,
                       calibration_n: int = 100_000) -> ExperimentReport:
    """Overfit rates for bounded penalties, with the W-based prediction."""
    const_schedules = [s for s in plan.schedules if s.kind is PenaltyKind.CONSTANT]
    if not const_schedules:
        raise ConfigError("non-consistency plan needs a CONSTANT schedule")
    started = time.time()
    m_star, results = _run_cells(plan, options)

    m_star_plan = plan.true_subset()
    supersets = [m for m in plan.candidates
                 if m.contains(m_star_plan) and m.size > m_star_plan.size]
    if not supersets:
        raise ConfigError("non-consistency plan needs a candidate above m*")
    m_tilde = sorted(supersets, key=lambda m: (m.size, m.indices))[0]

    if jl is None:
        rng = RngStream(plan.base_seed, _CALIBRATION_STREAM)
        traj = plan.simulate(calibration_n, rng)
        jl = joint_limit_matrices(plan.spec, traj, m_star_plan, m_tilde,
                                  options=options)

    n_big = plan.n_grid[-1]
    predictions = []
    for sched in const_schedules:
        prob, se = overfit_probability(
            jl, sched.c, jl.delta, prediction_draws,
            RngStream(plan.base_seed, _CALIBRATION_STREAM + 1),
        )
        cell = results[(sched.label(), n_big)]
        emp = cell.overfit_rate
        emp_se = math.sqrt(max(emp * (1 - emp), 1.0 / cell.replications)
                           / cell.replications)
        gap = abs(emp - prob)
        tol = 3.0 * math.sqrt(emp_se**2 + se**2)
        predictions.append({
            "schedule": sched.label(), "n": n_big,
            "predicted_overfit": prob, "predicted_stderr": se,
            "empirical_overfit": emp, "empirical_stderr": emp_se,
            "agreement": bool(gap <= tol),
        })

    cells = [results[(s.label(), n)] for s in plan.schedules for n in plan.n_grid]
    return ExperimentReport(cells=cells, m_star=m_star,
                            predictions=predictions,
                            metadata=_metadata(plan, started))


def _rep_normality(plan: ExperimentPlan, n: int, rep: int, m_star, m_tilde,
                   options: FitOptions):
    stream_id = rep  # single cell
    rng = RngStream(plan.base_seed, stream_id)
    traj = plan.simulate(n, rng)
    fit = fit_mce(plan.spec, traj, m_star, options)
    sand = estimate_sandwich(plan.spec, traj, fit)
    theta_tilde = None
    if m_tilde is not None:
        fit_t = fit_mce(plan.spec, traj, m_tilde, options)
        theta_tilde = fit_t.theta_hat[m_tilde.free()]
    return fit.theta_hat[m_star.free()], sand.Sigma_hat, theta_tilde


def run_normality(plan: ExperimentPlan, m_tilde: ModelSubset = None,
                  options: FitOptions = FitOptions(),
                  calibration_n: int = 100_000) -> ExperimentReport:
    """Empirical covariance of sqrt(n)(theta_hat - theta*) against Sigma_hat."""
    from scipy.stats import normaltest

    started = time.time()
    n = plan.n_grid[-1]
    m_star = plan.true_subset()
    free = m_star.free()
    theta_star = plan.theta_true[free]
    n_jobs = plan.threads if plan.threads > 0 else -1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        per_rep = Parallel(n_jobs=n_jobs)(
            delayed(_rep_normality)(plan, n, rep, m_star, m_tilde, options)
            for rep in range(plan.replications)
        )
    thetas = np.array([r[0] for r in per_rep])
    sigmas = np.array([r[1] for r in per_rep])
    z = math.sqrt(n) * (thetas - theta_star)
    emp_cov = np.cov(z.T, ddof=1).reshape(len(free), len(free))
    mean_sigma = sigmas.mean(axis=0)
    scale = np.sqrt(np.outer(np.diag(mean_sigma), np.diag(mean_sigma)))
    max_rel_dev = float(np.max(np.abs(emp_cov - mean_sigma) / scale))

    std = z / np.sqrt(np.diag(mean_sigma))
    pvalues = [float(normaltest(std[:, j]).pvalue) for j in range(std.shape[1])]

    normality = {
        "n": n,
        "replications": plan.replications,
        "empirical_cov": emp_cov,
        "mean_sigma_hat": mean_sigma,
        "max_scaled_deviation": max_rel_dev,
        "normality_pvalues": pvalues,
        "fraction_normal_at_1pct": float(np.mean(np.asarray(pvalues) >= 0.01)),
    }

    if m_tilde is not None:
        rngc = RngStream(plan.base_seed, _CALIBRATION_STREAM)
        traj = plan.simulate(calibration_n, rngc)
        jl = joint_limit_matrices(plan.spec, traj, m_star, m_tilde,
                                  options=options)
        k1 = m_star.size
        pred_cross = jl.sigma_joint[:k1, k1:]
        zt = np.array([r[2] for r in per_rep])
        zt = math.sqrt(n) * (zt - plan.theta_true[m_tilde.free()])
        emp_cross = np.empty((k1, m_tilde.size))
        for i in range(k1):
            for j in range(m_tilde.size):
                emp_cross[i, j] = np.cov(z[:, i], zt[:, j], ddof=1)[0, 1]
        cscale = float(np.max(np.abs(pred_cross)))
        strong = np.abs(pred_cross) > 0.2 * cscale
        signs_match = bool(np.all(np.sign(emp_cross[strong])
                                  == np.sign(pred_cross[strong])))
        normality["joint"] = {
            "m_tilde": m_tilde,
            "predicted_cross": pred_cross,
            "empirical_cross": emp_cross,
            "sign_pattern_match": signs_match,
        }

    return ExperimentReport(cells=[], m_star=m_star, normality=normality,
                            metadata=_metadata(plan, started))


def single_path_loglog_sweep(plan: ExperimentPlan, c_grid,
                             options: FitOptions = FitOptions()):
    """Single growing path n = 2^k: last n at which the winner differs from m*.

    Descriptive diagnostic for the log log penalty regimes; one trajectory is
    simulated at the largest n and selection is rerun on its prefixes.
    """
    from .simulate import Trajectory

    m_star = plan.true_subset()
    n_max = plan.n_grid[-1]
    rng = RngStream(plan.base_seed, 0)
    traj = plan.simulate(n_max, rng)
    sizes = []
    k = 5
    while 2**k <= n_max:
        sizes.append(2**k)
        k += 1
    rows = {float(c): None for c in c_grid}
    for n in sizes:
        prefix = Trajectory(obs=np.asarray(traj.obs)[:n], kind=traj.kind,
                            covariates=None if traj.covariates is None
                            else traj.covariates[:n])
        entries = []
        for m in plan.candidates:
            fit = fit_mce(plan.spec, prefix, m, options)
            entries.append((m, fit.contrast_at_min))
        for c in c_grid:
            sched = PenaltySchedule(PenaltyKind.LOGLOG, float(c))
            _, winner, _ = criterion_table(entries, penalty_value(sched, n))
            if winner != m_star:
                rows[float(c)] = n
    return {"m_star": m_star, "path_sizes": sizes,
            "last_disagreement_n": rows}
