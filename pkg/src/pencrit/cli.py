"""Command-line driver: simulate / fit / select / limits / experiment.

One binary with subcommands.  Structured inputs (family, plan) come from TOML
config files; scalars come from flags.  Every run echoes its fully resolved
configuration — including any seed that had to be drawn — as JSON metadata on
stderr, so results can always be reproduced from the recorded invocation.

Exit codes: 0 success, 1 computational failure, 2 usage or config error.
Set the ``PENCRIT_LOG`` environment variable (DEBUG/INFO/WARNING/ERROR) to
control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import pathlib
import sys

import numpy as np

from ._backend import BACKEND_NAME
from ._version import __version__
from .asymptotics import joint_limit_matrices, overfit_probability
from .errors import ConfigError, DataFormatError, PencritError
from .estimate import FitOptions, estimate_sandwich, fit_mce
from .experiments import (
    ExperimentPlan,
    run_consistency,
    run_nonconsistency,
    run_normality,
)
from .families import (
    EnumerationPolicy,
    FamilySpec,
    ModelSubset,
    default_mandatory,
    enumerate_models,
)
from .select import PenaltyKind, PenaltySchedule, select_model
from .simulate import (
    DEFAULT_BURN_IN,
    Emission,
    Innovation,
    RngStream,
    Trajectory,
    simulate_acx,
    simulate_mod,
)

logger = logging.getLogger("pencrit.cli")


def _configure_logging():
    level = os.environ.get("PENCRIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _read_text(path: str) -> str:
    p = pathlib.Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _write_artifact(out: str, text: str):
    if out:
        pathlib.Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _echo_metadata(resolved: dict):
    resolved = dict(resolved, version=__version__, backend=BACKEND_NAME)
    json.dump(resolved, sys.stderr, indent=2, default=str)
    sys.stderr.write("\n")


def _resolve_seed(seed):
    """Use the given seed, or draw one so the run is still reproducible."""
    if seed is not None:
        return int(seed), False
    return int(np.random.SeedSequence().entropy % 2**63), True


def _load_family(path: str) -> FamilySpec:
    return FamilySpec.from_config(_read_text(path))


def _parse_subset(text: str) -> ModelSubset:
    try:
        return ModelSubset.from_label(text)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad subset {text!r}: {exc}") from exc


def _resolve_candidates(spec: FamilySpec, text: str):
    t = text.strip()
    mandatory = default_mandatory(spec)
    if t == "all":
        return enumerate_models(spec, EnumerationPolicy.ALL_SUBSETS, mandatory)
    if t == "nested" or t.startswith("nested:"):
        models = enumerate_models(spec, EnumerationPolicy.HIERARCHICAL_LAGS,
                                  mandatory)
        if ":" in t:
            try:
                k = int(t.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad candidate spec {text!r}") from exc
            if k < 0:
                raise ConfigError("nested:K needs K >= 0")
            models = models[: k + 1]
        return models
    # otherwise: a file with one subset label per line, e.g. "{1,2,4}"
    labels = [ln.strip() for ln in _read_text(t).splitlines() if ln.strip()]
    if not labels:
        raise ConfigError(f"candidate file {t} is empty")
    explicit = [_parse_subset(lb) for lb in labels]
    return enumerate_models(spec, EnumerationPolicy.EXPLICIT_LIST, (),
                            explicit=explicit)


def _resolve_penalty(text: str) -> PenaltySchedule:
    t = text.strip()
    try:
        return PenaltySchedule.parse(t)
    except ConfigError:
        pass
    # fall through: a file with "n,kappa" rows defines a CUSTOM table
    rows = []
    for lineno, ln in enumerate(_read_text(t).splitlines(), start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#") or ln.lower().startswith("n,"):
            continue
        parts = ln.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{t}:{lineno}: expected 'n,kappa'")
        try:
            rows.append((int(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"{t}:{lineno}: {exc}") from exc
    if not rows:
        raise ConfigError(f"penalty file {t} holds no table rows")
    return PenaltySchedule(PenaltyKind.CUSTOM, table=tuple(rows))


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pencrit",
        description="Penalized-contrast model selection for time series.",
    )
    ap.add_argument("--version", action="version", version=f"pencrit {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="simulate a trajectory to CSV")
    sim.add_argument("--family", required=True, help="family config (TOML)")
    sim.add_argument("--theta", required=True,
                     help="comma-separated true parameter vector")
    sim.add_argument("--n", type=int, required=True, help="sample size")
    sim.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN)
    sim.add_argument("--seed", type=int, default=None,
                     help="RNG seed (drawn and recorded if omitted)")
    sim.add_argument("--innovation", default="gaussian",
                     help="gaussian | student:NU (real-valued families)")
    sim.add_argument("--emission", default="poisson",
                     help="poisson | negbin:R (count families)")
    sim.add_argument("--out", default=None, help="output CSV path (default stdout)")

    fit = sub.add_parser("fit", help="fit one subset by minimum contrast")
    fit.add_argument("--data", required=True, help="trajectory CSV")
    fit.add_argument("--family", required=True, help="family config (TOML)")
    fit.add_argument("--subset", default=None,
                     help='subset label like "{1,2,4}" (default: all coordinates)')
    fit.add_argument("--sandwich", action="store_true",
                     help="also report F, G and the sandwich covariance")
    fit.add_argument("--out", default=None, help="output JSON path (default stdout)")

    sel = sub.add_parser("select", help="penalized selection over candidates")
    sel.add_argument("--data", required=True, help="trajectory CSV")
    sel.add_argument("--family", required=True, help="family config (TOML)")
    sel.add_argument("--candidates", default="nested",
                     help="nested | nested:K | all | FILE with subset labels")
    sel.add_argument("--penalty", default="log",
                     help="const:c | loglog:c | log | sqrt | FILE with n,kappa rows")
    sel.add_argument("--out", default=None,
                     help="output JSON path; a .csv table is written next to it")

    lim = sub.add_parser("limits", help="joint limit and overfit probability")
    lim.add_argument("--data", required=True, help="trajectory CSV")
    lim.add_argument("--family", required=True, help="family config (TOML)")
    lim.add_argument("--m-star", required=True, help='subset label, e.g. "{1,3}"')
    lim.add_argument("--m-tilde", required=True, help="strict superset label")
    lim.add_argument("--kappa", type=float, required=True,
                     help="limiting penalty constant")
    lim.add_argument("--draws", type=int, default=100_000,
                     help="Monte Carlo draws for the tail probability")
    lim.add_argument("--seed", type=int, default=None,
                     help="RNG seed (drawn and recorded if omitted)")
    lim.add_argument("--out", default=None, help="output JSON path (default stdout)")

    exp = sub.add_parser("experiment", help="run a Monte Carlo plan config")
    exp.add_argument("--plan", required=True, help="plan config (TOML)")
    exp.add_argument("--seed", type=int, default=None,
                     help="override the plan base seed")
    exp.add_argument("--threads", type=int, default=None,
                     help="worker processes (0 = auto); overrides the plan")
    exp.add_argument("--plot-data", action="store_true",
                     help="also write a tidy long-format CSV for plotting")
    exp.add_argument("--out", default=None,
                     help="output path prefix (default: report to stdout)")
    return ap


def _cmd_simulate(args) -> int:
    spec = _load_family(args.family)
    try:
        theta = np.array([float(v) for v in args.theta.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --theta: {exc}") from exc
    seed, drawn = _resolve_seed(args.seed)
    rng = RngStream(seed)
    if spec.is_count:
        emission, extra = _split_mode(args.emission, "negbin", Emission.NEGBIN,
                                      Emission.POISSON, "poisson")
        traj = simulate_mod(spec, theta, args.n, args.burn_in, emission, rng,
                            negbin_r=extra)
    else:
        innovation, extra = _split_mode(args.innovation, "student",
                                        Innovation.STUDENT_STD,
                                        Innovation.GAUSSIAN, "gaussian")
        traj = simulate_acx(spec, theta, args.n, args.burn_in, innovation, rng,
                            student_df=extra)
    _write_artifact(args.out, traj.to_csv())
    _echo_metadata({
        "subcommand": "simulate", "family": args.family,
        "theta": [float(v) for v in theta], "n": args.n,
        "burn_in": args.burn_in, "seed": seed, "seed_drawn": drawn,
        "innovation": args.innovation, "emission": args.emission,
        "out": args.out,
    })
    return 0


def _split_mode(text, prefix, tagged, plain, plain_name):
    t = text.strip().lower()
    if t == plain_name:
        return plain, None
    if t.startswith(prefix + ":"):
        try:
            return tagged, float(t.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad mode {text!r}") from exc
    raise ConfigError(f"unknown mode {text!r}")


def _cmd_fit(args) -> int:
    spec = _load_family(args.family)
    traj = Trajectory.from_csv(_read_text(args.data))
    if args.subset:
        m = _parse_subset(args.subset)
    else:
        m = ModelSubset(tuple(range(1, spec.param_dim + 1)))
    fit = fit_mce(spec, traj, m)
    payload = json.loads(fit.to_json())
    if args.sandwich:
        sand = estimate_sandwich(spec, traj, fit)
        payload["sandwich"] = json.loads(sand.to_json())
    _write_artifact(args.out, json.dumps(payload, indent=2) + "\n")
    _echo_metadata({
        "subcommand": "fit", "data": args.data, "family": args.family,
        "subset": m.label(), "sandwich": bool(args.sandwich), "out": args.out,
    })
    return 0


def _cmd_select(args) -> int:
    spec = _load_family(args.family)
    traj = Trajectory.from_csv(_read_text(args.data))
    candidates = _resolve_candidates(spec, args.candidates)
    sched = _resolve_penalty(args.penalty)
    result = select_model(spec, traj, candidates, sched)
    _write_artifact(args.out, result.to_json() + "\n")
    if args.out:
        csv_path = str(pathlib.Path(args.out).with_suffix(".csv"))
        pathlib.Path(csv_path).write_text(result.to_csv(), encoding="utf-8")
    _echo_metadata({
        "subcommand": "select", "data": args.data, "family": args.family,
        "candidates": [m.label() for m in candidates],
        "penalty": sched.label(), "kappa_used": result.kappa_used,
        "winner": result.winner.label(), "out": args.out,
    })
    return 0


def _cmd_limits(args) -> int:
    spec = _load_family(args.family)
    traj = Trajectory.from_csv(_read_text(args.data))
    m_star = _parse_subset(args.m_star)
    m_tilde = _parse_subset(args.m_tilde)
    jl = joint_limit_matrices(spec, traj, m_star, m_tilde)
    seed, drawn = _resolve_seed(args.seed)
    prob, se = overfit_probability(jl, args.kappa, n_draws=args.draws,
                                   rng=RngStream(seed))
    payload = json.loads(jl.to_json())
    payload["overfit_probability"] = {
        "kappa": args.kappa, "delta": jl.delta,
        "estimate": prob, "stderr": se, "draws": args.draws,
    }
    _write_artifact(args.out, json.dumps(payload, indent=2) + "\n")
    _echo_metadata({
        "subcommand": "limits", "data": args.data, "family": args.family,
        "m_star": m_star.label(), "m_tilde": m_tilde.label(),
        "kappa": args.kappa, "draws": args.draws,
        "seed": seed, "seed_drawn": drawn, "out": args.out,
    })
    return 0


def _cmd_experiment(args) -> int:
    plan = ExperimentPlan.from_config(_read_text(args.plan))
    if args.seed is not None:
        plan.base_seed = int(args.seed)
    if args.threads is not None:
        plan.threads = int(args.threads)
    if plan.tag == "consistency":
        report = run_consistency(plan)
    elif plan.tag in ("nonconsistency", "non-consistency"):
        report = run_nonconsistency(plan)
    elif plan.tag == "normality":
        report = run_normality(plan)
    else:
        raise ConfigError(f"unknown plan tag {plan.tag!r}")
    if args.out:
        base = pathlib.Path(args.out)
        base.with_suffix(".json").write_text(report.to_json() + "\n",
                                             encoding="utf-8")
        base.with_suffix(".csv").write_text(report.cells_csv(), encoding="utf-8")
        if args.plot_data:
            plot_path = base.with_name(base.stem + "_plot").with_suffix(".csv")
            plot_path.write_text(report.plot_data_csv(), encoding="utf-8")
    else:
        sys.stdout.write(report.to_json() + "\n")
        if args.plot_data:
            sys.stdout.write(report.plot_data_csv())
    _echo_metadata({
        "subcommand": "experiment", "plan": args.plan, "tag": plan.tag,
        "base_seed": plan.base_seed, "threads": plan.threads,
        "plot_data": bool(args.plot_data), "out": args.out,
    })
    return 0


_DISPATCH = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "select": _cmd_select,
    "limits": _cmd_limits,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _DISPATCH[args.subcommand](args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PencritError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"error: linear algebra failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
