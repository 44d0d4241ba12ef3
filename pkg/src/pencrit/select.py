"""Penalty schedules and penalized model selection.

The criterion for a candidate subset m is
``C(m) = contrast_at_min(m) + kappa_n * |m|``; the winner minimizes it.
Schedule regimes: bounded penalties (CONSTANT) do not give consistency,
diverging ones (LOG, SQRT, growing LOGLOG) do.
"""

from __future__ import annotations

import enum
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass

from .errors import ConfigError, PencritError
from .estimate import FitOptions, FitResult, fit_mce
from .families import FamilySpec, ModelSubset
from .simulate import Trajectory

logger = logging.getLogger("pencrit.select")

LOGLOG_GUARD_N = 16  # first integer with log log n > 1


class PenaltyKind(enum.Enum):
    CONSTANT = "CONSTANT"
    LOGLOG = "LOGLOG"
    LOG = "LOG"
    SQRT = "SQRT"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class PenaltySchedule:
    """A named rule n -> kappa_n >= 0 with kappa_n = o(n)."""

    kind: PenaltyKind
    c: float = 1.0
    table: tuple = None  # ((n, kappa), ...) for CUSTOM, sorted by n

    def __post_init__(self):
        if self.kind in (PenaltyKind.CONSTANT, PenaltyKind.LOGLOG) and self.c <= 0:
            raise ConfigError(f"{self.kind.value} penalty needs c > 0")
        if self.kind is PenaltyKind.CUSTOM:
            if not self.table:
                raise ConfigError("CUSTOM penalty table is empty")
            tab = tuple(sorted((int(n), float(k)) for n, k in self.table))
            for n, k in tab:
                if k < 0:
                    raise ConfigError("penalty values must be nonnegative")
                if k / n > 0.5:
                    raise ConfigError(
                        f"CUSTOM table violates kappa_n = o(n) at n={n}: "
                        f"kappa/n = {k / n:.3f} > 0.5"
                    )
            decade = tab[-min(len(tab), 10):]
            ratios = [k / n for n, k in decade]
            if len(ratios) >= 2 and all(b >= a for a, b in zip(ratios, ratios[1:])):
                warnings.warn(
                    "CUSTOM penalty ratio kappa_n/n is nondecreasing over the "
                    "last entries; kappa_n = o(n) looks doubtful"
                )
            object.__setattr__(self, "table", tab)

    def label(self) -> str:
        # round-trips through parse(): const:c | loglog:c | log | sqrt
        if self.kind is PenaltyKind.CONSTANT:
            return f"const:{self.c:g}"
        if self.kind is PenaltyKind.LOGLOG:
            return f"loglog:{self.c:g}"
        return self.kind.value.lower()

    @classmethod
    def parse(cls, text: str) -> "PenaltySchedule":
        """Parse 'const:c' | 'loglog:c' | 'log' | 'sqrt' forms."""
        t = text.strip().lower()
        if t == "log":
            return cls(PenaltyKind.LOG)
        if t == "sqrt":
            return cls(PenaltyKind.SQRT)
        if ":" in t:
            name, _, val = t.partition(":")
            try:
                c = float(val)
            except ValueError as exc:
                raise ConfigError(f"bad penalty constant in {text!r}") from exc
            if name in ("const", "constant"):
                return cls(PenaltyKind.CONSTANT, c)
            if name == "loglog":
                return cls(PenaltyKind.LOGLOG, c)
        raise ConfigError(f"unrecognized penalty spec {text!r}")


def penalty_value(sched: PenaltySchedule, n: int) -> float:
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    if sched.kind is PenaltyKind.CONSTANT:
        return sched.c
    if sched.kind is PenaltyKind.LOGLOG:
        return sched.c * math.log(math.log(max(n, LOGLOG_GUARD_N)))
    if sched.kind is PenaltyKind.LOG:
        return math.log(n)
    if sched.kind is PenaltyKind.SQRT:
        return math.sqrt(n)
    # CUSTOM: lookup with last-value extension
    value = sched.table[0][1]
    for tn, tk in sched.table:
        if tn <= n:
            value = tk
        else:
            break
    return value


@dataclass(frozen=True)
class SelectionResult:
    """Criterion table over candidates and the selected subset."""

    table: tuple            # ((subset, contrast_at_min, penalty, criterion), ...)
    winner: ModelSubset
    kappa_used: float
    tie_broken: bool
    fits: tuple = None      # matching FitResult per surviving row

    def row(self, m: ModelSubset):
        for entry in self.table:
            if entry[0] == m:
                return entry
        raise KeyError(m.label())

    def winner_fit(self) -> FitResult:
        for entry, fit in zip(self.table, self.fits):
            if entry[0] == self.winner:
                return fit
        raise KeyError("winner fit not recorded")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kappa_used": self.kappa_used,
                "winner": list(self.winner.indices),
                "tie_broken": self.tie_broken,
                "table": [
                    {
                        "subset": list(m.indices),
                        "contrast": c,
                        "penalty": p,
                        "criterion": crit,
                    }
                    for m, c, p, crit in self.table
                ],
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("subset,contrast,penalty,criterion,winner_flag\n")
        for m, c, p, crit in self.table:
            flag = 1 if m == self.winner else 0
            buf.write(f"\"{m.label()}\",{c!r},{p!r},{crit!r},{flag}\n")
        return buf.getvalue()


def criterion_table(entries, kappa):
    """Assemble rows (subset, contrast, penalty, criterion) and pick the winner.

    ``entries`` is a sequence of (subset, contrast_at_min).  Ties are broken by
    smaller subset size, then lexicographic index order.
    """
    rows = []
    for m, c in entries:
        pen = kappa * m.size
        rows.append((m, float(c), float(pen), float(c) + float(pen)))
    rows.sort(key=lambda r: (r[0].size, r[0].indices))
    best = min(r[3] for r in rows)
    contenders = [r[0] for r in rows if r[3] == best]
    winner = sorted(contenders, key=lambda m: (m.size, m.indices))[0]
    return tuple(rows), winner, len(contenders) > 1


def select_model(
    spec: FamilySpec,
    traj: Trajectory,
    candidates,
    sched: PenaltySchedule,
    options: FitOptions = FitOptions(),
) -> SelectionResult:
    """Fit every candidate and minimize the penalized criterion."""
    candidates = list(candidates)
    if not candidates:
        raise ConfigError("candidate list is empty")
    kappa = penalty_value(sched, traj.n)
    entries = []
    fits = []
    for m in candidates:
        try:
            fit = fit_mce(spec, traj, m, options)
        except PencritError as exc:
            warnings.warn(f"candidate {m.label()} excluded: {exc}")
            logger.warning("candidate %s excluded: %s", m.label(), exc)
            continue
        entries.append((m, fit.contrast_at_min))
        fits.append(fit)
    if not entries:
        raise PencritError("every candidate fit failed; nothing to select")
    order = sorted(range(len(entries)),
                   key=lambda i: (entries[i][0].size, entries[i][0].indices))
    table, winner, tie = criterion_table(entries, kappa)
    return SelectionResult(
        table=table,
        winner=winner,
        kappa_used=float(kappa),
        tie_broken=tie,
        fits=tuple(fits[i] for i in order),
    )
