"""Monte Carlo martingale-hypothesis testing.

The testable content of "X is a martingale in the enlarged filtration" is
E[(X_t - X_s) * H_s] = 0 for bounded functionals H_s of the enlarged
time-s information.  The suite evaluates this across a checkpoint grid and
a functional family, with Bonferroni control across entries.

Aggregation is associative over path shards: every statistic reduces to
(count, sum, sum of squares), so sharded and whole-ensemble runs agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, InsufficientSampleError

__all__ = [
    "TestFunctional",
    "SuiteEntry",
    "MartingaleTestReport",
    "MomentAccumulator",
    "bonferroni_threshold",
    "conditional_increment_stat",
    "martingale_suite",
    "drift_regression",
]

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class TestFunctional:
    """A bounded functional of the information available at the test time s.

    ``evaluate(ctx, s_index)`` returns one value in [-1, 1] per path;
    ``ctx`` carries whatever per-path arrays the scenario exposes (paths,
    supremum, infimum, random times).  ``info_class`` records whether the
    functional reads base-filtration data only or enlarged data too.
    """

    __test__ = False  # not a pytest class despite the name

    id: str
    evaluate: Callable = field(repr=False)
    info_class: str = "base-filtration"

    def values(self, ctx, s_index: int) -> np.ndarray:
        v = np.asarray(self.evaluate(ctx, s_index), dtype=float)
        if np.max(np.abs(v), initial=0.0) > 1.0 + _BOUND_TOL:
            raise ConfigurationError(
                f"functional {self.id!r} exceeds the unit bound"
            )
        return np.clip(v, -1.0, 1.0)


@dataclass
class MomentAccumulator:
    """Associative (n, sum, sum of squares) reduction of one statistic."""

    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, values: np.ndarray) -> None:
        v = np.asarray(values, dtype=float)
        self.n += v.size
        self.total += float(v.sum())
        self.total_sq += float((v * v).sum())

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(
            self.n + other.n, self.total + other.total, self.total_sq + other.total_sq
        )

    def stats(self) -> tuple:
        """(mean, stderr, z); z = 0 when the statistic is degenerate at 0."""
        if self.n < 100:
            raise InsufficientSampleError(f"need at least 100 samples, got {self.n}")
        mean = self.total / self.n
        var = max(self.total_sq / self.n - mean * mean, 0.0) * self.n / (self.n - 1)
        stderr = math.sqrt(var / self.n)
        if stderr > 0.0:
            z = mean / stderr
        else:
            z = 0.0 if mean == 0.0 else math.inf
        return mean, stderr, z


@dataclass(frozen=True)
class SuiteEntry:
    s: float
    t: float
    functional: str
    mean: float
    stderr: float
    z: float
    n_paths: int
    passed: bool


@dataclass(frozen=True)
class MartingaleTestReport:
    """All per-(s, t, functional) statistics plus the corrected verdict."""

    entries: tuple
    threshold: float
    per_entry_threshold: float
    correction: str
    verdict: str  # "pass" or "fail"
    vacuous: bool = False

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def max_abs_z(self) -> float:
        return max((abs(e.z) for e in self.entries), default=0.0)


def bonferroni_threshold(nominal_z: float, n_entries: int) -> float:
    """Per-entry |z| threshold holding the familywise level of nominal_z.

    The nominal two-sided tail mass 2*(1-Phi(nominal_z)) is split evenly
    across entries and mapped back through the Gaussian quantile.
    """
    if n_entries <= 1:
        return nominal_z
    p_nominal = 2.0 * norm.sf(nominal_z)
    return float(norm.isf(p_nominal / (2.0 * n_entries)))


def conditional_increment_stat(
    increments: np.ndarray,
    h_values: np.ndarray,
) -> tuple:
    """(mean, stderr, z) of (X_t - X_s) * H_s over paths.

    Inputs are per-path arrays already evaluated at one (s, t, functional)
    triple; the scenario layer is responsible for producing them from
    ensembles and enlargement data.
    """
    acc = MomentAccumulator()
    acc.add(np.asarray(increments, dtype=float) * np.asarray(h_values, dtype=float))
    return acc.stats()


def martingale_suite(
    accumulators: dict,
    threshold: float = 3.0,
    correction: str = "bonferroni",
) -> MartingaleTestReport:
    """Assemble a report from per-(s, t, functional) accumulators.

    ``accumulators`` maps (s, t, functional_id) -> MomentAccumulator.  An
    empty mapping yields a vacuous pass, flagged as such.
    """
    if correction not in ("bonferroni", "none"):
        raise ConfigurationError(f"unknown correction {correction!r}")
    keys = sorted(accumulators.keys())
    if not keys:
        return MartingaleTestReport(
            entries=(),
            threshold=threshold,
            per_entry_threshold=threshold,
            correction=correction,
            verdict="pass",
            vacuous=True,
        )
    per_entry = (
        bonferroni_threshold(threshold, len(keys))
        if correction == "bonferroni"
        else threshold
    )
    entries = []
    all_pass = True
    for s, t, fid in keys:
        mean, stderr, z = accumulators[(s, t, fid)].stats()
        ok = abs(z) <= per_entry
        all_pass &= ok
        entries.append(
            SuiteEntry(s, t, fid, mean, stderr, z, accumulators[(s, t, fid)].n, ok)
        )
    return MartingaleTestReport(
        entries=tuple(entries),
        threshold=threshold,
        per_entry_threshold=per_entry,
        correction=correction,
        verdict="pass" if all_pass else "fail",
    )


def drift_regression(
    state: np.ndarray,
    increments: np.ndarray,
    dt: float,
    rate_fn: Callable[[np.ndarray], np.ndarray],
    bins: int = 10,
) -> list:
    """Binned check of E[dX]/dt against a pointwise rate function.

    Paths are binned by ``state`` (NaN states are dropped); each bin
    compares the empirical mean of increments/dt with the bin average of
    ``rate_fn(state)`` and reports a z-score.  Returns a list of dicts, one
    per nonempty bin; empty bins are flagged and excluded.
    """
    if bins < 5:
        raise ConfigurationError(f"need at least 5 bins, got {bins}")
    state = np.asarray(state, dtype=float)
    increments = np.asarray(increments, dtype=float)
    keep = ~np.isnan(state)
    state, increments = state[keep], increments[keep]
    if state.size == 0:
        return []
    edges = np.quantile(state, np.linspace(0.0, 1.0, bins + 1))
    edges[0] -= 1e-12
    rows = []
    for b in range(bins):
        sel = (state > edges[b]) & (state <= edges[b + 1])
        n = int(sel.sum())
        if n == 0:
            rows.append({"bin": b, "empty": True})
            continue
        emp = increments[sel] / dt
        target = float(np.mean(rate_fn(state[sel])))
        mean = float(np.mean(emp))
        sd = float(np.std(emp, ddof=1)) if n > 1 else 0.0
        stderr = sd / math.sqrt(n) if n > 1 else math.inf
        z = (mean - target) / stderr if stderr > 0 else 0.0
        rows.append(
            {
                "bin": b,
                "empty": False,
                "n": n,
                "state_mean": float(np.mean(state[sel])),
                "empirical_rate": mean,
                "target_rate": target,
                "stderr": stderr,
                "z": z,
            }
        )
    return rows
