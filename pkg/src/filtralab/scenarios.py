"""End-to-end enlargement experiments.

Each scenario simulates an ensemble in path blocks, builds the candidate
martingale (drift-corrected unless the negative control is requested),
evaluates the functional family at the checkpoints, and reduces everything
through shard-safe moment accumulators.  Per-path substreams make the
result independent of the block schedule.

Scenario names: bridge, supremum, emery-before, emery-after, honest,
pitman, glue-demo, elemint-check.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .drifts import (
    emery_after_rate,
    h_func,
    h_func_prime,
    supremum_instance_rate,
)
from .errors import ConfigurationError
from .grids import GridPath, TimeGrid
from .gluing import PieceSystem, _mask_runs, glue, reconstruction_residual
from .paths import (
    ScaleFunction,
    _bridge_min,
    pitman_from_draws,
    reciprocal_scale,
)
from .rng import substream
from .verify import (
    MartingaleTestReport,
    MomentAccumulator,
    SuiteEntry,
    TestFunctional,
    martingale_suite,
)

__all__ = [
    "ScenarioConfig",
    "ScenarioResult",
    "SCENARIOS",
    "run_scenario",
    "random_piece_system",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)

# Space-damping scale for the after-side candidates: the corrected
# increments are weighted by min(1, (distance to the singular set / this)^4),
# a bounded predictable integrand that tames the reciprocal-distance drifts.
_DAMP_SCALE = 0.3

_STATISTICAL = (
    "bridge",
    "supremum",
    "emery-before",
    "emery-after",
    "honest",
    "pitman",
)
_DETERMINISTIC = ("glue-demo", "elemint-check")


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of one experiment run."""

    scenario: str
    horizon: float = 1.0
    dt: float = 1e-3
    n_paths: int = 50_000
    seed: int = 1
    delta: float = 0.05
    threshold: float = 3.0
    out_path: str | None = None
    format: str = "csv"
    no_correction: bool = False
    block_size: int = 8192
    bes_method: str = "pitman-construction"

    def validated(self) -> "ScenarioConfig":
        if self.scenario not in _STATISTICAL + _DETERMINISTIC:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"unknown format {self.format!r}")
        if self.scenario in _DETERMINISTIC:
            return self
        if self.dt <= 0.0 or self.horizon <= 0.0:
            raise ConfigurationError("dt and horizon must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(
                f"dt = {self.dt} does not divide horizon = {self.horizon}"
            )
        if self.delta < self.dt:
            raise ConfigurationError(f"delta = {self.delta} must be >= dt = {self.dt}")
        if self.n_paths < 100:
            raise ConfigurationError(
                f"statistical scenarios need n_paths >= 100, got {self.n_paths}"
            )
        if self.bes_method not in ("pitman-construction", "euler-sde"):
            raise ConfigurationError(f"unknown bes_method {self.bes_method!r}")
        return self

    def grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.dt, round(self.horizon / self.dt))


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    report: MartingaleTestReport
    extra_entries: tuple = ()
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed and all(e.passed for e in self.extra_entries)


@dataclass
class BlockContext:
    """Per-block arrays the functionals and candidates read."""

    grid: TimeGrid
    times: np.ndarray
    W: np.ndarray
    W1: np.ndarray | None = None
    U: np.ndarray | None = None
    I: np.ndarray | None = None
    Ttimes: np.ndarray | None = None
    xi: np.ndarray | None = None
    g: np.ndarray | None = None
    transform: np.ndarray | None = None


def _blocks(n_paths: int, block_size: int):
    for lo in range(0, n_paths, block_size):
        yield lo, min(lo + block_size, n_paths)


def _brownian_block(grid: TimeGrid, seed: int, lo: int, hi: int) -> np.ndarray:
    sqdt = math.sqrt(grid.dt)
    out = np.empty((hi - lo, grid.n + 1))
    for i in range(lo, hi):
        z = substream(seed, "brownian", i).standard_normal(grid.n)
        out[i - lo, 0] = 0.0
        np.cumsum(z, out=out[i - lo, 1:])
    out[:, 1:] *= sqdt
    return out


def _last_crossing_matrix(
    values: np.ndarray, levels: np.ndarray, times: np.ndarray
) -> np.ndarray:
    """Vectorized last interpolated crossing time per row; 0 when none."""
    f = values - levels[:, None]
    a, b = f[:, :-1], f[:, 1:]
    qual = (b == 0.0) | (a == 0.0) | ((a > 0.0) != (b > 0.0))
    any_row = qual.any(axis=1)
    # last qualifying transition per row
    k = qual.shape[1] - 1 - np.argmax(qual[:, ::-1], axis=1)
    rows = np.arange(len(f))
    a_star, b_star = a[rows, k], b[rows, k]
    t_lo, t_hi = times[k], times[k + 1]
    out = np.where(
        b_star == 0.0,
        t_hi,
        np.where(
            a_star == 0.0,
            t_lo,
            t_lo + (t_hi - t_lo) * (-a_star) / np.where(b_star != a_star, b_star - a_star, 1.0),
        ),
    )
    return np.where(any_row, out, 0.0)


def _exact_last_passage(
    values: np.ndarray,
    levels: np.ndarray,
    grid: TimeGrid,
    seed: int,
    lo: int,
) -> np.ndarray:
    """Last passage at a level, with within-step touches sampled exactly.

    Grid values only reveal sign flips; a Brownian path also touches the
    level inside a same-side step with the bridge probability
    exp(-2*f_j*f_{j+1}/dt).  Those hidden visits shift the effective
    barrier of the discrete walk by O(sqrt(dt)) and bias every last-passage
    conditioning; drawing them restores the continuum law.  Flip crossings
    are placed by interpolation, sampled touches at the step's right
    endpoint (the position error is O(dt), far below the window trim).
    """
    f = values - levels[:, None]
    a, b = f[:, :-1], f[:, 1:]
    u = np.empty_like(a)
    for i in range(len(f)):
        u[i] = 1.0 - substream(seed, "bridge_min", lo + i).uniform(size=f.shape[1] - 1)
    flip = (a == 0.0) | (b == 0.0) | ((a > 0.0) != (b > 0.0))
    with np.errstate(under="ignore"):
        p_touch = np.exp(-2.0 * np.maximum(a * b, 0.0) / grid.dt)
    visit = flip | (u < p_touch)
    any_row = visit.any(axis=1)
    k = visit.shape[1] - 1 - np.argmax(visit[:, ::-1], axis=1)
    rows = np.arange(len(f))
    a_star, b_star = a[rows, k], b[rows, k]
    times = grid.times()
    t_lo, t_hi = times[k], times[k + 1]
    is_flip = flip[rows, k]
    interp = np.where(
        b_star == 0.0,
        t_hi,
        np.where(
            a_star == 0.0,
            t_lo,
            t_lo + grid.dt * (-a_star) / np.where(b_star != a_star, b_star - a_star, 1.0),
        ),
    )
    out = np.where(is_flip, interp, t_hi)
    return np.where(any_row, out, 0.0)


# ---------------------------------------------------------------------------
# functional catalog
# ---------------------------------------------------------------------------


def _f_const() -> TestFunctional:
    return TestFunctional("1", lambda ctx, si: np.ones(ctx.W.shape[0]))


def _f_sign_level(c: float) -> TestFunctional:
    return TestFunctional(
        f"sign(W-{c:g})", lambda ctx, si: np.sign(ctx.W[:, si] - c)
    )


def _base_functionals() -> list:
    return [_f_const(), _f_sign_level(-0.5), _f_sign_level(0.0), _f_sign_level(0.5)]


def _suite_from_blocks(
    cfg: ScenarioConfig,
    make_block,
    candidate,
    functional_factory,
    checkpoints,
    block_hook=None,
) -> MartingaleTestReport:
    grid = cfg.grid()
    accs: dict = defaultdict(MomentAccumulator)
    idx = {
        pair: (grid.index_of(pair[0]), grid.index_of(pair[1])) for pair in checkpoints
    }
    for lo, hi in _blocks(cfg.n_paths, cfg.block_size):
        ctx = make_block(lo, hi)
        x = candidate(ctx)
        for (s, t), (si, ti) in idx.items():
            inc = x[:, ti] - x[:, si]
            for f in functional_factory(s, t):
                accs[(s, t, f.id)].add(inc * f.values(ctx, si))
        if block_hook is not None:
            block_hook(ctx)
    return martingale_suite(accs, cfg.threshold, "bonferroni")


# ---------------------------------------------------------------------------
# bridge: initial enlargement with the terminal value
# ---------------------------------------------------------------------------


def _bridge_block(cfg: ScenarioConfig, grid: TimeGrid, lo: int, hi: int) -> BlockContext:
    w = _brownian_block(grid, cfg.seed, lo, hi)
    return BlockContext(grid, grid.times(), w, W1=w[:, -1])


def _bridge_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    if cfg.no_correction:
        return ctx.W
    t_left = ctx.times[:-1]
    window = ctx.times[1:] <= 1.0 - cfg.delta + 1e-12
    rate = (ctx.W1[:, None] - ctx.W[:, :-1]) / (1.0 - t_left)[None, :]
    inc = rate * (cfg.dt * window)[None, :]
    drift = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1
    )
    return ctx.W - drift


def run_bridge(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.horizon != 1.0:
        raise ConfigurationError("the bridge scenario is defined on horizon 1")
    grid = cfg.grid()
    pts = [0.2, 0.4, 0.6, 0.8]
    checkpoints = [(s, t) for s in pts for t in pts if s < t]
    funcs = _base_functionals() + [
        TestFunctional(
            "sign(W1-W)",
            lambda ctx, si: np.sign(ctx.W1 - ctx.W[:, si]),
            info_class="enlarged",
        )
    ]
    report = _suite_from_blocks(
        cfg,
        lambda lo, hi: _bridge_block(cfg, grid, lo, hi),
        lambda ctx: _bridge_candidate(cfg, ctx),
        lambda s, t: funcs,
        checkpoints,
    )
    return ScenarioResult("bridge", report)


# ---------------------------------------------------------------------------
# supremum: initial enlargement with the whole running supremum
# ---------------------------------------------------------------------------


def _supremum_block(cfg: ScenarioConfig, grid: TimeGrid, lo: int, hi: int) -> BlockContext:
    """Brownian block with its continuum running supremum sampled exactly.

    Per-step bridge-maximum draws give the exact joint law of the path and
    its supremum at grid times, which removes the O(sqrt(dt)) downward bias
    of the grid-sampled supremum; record times are resolved to the step
    that contains them (midpoint convention) and censored entries get one
    exact post-horizon first-passage draw.
    """
    from .paths import _bridge_max

    w = _brownian_block(grid, cfg.seed, lo, hi)
    bu = np.empty((hi - lo, grid.n))
    for i in range(lo, hi):
        bu[i - lo] = 1.0 - substream(cfg.seed, "bridge_min", i).uniform(size=grid.n)
    step_max = _bridge_max(w[:, :-1], w[:, 1:], grid.dt, bu)
    u = np.empty_like(w)
    u[:, 0] = w[:, 0]
    np.maximum.accumulate(step_max, axis=1, out=u[:, 1:])

    rec = step_max > u[:, :-1]  # the supremum rises inside this step
    mid = grid.times()[:-1] + 0.5 * grid.dt
    vals = np.where(rec, mid[None, :], math.inf)
    ttimes = np.empty_like(w)
    ttimes[:, :-1] = np.minimum.accumulate(vals[:, ::-1], axis=1)[:, ::-1]
    ttimes[:, -1] = math.inf

    gap_h = u[:, -1] - w[:, -1]
    t_star = np.full(hi - lo, grid.horizon)
    for i in range(lo, hi):
        if gap_h[i - lo] > 0.0:
            z = float(substream(cfg.seed, "sup_tail", i).standard_normal())
            t_star[i - lo] = grid.horizon + gap_h[i - lo] ** 2 / (z * z)
    ttimes = np.where(np.isfinite(ttimes), ttimes, t_star[:, None])
    return BlockContext(grid, grid.times(), w, U=u, Ttimes=ttimes)


def _supremum_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    gap = ctx.U[:, :-1] - ctx.W[:, :-1]
    m_inc = gap * np.diff(ctx.W, axis=1)
    m = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(m_inc, axis=1)], axis=1
    )
    if cfg.no_correction:
        return m
    tau = ctx.Ttimes[:, :-1] - ctx.times[:-1][None, :]
    rate = np.where(gap > 0.0, supremum_instance_rate(gap, tau), 0.0)
    drift = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(rate * cfg.dt, axis=1)], axis=1
    )
    return m - drift


def run_supremum(cfg: ScenarioConfig) -> ScenarioResult:
    grid = cfg.grid()
    h = cfg.horizon
    pts = [0.2 * h, 0.4 * h, 0.6 * h, 0.8 * h]
    checkpoints = [(s, t) for s in pts for t in pts if s < t]

    def factory(s: float, t: float) -> list:
        si = grid.index_of(s)

        def record_free(ctx: BlockContext) -> np.ndarray:
            return (ctx.Ttimes[:, si] >= t + cfg.delta).astype(float)

        def masked(fn):
            return lambda ctx, si_: record_free(ctx) * fn(ctx, si_)

        return [
            TestFunctional("recfree", lambda ctx, si_: record_free(ctx), "enlarged"),
            TestFunctional(
                "recfree*tanh(U)",
                masked(lambda ctx, si_: np.tanh(ctx.U[:, si_])),
                "enlarged",
            ),
            TestFunctional(
                "recfree*tanh(U-W)",
                masked(lambda ctx, si_: np.tanh(ctx.U[:, si_] - ctx.W[:, si_])),
                "enlarged",
            ),
            TestFunctional(
                "recfree*ratio",
                masked(
                    lambda ctx, si_: np.minimum(
                        1.0,
                        (ctx.U[:, si_] - ctx.W[:, si_]) ** 2
                        / np.maximum(ctx.Ttimes[:, si_] - ctx.times[si_], 1e-300),
                    )
                ),
                "enlarged",
            ),
        ]

    report = _suite_from_blocks(
        cfg,
        lambda lo, hi: _supremum_block(cfg, grid, lo, hi),
        lambda ctx: _supremum_candidate(cfg, ctx),
        factory,
        checkpoints,
    )
    return ScenarioResult("supremum", report)


# ---------------------------------------------------------------------------
# emery: progressive enlargement with the half-terminal last-passage time
# ---------------------------------------------------------------------------


def _emery_block(cfg: ScenarioConfig, grid: TimeGrid, lo: int, hi: int) -> BlockContext:
    w = _brownian_block(grid, cfg.seed, lo, hi)
    w1 = w[:, -1]
    xi = _exact_last_passage(w, w1 / 2.0, grid, cfg.seed, lo)
    return BlockContext(grid, grid.times(), w, W1=w1, xi=xi)


def _emery_before_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    """Stopped-at-xi path, drift-corrected: stopped value is W1/2 exactly."""
    t = ctx.times
    stopped = np.where(t[None, :] <= ctx.xi[:, None], ctx.W, (ctx.W1 / 2.0)[:, None])
    if cfg.no_correction:
        return stopped
    t_left, t_right = t[:-1], t[1:]
    root = np.sqrt(1.0 - t_left)
    y = np.abs(ctx.W[:, :-1]) / root[None, :]
    z = np.maximum(_emery_Z_from_y(y), 1e-300)  # Z and h' underflow together
    rate = -h_func_prime(y) * np.sign(ctx.W[:, :-1]) / root[None, :] / z
    dt_eff = np.clip(ctx.xi[:, None] - t_left[None, :], 0.0, cfg.dt)
    dt_eff = np.where(t_right[None, :] <= 1.0 - cfg.dt / 2.0, dt_eff, 0.0)
    drift = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(rate * dt_eff, axis=1)], axis=1
    )
    return stopped - drift


def _emery_Z_from_y(y: np.ndarray) -> np.ndarray:
    return erfc(y / math.sqrt(2.0)) + math.sqrt(2.0 / math.pi) * y * np.exp(-0.5 * y * y)


def _emery_after_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    """Damped corrected increments on steps fully inside (xi + delta, cap].

    The drift blows up like the reciprocal distance to the avoided level
    W1/2, so the candidate integrates the corrected increments against the
    bounded predictable weight min(1, |W - W1/2|^4 / c^4); under the null
    any such integral is again a martingale, and the weight suppresses the
    region where a finite grid cannot match the continuum compensator.
    """
    cap = 0.9
    t_left, t_right = ctx.times[:-1], ctx.times[1:]
    active = (t_left[None, :] >= ctx.xi[:, None] + cfg.delta - 1e-12) & (
        t_right[None, :] <= cap + 1e-12
    )
    dist = np.abs(ctx.W[:, :-1] - (ctx.W1 / 2.0)[:, None])
    phi = np.minimum(1.0, (dist / _DAMP_SCALE) ** 4) * active
    rate = np.zeros_like(ctx.W[:, :-1])
    rows, cols = np.nonzero(active)
    if len(rows):
        rate[rows, cols] = emery_after_rate(
            ctx.W[rows, cols], t_left[cols], ctx.W1[rows]
        )
    inc = np.diff(ctx.W, axis=1) - (0.0 if cfg.no_correction else rate * cfg.dt)
    out = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(phi * inc, axis=1)], axis=1
    )
    return out


def _emery_before_functionals(cfg: ScenarioConfig, s: float) -> list:
    def not_yet(ctx: BlockContext) -> np.ndarray:
        si = ctx.grid.index_of(s)
        return (ctx.xi > ctx.times[si]).astype(float)

    return _base_functionals() + [
        TestFunctional("1[xi<=s]", lambda ctx, si: 1.0 - not_yet(ctx), "enlarged"),
        TestFunctional(
            "sign(W)*1[xi>s]",
            lambda ctx, si: np.sign(ctx.W[:, si]) * not_yet(ctx),
            "enlarged",
        ),
    ]


def _emery_after_functionals(cfg: ScenarioConfig, s: float) -> list:
    def mask(ctx: BlockContext) -> np.ndarray:
        return (ctx.xi <= s - cfg.delta).astype(float)

    return [
        TestFunctional("1[xi<=s-d]", lambda ctx, si: mask(ctx), "enlarged"),
        TestFunctional(
            "mask*sign(W)",
            lambda ctx, si: mask(ctx) * np.sign(ctx.W[:, si]),
            "enlarged",
        ),
        TestFunctional(
            "mask*sign(W1)",
            lambda ctx, si: mask(ctx) * np.sign(ctx.W1),
            "enlarged",
        ),
        TestFunctional(
            "mask*sign(W-W1/2)",
            lambda ctx, si: mask(ctx) * np.sign(ctx.W[:, si] - ctx.W1 / 2.0),
            "enlarged",
        ),
    ]


def run_emery_before(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.horizon != 1.0:
        raise ConfigurationError("emery scenarios are defined on horizon 1")
    grid = cfg.grid()
    pts = [0.1, 0.3, 0.5, 0.7, 0.9]
    checkpoints = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)] + [
        (0.1, 0.5),
        (0.5, 0.9),
    ]
    report = _suite_from_blocks(
        cfg,
        lambda lo, hi: _emery_block(cfg, grid, lo, hi),
        lambda ctx: _emery_before_candidate(cfg, ctx),
        lambda s, t: _emery_before_functionals(cfg, s),
        checkpoints,
    )
    return ScenarioResult("emery-before", report)


def run_emery_after(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.horizon != 1.0:
        raise ConfigurationError("emery scenarios are defined on horizon 1")
    grid = cfg.grid()
    pts = [0.3, 0.5, 0.7, 0.9]
    checkpoints = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)] + [(0.3, 0.9)]
    report = _suite_from_blocks(
        cfg,
        lambda lo, hi: _emery_block(cfg, grid, lo, hi),
        lambda ctx: _emery_after_candidate(cfg, ctx),
        lambda s, t: _emery_after_functionals(cfg, s),
        checkpoints,
    )
    return ScenarioResult("emery-after", report)


def emery_conditional_law_rows(cfg: ScenarioConfig, t_check: float = 0.5, bins: int = 20):
    """Binned empirical P[t < xi | y in bin] against 1 - h(y) at one time.

    Returns (mean absolute error, rows); the Azema supermartingale is the
    predicted conditional survival probability of the last-passage time.
    """
    grid = cfg.grid()
    ti = grid.index_of(t_check)
    ys, alive = [], []
    for lo, hi in _blocks(cfg.n_paths, cfg.block_size):
        ctx = _emery_block(cfg, grid, lo, hi)
        ys.append(np.abs(ctx.W[:, ti]) / math.sqrt(1.0 - t_check))
        alive.append(ctx.xi > t_check)
    y = np.concatenate(ys)
    a = np.concatenate(alive)
    edges = np.quantile(y, np.linspace(0.0, 1.0, bins + 1))
    edges[0] -= 1e-12
    rows = []
    errs = []
    for b in range(bins):
        sel = (y > edges[b]) & (y <= edges[b + 1])
        n = int(sel.sum())
        if n == 0:
            continue
        emp = float(np.mean(a[sel]))
        pred = float(np.mean(1.0 - h_func(y[sel])))
        errs.append(abs(emp - pred))
        rows.append({"bin": b, "n": n, "empirical": emp, "predicted": pred})
    return float(np.mean(errs)), rows


# ---------------------------------------------------------------------------
# honest: progressive enlargement with the last zero before 1
# ---------------------------------------------------------------------------


def _honest_block(cfg: ScenarioConfig, grid: TimeGrid, lo: int, hi: int) -> BlockContext:
    w = _brownian_block(grid, cfg.seed, lo, hi)
    g = _exact_last_passage(w, np.zeros(hi - lo), grid, cfg.seed, lo)
    return BlockContext(grid, grid.times(), w, W1=w[:, -1], g=g)


def _honest_rate_parts(ctx: BlockContext):
    """(dNdW, Z, 1-Z) at the left endpoints of every step."""
    t_left = ctx.times[:-1]
    root = np.sqrt(1.0 - t_left)
    w = ctx.W[:, :-1]
    y = np.abs(w) / root[None, :]
    z = erfc(y / math.sqrt(2.0))
    phi = np.exp(-0.5 * y * y) / _SQRT2PI
    dndw = -2.0 * phi * np.sign(w) / root[None, :]
    return dndw, z, 1.0 - z


def _honest_before_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    """Stopped-at-g path (stopped value exactly 0), corrected before g."""
    t = ctx.times
    stopped = np.where(t[None, :] <= ctx.g[:, None], ctx.W, 0.0)
    if cfg.no_correction:
        return stopped
    dndw, z, _ = _honest_rate_parts(ctx)
    rate = dndw / np.maximum(z, 1e-300)  # Z, phi underflow together
    dt_eff = np.clip(ctx.g[:, None] - t[:-1][None, :], 0.0, cfg.dt)
    drift = np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(rate * dt_eff, axis=1)], axis=1
    )
    return stopped - drift


def _honest_after_candidate(cfg: ScenarioConfig, ctx: BlockContext) -> np.ndarray:
    """Damped corrected increments after g; the singular set is W = 0."""
    cap = 0.9
    t_left, t_right = ctx.times[:-1], ctx.times[1:]
    dndw, _, one_minus_z = _honest_rate_parts(ctx)
    active = (t_left[None, :] >= ctx.g[:, None] + cfg.delta - 1e-12) & (
        t_right[None, :] <= cap + 1e-12
    )
    rate = np.where(active, -dndw / np.maximum(one_minus_z, 1e-300), 0.0)
    phi = np.minimum(1.0, np.abs(ctx.W[:, :-1] / _DAMP_SCALE) ** 4) * active
    inc = np.diff(ctx.W, axis=1) - (0.0 if cfg.no_correction else rate * cfg.dt)
    return np.concatenate(
        [np.zeros((ctx.W.shape[0], 1)), np.cumsum(phi * inc, axis=1)], axis=1
    )


def _honest_before_functionals(cfg: ScenarioConfig, s: float) -> list:
    def not_yet(ctx: BlockContext) -> np.ndarray:
        return (ctx.g > s).astype(float)

    return _base_functionals() + [
        TestFunctional("1[g<=s]", lambda ctx, si: 1.0 - not_yet(ctx), "enlarged"),
        TestFunctional(
            "sign(W)*1[g>s]",
            lambda ctx, si: np.sign(ctx.W[:, si]) * not_yet(ctx),
            "enlarged",
        ),
    ]


def _honest_after_functionals(cfg: ScenarioConfig, s: float) -> list:
    def mask(ctx: BlockContext) -> np.ndarray:
        return (ctx.g <= s - cfg.delta).astype(float)

    return [
        TestFunctional("1[g<=s-d]", lambda ctx, si: mask(ctx), "enlarged"),
        TestFunctional(
            "mask*sign(W)",
            lambda ctx, si: mask(ctx) * np.sign(ctx.W[:, si]),
            "enlarged",
        ),
    ]


def run_honest(cfg: ScenarioConfig) -> ScenarioResult:
    """Two-sided honest-time suite: stopped-corrected before, masked after."""
    if cfg.horizon != 1.0:
        raise ConfigurationError("the honest scenario is defined on horizon 1")
    grid = cfg.grid()
    before_pts = [0.1, 0.3, 0.5, 0.7, 0.9]
    before_cps = [(before_pts[i], before_pts[i + 1]) for i in range(4)] + [(0.1, 0.9)]
    after_pts = [0.3, 0.5, 0.7, 0.9]
    after_cps = [(after_pts[i], after_pts[i + 1]) for i in range(3)] + [(0.3, 0.9)]

    accs: dict = defaultdict(MomentAccumulator)
    b_idx = {p: (grid.index_of(p[0]), grid.index_of(p[1])) for p in before_cps}
    a_idx = {p: (grid.index_of(p[0]), grid.index_of(p[1])) for p in after_cps}
    for lo, hi in _blocks(cfg.n_paths, cfg.block_size):
        ctx = _honest_block(cfg, grid, lo, hi)
        xb = _honest_before_candidate(cfg, ctx)
        xa = _honest_after_candidate(cfg, ctx)
        for (s, t), (si, ti) in b_idx.items():
            inc = xb[:, ti] - xb[:, si]
            for f in _honest_before_functionals(cfg, s):
                accs[(s, t, "pre|" + f.id)].add(inc * f.values(ctx, si))
        for (s, t), (si, ti) in a_idx.items():
            inc = xa[:, ti] - xa[:, si]
            for f in _honest_after_functionals(cfg, s):
                accs[(s, t, "post|" + f.id)].add(inc * f.values(ctx, si))
    report = martingale_suite(accs, cfg.threshold, "bonferroni")
    return ScenarioResult("honest", report)


# ---------------------------------------------------------------------------
# pitman: future-infimum enlargement of the Bessel(3) process
# ---------------------------------------------------------------------------


def _pitman_block(
    cfg: ScenarioConfig, grid: TimeGrid, scale: ScaleFunction, lo: int, hi: int
) -> BlockContext:
    from .errors import NumericalDegeneracyError

    nb, n = hi - lo, grid.n
    r = np.empty((nb, n + 1))
    if cfg.bes_method == "pitman-construction":
        for i in range(lo, hi):
            gen = substream(cfg.seed, "bes3", i)
            j0u = 1.0 - gen.uniform()
            z = gen.standard_normal(n)
            bu = 1.0 - gen.uniform(size=n)
            r[i - lo] = pitman_from_draws(1.0, j0u, z, bu, grid.dt)
    else:
        sqdt = math.sqrt(grid.dt)
        for i in range(lo, hi):
            z = substream(cfg.seed, "bes3", i).standard_normal(n)
            cur = 1.0
            r[i - lo, 0] = cur
            for k in range(n):
                cur = cur + grid.dt / cur + sqdt * z[k]
                if cur <= 0.0:
                    raise NumericalDegeneracyError(
                        f"euler-sde path {i} proposed a non-positive value at step {k + 1}"
                    )
                r[i - lo, k + 1] = cur

    tails = np.empty(nb)
    bridge_u = np.empty((nb, n))
    for i in range(lo, hi):
        u_t = 1.0 - float(substream(cfg.seed, "inf_tail", i).uniform())
        tails[i - lo] = scale.tail_sample(float(r[i - lo, -1]), u_t)
        bridge_u[i - lo] = 1.0 - substream(cfg.seed, "bridge_min", i).uniform(size=n)
    step_min = _bridge_min(r[:, :-1], r[:, 1:], grid.dt, bridge_u)
    ext = np.concatenate(
        [step_min, np.minimum(r[:, -1:], tails[:, None])], axis=1
    )
    inf_path = np.minimum.accumulate(ext[:, ::-1], axis=1)[:, ::-1]
    return BlockContext(
        grid, grid.times(), r, I=inf_path, transform=2.0 * inf_path - r
    )


def run_pitman(cfg: ScenarioConfig) -> ScenarioResult:
    """Certify that twice the future infimum minus the Bessel path is a martingale."""
    grid = cfg.grid()
    scale = reciprocal_scale()
    h = cfg.horizon
    level_ts = [round(h * k / 10.0, 12) for k in range(1, 11)]
    checkpoints = [(level_ts[i], level_ts[i + 1]) for i in range(9)]

    funcs = [
        TestFunctional("1", lambda ctx, si: np.ones(ctx.W.shape[0])),
        TestFunctional(
            "min(I,2)/2",
            lambda ctx, si: np.minimum(ctx.I[:, si], 2.0) / 2.0,
            "enlarged",
        ),
    ]
    level_accs: dict = {t: MomentAccumulator() for t in [0.0] + level_ts}

    def hook(ctx: BlockContext) -> None:
        if cfg.no_correction:
            return
        for t, acc in level_accs.items():
            acc.add(ctx.transform[:, grid.index_of(t)])

    def candidate(ctx: BlockContext) -> np.ndarray:
        # the negative control drops the infimum information entirely
        return ctx.W if cfg.no_correction else ctx.transform

    report = _suite_from_blocks(
        cfg,
        lambda lo, hi: _pitman_block(cfg, grid, scale, lo, hi),
        candidate,
        lambda s, t: funcs,
        checkpoints,
        block_hook=hook,
    )
    extra = []
    if not cfg.no_correction:
        for t, acc in sorted(level_accs.items()):
            mean, stderr, z = acc.stats()
            extra.append(
                SuiteEntry(0.0, t, "level:2I-R", mean, stderr, z, acc.n, abs(z) <= 3.0)
            )
    return ScenarioResult("pitman", report, tuple(extra))


# ---------------------------------------------------------------------------
# deterministic scenarios
# ---------------------------------------------------------------------------


def future_inf_piece_system(
    R: np.ndarray, I: np.ndarray, grid: TimeGrid, scale: ScaleFunction
) -> PieceSystem:
    """Piece system of the future-infimum enlargement on one Bessel path.

    Target is the scale-transformed path, reference the scale-transformed
    future infimum, and the per-piece drift d<e(Z)>/e(Z) is realized
    through squared increments.  The pieces are the maximal grid runs of
    {Z > I}: the closed intervals up to the next infimum increase also
    contain the touch points Z = I, but those form the boundary set that
    carries the local-time mass, and the decomposition identity needs them
    outside the covered set (the continuum statement only determines the
    covered set up to this countable boundary).
    """
    e = np.vectorize(scale.e, otypes=[float])
    s = e(R)
    s_check = e(I)
    times = grid.times()
    covered = R > I
    intervals = []
    for a, b in _mask_runs(covered):
        intervals.append((float(times[a] - 0.5 * grid.dt), float(times[b])))
    de = np.diff(s)
    chi_inc = de * de / s[:-1]
    return PieceSystem.from_common_drift(
        GridPath(grid, s), GridPath(grid, s_check), intervals, chi_inc
    )


def random_piece_system(
    rng: np.random.Generator,
    n_steps: int = 200,
    dt: float = 0.01,
    n_pieces: int = 6,
    jump_scale: float = 1.0,
    conflicting: bool = False,
) -> PieceSystem:
    """Synthetic jumpy PieceSystem whose support assumption holds by build.

    The reference path is an arbitrary jump path started at 0; the target
    adds a disturbance supported on the covered grid points; piece drifts
    restrict one common increment stream, or two clashing ones when
    ``conflicting`` is set.
    """
    grid = TimeGrid(0.0, dt, n_steps)
    times = grid.times()
    intervals = []
    for _ in range(n_pieces):
        a = rng.integers(0, n_steps - 2)
        b = rng.integers(a + 1, n_steps)
        intervals.append((times[a] + dt * 0.5, times[b] + dt * 0.5))
    covered = np.zeros(n_steps + 1, dtype=bool)
    for lo, hi in intervals:
        covered |= (times > lo) & (times <= hi)

    s_check = np.concatenate(
        [[0.0], np.cumsum(rng.normal(0.0, jump_scale, n_steps))]
    )
    disturb = np.where(covered, rng.normal(0.0, jump_scale, n_steps + 1), 0.0)
    s = s_check + disturb

    inc = rng.normal(0.0, jump_scale, n_steps)
    system = PieceSystem.from_common_drift(
        GridPath(grid, s), GridPath(grid, s_check), intervals, inc
    )
    if conflicting and len(system.pieces) >= 2:
        p0 = system.pieces[0]
        # overlap the first interval with itself but carry a different drift
        clash = PieceSystem.from_common_drift(
            GridPath(grid, s), GridPath(grid, s_check), [(p0.T, p0.U)], inc + 1.0
        ).pieces[0]
        system = PieceSystem(system.S, system.S_check, system.pieces + (clash,))
    return system


def run_glue_demo(cfg: ScenarioConfig) -> ScenarioResult:
    """Randomized reconstruction checks on synthetic piece systems."""
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    n_cases = 40
    for _ in range(n_cases):
        system = random_piece_system(rng)
        dec = glue(system, eps_list=[system.grid.dt, 4 * system.grid.dt])
        res = np.max(np.abs(reconstruction_residual(system, dec)))
        worst = max(worst, float(res))
    entry = SuiteEntry(
        0.0, 0.0, "glue:max-reconstruction-error", worst, 0.0, 0.0, n_cases,
        worst <= 1e-12,
    )
    report = martingale_suite({}, cfg.threshold, "bonferroni")
    return ScenarioResult("glue-demo", report, (entry,), {"cases": n_cases})


def run_elemint_check(cfg: ScenarioConfig) -> ScenarioResult:
    """Randomized elementary-integral property checks (small, fast)."""
    from . import elemint as ei

    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    n_cases = 100
    for _ in range(n_cases):
        f, h, g, c = _random_elemint_case(rng)
        lhs = ei.stop(ei.elem_integral(h, f), c)
        rhs = ei.elem_integral(h, ei.stop(f, c))
        for t in ei.probe_points(h, f, extra=[c]):
            if f.a < t <= f.b:
                worst = max(worst, abs(lhs(t) - rhs(t)))
        if not ei.check_composition(g, h, f):
            worst = max(worst, 1.0)
    entry = SuiteEntry(
        0.0, 0.0, "elemint:max-property-error", worst, 0.0, 0.0, n_cases,
        worst <= 1e-12,
    )
    report = martingale_suite({}, cfg.threshold, "bonferroni")
    return ScenarioResult("elemint-check", report, (entry,), {"cases": n_cases})


def _random_step_function(rng: np.random.Generator, a: float, b: float):
    from .elemint import LeftStepFunction

    k = int(rng.integers(1, 6))
    inner = np.sort(rng.uniform(a, b, size=k))
    pts = [a] + [float(v) for v in inner if a < v < b] + [b]
    pts = sorted(set(pts))
    levels = rng.normal(0.0, 2.0, size=len(pts) - 1)
    return LeftStepFunction(tuple(pts), tuple(levels))


def _random_cadlag(rng: np.random.Generator, a: float, b: float):
    from .elemint import CadlagFunction

    coeffs = rng.normal(0.0, 1.0, size=3)
    n_jumps = int(rng.integers(0, 4))
    locs = np.sort(rng.uniform(a, b, size=n_jumps))
    sizes = rng.normal(0.0, 1.0, size=n_jumps)
    jumps = tuple((float(l), float(s)) for l, s in zip(locs, sizes) if a < l <= b)

    def fn(t: float) -> float:
        base = coeffs[0] + coeffs[1] * t + coeffs[2] * t * t
        return base + sum(s for l, s in jumps if l <= t)

    return CadlagFunction(fn, a, b, jumps)


def _random_elemint_case(rng: np.random.Generator):
    a, b = 0.0, float(rng.uniform(1.0, 3.0))
    f = _random_cadlag(rng, a, b)
    h = _random_step_function(rng, a, b)
    g = _random_step_function(rng, a, b)
    c = float(rng.uniform(a - 0.5, b + 0.5))
    return f, h, g, c


SCENARIOS = {
    "bridge": run_bridge,
    "supremum": run_supremum,
    "emery-before": run_emery_before,
    "emery-after": run_emery_after,
    "honest": run_honest,
    "pitman": run_pitman,
    "glue-demo": run_glue_demo,
    "elemint-check": run_elemint_check,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    cfg = cfg.validated()
    return SCENARIOS[cfg.scenario](cfg)
