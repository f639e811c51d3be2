"""Path simulation of the controlled reserve process.

Simulates the regime-switching reserves under barrier (and
liquidation-dividend) strategies and estimates the expected discounted
dividends — the independent check on every analytic result in the library.

Scheme
------
Regime switches are sampled *exactly* (exponential holding clocks, then a
categorical jump by generator row); only the diffusion between switches is
Euler-discretized, with the final step shortened to land on the switch time.
Ruin is detected at grid times — no bridge or other distributional
correction — but the grid is state-dependent: within ``REFINE_SIGMAS`` step
deviations of an absorbing level (ruin at 0, or a liquidation level d > 0)
the step drops to ``dt / REFINE_FACTOR``, which shrinks the first-passage
overshoot bias (O(sigma sqrt(dt)) per detection) by the square root of the
refinement factor while costing almost nothing, since paths rarely occupy
that window.  The remaining bias is documented by the dt-refinement test.
Lump dividends are paid at time zero, at switches, and whenever a step ends
above the current barrier; under a liquidation policy the full reserve is
paid out and the path ends whenever it lands in (0, d].

Randomness
----------
Each path owns two private xoshiro256++ streams (one for Gaussian increments,
one for regime events), seeded from (seed, stream index) through a SplitMix64
mixing chain.  Results are therefore bit-identical for a given config no
matter how paths would be scheduled, and antithetic pairs can replay the
same regime path with negated Gaussians.  Normal variates come from a
256-layer ziggurat; exponentials from inverse transform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import InvalidBand
from .model import RegimeModel, theta_array, validate

# Paths stop once their discount factor can no longer contribute at double
# precision relative to the reported stderr; the discarded factor is logged
# in the truncation diagnostic.
DISCOUNT_FLOOR = 1e-9

# A publishable estimate must have (average) truncated discount mass below
# this level, so horizon truncation is invisible next to the stderr.
PUBLISHABLE_MASS = 1e-6

# Near an absorbing level the step shrinks to dt / REFINE_FACTOR, which cuts
# the first-passage overshoot bias by sqrt(REFINE_FACTOR).  The window must
# be wide enough that jumping clean over it in one coarse step is
# astronomically unlikely (8 step deviations: P < 1e-15) yet narrow enough
# that paths rarely sit inside it.
REFINE_FACTOR = 16
REFINE_SIGMAS = 8.0

_M53 = float(1 << 53)

# ---------------------------------------------------------------------------
# SplitMix64 + xoshiro256++ bit machinery
# ---------------------------------------------------------------------------

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _splitmix_next(z):
    z = z + _GOLDEN
    x = z
    x = (x ^ (x >> _U64(30))) * _MIX1
    x = (x ^ (x >> _U64(27))) * _MIX2
    return z, x ^ (x >> _U64(31))


@njit(cache=True)
def _seed_stream(seed, stream_id, state):
    """Fill a 4-word xoshiro256++ state from (seed, stream_id)."""
    z = _U64(seed)
    _, a = _splitmix_next(z + _U64(stream_id) * _GOLDEN)
    z = a
    all_zero = True
    for k in range(4):
        z, w = _splitmix_next(z)
        state[k] = w
        if w != _U64(0):
            all_zero = False
    if all_zero:  # xoshiro must never start from the all-zero state
        state[0] = _U64(1)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (_U64(64) - k))


@njit(cache=True, inline="always")
def _next_u64(s):
    result = _rotl(s[0] + s[3], _U64(23)) + s[0]
    t = s[1] << _U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _U64(45))
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    """Uniform in (0, 1], safe as a log argument."""
    return (float(_next_u64(s) >> _U64(11)) + 1.0) * (1.0 / _M53)


# ---------------------------------------------------------------------------
# 256-layer ziggurat for standard normals (Marsaglia–Tsang layout, 53-bit)
# ---------------------------------------------------------------------------

_ZIG_R = 3.6541528853610088
_ZIG_V = 0.0049286732339746519


def _build_ziggurat():
    kn = np.empty(256, dtype=np.float64)
    wn = np.empty(256, dtype=np.float64)
    fn = np.empty(256, dtype=np.float64)
    dn = _ZIG_R
    tn = _ZIG_R
    q = _ZIG_V / np.exp(-0.5 * dn * dn)
    kn[0] = np.floor((dn / q) * _M53)
    kn[1] = 0.0
    wn[0] = q / _M53
    wn[255] = dn / _M53
    fn[0] = 1.0
    fn[255] = np.exp(-0.5 * dn * dn)
    for i in range(254, 0, -1):
        dn = np.sqrt(-2.0 * np.log(_ZIG_V / dn + np.exp(-0.5 * dn * dn)))
        kn[i + 1] = np.floor((dn / tn) * _M53)
        tn = dn
        fn[i] = np.exp(-0.5 * dn * dn)
        wn[i] = dn / _M53
    return kn, wn, fn


_ZIG_KN, _ZIG_WN, _ZIG_FN = _build_ziggurat()
_ZIG_INV_R = 1.0 / _ZIG_R


@njit(cache=True)
def _gauss(s):
    while True:
        u = _next_u64(s)
        iz = int(u & _U64(255))
        hz = float(np.int64(u >> _U64(10)) - np.int64(1 << 53))
        if abs(hz) < _ZIG_KN[iz]:
            return hz * _ZIG_WN[iz]
        x = hz * _ZIG_WN[iz]
        if iz == 0:
            # unbounded tail beyond R, Marsaglia's exponential wrap
            while True:
                xx = -np.log(_uniform(s)) * _ZIG_INV_R
                yy = -np.log(_uniform(s))
                if yy + yy >= xx * xx:
                    return _ZIG_R + xx if hz > 0.0 else -_ZIG_R - xx
        else:
            if _ZIG_FN[iz] + _uniform(s) * (_ZIG_FN[iz - 1] - _ZIG_FN[iz]) < np.exp(
                -0.5 * x * x
            ):
                return x
        # else: fell in the rejected sliver, redraw from the top


@njit(cache=True)
def _gauss_fill(seed, stream_id, out):
    """Fill ``out`` from one normal stream (used by the RNG quality tests)."""
    s = np.empty(4, dtype=np.uint64)
    _seed_stream(seed, stream_id, s)
    for k in range(out.shape[0]):
        out[k] = _gauss(s)


@njit(cache=True)
def _u64_fill(seed, stream_id, out):
    s = np.empty(4, dtype=np.uint64)
    _seed_stream(seed, stream_id, s)
    for k in range(out.shape[0]):
        out[k] = _next_u64(s)


# ---------------------------------------------------------------------------
# path kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _one_path(
    mu,
    sigma,
    disc_rate,
    mu_dt,
    sig_sqdt,
    decay,
    mu_dtf,
    sig_sqdtf,
    decayf,
    refine_below,
    exit_rate,
    jump_cum,
    bar,
    liq,
    x0,
    i0,
    dt,
    dtf,
    horizon,
    sign,
    gs,
    rs,
):
    """Simulate one path; returns (discounted dividends, truncated mass)."""
    n_reg = mu.shape[0]
    u_res = x0
    reg = i0
    t = 0.0
    df = 1.0
    paid = 0.0

    # time-zero actions: ruin, liquidation band, lump above the barrier
    if u_res <= 0.0:
        return 0.0, 0.0
    if liq[reg] > 0.0 and u_res <= liq[reg]:
        return u_res, 0.0
    if u_res > bar[reg]:
        paid += u_res - bar[reg]
        u_res = bar[reg]
        if u_res <= 0.0:
            return paid, 0.0

    if exit_rate[reg] > 0.0:
        next_switch = -np.log(_uniform(rs)) / exit_rate[reg]
    else:
        next_switch = np.inf

    while t < horizon:
        # fine grid inside the absorption window, coarse grid elsewhere
        if u_res < refine_below[reg]:
            t_step = t + dtf
            fine = True
        else:
            t_step = t + dt
            fine = False
        if t_step < next_switch and t_step <= horizon:
            # full Euler step inside the current regime
            z = sign * _gauss(gs)
            if fine:
                u_res += mu_dtf[reg] + sig_sqdtf[reg] * z
                df *= decayf[reg]
            else:
                u_res += mu_dt[reg] + sig_sqdt[reg] * z
                df *= decay[reg]
            t = t_step
            switched = False
        else:
            # shortened step onto the switch time or the horizon
            t_end = next_switch if next_switch <= horizon else horizon
            delta = t_end - t
            if delta > 0.0:
                z = sign * _gauss(gs)
                u_res += mu[reg] * delta + sigma[reg] * np.sqrt(delta) * z
                df *= np.exp(-disc_rate[reg] * delta)
            t = t_end
            switched = next_switch <= horizon
            if switched:
                # categorical jump by the generator row
                u = _uniform(rs)
                nxt = reg
                for j in range(n_reg):
                    if u <= jump_cum[reg, j]:
                        nxt = j
                        break
                reg = nxt
                if exit_rate[reg] > 0.0:
                    next_switch = t - np.log(_uniform(rs)) / exit_rate[reg]
                else:
                    next_switch = np.inf

        if u_res <= 0.0:
            return paid, 0.0
        if liq[reg] > 0.0 and u_res <= liq[reg]:
            return paid + df * u_res, 0.0
        if u_res > bar[reg]:
            paid += df * (u_res - bar[reg])
            u_res = bar[reg]
            if u_res <= 0.0:
                return paid, 0.0
        if df < DISCOUNT_FLOOR:
            return paid, df

    return paid, df


@njit(cache=True)
def _run_paths(
    mu,
    sigma,
    disc_rate,
    mu_dt,
    sig_sqdt,
    decay,
    mu_dtf,
    sig_sqdtf,
    decayf,
    refine_below,
    exit_rate,
    jump_cum,
    bar,
    liq,
    x0,
    i0,
    dt,
    dtf,
    horizon,
    seed,
    antithetic,
    out_value,
    out_trunc,
):
    n_paths = out_value.shape[0]
    gs = np.empty(4, dtype=np.uint64)
    rs = np.empty(4, dtype=np.uint64)
    for p in range(n_paths):
        if antithetic:
            base = (p >> 1) << 1
            sign = 1.0 if (p & 1) == 0 else -1.0
        else:
            base = p
            sign = 1.0
        _seed_stream(seed, 2 * base, gs)
        _seed_stream(seed, 2 * base + 1, rs)
        val, trunc = _one_path(
            mu,
            sigma,
            disc_rate,
            mu_dt,
            sig_sqdt,
            decay,
            mu_dtf,
            sig_sqdtf,
            decayf,
            refine_below,
            exit_rate,
            jump_cum,
            bar,
            liq,
            x0,
            i0,
            dt,
            dtf,
            horizon,
            sign,
            gs,
            rs,
        )
        out_value[p] = val
        out_trunc[p] = trunc


@njit(cache=True)
def _dump_kernel(
    mu,
    sigma,
    disc_rate,
    exit_rate,
    jump_cum,
    bar,
    liq,
    x0,
    i0,
    dt,
    horizon,
    seed,
    n_paths,
    rows,
    max_rows,
):
    """Row-by-row trace of the first paths: path,t,regime,reserve,paid,df.

    Traces use the uniform coarse grid only (no boundary refinement): they
    feed figures, not estimates, and a fixed step keeps rows evenly spaced.
    """
    n_reg = mu.shape[0]
    gs = np.empty(4, dtype=np.uint64)
    rs = np.empty(4, dtype=np.uint64)
    n_rows = 0
    for p in range(n_paths):
        _seed_stream(seed, 2 * p, gs)
        _seed_stream(seed, 2 * p + 1, rs)
        u_res = x0
        reg = i0
        t = 0.0
        df = 1.0
        paid = 0.0
        alive = u_res > 0.0
        if alive and liq[reg] > 0.0 and u_res <= liq[reg]:
            paid += u_res
            u_res = 0.0
            alive = False
        if alive and u_res > bar[reg]:
            paid += u_res - bar[reg]
            u_res = bar[reg]
            alive = u_res > 0.0
        if n_rows < max_rows:
            rows[n_rows, 0] = p
            rows[n_rows, 1] = t
            rows[n_rows, 2] = reg
            rows[n_rows, 3] = u_res
            rows[n_rows, 4] = paid
            rows[n_rows, 5] = df
            n_rows += 1
        if exit_rate[reg] > 0.0:
            next_switch = -np.log(_uniform(rs)) / exit_rate[reg]
        else:
            next_switch = np.inf
        while alive and t < horizon and n_rows < max_rows:
            t_step = t + dt
            if t_step < next_switch and t_step <= horizon:
                z = _gauss(gs)
                u_res += mu[reg] * dt + sigma[reg] * np.sqrt(dt) * z
                df *= np.exp(-disc_rate[reg] * dt)
                t = t_step
                switched = False
            else:
                t_end = next_switch if next_switch <= horizon else horizon
                delta = t_end - t
                if delta > 0.0:
                    z = _gauss(gs)
                    u_res += mu[reg] * delta + sigma[reg] * np.sqrt(delta) * z
                    df *= np.exp(-disc_rate[reg] * delta)
                t = t_end
                switched = next_switch <= horizon
                if switched:
                    u = _uniform(rs)
                    nxt = reg
                    for j in range(n_reg):
                        if u <= jump_cum[reg, j]:
                            nxt = j
                            break
                    reg = nxt
                    if exit_rate[reg] > 0.0:
                        next_switch = t - np.log(_uniform(rs)) / exit_rate[reg]
                    else:
                        next_switch = np.inf
            if u_res <= 0.0:
                u_res = 0.0
                alive = False
            elif liq[reg] > 0.0 and u_res <= liq[reg]:
                paid += df * u_res
                u_res = 0.0
                alive = False
            elif u_res > bar[reg]:
                paid += df * (u_res - bar[reg])
                u_res = bar[reg]
                if u_res <= 0.0:
                    alive = False
            if df < DISCOUNT_FLOOR:
                alive = False
            rows[n_rows, 0] = p
            rows[n_rows, 1] = t
            rows[n_rows, 2] = reg
            rows[n_rows, 3] = u_res
            rows[n_rows, 4] = paid
            rows[n_rows, 5] = df
            n_rows += 1
    return n_rows


# ---------------------------------------------------------------------------
# public interface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes
    ----------
    dt : float
        Euler step inside a regime; switch times are hit exactly.
    horizon : float or None
        Maximum simulated time.  ``None`` picks a horizon long enough that
        every path either ruins or discounts below the stopping floor.
        An explicit horizon must cover 100 mean regime lifetimes.
    paths : int
        Number of simulated paths (even when antithetic).
    seed : int
        64-bit master seed; every path derives private streams from it.
    antithetic : bool
        Simulate paths in antithetic pairs (shared regime path, negated
        Gaussian increments) and compute the stderr over pair means.
    """

    dt: float = 1e-4
    horizon: Optional[float] = None
    paths: int = 100_000
    seed: int = 2026
    antithetic: bool = True

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.paths < 1:
            raise ValueError(f"paths must be >= 1, got {self.paths}")
        if self.horizon is not None and self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.antithetic and self.paths % 2 != 0:
            raise ValueError("antithetic sampling needs an even path count")


@dataclass(frozen=True)
class SimEstimate:
    """A Monte-Carlo estimate with its own error bars.

    Attributes
    ----------
    mean, stderr : float
        Estimated expected discounted dividends and its standard error
        (over antithetic pair means when pairing is on).
    paths : int
        Total simulated paths.
    discount_mass : float
        Average discount factor still alive when simulation stopped
        (horizon hit or discount floor reached); the truncation bias is at
        most of this order, and a publishable estimate keeps it <= 1e-6.
    seed : int
    dt : float
    """

    mean: float
    stderr: float
    paths: int
    discount_mass: float
    seed: int
    dt: float

    @property
    def publishable(self) -> bool:
        return self.discount_mass <= PUBLISHABLE_MASS


def _policy_arrays(model: RegimeModel, b, d=None):
    barriers = np.asarray(getattr(b, "barriers", b), dtype=float).reshape(-1)
    if barriers.shape[0] != model.n_states:
        raise ValueError(
            f"policy has {barriers.shape[0]} barriers for {model.n_states} regimes"
        )
    if np.any(barriers < 0.0) or not np.all(np.isfinite(barriers)):
        raise ValueError("barriers must be finite and nonnegative")
    if d is None:
        d = getattr(b, "liquidation", None)
    if d is None:
        liq = np.zeros_like(barriers)
    else:
        liq = np.asarray(d, dtype=float).reshape(-1)
        if liq.shape[0] != model.n_states:
            raise ValueError(
                f"policy has {liq.shape[0]} liquidation levels for "
                f"{model.n_states} regimes"
            )
        if np.any(liq < 0.0) or not np.all(np.isfinite(liq)):
            raise ValueError("liquidation levels must be finite and nonnegative")
    return barriers, liq


def _resolve_horizon(model: RegimeModel, cfg: SimConfig) -> float:
    thetas = theta_array(model)
    floor = 100.0 * float(np.max(1.0 / thetas))
    if cfg.horizon is None:
        # long enough that df < DISCOUNT_FLOOR fires first on every path
        slow = -np.log(DISCOUNT_FLOOR) / float(np.min(model.discount))
        return max(floor, 1.1 * slow)
    if cfg.horizon < floor:
        raise ValueError(
            f"horizon {cfg.horizon} is below the required "
            f"100 * max_i(1/theta_i) = {floor:.6g}"
        )
    return float(cfg.horizon)


def _jump_tables(model: RegimeModel):
    gen = model.generator
    n = model.n_states
    exit_rate = -np.diag(gen).astype(float)
    jump_cum = np.zeros((n, n))
    for i in range(n):
        if exit_rate[i] > 0.0:
            probs = np.array(
                [gen[i, j] / exit_rate[i] if j != i else 0.0 for j in range(n)]
            )
            jump_cum[i] = np.cumsum(probs)
            jump_cum[i, -1] = 1.0  # guard against round-off at the top
        else:
            jump_cum[i] = 1.0
    return exit_rate, jump_cum


def _mean_stderr(samples: np.ndarray) -> tuple:
    """Sample mean and standard error, exact for constant samples.

    math.fsum keeps the mean exactly rounded, and the variance uses the
    shifted two-pass formula sum((v - v0)^2) - n*(mean - v0)^2 clamped at
    zero, so the trivial lump-then-ruin cases report mean == payoff and
    stderr == 0 bit-exactly.
    """
    n = samples.size
    mean = math.fsum(samples) / n
    if n < 2:
        return mean, 0.0
    dev = samples - samples[0]
    ss = float(np.sum(dev * dev)) - n * (mean - samples[0]) ** 2
    var = max(0.0, ss) / (n - 1)
    return mean, math.sqrt(var / n)


def _estimate(model: RegimeModel, barriers, liq, x0, i0, cfg: SimConfig) -> SimEstimate:
    if x0 < 0.0:
        raise ValueError(f"initial reserve must be nonnegative, got {x0}")
    if not 0 <= i0 < model.n_states:
        raise ValueError(f"initial regime {i0} out of range")
    horizon = _resolve_horizon(model, cfg)
    exit_rate, jump_cum = _jump_tables(model)
    mu = model.mu
    sigma = model.sigma
    disc_rate = model.discount
    values = np.empty(cfg.paths, dtype=np.float64)
    trunc = np.empty(cfg.paths, dtype=np.float64)
    dtf = cfg.dt / REFINE_FACTOR
    refine_below = liq + REFINE_SIGMAS * sigma * np.sqrt(cfg.dt)
    _run_paths(
        mu,
        sigma,
        disc_rate,
        mu * cfg.dt,
        sigma * np.sqrt(cfg.dt),
        np.exp(-disc_rate * cfg.dt),
        mu * dtf,
        sigma * np.sqrt(dtf),
        np.exp(-disc_rate * dtf),
        refine_below,
        exit_rate,
        jump_cum,
        barriers,
        liq,
        float(x0),
        int(i0),
        float(cfg.dt),
        float(dtf),
        horizon,
        np.uint64(cfg.seed),
        cfg.antithetic,
        values,
        trunc,
    )
    if cfg.antithetic and cfg.paths >= 2:
        mean, stderr = _mean_stderr(0.5 * (values[0::2] + values[1::2]))
    else:
        mean, stderr = _mean_stderr(values)
    return SimEstimate(
        mean=mean,
        stderr=stderr,
        paths=cfg.paths,
        discount_mass=float(np.mean(trunc)),
        seed=cfg.seed,
        dt=cfg.dt,
    )


def simulate_barrier(model, b, x0, i0, cfg: SimConfig) -> SimEstimate:
    """Estimate the value of the modulated barrier strategy ``b``.

    Parameters
    ----------
    model : RegimeModel or dict
    b : BarrierPolicy or sequence of float
        Per-regime barrier levels.
    x0 : float
        Initial reserves, >= 0.
    i0 : int
        Initial regime.
    cfg : SimConfig

    Returns
    -------
    SimEstimate
    """
    model = validate(model)
    barriers, _ = _policy_arrays(model, b)
    return _estimate(model, barriers, np.zeros_like(barriers), x0, i0, cfg)


def simulate_liquidation_dividend(model, d, b, x0, i0, cfg: SimConfig) -> SimEstimate:
    """Estimate the value of the liquidation-dividend strategy (d, b).

    Whenever reserves fall into (0, d_i] — at time zero, at a switch, or on
    a down-crossing — the entire reserve is paid out and the path ends.
    ``d_i = 0`` disables the band in regime i.

    Raises
    ------
    InvalidBand
        If some d_i >= b_i, which leaves no room for the barrier band.
    """
    model = validate(model)
    barriers, liq = _policy_arrays(model, b, d=np.asarray(d, dtype=float))
    if np.any(liq >= barriers):
        bad = int(np.argmax(liq >= barriers))
        raise InvalidBand(
            f"regime {bad}: liquidation level {liq[bad]} >= barrier {barriers[bad]}"
        )
    return _estimate(model, barriers, liq, x0, i0, cfg)


def _default_probe_points(model: RegimeModel, barriers) -> list:
    pts = []
    for i in range(model.n_states):
        pts.append((0.5 * float(barriers[i]), i))
        pts.append((float(barriers[i]), i))
    return pts


@dataclass(frozen=True)
class ProbeResult:
    """One perturbed-policy probe against a reference value function."""

    barriers: tuple
    x0: float
    i0: int
    estimate: SimEstimate
    reference: float

    @property
    def ok(self) -> bool:
        return self.estimate.mean <= self.reference + 3.0 * self.estimate.stderr


@dataclass(frozen=True)
class DominanceReport:
    """Dominance probes: no policy may beat the value function."""

    results: tuple

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)


def dominance_probe(
    model,
    value_fn,
    policies: Sequence,
    cfg: SimConfig,
    probe_points: Optional[Sequence] = None,
) -> DominanceReport:
    """Check that perturbed policies never beat the solved value function.

    Parameters
    ----------
    model : RegimeModel or dict
    value_fn : object with ``value(x, regime)`` or callable ``(x, regime)``
        The solver's value function, the claimed upper envelope.
    policies : sequence of barrier policies
        Typically b* +- delta for a few deltas.
    cfg : SimConfig
    probe_points : sequence of (x0, i0), optional
        Defaults to half-barrier and barrier in every regime (of the first
        policy).

    Returns
    -------
    DominanceReport
        One entry per (policy, probe point); ``report.ok`` is the headline.
    """
    model = validate(model)

    def ref_value(x, i):
        if hasattr(value_fn, "value"):
            return float(value_fn.value(x, i))
        return float(value_fn(x, i))

    results = []
    for policy in policies:
        barriers, liq = _policy_arrays(model, policy)
        pts = probe_points
        if pts is None:
            pts = _default_probe_points(model, barriers)
        for x0, i0 in pts:
            if np.any(liq > 0.0):
                est = simulate_liquidation_dividend(model, liq, barriers, x0, i0, cfg)
            else:
                est = simulate_barrier(model, barriers, x0, i0, cfg)
            results.append(
                ProbeResult(
                    barriers=tuple(float(v) for v in barriers),
                    x0=float(x0),
                    i0=int(i0),
                    estimate=est,
                    reference=ref_value(x0, i0),
                )
            )
    return DominanceReport(results=tuple(results))


def dump_paths(
    model,
    b,
    x0,
    i0,
    cfg: SimConfig,
    out_path,
    k_paths: int = 5,
    d=None,
    max_rows: int = 1_000_000,
) -> int:
    """Write a CSV trace of the first ``k_paths`` paths.

    Columns: ``path,t,regime,reserve,cum_dividend,discount``.  Rows are
    emitted at every Euler step and at switch times, so choose a coarse
    ``dt`` for figures.  Returns the number of rows written.
    """
    model = validate(model)
    barriers, liq = _policy_arrays(model, b, d=d)
    horizon = _resolve_horizon(model, cfg)
    exit_rate, jump_cum = _jump_tables(model)
    rows = np.zeros((max_rows, 6), dtype=np.float64)
    n_rows = _dump_kernel(
        model.mu,
        model.sigma,
        model.discount,
        exit_rate,
        jump_cum,
        barriers,
        liq,
        float(x0),
        int(i0),
        float(cfg.dt),
        horizon,
        np.uint64(cfg.seed),
        int(k_paths),
        rows,
        int(max_rows),
    )
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "t", "regime", "reserve", "cum_dividend", "discount"])
        for r in range(n_rows):
            writer.writerow(
                [
                    int(rows[r, 0]),
                    f"{rows[r, 1]:.9g}",
                    int(rows[r, 2]),
                    f"{rows[r, 3]:.9g}",
                    f"{rows[r, 4]:.9g}",
                    f"{rows[r, 5]:.9g}",
                ]
            )
    return n_rows
