"""Command-line frontend: solve models, rebuild tables, verify, simulate.

Four subcommands share one artifact convention: every run writes JSON (and
CSV for grid/table data) into ``--out`` with the fully resolved
configuration embedded, floats printed at 9 significant digits, and a
deterministic byte-for-byte layout so artifacts can be diffed across runs.

Exit codes: 0 success, 1 bad input (flags, files, model, policy),
2 solver did not produce a solution, 3 a verification check failed.
"""

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .analytics import single_regime_barrier, single_regime_solution
from .errors import (
    BarrierOutOfRange,
    DividendSolverError,
    DriftHypothesisViolated,
    InvalidBand,
    LiquidateEverywhere,
    ModelValidationError,
    OutOfRange,
)
from .fixedpoint import BarrierPolicy, GridFunction, barrier_value, hjb_residual
from .fixedpoint import solve as solve_grid
from .model import DriftCase, RegimeModel, drift_sign_case, load_model
from .montecarlo import SimConfig, simulate_barrier, simulate_liquidation_dividend
from .two_regime import solve_negative, solve_positive

OK, INPUT_ERROR, NO_CONVERGENCE, VERIFY_FAILED = 0, 1, 2, 3

# bounds on tuning flags (inputs outside these are rejected, not clamped)
H_RANGE = (1e-5, 1e-2)
MAX_PATHS = 100_000_000

# verification thresholds; REFERENCE.md documents each check
HJB_BOUND = 5e-3
SMOOTH_FIT_BOUND = 1e-2
CONCAVITY_SLACK = 1e-6
NONCONCAVITY_FLOOR = 1e-4
VALUE_AGREEMENT = 1e-3


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    model: Optional[str] = None
    out: str = "."
    h: float = 1e-3
    tol: Optional[float] = None
    dt: float = 1e-3
    paths: int = 20_000
    seed: int = 2026
    policy: Optional[str] = None
    probe_points: Optional[str] = None

    def __post_init__(self):
        if not H_RANGE[0] <= self.h <= H_RANGE[1]:
            raise ValueError(
                f"--h must be in [{H_RANGE[0]:g}, {H_RANGE[1]:g}], got {self.h:g}"
            )
        if self.tol is not None and not 0.0 < self.tol <= 1e-2:
            raise ValueError(f"--tol must be in (0, 1e-2], got {self.tol:g}")
        if not 0.0 < self.dt <= 1.0:
            raise ValueError(f"--dt must be in (0, 1], got {self.dt:g}")
        if not 1 <= self.paths <= MAX_PATHS:
            raise ValueError(
                f"--paths must be in [1, {MAX_PATHS}], got {self.paths}"
            )
        if self.seed < 0:
            raise ValueError(f"--seed must be nonnegative, got {self.seed}")


# ---------------------------------------------------------------------------
# formatting and artifact plumbing
# ---------------------------------------------------------------------------

def _nine(value):
    """Round a float to 9 significant digits (the artifact precision)."""
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return float(f"{value:.9g}")
    return value


def _rounded(obj):
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return _nine(obj)


def _write_json(path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_rounded(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_value_csv(path, xs, value_fn, derivative_fn, n_regimes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "x", "value", "derivative"])
        for i in range(n_regimes):
            for x in xs:
                writer.writerow(
                    [i, f"{x:.9g}", f"{value_fn(x, i):.9g}",
                     f"{derivative_fn(x, i):.9g}"]
                )


def _config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def _say(*parts) -> None:
    print(" ".join(str(p) for p in parts))


# ---------------------------------------------------------------------------
# flag parsing helpers
# ---------------------------------------------------------------------------

def _parse_policy(text: str, n_states: int):
    """Parse ``b0,b1,...`` or ``d0,d1,...:b0,b1,...`` into arrays."""
    try:
        if ":" in text:
            d_text, b_text = text.split(":", 1)
            liq = [float(v) for v in d_text.split(",")]
            bar = [float(v) for v in b_text.split(",")]
        else:
            liq = None
            bar = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValueError(f"could not parse --policy {text!r}: {exc}") from exc
    if len(bar) != n_states or (liq is not None and len(liq) != n_states):
        raise ValueError(
            f"--policy needs {n_states} levels per part, got {text!r}"
        )
    return liq, bar


def _parse_probe_points(text: str, n_states: int):
    """Parse ``x:i,x:i,...`` into a list of (reserve, regime) pairs."""
    points = []
    for item in text.split(","):
        try:
            x_text, i_text = item.split(":")
            x, i = float(x_text), int(i_text)
        except ValueError as exc:
            raise ValueError(
                f"could not parse probe point {item!r} (want x:regime): {exc}"
            ) from exc
        if x < 0.0:
            raise ValueError(f"probe reserve must be nonnegative, got {x}")
        if not 0 <= i < n_states:
            raise ValueError(f"probe regime {i} out of range")
        points.append((x, i))
    if not points:
        raise ValueError("--probe-points is empty")
    return points


def _default_probe_points(barriers):
    points = []
    for i, b in enumerate(barriers):
        points.append((0.5 * float(b), i))
        points.append((float(b), i))
    return points


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _grid_xs(cap: float, h: float) -> np.ndarray:
    return np.arange(int(round(cap / h)) + 1) * h


def cmd_solve(cfg: RunConfig) -> int:
    from pathlib import Path

    model = load_model(cfg.model)
    case = drift_sign_case(model)
    out = Path(cfg.out)
    artifact = {"config": _config_dict(cfg)}
    value_csv = out / "value.csv"

    if case is DriftCase.ALL_POSITIVE and model.n_states == 1:
        sol = single_regime_solution(
            float(model.mu[0]), float(model.sigma[0]), float(model.discount[0])
        )
        artifact.update(
            case="single_barrier",
            barriers=[sol.barrier],
            roots=[sol.roots.lambda_minus, sol.roots.lambda_plus],
        )
        xs = _grid_xs(1.5 * sol.barrier, cfg.h)
        _write_value_csv(value_csv, xs,
                         lambda x, i: float(sol.value(x)),
                         lambda x, i: float(sol.derivative(x)), 1)
        barriers = [sol.barrier]
    elif case is DriftCase.ALL_POSITIVE and model.n_states == 2:
        sol = solve_positive(model, **({} if cfg.tol is None else {"tol": cfg.tol}))
        artifact.update(case="two_barrier", barriers=list(sol.barriers),
                        solution=sol.to_json())
        xs = _grid_xs(1.5 * max(sol.barriers), cfg.h)
        _write_value_csv(value_csv, xs, sol.value, sol.derivative, 2)
        barriers = list(sol.barriers)
    elif case is DriftCase.ALL_POSITIVE:
        kwargs = {} if cfg.tol is None else {"tol": cfg.tol}
        grid_v, policy, report = solve_grid(model, h=cfg.h, **kwargs)
        artifact.update(
            case="grid_barrier",
            barriers=list(policy.barriers),
            report={"iterations": report.iterations, "gap": report.gap},
        )
        _write_value_csv(
            value_csv, grid_v.xs, grid_v.value,
            lambda x, i: float(np.interp(
                x, grid_v.xs, grid_v.derivative_samples(i))),
            model.n_states,
        )
        barriers = list(policy.barriers)
    elif case is DriftCase.MIXED_SIGN and model.n_states == 2:
        try:
            sol = solve_negative(
                model, **({} if cfg.tol is None else {"tol": cfg.tol})
            )
        except LiquidateEverywhere as exc:
            return _emit_identity_solution(cfg, model, out, str(exc))
        artifact.update(
            case="liquidation_barrier",
            barriers=list(sol.barriers),
            liquidation=sol.liquidation,
            solution=sol.to_json(),
        )
        xs = _grid_xs(1.5 * max(sol.barriers), cfg.h)
        _write_value_csv(value_csv, xs, sol.value, sol.derivative, 2)
        barriers = list(sol.barriers)
    elif case is DriftCase.MIXED_SIGN:
        raise ValueError(
            "mixed drift signs are only solvable for two-regime models; "
            f"this model has {model.n_states} regimes"
        )
    else:  # ALL_NONPOSITIVE: paying out everything immediately is optimal
        return _emit_identity_solution(
            cfg, model, out,
            "all drifts are non-positive; the optimal policy liquidates "
            "immediately at every reserve level",
        )

    artifact["value_csv"] = value_csv.name
    _write_json(out / "solution.json", artifact)
    _say("case:", artifact["case"])
    _say("barriers:", ", ".join(f"{b:.9g}" for b in barriers))
    if "liquidation" in artifact:
        _say("liquidation:", f"{artifact['liquidation']:.9g}")
    _say("wrote", out / "solution.json")
    _say("wrote", value_csv)
    return OK


def _emit_identity_solution(cfg, model, out, reason: str) -> int:
    """V(x) = x: the whole reserve is paid out at time zero."""
    artifact = {
        "config": _config_dict(cfg),
        "case": "liquidate_everywhere",
        "barriers": [0.0] * model.n_states,
        "reason": reason,
        "value_csv": "value.csv",
    }
    xs = _grid_xs(1.0, cfg.h)
    _write_value_csv(out / "value.csv", xs,
                     lambda x, i: x, lambda x, i: 1.0, model.n_states)
    _write_json(out / "solution.json", artifact)
    _say("case: liquidate_everywhere —", reason)
    _say("wrote", out / "solution.json")
    _say("wrote", out / "value.csv")
    return OK


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

# Built-in two-regime reference parameter set for the sensitivity tables.
TABLE_BASE = {
    "mu0": 0.06, "sigma0": 0.24, "q00": -2.0, "r0": 0.04,
    "mu1": 0.08, "sigma1": 0.30, "q11": -3.0, "r1": 0.05,
}
TABLE_SWEEPS = [
    ("mu0", (0.04, 0.08, 0.38, 1.00)),
    ("sigma0", (0.16, 0.20, 0.28, 0.32)),
    ("q00", (-4.0, -3.0, -1.0, -0.01)),
    ("r0", (0.02, 0.03, 0.05, 0.06)),
]


def _table_model(**overrides) -> RegimeModel:
    from .model import two_state_model

    params = dict(TABLE_BASE)
    params.update(overrides)
    return two_state_model(
        params["mu0"], params["sigma0"], params["q00"], params["r0"],
        params["mu1"], params["sigma1"], params["q11"], params["r1"],
    )


def reference_table_path():
    """The packaged CSV of published sensitivity-table values."""
    return resources.files("divbarrier").joinpath(
        "data/sensitivity_reference.csv"
    )


def compute_sensitivity_rows(tol: Optional[float] = None) -> list:
    """All 16 sensitivity rows as dicts; failed solves carry None cells."""
    rows = []
    for param, values in TABLE_SWEEPS:
        for value in values:
            row = {"varied_param": param, "value": value}
            params = dict(TABLE_BASE)
            params[param] = value
            row["a0_star"] = single_regime_barrier(
                params["mu0"], params["sigma0"], params["r0"]
            )
            try:
                sol = solve_positive(
                    _table_model(**{param: value}),
                    **({} if tol is None else {"tol": tol}),
                )
                row["b0_star"], row["b1_star"] = sol.barriers
            except DividendSolverError as exc:
                row["b0_star"] = row["b1_star"] = None
                row["error"] = str(exc)
            rows.append(row)
    return rows


def cmd_tables(cfg: RunConfig) -> int:
    from pathlib import Path

    rows = compute_sensitivity_rows(cfg.tol)
    out = Path(cfg.out)
    csv_path = out / "tables.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["varied_param", "value", "a0_star", "b0_star",
                         "b1_star"])
        for row in rows:
            writer.writerow([
                row["varied_param"],
                f"{row['value']:.9g}",
                f"{row['a0_star']:.9g}",
                "FAILED" if row["b0_star"] is None else f"{row['b0_star']:.9g}",
                "FAILED" if row["b1_star"] is None else f"{row['b1_star']:.9g}",
            ])
    _write_json(out / "tables.json",
                {"config": _config_dict(cfg), "rows": rows,
                 "csv": csv_path.name})
    failed = sum(1 for row in rows if row["b0_star"] is None)
    _say(f"computed {len(rows)} rows ({failed} failed)")
    _say("wrote", csv_path)
    _say("wrote", out / "tables.json")
    return OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _sampled_grid(value_fn, barriers, h, n_regimes, cap=None) -> GridFunction:
    cap = 1.5 * max(barriers) if cap is None else cap
    xs = _grid_xs(cap, h)
    samples = np.vstack(
        [[value_fn(x, i) for x in xs] for i in range(n_regimes)]
    )
    return GridFunction(h=h, samples=samples,
                        barriers=np.asarray(barriers, dtype=float))


def _fd_second(v: GridFunction, x: float, i: int) -> float:
    h = v.h
    return (v.value(x, i) - 2.0 * v.value(x - h, i) + v.value(x - 2.0 * h, i)) / h ** 2


def _interior_second_differences(v: GridFunction, i: int) -> np.ndarray:
    s = v.samples[i]
    return (s[2:] - 2.0 * s[1:-1] + s[:-2]) / v.h ** 2


def cmd_verify(cfg: RunConfig) -> int:
    from pathlib import Path

    model = load_model(cfg.model)
    case = drift_sign_case(model)
    checks = []
    liq_levels = np.zeros(model.n_states)
    closed = None

    if cfg.policy is not None:
        liq, bar = _parse_policy(cfg.policy, model.n_states)
        if liq is not None and any(v > 0.0 for v in liq):
            raise ValueError(
                "verify checks barrier policies; liquidation bands are "
                "verified by solving the model fresh (omit --policy)"
            )
        policy = BarrierPolicy(barriers=tuple(bar))
        cap = 1.5 * max(bar) + 0.5
        start = GridFunction(
            h=cfg.h,
            samples=np.zeros((model.n_states, _grid_xs(cap, cfg.h).size)),
            barriers=np.full(model.n_states, _grid_xs(cap, cfg.h)[-1]),
        )
        grid_v = barrier_value(policy, model, h=cfg.h, start=start)
        barriers = list(policy.barriers)
        mode = "policy"
    elif case is DriftCase.MIXED_SIGN and model.n_states == 2:
        closed = solve_negative(model)
        barriers = list(closed.barriers)
        liq_levels = np.array([closed.liquidation, 0.0])
        grid_v = _sampled_grid(closed.value, barriers, cfg.h, 2)
        mode = "solve"
    elif case is DriftCase.ALL_POSITIVE and model.n_states == 2:
        closed = solve_positive(model)
        barriers = list(closed.barriers)
        grid_v = _sampled_grid(closed.value, barriers, cfg.h, 2)
        mode = "solve"
    elif case is DriftCase.ALL_POSITIVE:
        grid_v, policy, _report = solve_grid(model, h=cfg.h)
        barriers = list(policy.barriers)
        mode = "solve"
    else:
        raise ValueError(
            "nothing to verify: the optimal policy liquidates immediately "
            "(all drifts non-positive)"
        )

    # 1. HJB residual of the claimed value function
    residual = float(np.max(hjb_residual(grid_v, model)))
    checks.append({
        "name": "hjb_residual",
        "passed": residual <= HJB_BOUND,
        "value": residual,
        "bound": HJB_BOUND,
    })

    # 2. smooth fit: vanishing curvature from the left at each barrier
    worst_fit = max(
        abs(_fd_second(grid_v, barriers[i], i))
        for i in range(model.n_states)
    )
    checks.append({
        "name": "smooth_fit",
        "passed": worst_fit <= SMOOTH_FIT_BOUND,
        "value": worst_fit,
        "bound": SMOOTH_FIT_BOUND,
    })

    # 3. curvature: concave everywhere for all-positive drifts; the
    # mixed case documents the convex stretch above its liquidation level
    if case is DriftCase.ALL_POSITIVE:
        worst = max(
            float(_interior_second_differences(grid_v, i).max())
            for i in range(model.n_states)
        )
        checks.append({
            "name": "concavity",
            "passed": worst <= CONCAVITY_SLACK,
            "value": worst,
            "bound": CONCAVITY_SLACK,
        })
    else:
        peak = float(_interior_second_differences(grid_v, 0).max())
        checks.append({
            "name": "nonconcavity_documented",
            "passed": peak > NONCONCAVITY_FLOOR,
            "value": peak,
            "floor": NONCONCAVITY_FLOOR,
        })

    # 4. Monte-Carlo agreement at the probe points
    if cfg.probe_points is not None:
        probes = _parse_probe_points(cfg.probe_points, model.n_states)
    else:
        probes = _default_probe_points(barriers)
    sim_cfg = SimConfig(dt=cfg.dt, paths=cfg.paths, seed=cfg.seed,
                        antithetic=cfg.paths % 2 == 0)
    bias = 0.5 * float(np.max(model.sigma)) * math.sqrt(cfg.dt)
    mc_probes = []
    mc_ok = True
    for x0, i0 in probes:
        if np.any(liq_levels > 0.0):
            est = simulate_liquidation_dividend(
                model, liq_levels, barriers, x0, i0, sim_cfg)
        else:
            est = simulate_barrier(model, barriers, x0, i0, sim_cfg)
        ref = grid_v.value(x0, i0)
        gap = abs(est.mean - ref)
        ok = gap <= 3.0 * est.stderr + bias
        mc_ok = mc_ok and ok
        mc_probes.append({
            "x0": x0, "i0": i0, "mean": est.mean, "stderr": est.stderr,
            "reference": ref, "passed": ok,
        })
    checks.append({
        "name": "mc_agreement",
        "passed": mc_ok,
        "bias_allowance": bias,
        "probes": mc_probes,
    })

    # 5. cross-solver agreement (closed form vs grid iteration)
    if mode == "solve" and closed is not None \
            and case is DriftCase.ALL_POSITIVE:
        v_grid, policy, _report = solve_grid(model, h=cfg.h)
        b_gap = max(
            abs(policy.barriers[i] - barriers[i])
            for i in range(model.n_states)
        )
        xs = v_grid.xs
        v_gap = max(
            float(np.max(np.abs(
                np.array([closed.value(x, i) for x in xs]) - v_grid.samples[i]
            )))
            for i in range(model.n_states)
        )
        tol_b = max(2.0 * cfg.h, 2e-3)
        checks.append({
            "name": "solver_agreement",
            "passed": b_gap <= tol_b and v_gap <= VALUE_AGREEMENT,
            "barrier_gap": b_gap,
            "value_gap": v_gap,
            "barrier_bound": tol_b,
            "value_bound": VALUE_AGREEMENT,
        })
    else:
        checks.append({
            "name": "solver_agreement",
            "passed": True,
            "skipped": "only one solver covers this configuration",
        })

    passed = all(c["passed"] for c in checks)
    out = Path(cfg.out)
    _write_json(out / "verify.json", {
        "config": _config_dict(cfg),
        "mode": mode,
        "barriers": barriers,
        "passed": passed,
        "checks": checks,
    })
    for c in checks:
        status = "ok  " if c["passed"] else "FAIL"
        detail = c.get("value", c.get("skipped", ""))
        _say(f"{status} {c['name']}"
             + (f" ({detail:.3e})" if isinstance(detail, float) else
                (f" ({detail})" if detail else "")))
    _say("wrote", out / "verify.json")
    return OK if passed else VERIFY_FAILED


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    from pathlib import Path

    model = load_model(cfg.model)
    if cfg.policy is None:
        raise ValueError("simulate requires --policy")
    liq, bar = _parse_policy(cfg.policy, model.n_states)
    if cfg.probe_points is not None:
        probes = _parse_probe_points(cfg.probe_points, model.n_states)
    else:
        probes = _default_probe_points(bar)
    sim_cfg = SimConfig(dt=cfg.dt, paths=cfg.paths, seed=cfg.seed,
                        antithetic=cfg.paths % 2 == 0)
    results = []
    for x0, i0 in probes:
        if liq is not None:
            est = simulate_liquidation_dividend(model, liq, bar, x0, i0, sim_cfg)
        else:
            est = simulate_barrier(model, bar, x0, i0, sim_cfg)
        results.append({
            "x0": x0, "i0": i0, "mean": est.mean, "stderr": est.stderr,
            "paths": est.paths, "dt": est.dt, "seed": est.seed,
            "discount_mass": est.discount_mass,
            "publishable": est.publishable,
        })
        _say(f"x0={x0:.9g} regime={i0}: {est.mean:.9g} +- {est.stderr:.9g}")
    out = Path(cfg.out)
    _write_json(out / "estimate.json", {
        "config": _config_dict(cfg),
        "policy": {"barriers": bar, "liquidation": liq},
        "antithetic": sim_cfg.antithetic,
        "probes": results,
    })
    _say("wrote", out / "estimate.json")
    return OK


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse with input errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(INPUT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="divbarrier",
        description=(
            "Optimal dividend barriers for regime-switching diffusion "
            "reserves: solve models, rebuild sensitivity tables, verify "
            "solutions, run simulations."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, model_required):
        if model_required:
            p.add_argument("--model", required=True,
                           help="path to a model JSON file")
        p.add_argument("--out", default=".",
                       help="output directory for artifacts (default: .)")

    p_solve = sub.add_parser(
        "solve", help="solve a model and write solution.json + value.csv")
    add_common(p_solve, model_required=True)
    p_solve.add_argument("--h", type=float, default=1e-3,
                         help="grid step for value output / grid solver")
    p_solve.add_argument("--tol", type=float, default=None,
                         help="solver tolerance (default: per-solver)")
    p_solve.set_defaults(func=cmd_solve)

    p_tables = sub.add_parser(
        "tables",
        help="rebuild the built-in sensitivity tables as tables.csv")
    add_common(p_tables, model_required=False)
    p_tables.add_argument("--tol", type=float, default=None,
                          help="solver tolerance (default: per-solver)")
    p_tables.set_defaults(func=cmd_tables, h=1e-3)

    p_verify = sub.add_parser(
        "verify",
        help="check a solution (fresh solve or --policy) and exit 3 on "
             "failure")
    add_common(p_verify, model_required=True)
    p_verify.add_argument("--h", type=float, default=1e-3,
                          help="grid step for the checks")
    p_verify.add_argument("--tol", type=float, default=None,
                          help="solver tolerance (default: per-solver)")
    p_verify.add_argument("--policy", default=None,
                          help="verify this barrier policy 'b0,b1,...' "
                               "instead of solving")
    p_verify.add_argument("--dt", type=float, default=1e-3,
                          help="simulation step for the MC check")
    p_verify.add_argument("--paths", type=int, default=20_000,
                          help="simulated paths for the MC check")
    p_verify.add_argument("--seed", type=int, default=2026,
                          help="simulation seed")
    p_verify.add_argument("--probe-points", default=None,
                          help="comma list of x:regime pairs (default: "
                               "half-barrier and barrier per regime)")
    p_verify.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser(
        "simulate", help="estimate a policy's value by simulation")
    add_common(p_sim, model_required=True)
    p_sim.add_argument("--policy", required=True,
                       help="'b0,b1,...' or 'd0,d1,...:b0,b1,...' with "
                            "liquidation levels")
    p_sim.add_argument("--probe-points", default=None,
                       help="comma list of x:regime pairs (default: "
                            "half-barrier and barrier per regime)")
    p_sim.add_argument("--dt", type=float, default=1e-3,
                       help="Euler step (default 1e-3)")
    p_sim.add_argument("--paths", type=int, default=20_000,
                       help="number of paths (default 20000); antithetic "
                            "pairing is used when the count is even")
    p_sim.add_argument("--seed", type=int, default=2026, help="RNG seed")
    p_sim.set_defaults(func=cmd_simulate, h=1e-3)

    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    fields = {
        "command": args.command,
        "model": getattr(args, "model", None),
        "out": args.out,
        "h": getattr(args, "h", 1e-3),
        "dt": getattr(args, "dt", 1e-3),
        "paths": getattr(args, "paths", 20_000),
        "seed": getattr(args, "seed", 2026),
        "policy": getattr(args, "policy", None),
        "probe_points": getattr(args, "probe_points", None),
    }
    tol = getattr(args, "tol", None)
    if tol is not None:
        fields["tol"] = tol
    return RunConfig(**fields)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0; parse errors exit 1
        return int(exc.code or 0)
    try:
        cfg = _run_config(args)
        return args.func(cfg)
    except (ModelValidationError, InvalidBand, OutOfRange, BarrierOutOfRange,
            DriftHypothesisViolated, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except DividendSolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
