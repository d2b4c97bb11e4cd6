"""Run orchestration and result persistence.

Every run writes its artifacts plus a ``manifest.json`` (config echo, tool
version, timestamps, artifact list, failures).  The manifest is written
even when the run fails.  Numeric artifacts are deterministic functions of
(config, seed): floats are serialized with 17 significant digits, JSON keys
are sorted, and sweep rows are emitted in grid order regardless of the
worker count, so identical runs produce byte-identical numeric files
(manifest timestamps excluded).

Trajectory CSV column contract:
    t, x_1I, x_1S, ..., x_dI, x_dS[, g_1I, g_1S, ..., cone_ok, argmin_ok]
with the g/flag columns present for turnpike runs; flags are 1/0.
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    NPlayerConfig,
    ScenarioConfig,
    SimulateConfig,
    TurnpikeConfig,
    apply_override,
    model_to_dict,
    parse_config_dict,
)
from .dynamics import (
    TimeGrid,
    TrajectorySolution,
    TurnpikeHypothesisError,
    default_grid,
    integrate_forward,
    solve_turnpike,
)
from .model import MixedState, ModelParams, StationaryControl, ValueVector
from .nplayer import CountVector, lln_error, simulate_ctmc
from .stationary import (
    EnumerationResult,
    EquilibriumSolution,
    enumerate_equilibria,
    fixed_point_mixed,
    fixed_point_single,
    hjb_single_exact,
)


def fmt(v: float) -> str:
    """17-significant-digit float formatting (round-trip safe)."""
    return format(float(v), ".17g")


@dataclass
class ResultBundle:
    manifest: dict
    artifacts: dict[str, Path] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    n_succeeded: int = 0


def _state_labels(d: int, prefix: str) -> list[str]:
    out = []
    for j in range(1, d + 1):
        out.append(f"{prefix}_{j}I")
        out.append(f"{prefix}_{j}S")
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_table(out_dir: Path, name: str, fmt_kind: str, header: list[str], rows) -> Path:
    """Bulk numeric table in the configured encoding (csv or json records)."""
    if fmt_kind == "csv":
        path = out_dir / f"{name}.csv"
        _write_csv(path, header, rows)
    else:
        path = out_dir / f"{name}.json"
        _write_json(path, {"columns": header, "rows": [list(r) for r in rows]})
    return path


def _control_json(u: StationaryControl) -> dict:
    return {
        "label": u.label(),
        "target_I": (u.target_I + 1).tolist(),
        "target_S": (u.target_S + 1).tolist(),
    }


def _complex_list(values: np.ndarray | None):
    if values is None:
        return None
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex)]


def _equilibrium_json(sol: EquilibriumSolution) -> dict:
    m = sol.margins
    return {
        "control": _control_json(sol.control),
        "x_star": sol.x_star.x.tolist(),
        "g": sol.g.g.tolist(),
        "residual": sol.residual,
        "degenerate": sol.degenerate,
        "stability": {
            "stable": sol.stability.stable,
            "max_real_part": sol.stability.max_real_part,
            "xi_principal": sol.stability.xi_principal,
            "xi_pairs": None
            if sol.stability.xi_pairs is None
            else sol.stability.xi_pairs.tolist(),
            "numerical_spectrum": _complex_list(sol.stability.numerical),
            "closed_form_spectrum": _complex_list(sol.stability.closed_form),
            "agreement": sol.stability.agreement,
        },
        "margins": {
            "min_margin": m.min_margin,
            "margin_I": m.margin_I.tolist(),
            "margin_S": m.margin_S.tolist(),
            "asymptotic_margin_I": m.asymptotic_margin_I.tolist(),
            "asymptotic_margin_S": m.asymptotic_margin_S.tolist(),
            "small_interaction_margin_I": m.small_interaction_margin_I.tolist(),
            "small_interaction_margin_S": m.small_interaction_margin_S.tolist(),
        },
    }


def _enumeration_json(result: EnumerationResult) -> dict:
    return {
        "equilibria": [_equilibrium_json(s) for s in result.equilibria],
        "candidates": [
            {
                "control": _control_json(r.control),
                "status": r.status,
                "min_margin": r.min_margin,
                "residual": r.residual,
                "detail": r.detail,
            }
            for r in result.reports
        ],
    }


def _resolve_x0(spec, p: ModelParams, u: StationaryControl) -> MixedState:
    if isinstance(spec, str):
        if spec == "uniform":
            return MixedState.uniform(p.d)
        if spec == "stationary":
            i, k = u.as_pair()
            if u.is_single:
                return fixed_point_single(p, i)[1]
            return fixed_point_mixed(p, i, k)[0]
        raise ValueError(f"unknown x0 token {spec!r}")
    return MixedState(np.asarray(spec, dtype=float))


def _resolve_grid(spec, p: ModelParams) -> TimeGrid:
    if spec.n_steps is None:
        return default_grid(p, spec.t_start, spec.t_end)
    return TimeGrid(spec.t_start, spec.t_end, spec.n_steps)


def run_equilibria(p: ModelParams, out_dir: Path, fmt_kind: str) -> tuple[dict[str, Path], dict]:
    result = enumerate_equilibria(p)
    path = out_dir / "equilibria.json"
    _write_json(path, _enumeration_json(result))
    summary = {
        "n_equilibria": len(result.equilibria),
        "controls": [s.control.label() for s in result.equilibria],
    }
    return {"equilibria": path}, summary


def run_simulate(
    p: ModelParams, cfg: SimulateConfig, out_dir: Path, fmt_kind: str
) -> tuple[dict[str, Path], dict]:
    grid = _resolve_grid(cfg.grid, p)
    x0 = _resolve_x0(cfg.x0, p, cfg.control)
    x_path = integrate_forward(p, x0, cfg.control, grid)
    times = grid.times()
    header = ["t"] + _state_labels(p.d, "x")
    rows = (
        [fmt(times[m])] + [fmt(v) for v in x_path[m]] for m in range(times.size)
    )
    path = _write_table(out_dir, "trajectory", fmt_kind, header, rows)
    return {"trajectory": path}, {"terminal": x_path[-1].tolist()}


def _turnpike_rows(sol: TrajectorySolution):
    times = sol.grid.times()
    for m in range(times.size):
        yield (
            [fmt(times[m])]
            + [fmt(v) for v in sol.x_path[m]]
            + [fmt(v) for v in sol.g_path[m]]
            + [int(sol.cone_ok[m]), int(sol.argmin_ok[m])]
        )


def run_turnpike(
    p: ModelParams, cfg: TurnpikeConfig, out_dir: Path, fmt_kind: str
) -> tuple[dict[str, Path], dict]:
    i = cfg.strategy
    u = StationaryControl.single(p.d, i)
    x0 = _resolve_x0(cfg.x0, p, u)
    if isinstance(cfg.g_terminal, str):  # token 'stationary'
        x_star, _ = fixed_point_single(p, i)
        gT = hjb_single_exact(p, i, x_star)
    else:
        gT = ValueVector(np.asarray(cfg.g_terminal, dtype=float))
    grid = _resolve_grid(cfg.grid, p)
    sol = solve_turnpike(p, i, x0, gT, grid)
    header = (
        ["t"] + _state_labels(p.d, "x") + _state_labels(p.d, "g") + ["cone_ok", "argmin_ok"]
    )
    path = _write_table(out_dir, "turnpike", fmt_kind, header, _turnpike_rows(sol))
    summary = {
        "certified": sol.certified,
        "first_violation_time": sol.first_violation_time,
        "mid_window": list(sol.stats.window),
        "sup_x_mid": sol.stats.sup_x_mid,
        "sup_g_mid": sol.stats.sup_g_mid,
        "window_entry": sol.stats.entry,
        "window_exit": sol.stats.exit,
        "inside_fraction": sol.stats.inside_fraction,
    }
    spath = out_dir / "turnpike_summary.json"
    _write_json(spath, summary)
    return {"turnpike": path, "turnpike_summary": spath}, summary


def run_nplayer(
    p: ModelParams, cfg: NPlayerConfig, out_dir: Path, fmt_kind: str, seed: int
) -> tuple[dict[str, Path], dict]:
    x0 = _resolve_x0(cfg.x0, p, cfg.control)
    artifacts: dict[str, Path] = {}
    summary: dict = {}
    if cfg.n_list is not None:
        table = lln_error(
            p, cfg.control, x0, cfg.t_end, list(cfg.n_list), cfg.replications, seed
        )
        header = ["N", "mean_sup_error", "std_error", "replications"]
        rows = [
            [str(r.N), fmt(r.mean_sup_error), fmt(r.std_error), str(table.replications)]
            for r in table.rows
        ]
        artifacts["lln_error"] = _write_table(out_dir, "lln_error", fmt_kind, header, rows)
        summary["mean_sup_errors"] = {str(r.N): r.mean_sup_error for r in table.rows}
        summary["ratios"] = table.ratios()
    if cfg.n_agents is not None:
        n0 = CountVector.from_fractions(x0, cfg.n_agents)
        ctmc = simulate_ctmc(p, n0, cfg.control, cfg.t_end, seed)
        counts = ctmc.counts()
        header = ["t"] + _state_labels(p.d, "n")
        times = np.concatenate([[0.0], ctmc.times])
        rows = (
            [fmt(times[m])] + [str(int(v)) for v in counts[m]] for m in range(times.size)
        )
        artifacts["nplayer_path"] = _write_table(out_dir, "nplayer_path", fmt_kind, header, rows)
        summary["n_events"] = ctmc.n_events
        summary["terminal_fractions"] = (ctmc.terminal().n / cfg.n_agents).tolist()
    return artifacts, summary


def _sweep_point(p_base_dict: dict, overrides: list[tuple[str, float]], d: int):
    model_dict = p_base_dict
    for path, value in overrides:
        model_dict = apply_override(model_dict, path, value, d)
    p = parse_config_dict(
        {"model": model_dict, "run": "equilibria", "seed": 0}
    ).model
    return enumerate_equilibria(p)


def run_sweep(
    cfg: ScenarioConfig, out_dir: Path, fmt_kind: str, threads: int
) -> tuple[dict[str, Path], dict, list[str], int]:
    axes = cfg.sweep.axes
    base = model_to_dict(cfg.model)
    points = list(itertools.product(*(axis.values for axis in axes)))
    jobs = [
        [(axes[a].path, values[a]) for a in range(len(axes))] for values in points
    ]

    def solve(overrides):
        try:
            return _sweep_point(base, overrides, cfg.model.d), None
        except Exception as exc:  # per-point failures must not abort the sweep
            return None, f"{overrides}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, jobs))
    else:
        results = [solve(j) for j in jobs]

    header = [axis.path for axis in axes] + [
        "status",
        "n_equilibria",
        "controls",
        "x_star",
        "min_margin",
        "max_real_part",
    ]
    rows = []
    failures: list[str] = []
    n_ok = 0
    for overrides, (result, err) in zip(jobs, results):
        row = [fmt(v) for _, v in overrides]
        if err is not None:
            failures.append(err)
            rows.append(row + ["failed", "", "", "", "", ""])
            continue
        n_ok += 1
        controls = ";".join(s.control.label() for s in result.equilibria)
        x_star = ""
        min_margin = ""
        max_real = ""
        singles = [s for s in result.equilibria if s.control.is_single]
        if singles:
            s0 = singles[0]
            x_star = fmt(s0.x_star.x[2 * s0.control.as_pair()[0]])
            min_margin = fmt(s0.margins.min_margin) if np.isfinite(s0.margins.min_margin) else "inf"
            max_real = fmt(s0.stability.max_real_part)
        rows.append(
            row + ["ok", str(len(result.equilibria)), controls, x_star, min_margin, max_real]
        )
    path = _write_table(out_dir, "sweep", fmt_kind, header, rows)
    summary = {"n_points": len(points), "n_succeeded": n_ok}
    return {"sweep": path}, summary, failures, n_ok


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path, threads: int = 1) -> ResultBundle:
    """Execute a validated scenario; always writes manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    bundle = ResultBundle(manifest={})
    fmt_kind = cfg.output.format
    try:
        if cfg.run == "equilibria":
            artifacts, summary = run_equilibria(cfg.model, out_dir, fmt_kind)
            bundle.n_succeeded = 1
        elif cfg.run == "simulate":
            artifacts, summary = run_simulate(cfg.model, cfg.simulate, out_dir, fmt_kind)
            bundle.n_succeeded = 1
        elif cfg.run == "turnpike":
            artifacts, summary = run_turnpike(cfg.model, cfg.turnpike, out_dir, fmt_kind)
            bundle.n_succeeded = 1
        elif cfg.run == "nplayer":
            artifacts, summary = run_nplayer(cfg.model, cfg.nplayer, out_dir, fmt_kind, cfg.seed)
            bundle.n_succeeded = 1
        elif cfg.run == "sweep":
            artifacts, summary, failures, n_ok = run_sweep(cfg, out_dir, fmt_kind, threads)
            bundle.failures.extend(failures)
            bundle.n_succeeded = n_ok
        else:  # unreachable after validation
            raise ValueError(f"unknown run kind {cfg.run!r}")
        bundle.artifacts.update(artifacts)
    except (TurnpikeHypothesisError, RuntimeError, ValueError) as exc:
        bundle.failures.append(str(exc))
    finally:
        bundle.manifest = {
            "tool": "sismfg",
            "version": __version__,
            "started_utc": started,
            "finished_utc": datetime.now(timezone.utc).isoformat(),
            "config": cfg.to_dict(),
            "artifacts": sorted(str(p.name) for p in bundle.artifacts.values()),
            "failures": bundle.failures,
        }
        _write_json(out_dir / "manifest.json", bundle.manifest)
    return bundle
