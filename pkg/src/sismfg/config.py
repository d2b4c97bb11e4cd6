"""Scenario configuration: JSON parsing, validation, canonical form.

A scenario file is a single JSON object with a ``model`` block, a ``run``
kind, a ``seed``, an optional ``output`` block and exactly one run-specific
block named after the run kind (``equilibria`` needs none).  Validation is
collected: every schema violation and every model-invariant violation is
reported, not just the first.  Unknown keys are rejected at every level.

Public file conventions: strategies and parameter-path indices are 1-based
(matching the x_1I / x_1S column labels); the Python API is 0-based.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, StationaryControl

RUN_KINDS = ("equilibria", "simulate", "turnpike", "nplayer", "sweep")
OUTPUT_FORMATS = ("csv", "json")

#: parameter paths a sweep may override, with the index arity they take
SWEEPABLE = {"lambda": 0, "delta": 0, "q_plus": 1, "q_minus": 1, "w_I": 1, "w_S": 1, "beta": 2}

_PATH_RE = re.compile(r"^([A-Za-z_]+)((?:\[\d+\])*)$")


class ConfigError(Exception):
    """Invalid scenario file; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class OutputConfig:
    dir: str | None = None
    format: str = "csv"


@dataclass(frozen=True)
class GridSpec:
    t_start: float
    t_end: float
    n_steps: int | None = None  # None: default step rule min(0.01, 0.1/lam)


@dataclass(frozen=True)
class SimulateConfig:
    control: StationaryControl
    x0: str | np.ndarray
    grid: GridSpec


@dataclass(frozen=True)
class TurnpikeConfig:
    strategy: int  # 0-based anchor strategy
    x0: str | np.ndarray
    g_terminal: str | np.ndarray
    grid: GridSpec


@dataclass(frozen=True)
class NPlayerConfig:
    control: StationaryControl
    x0: str | np.ndarray
    t_end: float
    n_agents: int | None = None
    n_list: tuple[int, ...] | None = None
    replications: int = 1


@dataclass(frozen=True)
class SweepAxis:
    path: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SweepConfig:
    axes: tuple[SweepAxis, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelParams
    run: str
    seed: int
    output: OutputConfig = field(default_factory=OutputConfig)
    simulate: SimulateConfig | None = None
    turnpike: TurnpikeConfig | None = None
    nplayer: NPlayerConfig | None = None
    sweep: SweepConfig | None = None

    def to_dict(self) -> dict:
        """Canonical JSON-able echo of the configuration (1-based indices)."""
        out: dict = {
            "model": model_to_dict(self.model),
            "run": self.run,
            "seed": self.seed,
            "output": {"dir": self.output.dir, "format": self.output.format},
        }
        if self.simulate:
            out["simulate"] = {
                "control": _control_to_dict(self.simulate.control),
                "x0": _state_spec_to_json(self.simulate.x0),
                "grid": _grid_to_dict(self.simulate.grid),
            }
        if self.turnpike:
            out["turnpike"] = {
                "strategy": self.turnpike.strategy + 1,
                "x0": _state_spec_to_json(self.turnpike.x0),
                "g_terminal": _state_spec_to_json(self.turnpike.g_terminal),
                "grid": _grid_to_dict(self.turnpike.grid),
            }
        if self.nplayer:
            block: dict = {
                "control": _control_to_dict(self.nplayer.control),
                "x0": _state_spec_to_json(self.nplayer.x0),
                "t_end": self.nplayer.t_end,
            }
            if self.nplayer.n_agents is not None:
                block["n_agents"] = self.nplayer.n_agents
            if self.nplayer.n_list is not None:
                block["n_list"] = list(self.nplayer.n_list)
                block["replications"] = self.nplayer.replications
            out["nplayer"] = block
        if self.sweep:
            out["sweep"] = {
                "axes": [{"path": a.path, "values": list(a.values)} for a in self.sweep.axes]
            }
        return out


def model_to_dict(p: ModelParams) -> dict:
    return {
        "d": p.d,
        "lambda": p.lam,
        "delta": p.delta,
        "q_plus": p.q_plus.tolist(),
        "q_minus": p.q_minus.tolist(),
        "beta": p.beta.tolist(),
        "w_I": p.w_I.tolist(),
        "w_S": p.w_S.tolist(),
    }


def _grid_to_dict(g: GridSpec) -> dict:
    out = {"t_start": g.t_start, "t_end": g.t_end}
    if g.n_steps is not None:
        out["n_steps"] = g.n_steps
    return out


def _control_to_dict(u: StationaryControl) -> dict:
    if u.is_single:
        return {"type": "single", "i": int(u.target_I[0]) + 1}
    if u.is_mixed:
        return {"type": "mixed", "i": int(u.target_I[0]) + 1, "k": int(u.target_S[0]) + 1}
    return {
        "type": "explicit",
        "target_I": (u.target_I + 1).tolist(),
        "target_S": (u.target_S + 1).tolist(),
    }


def _state_spec_to_json(spec):
    if isinstance(spec, str):
        return spec
    return np.asarray(spec).tolist()


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, where: str, msg: str) -> None:
        self.errors.append(f"{where}: {msg}")

    def expect_keys(self, where: str, obj: dict, required: set, optional: set) -> bool:
        ok = True
        for key in sorted(set(obj) - required - optional):
            self.add(where, f"unknown key '{key}'")
            ok = False
        for key in sorted(required - set(obj)):
            self.add(where, f"missing key '{key}'")
            ok = False
        return ok

    def number(self, where: str, obj: dict, key: str, default=None):
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(f"{where}.{key}", f"expected a number, got {type(v).__name__}")
            return default
        return float(v)

    def integer(self, where: str, obj: dict, key: str, default=None):
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.add(f"{where}.{key}", f"expected an integer, got {type(v).__name__}")
            return default
        return int(v)


def _parse_model(data, col: _Collector) -> ModelParams | None:
    where = "model"
    if not isinstance(data, dict):
        col.add(where, "expected an object")
        return None
    required = {"d", "lambda", "delta", "q_plus", "q_minus", "beta", "w_I", "w_S"}
    if not col.expect_keys(where, data, required, set()):
        return None
    d = col.integer(where, data, "d")
    if d is None:
        return None
    try:
        return ModelParams(
            d=d,
            lam=data["lambda"],
            delta=data["delta"],
            q_plus=data["q_plus"],
            q_minus=data["q_minus"],
            beta=data["beta"],
            w_I=data["w_I"],
            w_S=data["w_S"],
        )
    except (ValueError, TypeError) as exc:
        for msg in str(exc).split("; "):
            col.add(where, msg)
        return None


def _parse_control(data, d: int, where: str, col: _Collector) -> StationaryControl | None:
    if not isinstance(data, dict):
        col.add(where, "expected an object")
        return None
    kind = data.get("type")
    try:
        if kind == "single":
            col.expect_keys(where, data, {"type", "i"}, set())
            return StationaryControl.single(d, int(data["i"]) - 1)
        if kind == "mixed":
            col.expect_keys(where, data, {"type", "i", "k"}, set())
            return StationaryControl.mixed(d, int(data["i"]) - 1, int(data["k"]) - 1)
        if kind == "explicit":
            col.expect_keys(where, data, {"type", "target_I", "target_S"}, set())
            return StationaryControl(
                np.asarray(data["target_I"], dtype=int) - 1,
                np.asarray(data["target_S"], dtype=int) - 1,
            )
    except (ValueError, TypeError, KeyError) as exc:
        col.add(where, str(exc))
        return None
    col.add(f"{where}.type", "expected 'single', 'mixed' or 'explicit'")
    return None


def _parse_state_spec(data, n_states: int, where: str, col: _Collector, tokens=("uniform",)):
    if isinstance(data, str):
        if data in tokens:
            return data
        col.add(where, f"expected one of {list(tokens)} or a list of {n_states} numbers")
        return None
    if isinstance(data, list):
        arr = np.asarray(data, dtype=float)
        if arr.shape != (n_states,):
            col.add(where, f"expected {n_states} entries, got {arr.shape}")
            return None
        return arr
    col.add(where, "expected a string token or a list of numbers")
    return None


def _parse_grid(data, where: str, col: _Collector) -> GridSpec | None:
    if not isinstance(data, dict):
        col.add(where, "expected an object")
        return None
    col.expect_keys(where, data, {"t_start", "t_end"}, {"n_steps"})
    t0 = col.number(where, data, "t_start")
    t1 = col.number(where, data, "t_end")
    n = col.integer(where, data, "n_steps")
    if t0 is None or t1 is None:
        return None
    if not t1 > t0:
        col.add(where, f"t_end ({t1}) must be > t_start ({t0})")
        return None
    if n is not None and n < 1:
        col.add(f"{where}.n_steps", "must be >= 1")
        return None
    return GridSpec(t_start=t0, t_end=t1, n_steps=n)


def parse_sweep_path(path: str, d: int) -> tuple[str, tuple[int, ...]]:
    """Split a 1-based override path like 'beta[1][2]' into its 0-based parts."""
    m = _PATH_RE.match(path)
    if not m:
        raise ValueError(f"malformed parameter path '{path}'")
    name = m.group(1)
    idx = tuple(int(s) - 1 for s in re.findall(r"\[(\d+)\]", m.group(2)))
    if name not in SWEEPABLE:
        raise ValueError(f"'{name}' is not a sweepable parameter (one of {sorted(SWEEPABLE)})")
    if len(idx) != SWEEPABLE[name]:
        raise ValueError(f"'{name}' takes {SWEEPABLE[name]} index(es), got {len(idx)}")
    for q in idx:
        if not 0 <= q < d:
            raise ValueError(f"index out of range in '{path}' (d={d}, indices are 1-based)")
    return name, idx


def apply_override(model_dict: dict, path: str, value: float, d: int) -> dict:
    """Return a copy of a model dict with one sweep override applied."""
    name, idx = parse_sweep_path(path, d)
    out = json.loads(json.dumps(model_dict))
    if name == "lambda":
        out["lambda"] = value
    elif name == "delta":
        out["delta"] = value
    elif name == "beta":
        out["beta"][idx[0]][idx[1]] = value
    else:
        out[name][idx[0]] = value
    return out


def parse_config_dict(data: dict) -> ScenarioConfig:
    """Validate a scenario object; raises ConfigError listing every problem."""
    col = _Collector()
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a JSON object"])
    run = data.get("run")
    if run not in RUN_KINDS:
        col.add("run", f"expected one of {list(RUN_KINDS)}, got {run!r}")
        run = None
    top_required = {"model", "run", "seed"}
    top_optional = {"output"}
    if run not in (None, "equilibria"):
        top_required.add(run)
    col.expect_keys("top level", data, top_required, top_optional)
    model = _parse_model(data.get("model"), col) if "model" in data else None
    seed = col.integer("top level", data, "seed", default=None)
    output = OutputConfig()
    if "output" in data:
        odata = data["output"]
        if not isinstance(odata, dict):
            col.add("output", "expected an object")
        else:
            col.expect_keys("output", odata, set(), {"dir", "format"})
            fmt = odata.get("format", "csv")
            if fmt not in OUTPUT_FORMATS:
                col.add("output.format", f"expected one of {list(OUTPUT_FORMATS)}")
                fmt = "csv"
            dir_ = odata.get("dir")
            if dir_ is not None and not isinstance(dir_, str):
                col.add("output.dir", "expected a string")
                dir_ = None
            output = OutputConfig(dir=dir_, format=fmt)

    simulate = turnpike = nplayer = sweep = None
    if model is not None and run is not None and run in data:
        block = data[run]
        where = run
        if not isinstance(block, dict):
            col.add(where, "expected an object")
        elif run == "simulate":
            col.expect_keys(where, block, {"control", "x0", "grid"}, set())
            control = _parse_control(block.get("control"), model.d, f"{where}.control", col)
            x0 = _parse_state_spec(
                block.get("x0"), model.n_states, f"{where}.x0", col, tokens=("uniform", "stationary")
            )
            grid = _parse_grid(block.get("grid"), f"{where}.grid", col)
            if control is not None and x0 is not None and grid is not None:
                simulate = SimulateConfig(control=control, x0=x0, grid=grid)
        elif run == "turnpike":
            col.expect_keys(where, block, {"strategy", "x0", "g_terminal", "grid"}, set())
            strategy = col.integer(where, block, "strategy")
            if strategy is not None and not 1 <= strategy <= model.d:
                col.add(f"{where}.strategy", f"must be in [1, {model.d}] (1-based)")
                strategy = None
            x0 = _parse_state_spec(
                block.get("x0"), model.n_states, f"{where}.x0", col, tokens=("uniform", "stationary")
            )
            gT = _parse_state_spec(
                block.get("g_terminal"), model.n_states, f"{where}.g_terminal", col,
                tokens=("stationary",),
            )
            grid = _parse_grid(block.get("grid"), f"{where}.grid", col)
            if None not in (strategy, grid) and x0 is not None and gT is not None:
                turnpike = TurnpikeConfig(strategy=strategy - 1, x0=x0, g_terminal=gT, grid=grid)
        elif run == "nplayer":
            col.expect_keys(
                where, block, {"control", "x0", "t_end"}, {"n_agents", "n_list", "replications"}
            )
            control = _parse_control(block.get("control"), model.d, f"{where}.control", col)
            x0 = _parse_state_spec(
                block.get("x0"), model.n_states, f"{where}.x0", col, tokens=("uniform", "stationary")
            )
            t_end = col.number(where, block, "t_end")
            n_agents = col.integer(where, block, "n_agents")
            reps = col.integer(where, block, "replications", default=1)
            n_list = None
            if "n_list" in block:
                raw = block["n_list"]
                if (
                    not isinstance(raw, list)
                    or not raw
                    or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in raw)
                ):
                    col.add(f"{where}.n_list", "expected a non-empty list of integers >= 1")
                else:
                    n_list = tuple(raw)
            if n_agents is None and n_list is None:
                col.add(where, "one of 'n_agents' or 'n_list' is required")
            if n_agents is not None and n_agents < 1:
                col.add(f"{where}.n_agents", "must be >= 1")
                n_agents = None
            if t_end is not None and t_end <= 0:
                col.add(f"{where}.t_end", "must be > 0")
                t_end = None
            if reps is not None and reps < 1:
                col.add(f"{where}.replications", "must be >= 1")
                reps = None
            if control is not None and x0 is not None and t_end is not None and reps is not None:
                if n_agents is not None or n_list is not None:
                    nplayer = NPlayerConfig(
                        control=control, x0=x0, t_end=t_end,
                        n_agents=n_agents, n_list=n_list, replications=reps,
                    )
        elif run == "sweep":
            col.expect_keys(where, block, {"axes"}, set())
            axes_raw = block.get("axes")
            axes: list[SweepAxis] = []
            if not isinstance(axes_raw, list) or not axes_raw:
                col.add(f"{where}.axes", "expected a non-empty list of axes")
            else:
                for a_idx, axis in enumerate(axes_raw):
                    awhere = f"{where}.axes[{a_idx}]"
                    if not isinstance(axis, dict):
                        col.add(awhere, "expected an object")
                        continue
                    col.expect_keys(awhere, axis, {"path", "values"}, set())
                    path = axis.get("path")
                    values = axis.get("values")
                    if not isinstance(path, str):
                        col.add(f"{awhere}.path", "expected a string")
                        continue
                    try:
                        parse_sweep_path(path, model.d)
                    except ValueError as exc:
                        col.add(f"{awhere}.path", str(exc))
                        continue
                    if (
                        not isinstance(values, list)
                        or not values
                        or not all(
                            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
                        )
                    ):
                        col.add(f"{awhere}.values", "expected a non-empty list of numbers")
                        continue
                    axes.append(SweepAxis(path=path, values=tuple(float(v) for v in values)))
                if len(axes) == len(axes_raw):
                    sweep = SweepConfig(axes=tuple(axes))

    if col.errors:
        raise ConfigError(col.errors)
    assert model is not None and run is not None and seed is not None
    return ScenarioConfig(
        model=model,
        run=run,
        seed=seed,
        output=output,
        simulate=simulate,
        turnpike=turnpike,
        nplayer=nplayer,
        sweep=sweep,
    )


def parse_config(path: str | Path) -> ScenarioConfig:
    """Load and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    return parse_config_dict(data)
