"""Trajectory CSV, experiment configs and JSON reports."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from rollgeo.dynamics import ControlSchedule, HorizontalPath, check_radius
from rollgeo.state import BASE_STATE, RawState, make_state

CSV_HEADER = ["t", "u1", "u2", "u3", "v1", "v2", "v3", "a1", "a2", "a3", "b1", "b2", "b3", "theta"]
ROW_TOL = 1e-9


class ConfigError(ValueError):
    """An experiment config is malformed or violates an invariant."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trajectory_csv(p: HorizontalPath) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t, x, th in zip(p.times, p.states, p.thetas):
        w.writerow([_fmt(t)] + [_fmt(c) for c in x] + [_fmt(th)])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(path: Path, p: HorizontalPath) -> None:
    write_atomic(path, trajectory_csv(p))


def read_trajectory(path: Path, r: float, step: float = math.nan) -> HorizontalPath:
    """Load a trajectory CSV; every row is re-validated as a state within 1e-9."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected trajectory header")
    data = np.array([[float(c) for c in row] for row in rows[1:]])
    for i, row in enumerate(data):
        make_state(row[1:4], row[4:7], row[7:10], row[10:13], tol=ROW_TOL)
    return HorizontalPath(r, data[:, 0], data[:, 1:13], data[:, 13], step)


def dumps_report(obj) -> str:
    """Deterministic JSON text for reports."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class ExperimentConfig:
    r: float
    initial_state: RawState
    controls: Optional[ControlSchedule]
    step: float
    seed: int = 0
    bend_times: Optional[tuple] = None
    bend_alphas: Optional[tuple] = None
    plane_k: Optional[tuple] = None
    duration: Optional[float] = None
    T: Optional[float] = None
    T_bar: Optional[float] = None
    trials: int = 100
    tol: float = 1e-8
    max_iter: int = 20


def _floats(value, name, length=None):
    try:
        out = tuple(float(x) for x in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a list of numbers") from exc
    if length is not None and len(out) != length:
        raise ConfigError(f"{name}: expected {length} numbers, got {len(out)}")
    if not all(math.isfinite(x) for x in out):
        raise ConfigError(f"{name}: values must be finite")
    return out


def _positive(value, name):
    try:
        x = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number") from exc
    if not (math.isfinite(x) and x > 0.0):
        raise ConfigError(f"{name} must be positive, got {value}")
    return x


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {
        "r", "initial_state", "controls", "step", "seed", "bend", "times", "plane_k",
        "duration", "T", "T_bar", "trials", "tol", "max_iter", "description",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    r = _positive(raw.get("r", 1.0), "r")
    check_radius(r)
    init = raw.get("initial_state", "base")
    if init == "base":
        s0 = BASE_STATE
    else:
        vals = _floats(init, "initial_state", 12)
        try:
            s0 = make_state(vals[0:3], vals[3:6], vals[6:9], vals[9:12])
        except ValueError as exc:
            raise ConfigError(f"initial_state: {exc}") from exc

    controls = None
    if raw.get("controls") is not None:
        segs = []
        for i, seg in enumerate(raw["controls"]):
            d, th = _floats(seg, f"controls[{i}]", 2)
            segs.append((_positive(d, f"controls[{i}] duration"), th))
        controls = ControlSchedule(tuple(segs))

    step = _positive(raw.get("step", 1e-3), "step")

    bend = raw.get("bend") or {}
    bend_times = raw.get("times", bend.get("times"))
    cfg = ExperimentConfig(
        r=r,
        initial_state=s0,
        controls=controls,
        step=step,
        seed=int(raw.get("seed", 0)),
        bend_times=_floats(bend_times, "bend.times", 5) if bend_times is not None else None,
        bend_alphas=_floats(bend["alphas"], "bend.alphas", 5) if "alphas" in bend else None,
        plane_k=_floats(raw["plane_k"], "plane_k", 5) if raw.get("plane_k") is not None else None,
        duration=_positive(raw["duration"], "duration") if raw.get("duration") is not None else None,
        T=_positive(raw["T"], "T") if raw.get("T") is not None else None,
        T_bar=_positive(raw["T_bar"], "T_bar") if raw.get("T_bar") is not None else None,
        trials=int(raw.get("trials", 100)),
        tol=_positive(raw.get("tol", 1e-8), "tol"),
        max_iter=int(raw.get("max_iter", 20)),
    )
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)
