"""``rollgeo <command> --config <path> --out <dir> [--seed N]``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure (degenerate
plane, singular endpoint map, no convergence).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rollgeo.bending import (
    BendSpec,
    ShortcutFailure,
    bend,
    break_limits,
    jacobian_report,
    shortcut_search,
)
from rollgeo.dynamics import IntegrationError, anchor_at_base, roll
from rollgeo.formats import (
    ConfigError,
    ExperimentConfig,
    dumps_report,
    load_config,
    write_atomic,
    write_trajectory,
)
from rollgeo.planes import (
    DegeneratePathError,
    DegeneratePlaneError,
    PlaneSpec,
    trace_plane_curve,
    verify_geodesic,
)
from rollgeo.state import StateError, equivalent

log = logging.getLogger("rollgeo")

COMMANDS = ("roll", "bend", "jacobian", "trace", "verify", "shortcut")


class NumericalFailure(Exception):
    pass


def _require(value, name, command):
    if value is None:
        raise ConfigError(f"`{command}` needs `{name}` in the config")
    return value


def _rolled(cfg: ExperimentConfig, command: str):
    controls = _require(cfg.controls, "controls", command)
    return roll(cfg.initial_state, cfg.r, controls, cfg.step)


def _traced(cfg: ExperimentConfig, command: str):
    k = _require(cfg.plane_k, "plane_k", command)
    duration = _require(cfg.duration, "duration", command)
    try:
        plane = PlaneSpec.from_coefficients(k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return trace_plane_curve(cfg.initial_state, cfg.r, plane, duration, cfg.step)


def cmd_roll(cfg, out: Path):
    write_trajectory(out / "trajectory.csv", _rolled(cfg, "roll"))


def cmd_bend(cfg, out: Path):
    p = _rolled(cfg, "bend")
    spec = BendSpec(
        _require(cfg.bend_times, "bend.times", "bend"),
        _require(cfg.bend_alphas, "bend.alphas", "bend"),
    )
    bent = bend(p, spec)
    limits = break_limits(p, spec)
    checks = []
    for t, (left, right) in zip(spec.times, limits):
        checks.append(
            {
                "t": t,
                "equivalent": equivalent(left, right, 1e-12),
                "contact_jump": float(
                    max(abs(left.u - right.u).max(), abs(left.v - right.v).max())
                ),
            }
        )
    write_trajectory(out / "bent.csv", bent)
    report = {
        "times": list(spec.times),
        "alphas": list(spec.alphas),
        "arc_length": bent.duration,
        "original_arc_length": p.duration,
        "breaks": checks,
        "all_equivalent": all(c["equivalent"] for c in checks),
    }
    write_atomic(out / "breaks.json", dumps_report(report))
    if not report["all_equivalent"]:
        raise NumericalFailure("bent path is discontinuous in state space at a break")


def cmd_jacobian(cfg, out: Path):
    p = _rolled(cfg, "jacobian")
    times = _require(cfg.bend_times, "times", "jacobian")
    q = anchor_at_base(p, cfg.T)
    write_atomic(out / "jacobian.json", dumps_report(jacobian_report(q, times, cfg.T)))


def cmd_trace(cfg, out: Path):
    write_trajectory(out / "trace.csv", _traced(cfg, "trace"))


def cmd_verify(cfg, out: Path):
    p = _rolled(cfg, "verify") if cfg.controls is not None else _traced(cfg, "verify")
    report = verify_geodesic(p, cfg.trials, cfg.seed, cfg.T)
    write_atomic(out / "report.json", dumps_report(report.as_dict()))
    print(report.verdict)


def cmd_shortcut(cfg, out: Path):
    p = _rolled(cfg, "shortcut")
    T = cfg.T if cfg.T is not None else p.duration
    T_bar = _require(cfg.T_bar, "T_bar", "shortcut")
    q = anchor_at_base(p, T)
    try:
        cert = shortcut_search(q, T_bar, cfg.tol, cfg.max_iter, T=T, times=cfg.bend_times, seed=cfg.seed)
    except ShortcutFailure as exc:
        diag = {"status": "failure", "reason": exc.reason, "message": str(exc),
                "sigma_ratio": exc.sigma_ratio}
        write_atomic(out / "shortcut.json", dumps_report(diag))
        raise NumericalFailure(str(exc)) from exc
    write_atomic(out / "shortcut.json", dumps_report({"status": "success", **cert.as_dict()}))


HANDLERS = {
    "roll": cmd_roll,
    "bend": cmd_bend,
    "jacobian": cmd_jacobian,
    "trace": cmd_trace,
    "verify": cmd_verify,
    "shortcut": cmd_shortcut,
}


def run(command: str, config_path, out_dir, seed=None) -> int:
    """Run one command; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = int(seed)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[command](cfg, out)
    except (DegeneratePlaneError, DegeneratePathError, IntegrationError, NumericalFailure) as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except (ConfigError, StateError, ValueError, OSError) as exc:
        log.error("invalid input: %s", exc)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rollgeo", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
