"""Command-line front end: catalog browsing, simulation runs, per-system verification.

Exit codes: 0 success, 2 configuration error, 3 singularity or guard abort,
4 invariant violation (oracle disagreement or failed verification).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import energy, oracle, sim, systems
from .core import KinematicState, classify_system
from .errors import ConfigurationError, InadmissibleStateError, NonholonomicError

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_INVARIANT = 0, 2, 3, 4
ORACLE_TOL = 1e-8
PATH_CHOICES = ("newtonian", "lagrangian", "reduced", "oracle-check")


@dataclass
class RunConfig:
    system: str
    params: dict = field(default_factory=dict)
    q0: list | None = None
    v0: list | None = None
    t0: float = 0.0
    t_end: float = 10.0
    tol: float = 1e-10
    path: str = "newtonian"
    out: str = "run"
    verbosity: int = 1

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a mapping")
        known = {"system", "params", "initial", "t_end", "tol", "path", "out", "verbosity"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "system" not in data:
            raise ConfigurationError("config needs a 'system' id")
        init = data.get("initial") or {}
        if not isinstance(init, dict) or set(init) - {"q", "v", "t"}:
            raise ConfigurationError("'initial' must be a mapping with keys q, v, t")
        cfg = cls(
            system=str(data["system"]),
            params=dict(data.get("params") or {}),
            q0=init.get("q"),
            v0=init.get("v"),
            t0=float(init.get("t", 0.0)),
            t_end=float(data.get("t_end", 10.0)),
            tol=float(data.get("tol", 1e-10)),
            path=str(data.get("path", "newtonian")),
            out=str(data.get("out", "run")),
            verbosity=int(data.get("verbosity", 1)),
        )
        cfg.check()
        return cfg

    def check(self) -> None:
        systems.get_entry(self.system)
        systems.resolve_params(self.system, self.params)
        if self.path not in PATH_CHOICES:
            raise ConfigurationError(f"path {self.path!r} must be one of {', '.join(PATH_CHOICES)}")
        if not 1e-13 <= self.tol <= 1e-3:
            raise ConfigurationError(f"tol={self.tol} outside [1e-13, 1e-3]")
        if not self.t_end > self.t0:
            raise ConfigurationError("t_end must exceed the initial time")


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    return RunConfig.from_mapping(data)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _initial_state(cfg: RunConfig) -> KinematicState:
    base = systems.default_state(cfg.system, cfg.params)
    q = base.q if cfg.q0 is None else cfg.q0
    v = base.v if cfg.v0 is None else cfg.v0
    try:
        return KinematicState(q, v, cfg.t0)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad initial state: {exc}") from exc


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run one simulation and write its trajectory and report; returns (exit code, report)."""
    spec = systems.build(cfg.system, cfg.params)
    s0 = _initial_state(cfg)
    try:
        spec.check_state(s0)
        spec.dependent_velocities(s0)
    except (InadmissibleStateError, NonholonomicError) as exc:
        raise ConfigurationError(f"initial state is inadmissible: {exc}") from exc
    samples = systems.sample_states(cfg.system, 8, seed=12345, params=cfg.params)
    traits = classify_system(spec, samples)
    claims = energy.detect_first_integrals(spec, traits)
    dyn_path = "newtonian" if cfg.path == "oracle-check" else cfg.path
    traj = sim.integrate(spec, s0, cfg.t_end, cfg.tol, path=dyn_path, traits=traits, integrals=claims)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    names = list(traj.integrals)
    header = (
        ["t"]
        + [f"q{i + 1}" for i in range(spec.n)]
        + [f"v{i + 1}" for i in range(spec.m)]
        + [f"a{i + 1}" for i in range(spec.m)]
        + ["E", "residual"]
        + [f"I{i + 1}" for i in range(len(names))]
    )
    with open(out / "trajectory.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            row = [traj.t[i], *traj.q[i], *traj.v[i], *traj.a[i], traj.energy[i], traj.residual[i]]
            row += [traj.integrals[name][i] for name in names]
            fh.write(",".join(_fmt(x) for x in row) + "\n")
        if traj.aborted:
            fh.write(f"#ABORT {traj.aborted}\n")

    drift = sim.drift_report(traj) if len(traj) else {}
    report = {
        "system": cfg.system,
        "label": spec.label,
        "params": systems.resolve_params(cfg.system, cfg.params),
        "structure": traits.structure.tag,
        "traits": {k: v for k, v in asdict(traits).items() if k != "structure"},
        "balance_form": traj.applied_form,
        "max_balance_residual": float(np.max(np.abs(traj.residual))) if traj.residual else 0.0,
        "claims": [
            {"column": f"I{i + 1}", "name": c.name, "kind": c.kind, "reason": c.reason,
             "drift": drift.get(c.name)}
            for i, c in enumerate(claims)
        ],
        "integrator": traj.stats,
        "t_end": cfg.t_end,
        "tol": cfg.tol,
        "completed": traj.completed,
        "abort_reason": traj.aborted,
    }
    reference = [i for i in systems.printed_integrals(cfg.system, cfg.params) if i.name == "printed"]
    if reference and len(traj):
        report["reference_integrals"] = {
            i.name: {"note": i.note, "drift": sim.drift_report(traj, [i])[i.name]} for i in reference
        }
    code = EXIT_OK if traj.completed else EXIT_ABORT
    if cfg.path == "oracle-check":
        worst, audit = 0.0, 0.0
        for s, a in zip(traj.states(), traj.a):
            sol = oracle.multiplier_accel(spec, s)
            worst = max(worst, float(np.linalg.norm(sol.a_full[: spec.m] - a) / max(1.0, np.linalg.norm(a))))
            audit = max(audit, oracle.reaction_power_audit(sol, spec, s))
        report["oracle"] = {"max_relative_disagreement": worst, "max_reaction_power": audit,
                            "tolerance": ORACLE_TOL}
        if code == EXIT_OK and (worst > ORACLE_TOL or audit > 1e-10):
            code = EXIT_INVARIANT
    report["exit_code"] = code
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return code, report


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _execute_safely(cfg: RunConfig) -> tuple[int, str]:
    try:
        code, rep = execute(cfg)
    except ConfigurationError as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    summary = f"{cfg.system}: {rep['structure']}, steps={rep['integrator']['steps']}"
    for c in rep["claims"]:
        summary += f", {c['name']} drift={c['drift']:.3e}" if c["drift"] is not None else ""
    if rep["abort_reason"]:
        summary += f", aborted: {rep['abort_reason']}"
    if "oracle" in rep:
        summary += f", oracle gap={rep['oracle']['max_relative_disagreement']:.3e}"
    return code, summary + f" -> {cfg.out}"


def _parse_params(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse value of {key}: {exc}") from exc
    return out


def _cmd_simulate(args) -> int:
    if args.config:
        configs = [load_config(p) for p in args.config]
    else:
        if not args.system:
            raise ConfigurationError("simulate needs --config or --system")
        data = {"system": args.system, "params": _parse_params(args.param), "t_end": args.t_end,
                "tol": args.tol, "path": args.path, "out": args.out}
        configs = [RunConfig.from_mapping(data)]
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_execute_safely, configs))
    else:
        results = [_execute_safely(c) for c in configs]
    for code, summary in results:
        print(summary, file=sys.stderr if code == EXIT_CONFIG else sys.stdout)
    return max(code for code, _ in results)


def _cmd_catalog(args) -> int:
    if args.action == "list":
        for entry in systems.CATALOG.values():
            print(f"{entry.id:26s} {entry.title}")
        return EXIT_OK
    if not args.id:
        raise ConfigurationError("catalog describe needs a system id")
    entry = systems.get_entry(args.id)
    spec = systems.build(args.id)
    s0 = systems.default_state(args.id)
    traits = classify_system(spec, systems.sample_states(args.id, 8, seed=12345))
    info = {
        "id": entry.id,
        "title": entry.title,
        "n": spec.n,
        "m": spec.m,
        "k": spec.k,
        "defaults": entry.defaults,
        "potentials": list(entry.potentials),
        "structure": traits.structure.tag,
        "default_state": {"q": s0.q.tolist(), "v": s0.v.tolist()},
        "integrals": [{"name": i.name, "kind": i.kind, "formula": i.note}
                      for i in systems.expected_integrals(args.id)],
    }
    print(yaml.safe_dump(info, sort_keys=False, allow_unicode=True), end="")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import verify_system

    results = verify_system(args.system, _parse_params(args.param), samples=args.samples)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonholonomic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="integrate a catalog system")
    p_sim.add_argument("--config", nargs="+", help="YAML run configuration(s)")
    p_sim.add_argument("--system", help="catalog id")
    p_sim.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p_sim.add_argument("--t-end", type=float, default=10.0)
    p_sim.add_argument("--tol", type=float, default=1e-10)
    p_sim.add_argument("--path", choices=PATH_CHOICES, default="newtonian")
    p_sim.add_argument("--out", default="run")
    p_sim.add_argument("--jobs", type=int, default=1, help="worker processes for several configs")
    p_sim.set_defaults(func=_cmd_simulate)

    p_cat = sub.add_parser("catalog", help="list or describe catalog systems")
    p_cat.add_argument("action", choices=("list", "describe"))
    p_cat.add_argument("id", nargs="?")
    p_cat.set_defaults(func=_cmd_catalog)

    p_ver = sub.add_parser("verify", help="run the property checks for one system")
    p_ver.add_argument("--system", required=True)
    p_ver.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p_ver.add_argument("--samples", type=int, default=20)
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
