"""Drift of the claimed first integrals as the integrator tolerance shrinks."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field

from nonholonomic import energy, sim, systems
from nonholonomic.core import classify_system


@dataclass(frozen=True)
class DriftConfig:
    systems: tuple = ("nonholonomic-pendulum", "midpoint-knife", "orthogonal-to-join", "affine-particle")
    tols: tuple = field(default=(1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12))
    t_end: float = 10.0


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--system", action="append", help="catalog id (repeatable)")
    parser.add_argument("--t-end", type=float, default=DriftConfig.t_end)
    args = parser.parse_args()
    cfg = DriftConfig(tuple(args.system) if args.system else DriftConfig.systems, t_end=args.t_end)

    print("system,integral,tol,drift,steps")
    for entry_id in cfg.systems:
        spec = systems.build(entry_id)
        traits = classify_system(spec, systems.sample_states(entry_id, 8, seed=5))
        claims = energy.detect_first_integrals(spec, traits)
        if not claims:
            print(f"{entry_id},-,-,no claim,-")
            continue
        for tol in cfg.tols:
            traj = sim.integrate(spec, systems.default_state(entry_id), cfg.t_end, tol, traits=traits,
                                 integrals=claims, diagnostics=False)
            for name, d in sim.drift_report(traj).items():
                print(f"{entry_id},{name},{tol:.0e},{d:.3e},{traj.stats['steps']}")


if __name__ == "__main__":
    main()
