"""Energy-rate identity for the constant-speed point under gravity, both sign conventions."""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

from nonholonomic import diff, sim, systems


@dataclass(frozen=True)
class BalanceConfig:
    t_end: float = 10.0
    tol: float = 1e-10
    branch: int = -1
    every: int = 20


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t-end", type=float, default=BalanceConfig.t_end)
    parser.add_argument("--every", type=int, default=BalanceConfig.every)
    args = parser.parse_args()
    cfg = BalanceConfig(args.t_end, every=args.every)

    params = {"potential": "gravity", "branch": cfg.branch}
    p = systems.resolve_params("constant-speed-point", params)
    spec = systems.build("constant-speed-point", params)
    traj = sim.integrate(spec, systems.default_state("constant-speed-point", params), cfg.t_end, cfg.tol)
    print("t,rate_side,transcribed_side,corrected_side")
    for i, (s, a) in enumerate(zip(traj.states(), traj.a)):
        if i % cfg.every:
            continue
        du = diff.jet_partials(spec.energy.potential, [s.q, s.t], ["q", "t"], order=1).d("q")[0]
        v2 = float(s.v @ s.v)
        r = p["C"] ** 2 - v2
        rate = p["M"] * p["C"] ** 2 / r * float(s.v @ a)
        planar = du[0] * s.v[0] + du[1] * s.v[1]
        vertical = cfg.branch * v2 / math.sqrt(r) * du[2]
        print(f"{s.t:.6f},{rate:.12g},{-planar + vertical:.12g},{planar - vertical:.12g}")
    if traj.aborted:
        print(f"# aborted: {traj.aborted}")


if __name__ == "__main__":
    main()
