"""Property checks for one catalog system, shared by the CLI ``verify`` command and the tests."""

from __future__ import annotations

import numpy as np

from . import diff, dynamics, energy, oracle, sim, systems
from .core import classify_system

PATH_TOL = 1e-8
AUDIT_TOL = 1e-10
REDUCER_TOL = 1e-10
B_TOL = 1e-10
BACKEND_TOL = 1e-6


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))


def backend_gap(spec, s) -> float:
    """Largest dual-vs-central-difference gap over first derivatives of α, T and U at ``s``."""
    worst = 0.0
    qd = spec.full_velocity(s)
    pairs = [(spec.energy.kinetic, [s.q, qd, s.t], ["q", "qd", "t"])]
    if spec.k:
        pairs.append((spec.constraints.alpha, [s.q, s.v, s.t], ["q", "v", "t"]))
    if spec.energy.potential is not None:
        pairs.append((spec.energy.potential, [s.q, s.t], ["q", "t"]))
    for func, args, names in pairs:
        exact = diff.jet_partials(func, args, names, order=1).grad
        approx = diff.fd_partials(func, args, names, order=1).grad
        worst = max(worst, float(np.max(np.abs(exact - approx) / np.maximum(1.0, np.abs(exact)))))
    return worst


def leading_minors_positive(mat: np.ndarray) -> bool:
    return all(np.linalg.det(mat[:i, :i]) > 0 for i in range(1, mat.shape[0] + 1))


def verify_system(entry_id: str, params: dict | None = None, samples: int = 20, seed: int = 0,
                  integrate: bool = True) -> list[tuple[str, bool, str]]:
    spec = systems.build(entry_id, params)
    states = systems.sample_states(entry_id, samples, seed=seed, params=params)
    traits = classify_system(spec, states[:8] if len(states) >= 8 else
                             systems.sample_states(entry_id, 8, seed=seed + 1, params=params))
    out = []

    gaps = {"path": 0.0, "oracle": 0.0, "audit": 0.0, "dependent": 0.0, "b": 0.0, "bbar": 0.0,
            "energy": 0.0, "balance": 0.0, "backend": 0.0, "reducer": 0.0}
    spd = True
    forms = dynamics.applicable_forms(spec, traits=traits)
    for s in states:
        f = spec.generalized_forces(s)
        an = dynamics.accel_newtonian(spec, s, f)
        al = dynamics.accel_lagrangian(spec, s, f)
        gaps["path"] = max(gaps["path"], _rel(an, al))
        sol = oracle.multiplier_accel(spec, s, f)
        gaps["oracle"] = max(gaps["oracle"], _rel(an, sol.a_full[: spec.m]), _rel(al, sol.a_full[: spec.m]))
        gaps["audit"] = max(gaps["audit"], oracle.reaction_power_audit(sol, spec, s))
        if spec.k:
            dep = diff.total_derivative(spec.constraints.alpha, s, sol.a_full[: spec.m], spec.constraints.alpha)
            gaps["dependent"] = max(gaps["dependent"], _rel(sol.a_full[spec.m:], [diff.primal(x) for x in dep]))
            _, b1 = dynamics.b_coefficients(spec, s, an)
            b2 = dynamics.b_total_derivative(spec, s, an)
            gaps["b"] = max(gaps["b"], _rel(b1, b2))
            gaps["bbar"] = max(gaps["bbar"], _rel(energy.bar_b(spec, s, an), energy.bar_b_total(spec, s, an)))
        cb = dynamics.coefficient_assembly(spec, s)
        try:
            np.linalg.cholesky(cb.C)
            spd = spd and leading_minors_positive(cb.C)
        except np.linalg.LinAlgError:
            spd = False
        gaps["energy"] = max(gaps["energy"], abs(energy.energy_value(spec, s)
                                                 - energy.energy_value(spec, s, expanded=True)))
        rep = energy.balance_residual(spec, s, an, traits=traits)
        gaps["balance"] = max(gaps["balance"], abs(rep.residual), abs(rep.general_residual))
        gaps["backend"] = max(gaps["backend"], backend_gap(spec, s))
        for form in forms:
            gaps["reducer"] = max(gaps["reducer"], _rel(al, dynamics.reduce_special(spec, s, f, form, traits)))

    out.append(("path equivalence", gaps["path"] <= PATH_TOL, f"{gaps['path']:.2e}"))
    out.append(("oracle equivalence", gaps["oracle"] <= PATH_TOL, f"{gaps['oracle']:.2e}"))
    out.append(("reaction power", gaps["audit"] <= AUDIT_TOL, f"{gaps['audit']:.2e}"))
    out.append(("dependent accelerations", gaps["dependent"] <= 1e-10, f"{gaps['dependent']:.2e}"))
    out.append(("positive definite C", spd, "Cholesky and leading minors"))
    out.append(("B two paths", gaps["b"] <= B_TOL, f"{gaps['b']:.2e}"))
    out.append(("B-bar two paths", gaps["bbar"] <= B_TOL, f"{gaps['bbar']:.2e}"))
    out.append(("energy two routes", gaps["energy"] <= 1e-10, f"{gaps['energy']:.2e}"))
    out.append(("balance residual", gaps["balance"] <= energy.TAU_BAL, f"{gaps['balance']:.2e}"))
    out.append(("derivative backends", gaps["backend"] <= BACKEND_TOL, f"{gaps['backend']:.2e}"))
    out.append(("reducers", gaps["reducer"] <= REDUCER_TOL,
                f"{gaps['reducer']:.2e} over {sorted(forms) or 'none'}"))

    declared = spec.constraints.structure
    match = declared.kind == "general" or traits.structure.tag == declared.tag
    out.append(("classification", match, f"declared {declared.tag}, detected {traits.structure.tag}"))

    if integrate:
        claims = energy.detect_first_integrals(spec, traits)
        traj = sim.integrate(spec, systems.default_state(entry_id, params), 10.0, 1e-10,
                             traits=traits, integrals=claims)
        drift = sim.drift_report(traj)
        worst_res = float(np.max(np.abs(traj.residual)))
        out.append(("default run completes", traj.completed, traj.aborted or f"{traj.stats['steps']} steps"))
        out.append(("balance along run", worst_res <= energy.TAU_BAL, f"{worst_res:.2e}"))
        for name, d in drift.items():
            out.append((f"conservation of {name}", d <= 1e-6, f"drift {d:.2e}"))
    return out
