"""Reference dynamics on all n coordinates with explicit constraint multipliers.

Independent of the reduced formulations: the unconstrained Newton equations
of the embedded masses are augmented with reactions ``Aᵀλ`` of the
constraints ``Φ_ν = q̇_{m+ν} − α_ν = 0`` and solved as one saddle system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import diff
from .core import KinematicState, SystemSpec
from .diff import DUAL, DerivativeBackend
from .errors import ConfigurationError, FormulationError


@dataclass(frozen=True)
class MultiplierSolution:
    a_full: np.ndarray
    lam: np.ndarray
    reaction: np.ndarray
    constraint_jacobian: np.ndarray  # A[ν, j] = ∂Φ_ν/∂q̇_j


def _bias_acceleration(spec: SystemSpec, q: np.ndarray, qd: np.ndarray, t: float):
    """Jacobian of the position map and the velocity-dependent part of Ẍ."""
    p = diff.jet_partials(spec.embedding.position, [q, t], ["q", "t"], order=2)
    qs, ts = p.blocks["q"], p.blocks["t"]
    jac = p.grad[:, qs]
    bias = (
        np.einsum("ajl,j,l->a", p.hess[:, qs, qs], qd, qd)
        + 2.0 * p.hess[:, qs, ts] @ qd
        + p.hess[:, ts, ts]
    )
    return jac, bias


def multiplier_accel(
    spec: SystemSpec,
    s: KinematicState,
    forces: np.ndarray | None = None,
    backend: DerivativeBackend = DUAL,
) -> MultiplierSolution:
    if spec.embedding is None:
        raise ConfigurationError("the multiplier oracle needs an embedding model")
    spec.check_state(s)
    n, m, k = spec.n, spec.m, spec.k
    if forces is None:
        forces = spec.generalized_forces(s, backend)
    qd = spec.full_velocity(s)
    jac, bias = _bias_acceleration(spec, s.q, qd, s.t)
    mu = spec.embedding.mass_vector
    mass = jac.T @ (mu[:, None] * jac)
    h = jac.T @ (mu * bias)

    cp = spec.constraints.partials(s, backend, order=1)
    amat = np.hstack([-cp.d("v"), np.eye(k)]) if k else np.zeros((0, n))
    # d/dt Φ = A q̈ − (∂α/∂q q̇ + ∂α/∂t) = 0
    kappa = cp.d("q") @ qd + np.asarray(cp.d("t"), float).reshape(-1) if k else np.zeros(0)

    saddle = np.zeros((n + k, n + k))
    saddle[:n, :n] = mass
    saddle[:n, n:] = -amat.T
    saddle[n:, :n] = amat
    rhs = np.concatenate([forces - h, kappa])
    try:
        lu, piv = scipy.linalg.lu_factor(saddle, check_finite=True)
    except ValueError as exc:
        raise FormulationError(f"oracle saddle system is not finite: {exc}") from exc
    diag = np.abs(np.diag(lu))
    if np.min(diag) < 1e-13 * max(1.0, np.max(np.abs(saddle))):
        raise FormulationError("oracle saddle system is singular (state near constraint degeneracy)")
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    a_full, lam = sol[:n], sol[n:]
    return MultiplierSolution(a_full, lam, amat.T @ lam, amat)


def admissible_directions(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """Unit columns ``(e_r, ∂α/∂v_r)`` spanning the possible displacements, shape (n, m)."""
    av = spec.constraints.partials(s, backend, order=1).d("v") if spec.k else np.zeros((0, spec.m))
    lam = np.vstack([np.eye(spec.m), av])
    return lam / np.linalg.norm(lam, axis=0)


def reaction_power_audit(
    sol: MultiplierSolution,
    spec: SystemSpec,
    s: KinematicState,
    reaction: np.ndarray | None = None,
) -> float:
    """Largest |reaction · d| over unit admissible directions d, relative to ‖reaction‖ when that exceeds 1.

    ``reaction`` overrides ``sol.reaction``; tests use it to inject a
    perturbed reaction as a negative control.
    """
    r = sol.reaction if reaction is None else np.asarray(reaction, float)
    dirs = admissible_directions(spec, s)
    worst = float(np.max(np.abs(r @ dirs))) if dirs.size else 0.0
    return worst / max(1.0, float(np.linalg.norm(r)))


def perturbed_reaction(sol: MultiplierSolution, delta: np.ndarray) -> np.ndarray:
    """Reaction with a non-ideal component ``delta`` added on the full coordinates."""
    return sol.reaction + np.asarray(delta, float)
