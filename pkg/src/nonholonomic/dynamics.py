"""Equations of motion in the independent velocities.

Two formulations are assembled independently:

* ``accel_newtonian`` projects the unconstrained Newton equations of the
  embedded point masses onto the admissible velocity directions, through the
  coefficient bundle ``(C, D, E, G)``;
* ``accel_lagrangian`` works from the restricted kinetic energy ``T*`` and
  the correction coefficients ``B``.

``reduce_special`` adds the Voronec and Čaplygin reductions for constraint
sets with extra structure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import diff
from .core import EmbeddingModel, KinematicState, SystemSpec, SystemTraits
from .diff import DUAL, DerivativeBackend, primal
from .errors import ConfigurationError, FallbackWarning, FormulationError, NotApplicableError

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class MetricCoefficients:
    """Kinetic-energy data of an embedding at ``(q, t)``.

    ``xi[i, j, k] = Σ μ X_{,ij}·X_{,k}``, ``eta[i, j] = Σ μ X_{,it}·X_{,j}``,
    ``zeta[i] = Σ μ X_{,tt}·X_{,i}``; ``b`` and ``c`` are the linear and
    constant parts of ``T = ½ q̇ᵀ g q̇ + b·q̇ + c``.
    """

    g: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    b: np.ndarray
    c: float

    @property
    def cartesian(self) -> bool:
        off = self.g - np.diag(np.diag(self.g))
        return not (np.any(off) or np.any(self.xi) or np.any(self.eta) or np.any(self.zeta))


def metric_coefficients(emb: EmbeddingModel, q, t: float) -> MetricCoefficients:
    cache = emb.__dict__.get("_metric_cache") if emb.affine else None
    if cache is not None:
        return cache
    p = diff.jet_partials(emb.position, [np.asarray(q, dtype=float), float(t)], ["q", "t"], order=2)
    qs, ts = p.blocks["q"], p.blocks["t"]
    jac = p.grad[:, qs]
    xt = p.grad[:, ts]
    xqq = p.hess[:, qs, qs]
    xqt = p.hess[:, qs, ts]
    xtt = p.hess[:, ts, ts]
    mu = emb.mass_vector
    mj = mu[:, None] * jac
    out = MetricCoefficients(
        g=jac.T @ mj,
        xi=np.einsum("aij,ak->ijk", xqq, mj),
        eta=xqt.T @ mj,
        zeta=mj.T @ xtt,
        b=mj.T @ xt,
        c=0.5 * float(np.sum(mu * xt * xt)),
    )
    if emb.affine:
        object.__setattr__(emb, "_metric_cache", out)
    return out


def restricted_kinetic(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL, order: int = 2):
    """Value and derivatives of ``T*(q, v, t)`` at ``s`` as a :class:`diff.Partials`."""
    return backend.partials(spec.restricted_kinetic, [s.q, s.v, s.t], ["q", "v", "t"], order)


def _projector(av: np.ndarray, m: int) -> np.ndarray:
    """Columns span the admissible velocities: ``q̇ = Λ v`` to first order."""
    return np.vstack([np.eye(m), av])


def spd_solve(mat: np.ndarray, rhs: np.ndarray, what: str = "C") -> np.ndarray:
    """Cholesky solve; a pivot below ``PIVOT_TOL·‖mat‖`` is a formulation error."""
    if not np.all(np.isfinite(mat)) or not np.all(np.isfinite(rhs)):
        raise FormulationError(f"non-finite entries in {what}")
    sym = 0.5 * (mat + mat.T)
    norm = max(float(np.linalg.norm(sym, np.inf)), np.finfo(float).tiny)
    if np.max(np.abs(mat - sym)) > 1e-9 * norm:
        raise FormulationError(f"{what} is not symmetric")
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise FormulationError(f"{what} is not positive definite") from exc
    pivots = np.diag(chol) ** 2
    if np.min(pivots) < PIVOT_TOL * norm:
        raise FormulationError(f"{what} is numerically singular (pivot {np.min(pivots):.3e})")
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


@dataclass(frozen=True)
class CoefficientBundle:
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    G: np.ndarray
    projector: np.ndarray
    cartesian: bool = False


def _constraint_first_order(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend):
    p = spec.constraints.partials(s, backend, order=1)
    return p.value.astype(float), p.d("v"), p.d("q"), np.asarray(p.d("t"), dtype=float).reshape(-1)


def _general_bundle(mc: MetricCoefficients, alpha, av, aq, at, m: int) -> CoefficientBundle:
    lam = _projector(av, m)
    g, xi, eta, zeta = mc.g, mc.xi, mc.eta, mc.zeta
    C = lam.T @ g @ lam
    D = np.einsum("ji,rsj->irs", lam, xi[:m, :m, :])
    inner_e = (
        2.0 * np.einsum("rnj,n->rj", xi[:m, m:, :], alpha)
        + (g[:, m:] @ aq[:, :m]).T
        + 2.0 * eta[:m, :]
    )
    E = lam.T @ inner_e.T
    inner_g = (
        np.einsum("nlj,n,l->j", xi[m:, m:, :], alpha, alpha)
        + g[:, m:] @ (aq[:, m:] @ alpha + at)
        + 2.0 * eta[m:, :].T @ alpha
        + zeta
    )
    G = lam.T @ inner_g
    return CoefficientBundle(C, D, E, G, lam, False)


def _cartesian_bundle(mc: MetricCoefficients, alpha, av, aq, at, m: int) -> CoefficientBundle:
    # diagonal metric with vanishing ξ, η, ζ: only products of constraint derivatives survive
    gd = np.diag(mc.g)
    g_ind, g_dep = gd[:m], gd[m:]
    weighted = g_dep[:, None] * av
    C = np.diag(g_ind) + av.T @ weighted
    D = np.zeros((m, m, m))
    E = weighted.T @ aq[:, :m]
    G = weighted.T @ (aq[:, m:] @ alpha + at)
    return CoefficientBundle(C, D, E, G, _projector(av, m), True)


def coefficient_assembly(
    spec: SystemSpec,
    s: KinematicState,
    backend: DerivativeBackend = DUAL,
    fast_path: bool | None = None,
) -> CoefficientBundle:
    """``C, D, E, G`` at ``s``. ``fast_path=None`` picks the Cartesian shortcut when it applies."""
    if spec.embedding is None:
        raise ConfigurationError("coefficient assembly needs an embedding model")
    spec.check_state(s)
    mc = metric_coefficients(spec.embedding, s.q, s.t)
    alpha, av, aq, at = _constraint_first_order(spec, s, backend)
    use_fast = mc.cartesian if fast_path is None else fast_path
    if use_fast:
        if not mc.cartesian:
            raise NotApplicableError("Cartesian shortcut needs a diagonal metric with ξ = η = ζ = 0")
        return _cartesian_bundle(mc, alpha, av, aq, at, spec.m)
    return _general_bundle(mc, alpha, av, aq, at, spec.m)


def accel_newtonian(
    spec: SystemSpec,
    s: KinematicState,
    forces: np.ndarray | None = None,
    backend: DerivativeBackend = DUAL,
    fast_path: bool | None = None,
) -> np.ndarray:
    cb = coefficient_assembly(spec, s, backend, fast_path)
    if forces is None:
        forces = spec.generalized_forces(s, backend)
    v = s.v
    rhs = cb.projector.T @ forces - np.einsum("irs,r,s->i", cb.D, v, v) - cb.E @ v - cb.G
    return spd_solve(cb.C, rhs, "C")


# ---------------------------------------------------------------------------
# B coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BSplit:
    """``B[i, ν] = B0[i, ν] + Σ_r B1[i, ν, r] a_r``."""

    B0: np.ndarray
    B1: np.ndarray

    def assemble(self, a) -> np.ndarray:
        return self.B0 + np.einsum("inr,r->in", self.B1, np.asarray(a, dtype=float))


def b_split(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL) -> BSplit:
    """Split B by expanding d/dt(∂α/∂vᵢ) through the Hessian of α."""
    m = spec.m
    p = spec.constraints.partials(s, backend, order=2)
    alpha = p.value.astype(float)
    qdot = np.concatenate([s.v, alpha])
    av, aq = p.d("v"), p.d("q")
    h_vq, h_vv, h_vt = p.dd("v", "q"), p.dd("v", "v"), p.dd("v", "t")
    # index order below: [ν, i, ...]
    ddt = np.einsum("nij,j->ni", h_vq, qdot) + h_vt
    b0 = ddt - aq[:, :m] - np.einsum("mi,nm->ni", av, aq[:, m:])
    return BSplit(b0.T.copy(), np.transpose(h_vv, (1, 0, 2)).copy())


def b_total_derivative(spec: SystemSpec, s: KinematicState, a, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """B at accelerations ``a`` from the total-derivative form (second, independent path)."""
    m, k = spec.m, spec.k
    alpha_fn = spec.constraints.alpha

    def dalpha_dv(q, v, t):
        inner = diff.jet_partials(alpha_fn, [q, v, t], ["q", "v", "t"], order=1)
        return list(inner.d("v").reshape(-1))

    if backend.mode == "dual":
        ddt = np.array([primal(x) for x in diff.total_derivative(dalpha_dv, s, np.asarray(a, float), alpha_fn)])
    else:
        def fd_dalpha(q, v, t):
            inner = diff.fd_partials(alpha_fn, [q, v, t], ["q", "v", "t"], 1, backend.fd_step)
            return list(inner.d("v").reshape(-1))

        ddt = np.asarray(diff.total_derivative(fd_dalpha, s, np.asarray(a, float), alpha_fn, backend), float)
    ddt = ddt.reshape(k, m)
    p = spec.constraints.partials(s, backend, order=1)
    av, aq = p.d("v"), p.d("q")
    b = ddt - aq[:, :m] - np.einsum("mi,nm->ni", av, aq[:, m:])
    return b.T.copy()


def b_coefficients(spec: SystemSpec, s: KinematicState, a, backend: DerivativeBackend = DUAL) -> tuple[BSplit, np.ndarray]:
    split = b_split(spec, s, backend)
    return split, split.assemble(a)


# ---------------------------------------------------------------------------
# Lagrangian formulation
# ---------------------------------------------------------------------------


def dependent_momenta(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """``p_ν = ∂T/∂q̇_{m+ν}`` evaluated on the constraint."""
    if spec.k == 0:
        return np.zeros(0)
    qd = spec.full_velocity(s)
    p = backend.partials(spec.energy.kinetic, [s.q, qd, s.t], ["q", "qd", "t"], order=1)
    return p.d("qd")[0, spec.m :]


def _lagrangian_system(spec, s, forces, backend, split: BSplit, tstar, av):
    """Matrix and right side of the acceleration-affine Lagrangian equations."""
    m = spec.m
    qdot = spec.full_velocity(s)
    pdep = dependent_momenta(spec, s, backend)
    mat = tstar.dd("v", "v")[0] - np.einsum("inr,n->ir", split.B1, pdep)
    dq = tstar.d("q")[0]
    rhs = (
        _projector(av, m).T @ forces
        - tstar.dd("v", "q")[0] @ qdot
        - np.asarray(tstar.dd("v", "t")[0]).reshape(-1)
        + dq[:m]
        + av.T @ dq[m:]
        + split.B0 @ pdep
    )
    return mat, rhs


def accel_lagrangian(
    spec: SystemSpec,
    s: KinematicState,
    forces: np.ndarray | None = None,
    backend: DerivativeBackend = DUAL,
) -> np.ndarray:
    spec.check_state(s)
    if forces is None:
        forces = spec.generalized_forces(s, backend)
    split = b_split(spec, s, backend)
    tstar = restricted_kinetic(spec, s, backend)
    av = spec.constraints.partials(s, backend, order=1).d("v") if spec.k else np.zeros((0, spec.m))
    mat, rhs = _lagrangian_system(spec, s, forces, backend, split, tstar, av)
    return spd_solve(mat, rhs, "effective mass matrix")


# ---------------------------------------------------------------------------
# structure-specific reductions
# ---------------------------------------------------------------------------


def _linear_coefficient_partials(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend):
    """``a_{ν,i}(q, t)`` with first derivatives, shape (k, m) and (k, m, n), (k, m)."""
    k, m, n = spec.k, spec.m, spec.n
    lc = spec.constraints.linear_coeffs
    if lc is not None:
        def flat(q, t):
            return [x for row in lc(q, t) for x in row]

        p = backend.partials(flat, [s.q, s.t], ["q", "t"], order=1)
        coeffs = p.value.astype(float).reshape(k, m)
        dq = p.d("q").reshape(k, m, n)
        dt = np.asarray(p.d("t"), dtype=float).reshape(k, m)
        return coeffs, dq, dt
    p = spec.constraints.partials(s, backend, order=2)
    return p.d("v"), p.dd("v", "q"), np.asarray(p.dd("v", "t"), dtype=float).reshape(k, m)


def voronec_b0(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """``B0[i, ν] = Σ_r β^ν_{ir} v_r + ∂a_{ν,i}/∂t`` for linear constraints."""
    m = spec.m
    a, da, dat = _linear_coefficient_partials(spec, s, backend)
    # da[ν, i, j] = ∂a_{ν,i}/∂q_j
    beta = (
        da[:, :, :m]
        - np.transpose(da[:, :, :m], (0, 2, 1))
        + np.einsum("nim,mr->nir", da[:, :, m:], a)
        - np.einsum("nrm,mi->nir", da[:, :, m:], a)
    )
    return (np.einsum("nir,r->ni", beta, s.v) + dat).T


def _voronec(spec, s, forces, backend):
    m = spec.m
    tstar = restricted_kinetic(spec, s, backend)
    a, _, _ = _linear_coefficient_partials(spec, s, backend)
    split = BSplit(voronec_b0(spec, s, backend), np.zeros((m, spec.k, m)))
    mat, rhs = _lagrangian_system(spec, s, forces, backend, split, tstar, a)
    return spd_solve(mat, rhs, "effective mass matrix")


def _independent_closure(func, q_dep):
    dep = list(q_dep)

    def wrapped(q_ind, v, t):
        return func(list(q_ind) + dep, v, t)

    return wrapped


def _chaplygin(spec, s, forces, backend):
    # nothing depends on the dependent coordinates, so jets run over (q_1..q_m, v, t) only
    m = spec.m
    qi, qdep = s.q[:m], s.q[m:]
    args, names = [qi, s.v, s.t], ["q", "v", "t"]
    tstar = backend.partials(_independent_closure(spec.restricted_kinetic, qdep), args, names, 2)
    ap = backend.partials(_independent_closure(spec.constraints.alpha, qdep), args, names, 2)
    av = ap.d("v")
    h_vq, h_vv, h_vt = ap.dd("v", "q"), ap.dd("v", "v"), ap.dd("v", "t")
    b0 = (np.einsum("nij,j->ni", h_vq, s.v) + h_vt - ap.d("q")).T
    b1 = np.transpose(h_vv, (1, 0, 2))
    pdep = dependent_momenta(spec, s, backend)
    mat = tstar.dd("v", "v")[0] - np.einsum("inr,n->ir", b1, pdep)
    rhs = (
        _projector(av, m).T @ forces
        - tstar.dd("v", "q")[0] @ s.v
        - np.asarray(tstar.dd("v", "t")[0]).reshape(-1)
        + tstar.d("q")[0]
        + b0 @ pdep
    )
    return spd_solve(mat, rhs, "effective mass matrix")


def _classical_chaplygin(spec, s, forces, backend):
    m = spec.m
    qi, qdep = s.q[:m], s.q[m:]
    tstar = backend.partials(
        _independent_closure(spec.restricted_kinetic, qdep), [qi, s.v, s.t], ["q", "v", "t"], 2
    )
    a, da, _ = _linear_coefficient_partials(spec, s, backend)
    curl = da[:, :, :m] - np.transpose(da[:, :, :m], (0, 2, 1))  # [ν, i, r]
    pdep = dependent_momenta(spec, s, backend)
    rhs = (
        _projector(a, m).T @ forces
        - tstar.dd("v", "q")[0] @ s.v
        + tstar.d("q")[0]
        + np.einsum("nir,r,n->i", curl, s.v, pdep)
    )
    return spd_solve(tstar.dd("v", "v")[0], rhs, "effective mass matrix")


REDUCERS = {
    "voronec": _voronec,
    "chaplygin": _chaplygin,
    "classical-chaplygin": _classical_chaplygin,
}


def _pointwise_chaplygin(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend) -> bool:
    st = spec.constraints.structure
    if not st.chaplygin or spec.energy.forces is not None:
        return False
    qd = spec.full_velocity(s)
    tp = backend.partials(spec.energy.kinetic, [s.q, qd, s.t], ["q", "qd", "t"], 1)
    if np.any(np.abs(tp.d("q")[0, spec.m :]) > 1e-12):
        return False
    if spec.energy.potential is not None:
        up = backend.partials(spec.energy.potential, [s.q, s.t], ["q", "t"], 2)
        if np.any(np.abs(up.dd("q", "q")[0][:, spec.m :]) > 1e-12):
            return False
    return True


def applicable_forms(spec: SystemSpec, s: KinematicState | None = None, traits: SystemTraits | None = None,
                     backend: DerivativeBackend = DUAL) -> set[str]:
    """Reducers whose hypotheses hold for ``spec``."""
    st = traits.structure if traits is not None else spec.constraints.structure
    if traits is not None:
        chap = traits.chaplygin
    elif s is not None:
        chap = _pointwise_chaplygin(spec, s, backend)
    else:
        chap = False
    forms = set()
    if st.kind == "linear":
        forms.add("voronec")
    if chap:
        forms.add("chaplygin")
        if st.kind == "linear" and st.stationary:
            forms.add("classical-chaplygin")
    return forms


def special_form(spec: SystemSpec, s: KinematicState | None = None, traits: SystemTraits | None = None,
                 backend: DerivativeBackend = DUAL) -> str:
    """Most specific applicable reducer, or ``general``."""
    forms = applicable_forms(spec, s, traits, backend)
    for name in ("classical-chaplygin", "chaplygin", "voronec"):
        if name in forms:
            return name
    return "general"


def reduce_special(
    spec: SystemSpec,
    s: KinematicState,
    forces: np.ndarray | None = None,
    form: str | None = None,
    traits: SystemTraits | None = None,
    backend: DerivativeBackend = DUAL,
) -> np.ndarray:
    """Accelerations from a structure-specific reduction.

    ``form`` forces a reducer (``voronec``, ``chaplygin``,
    ``classical-chaplygin``); when its hypotheses fail the general path is
    used and a :class:`FallbackWarning` is emitted.
    """
    spec.check_state(s)
    if forces is None:
        forces = spec.generalized_forces(s, backend)
    forms = applicable_forms(spec, s, traits, backend)
    chosen = special_form(spec, s, traits, backend) if form is None else form
    if chosen not in REDUCERS or chosen not in forms:
        warnings.warn(
            f"reducer {chosen!r} does not apply to {spec.label or 'system'}; using the general path",
            FallbackWarning,
            stacklevel=2,
        )
        return accel_lagrangian(spec, s, forces, backend)
    return REDUCERS[chosen](spec, s, forces, backend)
