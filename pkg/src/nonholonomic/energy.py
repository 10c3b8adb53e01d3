"""Generalized energy, its balance law and first-integral detection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diff
from .core import KinematicState, SystemSpec, SystemTraits, classify_system
from .diff import DUAL, DerivativeBackend, primal
from .dynamics import accel_lagrangian, accel_newtonian, dependent_momenta, metric_coefficients
from .errors import ConfigurationError, NotApplicableError

TAU_BAL = 1e-6


def bar_alpha(spec: SystemSpec, s: KinematicState, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """ᾱ_ν = Σᵢ vᵢ ∂α_ν/∂vᵢ (equals α exactly when α is degree-1 homogeneous in v)."""
    if spec.k == 0:
        return np.zeros(0)
    return spec.constraints.partials(s, backend, order=1).d("v") @ s.v


def bar_b(spec: SystemSpec, s: KinematicState, a, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """B̄_ν assembled from first and second partial derivatives of α."""
    m = spec.m
    if spec.k == 0:
        return np.zeros(0)
    a = np.asarray(a, float)
    p = spec.constraints.partials(s, backend, order=2)
    alpha = p.value.astype(float)
    av, aq = p.d("v"), p.d("q")
    abar = av @ s.v
    dbar_q = np.einsum("i,nij->nj", s.v, p.dd("v", "q"))
    dbar_v = np.einsum("i,nir->nr", s.v, p.dd("v", "v")) + av
    dbar_t = np.einsum("i,ni->n", s.v, np.asarray(p.dd("v", "t")).reshape(spec.k, m))
    return (
        (dbar_q[:, :m] - aq[:, :m]) @ s.v
        + dbar_q[:, m:] @ alpha
        - aq[:, m:] @ abar
        + (dbar_v - av) @ a
        + dbar_t
    )


def _alpha_gap(spec: SystemSpec):
    """(q, v, t) ↦ ᾱ − α, with ᾱ taken as the derivative of α along v in velocity space."""
    alpha_fn = spec.constraints.alpha

    def gap(q, v, t):
        base, along = diff.directional(alpha_fn, [q, v, t], [[0.0] * len(q), v, 0.0])
        return [d - b for b, d in zip(base, along)]

    return gap


def bar_b_total(spec: SystemSpec, s: KinematicState, a, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """B̄ through d/dt(ᾱ − α) − Σ_μ ∂α_ν/∂q_{m+μ}(ᾱ_μ − α_μ) + ∂α_ν/∂t."""
    if spec.k == 0:
        return np.zeros(0)
    m = spec.m
    ddt_gap = np.array([primal(x) for x in diff.total_derivative(
        _alpha_gap(spec), s, np.asarray(a, float), spec.constraints.alpha)])
    p = spec.constraints.partials(s, backend, order=1)
    gap = p.d("v") @ s.v - p.value.astype(float)
    return ddt_gap - p.d("q")[:, m:] @ gap + np.asarray(p.d("t"), float).reshape(-1)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


def _energy_fn(spec: SystemSpec, with_potential: bool = True) -> Callable:
    """(q, v, t) ↦ Σ vᵢ ∂L*/∂vᵢ − L*, usable with any number type."""
    lag = spec.lagrangian if with_potential else spec.restricted_kinetic

    def energy(q, v, t):
        inner = diff.jet_partials(lag, [q, v, t], ["q", "v", "t"], order=1)
        dv = inner.d("v")[0]
        total = -inner.value[0]
        for vi, di in zip(v, dv):
            total = total + vi * di
        return total

    return energy


def energy_value(spec: SystemSpec, s: KinematicState, expanded: bool = False) -> float:
    """Generalized energy at ``s``.

    ``expanded=True`` evaluates the closed form for a kinetic energy given by
    an embedding, ``½vᵀg_II v + ᾱᵀg_DI v + ᾱᵀg_DD α − ½αᵀg_DD α + b_D·(ᾱ−α) − c − U``,
    and serves as an independent check of the generic route. Without a
    potential the ``−U`` term is absent.
    """
    spec.check_state(s)
    if not expanded:
        return float(primal(_energy_fn(spec)(list(s.q), list(s.v), s.t)))
    if spec.embedding is None:
        raise NotApplicableError("expanded energy needs an embedding model")
    m = spec.m
    mc = metric_coefficients(spec.embedding, s.q, s.t)
    g = mc.g
    alpha = spec.dependent_velocities(s)
    abar = bar_alpha(spec, s)
    v = s.v
    e = (
        0.5 * v @ g[:m, :m] @ v
        + abar @ g[m:, :m] @ v
        + abar @ g[m:, m:] @ alpha
        - 0.5 * alpha @ g[m:, m:] @ alpha
        + mc.b[m:] @ (abar - alpha)
        - mc.c
    )
    if spec.energy.potential is not None:
        e -= float(primal(spec.energy.potential(list(s.q), s.t)))
    return float(e)


def _accel(spec: SystemSpec, s: KinematicState) -> np.ndarray:
    if spec.embedding is not None:
        return accel_newtonian(spec, s)
    return accel_lagrangian(spec, s)


@dataclass(frozen=True)
class BalanceReport:
    """Terms of the energy balance at one state.

    ``residual`` is the gap of the applied form; ``general_residual`` is the
    gap of the general form, always evaluated. ``de_dt`` is the total
    derivative of E along the motion and ``de_dt_balance`` the value the
    general balance predicts; they form a double entry.
    """

    energy: float
    de_dt: float
    de_dt_balance: float
    dependent_term: float  # Σ_ν (ᾱ_ν − α_ν) ∂L*/∂q_{m+ν}
    bbar_term: float  # Σ_ν B̄_ν ∂T/∂q̇_{m+ν}
    explicit_time_term: float  # −∂L*/∂t
    power_term: float  # power of non-potential forces on the admissible motion
    residual: float
    general_residual: float
    applied_form: str
    conservative: bool
    extras: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.de_dt - self.de_dt_balance


def _traits_for(spec: SystemSpec, traits: SystemTraits | None) -> SystemTraits:
    if traits is not None:
        return traits
    from . import systems

    entry_id = spec.meta.get("id")
    if entry_id is None:
        raise ConfigurationError("pass traits= for systems outside the catalog")
    samples = systems.sample_states(entry_id, 8, seed=12345, params=spec.meta.get("params"))
    return classify_system(spec, samples)


def applicable_balance_form(traits: SystemTraits) -> str:
    st = traits.structure
    if st.kind == "affine" and st.chaplygin:
        return "affine"
    if traits.lagrangian_free_of_dependent and st.chaplygin:
        return "chaplygin"
    if st.kind == "linear":
        return "linear"
    if st.degree_one:
        return "homogeneous"
    return "general"


def balance_residual(
    spec: SystemSpec,
    s: KinematicState,
    a: np.ndarray | None = None,
    traits: SystemTraits | None = None,
    form: str | None = None,
    backend: DerivativeBackend = DUAL,
) -> BalanceReport:
    spec.check_state(s)
    traits = _traits_for(spec, traits)
    if a is None:
        a = _accel(spec, s)
    a = np.asarray(a, float)
    m = spec.m

    lp = diff.jet_partials(spec.lagrangian, [s.q, s.v, s.t], ["q", "v", "t"], order=1)
    dl_dq = lp.d("q")[0]
    dl_dt = float(np.ravel(lp.d("t"))[0])
    energy = float(lp.d("v")[0] @ s.v - lp.value[0])
    de_dt = float(primal(diff.total_derivative(_energy_fn(spec), s, a, spec.constraints.alpha)))

    if spec.k:
        cp = spec.constraints.partials(s, backend, order=1)
        alpha = cp.value.astype(float)
        av = cp.d("v")
        dalpha_dt = np.asarray(cp.d("t"), float).reshape(-1)
        gap = av @ s.v - alpha
        pdep = dependent_momenta(spec, s, backend)
        bbar = bar_b(spec, s, a, backend)
    else:
        av = np.zeros((0, m))
        dalpha_dt = gap = pdep = bbar = np.zeros(0)
    dep_term = float(gap @ dl_dq[m:])
    bbar_term = float(bbar @ pdep)

    power = 0.0
    if spec.energy.forces is not None:
        qd = spec.full_velocity(s)
        extra = np.array([primal(f) for f in spec.energy.forces(list(s.q), list(qd), s.t)], float)
        power = float(s.v @ (extra[:m] + av.T @ extra[m:]))

    de_dt_balance = dep_term + bbar_term - dl_dt + power
    general = de_dt - de_dt_balance

    applied = form or applicable_balance_form(traits)
    extras: dict = {}
    if applied == "general":
        residual = general
    elif applied in ("homogeneous", "linear"):
        if not (traits.structure.degree_one or traits.structure.kind == "linear"):
            raise NotApplicableError(f"{applied} balance needs degree-1 constraints")
        residual = de_dt - (-dl_dt + float(pdep @ dalpha_dt)) - power
    elif applied == "chaplygin":
        if not (traits.structure.chaplygin and traits.lagrangian_free_of_dependent):
            raise NotApplicableError("Čaplygin balance needs α and L* free of the dependent coordinates")
        ddt_gap = np.array([primal(x) for x in diff.total_derivative(
            _alpha_gap(spec), s, a, spec.constraints.alpha)]) if spec.k else np.zeros(0)
        source = float((ddt_gap + dalpha_dt) @ pdep)
        extras["ddt_gap"] = ddt_gap
        residual = de_dt - source + dl_dt - power
    elif applied == "affine":
        if not (traits.structure.kind == "affine" and traits.structure.chaplygin):
            raise NotApplicableError("affine balance needs affine constraints free of the dependent coordinates")
        if spec.constraints.affine_offset is not None:
            offset = np.array([primal(x) for x in spec.constraints.affine_offset(s.t)], float)
        else:
            offset = alpha - av @ s.v
        # ∂a_{ν,j}/∂t v_j: time derivative of α at fixed offset
        coeff_rate = dalpha_dt.copy()
        if spec.constraints.affine_offset is not None:
            _, dc = diff.directional(lambda t: spec.constraints.affine_offset(t), [s.t], [1.0])
            coeff_rate = coeff_rate - np.asarray(dc, float)
        extras["offset"] = offset
        residual = de_dt + float(offset @ dl_dq[m:]) - float(coeff_rate @ pdep) + dl_dt - power
    else:
        raise ConfigurationError(f"unknown balance form {applied!r}")

    return BalanceReport(
        energy=energy,
        de_dt=de_dt,
        de_dt_balance=de_dt_balance,
        dependent_term=dep_term,
        bbar_term=bbar_term,
        explicit_time_term=-dl_dt,
        power_term=power,
        residual=float(residual),
        general_residual=float(general),
        applied_form=applied,
        conservative=spec.energy.conservative,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# first integrals
# ---------------------------------------------------------------------------


def jacobi_integral(spec: SystemSpec, s: KinematicState, traits: SystemTraits | None = None) -> float:
    """Σ_rs (½g_rs + ½Σ g_DD a a + Σ g_{r,D} a) v_r v_s − U − c for linear stationary systems."""
    traits = _traits_for(spec, traits)
    st = traits.structure
    if st.kind != "linear" or not st.stationary or not traits.stationary_lagrangian:
        raise NotApplicableError(
            f"Jacobi integral needs linear stationary constraints and a time-independent L* "
            f"(structure {st.tag}, stationary={st.stationary}, L* stationary={traits.stationary_lagrangian})"
        )
    if spec.embedding is None:
        raise NotApplicableError("Jacobi integral evaluation needs an embedding model")
    spec.check_state(s)
    m = spec.m
    mc = metric_coefficients(spec.embedding, s.q, s.t)
    g = mc.g
    coeffs = spec.constraints.partials(s, order=1).d("v")
    quad = 0.5 * g[:m, :m] + 0.5 * coeffs.T @ g[m:, m:] @ coeffs + g[:m, m:] @ coeffs
    value = float(s.v @ quad @ s.v) - mc.c
    if spec.energy.potential is not None:
        value -= float(primal(spec.energy.potential(list(s.q), s.t)))
    return value


@dataclass(frozen=True)
class IntegralClaim:
    name: str
    kind: str  # "energy", "jacobi", "affine"
    func: Callable[[KinematicState], float]
    reason: str

    def __call__(self, s: KinematicState) -> float:
        return float(self.func(s))


def detect_first_integrals(
    spec: SystemSpec,
    traits: SystemTraits | None = None,
    samples: Sequence[KinematicState] | None = None,
) -> list[IntegralClaim]:
    """Claims follow from structure alone; drift only ever verifies them."""
    if traits is None and samples is not None:
        traits = classify_system(spec, samples)
    traits = _traits_for(spec, traits)
    st = traits.structure
    if not traits.conservative or not traits.stationary_lagrangian or not st.stationary:
        return []
    if st.kind == "linear":
        return [IntegralClaim("I", "jacobi", lambda s: jacobi_integral(spec, s, traits),
                              "linear stationary constraints, time-independent L*")]
    if st.degree_one:
        return [IntegralClaim("E", "energy", lambda s: energy_value(spec, s),
                              f"{st.tag} stationary constraints: ᾱ = α and B̄ = 0")]
    if st.kind == "affine" and traits.lagrangian_free_of_dependent:
        return [IntegralClaim("E", "affine", lambda s: energy_value(spec, s),
                              "stationary affine constraints, L* free of the dependent coordinates")]
    return []
