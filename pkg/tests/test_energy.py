import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonholonomic import ChartDims, ConstraintSet, EnergyModel, NotApplicableError, Structure, SystemSpec, systems
from nonholonomic import energy
from nonholonomic.core import classify_system
from nonholonomic.dynamics import accel_newtonian

from conftest import CATALOG_IDS, close, free_particle, oscillator, rel, state

DEGREE_ONE = ["nonholonomic-pendulum", "perpendicular-velocities", "parallel-velocities", "equal-speed-pair",
              "midpoint-knife", "orthogonal-to-join", "perp-pair-join"]


def traits(entry_id, params=None):
    spec = systems.build(entry_id, params)
    return spec, classify_system(spec, systems.sample_states(entry_id, 8, seed=21, params=params))


# ---------------------------------------------------------------- ᾱ and B̄

def test_pendulum_bar_alpha_equals_alpha():
    spec = systems.build("nonholonomic-pendulum")
    s = state([1, 2, 1, 1], [1, 1, 1])
    assert energy.bar_alpha(spec, s)[0] == pytest.approx(2.0)
    assert spec.dependent_velocities(s)[0] == pytest.approx(2.0)


def test_constant_speed_bar_alpha_positive_branch():
    spec = systems.build("constant-speed-point", {"C": math.sqrt(2.0), "branch": 1})
    s = state([0, 0, 0], [1, 0])
    assert spec.dependent_velocities(s)[0] == pytest.approx(1.0)
    assert energy.bar_alpha(spec, s)[0] == pytest.approx(-1.0)


@pytest.mark.parametrize("branch", [1, -1])
def test_constant_speed_bar_b_closed_form(branch):
    c2 = 2.0
    params = {"C": math.sqrt(c2), "branch": branch}
    spec = systems.build("constant-speed-point", params)
    rng = np.random.default_rng(0)
    for s in systems.sample_states("constant-speed-point", 10, seed=5, params=params):
        a = rng.normal(size=2)
        r = c2 - s.v @ s.v
        expected = -branch * c2 / r**1.5 * (s.v @ a)
        assert energy.bar_b(spec, s, a)[0] == pytest.approx(expected, rel=1e-12)
        assert energy.bar_b_total(spec, s, a)[0] == pytest.approx(expected, rel=1e-10)


def test_affine_bar_alpha_and_bar_b():
    spec = systems.build("affine-particle", {"c": 0.7})
    for s in systems.sample_states("affine-particle", 10, seed=6):
        assert energy.bar_alpha(spec, s)[0] == pytest.approx(spec.dependent_velocities(s)[0] - 0.7, abs=1e-14)
        assert abs(energy.bar_b(spec, s, accel_newtonian(spec, s))[0]) <= 1e-14


@pytest.mark.parametrize("entry_id", DEGREE_ONE)
def test_degree_one_terms_vanish(entry_id):
    spec, tr = traits(entry_id)
    for s in systems.sample_states(entry_id, 10, seed=7):
        rep = energy.balance_residual(spec, s, traits=tr)
        assert abs(rep.dependent_term) <= 1e-12 * max(1.0, abs(rep.energy))
        assert abs(rep.bbar_term) <= 1e-12 * max(1.0, abs(rep.energy))


def test_lemma_both_directions():
    # ᾱ = α at every sample ⇔ degree-one scaling holds at those samples
    for entry_id in CATALOG_IDS:
        spec, tr = traits(entry_id)
        samples = systems.sample_states(entry_id, 20, seed=8)
        equal = all(np.allclose(energy.bar_alpha(spec, s), spec.dependent_velocities(s), atol=1e-11, rtol=1e-11)
                    for s in samples)
        scaled = all(np.allclose(spec.dependent_velocities(s.replace(v=2 * s.v)), 2 * spec.dependent_velocities(s),
                                 atol=1e-11, rtol=1e-11)
                     for s in samples if spec.admissible(s.replace(v=2 * s.v)))
        assert equal == scaled == tr.structure.degree_one, entry_id


def test_bar_b_routes_agree(catalog_id):
    spec = systems.build(catalog_id)
    for s in systems.sample_states(catalog_id, 10, seed=9):
        a = accel_newtonian(spec, s)
        assert rel(energy.bar_b(spec, s, a), energy.bar_b_total(spec, s, a)) <= 1e-10


# ---------------------------------------------------------------- energy value

def test_pendulum_energy_without_potential():
    spec = systems.build("nonholonomic-pendulum", {"potential": "none"})
    assert energy.energy_value(spec, state([1, 2, 1, 1], [1, 1, 1])) == pytest.approx(3.5)


def test_holonomic_energy_is_kinetic_minus_force_function():
    spec = oscillator(stiffness=3.0, mass=2.0)
    s = state([0.5], [1.5])
    assert energy.energy_value(spec, s) == pytest.approx(0.5 * 2 * 2.25 + 0.5 * 3 * 0.25)


def test_affine_energy_matches_corrected_integrand():
    a, b, c, mass = 0.5, 0.3, 1.0, 1.0
    spec = systems.build("affine-particle", {"potential": "none"})
    for s in systems.sample_states("affine-particle", 10, seed=10):
        ell = a * s.q[0] * s.v[1] + b * s.q[1] * s.v[0]
        expected = 0.5 * mass * (s.v @ s.v) + 0.5 * mass * (ell + c) * (ell - c)
        assert energy.energy_value(spec, s) == pytest.approx(expected, rel=1e-13, abs=1e-13)


def test_expanded_energy_matches_generic(catalog_id):
    spec = systems.build(catalog_id)
    for s in systems.sample_states(catalog_id, 10, seed=11):
        assert close(energy.energy_value(spec, s), energy.energy_value(spec, s, expanded=True), 1e-10)


# ---------------------------------------------------------------- balance

def test_balance_residual_small_everywhere(catalog_id):
    spec, tr = traits(catalog_id)
    for s in systems.sample_states(catalog_id, 20, seed=12):
        rep = energy.balance_residual(spec, s, traits=tr)
        assert abs(rep.residual) <= energy.TAU_BAL and abs(rep.general_residual) <= energy.TAU_BAL
        assert abs(rep.gap) <= energy.TAU_BAL


def test_parallel_velocities_energy_stationary():
    spec, tr = traits("parallel-velocities")
    for s in systems.sample_states("parallel-velocities", 10, seed=13):
        rep = energy.balance_residual(spec, s, traits=tr)
        assert abs(rep.de_dt) <= 1e-10 * max(1.0, abs(rep.energy))
        assert rep.explicit_time_term == 0.0


def test_specialized_forms_equal_general(catalog_id):
    spec, tr = traits(catalog_id)
    forms = ["general"]
    if tr.structure.degree_one:
        forms.append("homogeneous")
    if tr.structure.kind == "linear":
        forms.append("linear")
    if tr.structure.chaplygin and tr.lagrangian_free_of_dependent:
        forms.append("chaplygin")
    if tr.structure.kind == "affine" and tr.structure.chaplygin:
        forms.append("affine")
    for s in systems.sample_states(catalog_id, 10, seed=14):
        res = [energy.balance_residual(spec, s, traits=tr, form=f).residual for f in forms]
        assert max(abs(r) for r in res) <= 1e-10, dict(zip(forms, res))


def test_linear_and_general_forms_identical_on_orthogonal_join():
    spec, tr = traits("orthogonal-to-join")
    for s in systems.sample_states("orthogonal-to-join", 10, seed=15):
        lin = energy.balance_residual(spec, s, traits=tr, form="linear")
        assert abs(lin.residual - lin.general_residual) <= 1e-12


def test_inapplicable_form_refused():
    spec, tr = traits("perpendicular-velocities")
    with pytest.raises(NotApplicableError):
        energy.balance_residual(spec, systems.default_state("perpendicular-velocities"), traits=tr, form="affine")


def test_rheonomic_source_attribution():
    params = {"potential": "modulated-gravity"}
    spec, tr = traits("orthogonal-to-join", params)
    assert not tr.stationary_lagrangian
    for s in systems.sample_states("orthogonal-to-join", 10, seed=16, params=params):
        rep = energy.balance_residual(spec, s, traits=tr)
        assert abs(rep.residual) <= energy.TAU_BAL
        assert abs(rep.de_dt - rep.explicit_time_term) <= energy.TAU_BAL
        assert abs(rep.explicit_time_term) > 1e-6 or abs(math.cos(2.0 * s.t)) < 1e-3


def test_non_potential_forces_disable_claims_and_enter_power():
    base = systems.build("perpendicular-velocities", {"potential": "none"})
    drag = EnergyModel(base.energy.kinetic, None, lambda q, qd, t: [-0.3 * x for x in qd])
    spec = SystemSpec(base.dims, base.constraints, base.embedding, drag, base.singular_guard)
    samples = systems.sample_states("perpendicular-velocities", 8, seed=17)
    tr = classify_system(spec, samples)
    assert not tr.conservative
    assert energy.detect_first_integrals(spec, tr) == []
    rep = energy.balance_residual(spec, samples[0], traits=tr)
    assert rep.power_term < 0 and abs(rep.residual) <= energy.TAU_BAL


def test_double_entry_on_unconstrained_oscillator():
    spec = oscillator()
    tr = classify_system(spec, [state([x], [1 - x]) for x in np.linspace(-1, 1, 8)])
    rep = energy.balance_residual(spec, state([0.4], [0.9]), traits=tr)
    assert abs(rep.de_dt) <= 1e-14 and rep.applied_form == "chaplygin"


# ---------------------------------------------------------------- first integrals

def test_knife_jacobi_integral_hand_value():
    spec, tr = traits("midpoint-knife", {"g": 0.0})
    assert energy.jacobi_integral(spec, state([0, 0.3, -0.2], [1, 1]), tr) == pytest.approx(2.0)


@pytest.mark.parametrize("entry_id", ["midpoint-knife", "orthogonal-to-join", "perp-pair-join"])
def test_jacobi_integral_matches_catalog_formula(entry_id):
    spec, tr = traits(entry_id)
    expected = systems.expected_integrals(entry_id)[0]
    for s in systems.sample_states(entry_id, 10, seed=18):
        assert energy.jacobi_integral(spec, s, tr) == pytest.approx(expected(s), rel=1e-12, abs=1e-12)


def test_jacobi_refused_for_nonlinear():
    spec, tr = traits("perpendicular-velocities")
    with pytest.raises(NotApplicableError):
        energy.jacobi_integral(spec, systems.default_state("perpendicular-velocities"), tr)


def test_detected_claims_match_expected_integrals(catalog_id):
    spec, tr = traits(catalog_id)
    claims = energy.detect_first_integrals(spec, tr)
    expected = systems.expected_integrals(catalog_id)
    assert [c.kind for c in claims] == [e.kind for e in expected]
    samples = systems.sample_states(catalog_id, 20, seed=19)
    for claim, integral in zip(claims, expected):
        offsets = [claim(s) - integral(s) for s in samples]
        assert max(offsets) - min(offsets) <= 1e-10 * max(1.0, max(abs(integral(s)) for s in samples))


@pytest.mark.parametrize("entry_id,params", [
    ("constant-speed-point", None),
    ("affine-particle", {"potential": "full-trap"}),
    ("orthogonal-to-join", {"potential": "modulated-gravity"}),
])
def test_no_claims_without_structural_support(entry_id, params):
    spec, tr = traits(entry_id, params)
    assert energy.detect_first_integrals(spec, tr) == []
    assert systems.expected_integrals(entry_id, params) == []


def test_claims_for_degree_one_examples():
    for entry_id in ["nonholonomic-pendulum", "perpendicular-velocities", "parallel-velocities", "equal-speed-pair"]:
        spec, tr = traits(entry_id)
        assert [c.kind for c in energy.detect_first_integrals(spec, tr)] == ["energy"]
    spec, tr = traits("affine-particle")
    assert [c.kind for c in energy.detect_first_integrals(spec, tr)] == ["affine"]


def test_equal_speed_integral_formula():
    spec, tr = traits("equal-speed-pair")
    integral = systems.expected_integrals("equal-speed-pair")[0]
    for s in systems.sample_states("equal-speed-pair", 10, seed=20):
        v = s.v
        u = spec.energy.potential(list(s.q), s.t)
        assert integral(s) == pytest.approx(0.5 * (1.0 + 2.0) * (v[:3] @ v[:3]) - u, rel=1e-12)
        assert energy.energy_value(spec, s) == pytest.approx(integral(s), rel=1e-12)
