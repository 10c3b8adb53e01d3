import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonholonomic import ChartDims, ConfigurationError, ConstraintSet, EmbeddingModel, FallbackWarning, SystemSpec, systems
from nonholonomic import dynamics
from nonholonomic.diff import FINITE_DIFFERENCE
from nonholonomic.dynamics import (accel_lagrangian, accel_newtonian, b_coefficients, b_split, b_total_derivative,
                                   coefficient_assembly, metric_coefficients, reduce_special)

from conftest import CATALOG_IDS, free_particle, oscillator, polar_particle, rel, state

velocity = st.floats(0.2, 2.0).flatmap(lambda x: st.sampled_from([x, -x]))


# ---------------------------------------------------------------- metric

def test_free_planar_pair_metric_is_diagonal_masses():
    spec = systems.build("perpendicular-velocities", {"M1": 1.5, "M2": 2.5})
    mc = metric_coefficients(spec.embedding, np.array([0.3, -0.2, 1.0, 2.0]), 0.0)
    np.testing.assert_array_equal(mc.g, np.diag([1.5, 1.5, 2.5, 2.5]))
    assert not np.any(mc.xi) and not np.any(mc.eta) and not np.any(mc.zeta)
    assert mc.cartesian


def test_knife_metric_stationary_at_zero_angle():
    spec = systems.build("midpoint-knife")
    q = np.array([0.0, 0.4, -0.2])
    m0, m1 = metric_coefficients(spec.embedding, q, 0.0), metric_coefficients(spec.embedding, q, 1.7)
    np.testing.assert_allclose(m0.g, m1.g, atol=1e-15)
    assert not np.any(m0.eta) and not np.any(m0.zeta)
    # ℓ = 1, two unit masses: angle inertia 2ℓ², translation mass 2
    np.testing.assert_allclose(m0.g, np.diag([2.0, 2.0, 2.0]), atol=1e-15)


def test_moving_frame_gives_linear_and_constant_terms():
    emb = EmbeddingModel((1.0,), lambda q, t: [q[0] + t, 0.0, 0.0], dim=3)
    mc = metric_coefficients(emb, np.array([0.2]), 0.5)
    assert mc.b[0] == pytest.approx(1.0) and mc.c == pytest.approx(0.5)


# ---------------------------------------------------------------- restricted kinetic energy

@given(velocity, velocity, velocity)
def test_perpendicular_restricted_kinetic(v1, v2, v3):
    spec = systems.build("perpendicular-velocities", {"M1": 1.3, "M2": 0.7})
    s = state([0, 0, 0, 0], [v1, v2, v3])
    expected = 0.5 * 1.3 * (v1**2 + v2**2) + 0.5 * 0.7 * v3**2 * (1 + (v1 / v2) ** 2)
    assert dynamics.restricted_kinetic(spec, s).value[0] == pytest.approx(expected, rel=1e-13)


def test_constant_speed_restricted_kinetic_is_constant():
    spec = systems.build("constant-speed-point", {"M": 2.0, "C": 1.5})
    for s in systems.sample_states("constant-speed-point", 10, seed=1, params={"M": 2.0, "C": 1.5}):
        tp = dynamics.restricted_kinetic(spec, s)
        assert tp.value[0] == pytest.approx(0.5 * 2.0 * 1.5**2, rel=1e-13)
        assert np.max(np.abs(tp.d("v"))) <= 1e-12


def test_unconstrained_restricted_kinetic_equals_kinetic():
    spec = free_particle(2.0)
    s = state([1, 2, 3], [0.5, -1, 2])
    assert dynamics.restricted_kinetic(spec, s).value[0] == pytest.approx(0.5 * 2.0 * (0.25 + 1 + 4))


# ---------------------------------------------------------------- coefficient assembly

def test_perpendicular_coefficients_at_unit_velocities():
    spec = systems.build("perpendicular-velocities", {"M1": 1.0, "M2": 1.0})
    cb = coefficient_assembly(spec, state([0.1, 0.2, 0.3, 0.4], [1, 1, 1]))
    np.testing.assert_allclose(cb.C, [[2, -1, 1], [-1, 2, -1], [1, -1, 2]], atol=1e-14)
    assert not np.any(cb.D) and not np.any(cb.E) and not np.any(cb.G)


@given(velocity, velocity, velocity)
def test_perpendicular_mixed_entry_has_single_power(v1, v2, v3):
    # general assembly gives M2 q̇1 q̇3 / q̇2²; the transcribed q̇3² would differ off unit speeds
    spec = systems.build("perpendicular-velocities", {"M1": 1.0, "M2": 1.7})
    cb = coefficient_assembly(spec, state([0, 0, 0, 0], [v1, v2, v3]))
    assert cb.C[0, 2] == pytest.approx(1.7 * v1 * v3 / v2**2, rel=1e-12)
    assert cb.C[0, 1] == pytest.approx(-1.7 * v1 * v3**2 / v2**3, rel=1e-12)
    assert cb.C[1, 2] == pytest.approx(-1.7 * v1**2 * v3 / v2**3, rel=1e-12)


def _pendulum_printed(m1=1.0, m2=1.0, q=(1, 2, 1, 1), v=(1, 1, 1)):
    q1, q2, q3, q4 = q
    d1, d2, d3 = v
    phi = q1 * d3 / (q4 * d2)
    psi = (q2 - q3 + q1 * d1 / d2) / q4
    r = d1 / d2
    c = np.array([
        [m1 + m2 * phi**2, -m2 * r * phi**2, m2 * phi * psi],
        [0, m1 + m2 * r**2 * phi**2, -m2 * r * phi * psi],
        [0, 0, m2 + m2 * psi**2],
    ])
    c = np.triu(c) + np.triu(c, 1).T
    e = m2 * phi * np.array([
        [d1 / q1 * phi, d3 / q4, -d3 / q4],
        [-d1 / q1 * r * phi, -d1 / q1 * phi, d1 / q1 * phi],
        [d1 / q1 * psi, d2 / q1 * psi, -d2 / q1 * psi],
    ])
    g = -m2 * d3**2 / q4 * psi**2 * np.array([phi, r * phi, psi])
    return c, e, g


def test_pendulum_coefficients_against_printed_matrices():
    spec = systems.build("nonholonomic-pendulum")
    cb = coefficient_assembly(spec, state([1, 2, 1, 1], [1, 1, 1]))
    c, e, g = _pendulum_printed()
    np.testing.assert_allclose(cb.C, c, atol=1e-14)
    np.testing.assert_allclose(cb.E, e, atol=1e-14)
    assert not np.any(cb.D)
    # the transcribed G carries +(q̇1/q̇2)Φ in the middle slot; ∂α/∂q̇2 = −(q̇1/q̇2)Φ
    np.testing.assert_allclose(cb.G, g * np.array([1, -1, 1]), atol=1e-14)


def test_cartesian_fast_path_matches_general(catalog_id):
    spec = systems.build(catalog_id)
    for s in systems.sample_states(catalog_id, 10, seed=3):
        fast = coefficient_assembly(spec, s, fast_path=True)
        slow = coefficient_assembly(spec, s, fast_path=False)
        for a, b in ((fast.C, slow.C), (fast.D, slow.D), (fast.E, slow.E), (fast.G, slow.G)):
            assert np.max(np.abs(a - b), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(b), initial=0.0))


def test_fast_path_selected_only_for_cartesian_embeddings():
    s = state([1.2, 0.3], [0.1, -0.4])
    assert not coefficient_assembly(polar_particle(), s).cartesian
    assert coefficient_assembly(free_particle(), state([0, 0, 0], [1, 2, 3])).cartesian


def test_unconstrained_coefficients():
    spec = polar_particle(1.5)
    s = state([2.0, 0.3], [0.5, 0.7])
    cb = coefficient_assembly(spec, s)
    np.testing.assert_allclose(cb.C, np.diag([1.5, 1.5 * 4.0]), atol=1e-14)
    assert not np.any(cb.E) and not np.any(cb.G)
    # centripetal and Coriolis terms: r̈ = r θ̇², θ̈ = −2 ṙ θ̇ / r
    np.testing.assert_allclose(accel_newtonian(spec, s), [2.0 * 0.49, -2 * 0.5 * 0.7 / 2.0], atol=1e-14)


# ---------------------------------------------------------------- B coefficients

def test_perpendicular_b_at_unit_velocities():
    spec = systems.build("perpendicular-velocities")
    a = np.array([0.3, -1.1, 0.7])
    _, b = b_coefficients(spec, state([0, 0, 0, 0], [1, 1, 1]), a)
    assert b[0, 0] == pytest.approx(a[1] - a[2])
    assert b[2, 0] == pytest.approx(-a[0] + a[1])
    # d/dt(q̇1q̇3/q̇2²) at unit speeds carries −2 q̈2
    assert b[1, 0] == pytest.approx(a[0] + a[2] - 2 * a[1])


def test_split_reassembles_at_zero_acceleration(catalog_id):
    spec = systems.build(catalog_id)
    if spec.k == 0:
        pytest.skip("no constraints")
    s = systems.sample_states(catalog_id, 1, seed=8)[0]
    split = b_split(spec, s)
    np.testing.assert_array_equal(split.assemble(np.zeros(spec.m)), split.B0)


def test_two_routes_to_b_agree(catalog_id):
    spec = systems.build(catalog_id)
    rng = np.random.default_rng(0)
    for s in systems.sample_states(catalog_id, 10, seed=4):
        a = rng.normal(size=spec.m)
        _, b1 = b_coefficients(spec, s, a)
        assert rel(b1, b_total_derivative(spec, s, a)) <= 1e-10


def test_linear_b_has_no_acceleration_part():
    spec = systems.build("orthogonal-to-join")
    for s in systems.sample_states("orthogonal-to-join", 5, seed=2):
        split = b_split(spec, s)
        assert not np.any(split.B1)
        np.testing.assert_allclose(split.B0, dynamics.voronec_b0(spec, s), atol=1e-13)


def test_velocity_only_linear_constraint_has_zero_b():
    emb = EmbeddingModel((1.0,), lambda q, t: list(q), dim=3, affine=True)
    spec = SystemSpec(ChartDims(3, 2), ConstraintSet(lambda q, v, t: [2 * v[0] - v[1]], 1), emb)
    _, b = b_coefficients(spec, state([1, 2, 3], [0.5, 0.1]), np.array([1.0, 2.0]))
    assert not np.any(b)


# ---------------------------------------------------------------- accelerations

def test_unforced_perpendicular_motion_is_straight():
    spec = systems.build("perpendicular-velocities", {"potential": "none"})
    for s in systems.sample_states("perpendicular-velocities", 10, seed=0):
        assert np.max(np.abs(accel_newtonian(spec, s))) <= 1e-13
        assert np.max(np.abs(accel_lagrangian(spec, s))) <= 1e-13


@pytest.mark.parametrize("branch", [1, -1])
def test_constant_speed_matches_closed_form(branch):
    mass, speed, grav = 2.0, math.sqrt(2.0), 1.3
    params = {"M": mass, "C": speed, "g": grav, "branch": branch}
    spec = systems.build("constant-speed-point", params)
    for s in systems.sample_states("constant-speed-point", 10, seed=6, params=params):
        v1, v2 = s.v
        r = speed**2 - v1**2 - v2**2
        mat = mass / r * np.array([[speed**2 - v2**2, v1 * v2], [v1 * v2, speed**2 - v1**2]])
        f3 = -mass * grav
        rhs = np.array([-branch * f3 * v1 / math.sqrt(r), -branch * f3 * v2 / math.sqrt(r)])
        expected = np.linalg.solve(mat, rhs)
        assert rel(expected, accel_newtonian(spec, s)) <= 1e-12
        assert rel(expected, accel_lagrangian(spec, s)) <= 1e-12
        cb = coefficient_assembly(spec, s)
        assert cb.C[0, 0] == pytest.approx(mass * (1 + v1**2 / r), rel=1e-12)


def test_paths_agree(catalog_id):
    spec = systems.build(catalog_id)
    for s in systems.sample_states(catalog_id, 25, seed=9):
        assert rel(accel_newtonian(spec, s), accel_lagrangian(spec, s)) <= 1e-8


def test_oscillator_lagrangian_baseline():
    spec = oscillator(stiffness=4.0, mass=2.0)
    assert accel_lagrangian(spec, state([0.3], [1.0]))[0] == pytest.approx(-0.6)
    with pytest.raises(ConfigurationError):
        accel_newtonian(spec, state([0.3], [1.0]))


def test_finite_difference_backend_tracks_dual():
    spec = systems.build("nonholonomic-pendulum")
    s = systems.default_state("nonholonomic-pendulum")
    assert rel(accel_lagrangian(spec, s), accel_lagrangian(spec, s, backend=FINITE_DIFFERENCE)) <= 1e-5


# ---------------------------------------------------------------- reducers

REDUCER_SYSTEMS = {
    "voronec": ["midpoint-knife", "orthogonal-to-join", "perp-pair-join"],
    "chaplygin": ["affine-particle", "midpoint-knife"],
    "classical-chaplygin": ["midpoint-knife"],
}


@pytest.mark.parametrize("form,entry_id", [(f, e) for f, ids in REDUCER_SYSTEMS.items() for e in ids])
def test_reducer_matches_general(form, entry_id):
    spec = systems.build(entry_id)
    for s in systems.sample_states(entry_id, 20, seed=12):
        assert form in dynamics.applicable_forms(spec, s)
        assert rel(accel_lagrangian(spec, s), reduce_special(spec, s, form=form)) <= 1e-10


def test_inapplicable_reducer_falls_back_with_warning():
    spec = systems.build("perpendicular-velocities")
    s = systems.default_state("perpendicular-velocities")
    with pytest.warns(FallbackWarning):
        a = reduce_special(spec, s, form="voronec")
    np.testing.assert_allclose(a, accel_lagrangian(spec, s))
    with pytest.warns(FallbackWarning):
        reduce_special(systems.build("affine-particle", {"potential": "full-trap"}),
                       systems.default_state("affine-particle"), form="chaplygin")


@pytest.mark.parametrize("entry_id,expected", [
    ("midpoint-knife", "classical-chaplygin"),
    ("affine-particle", "chaplygin"),
    ("orthogonal-to-join", "voronec"),
    ("perpendicular-velocities", "chaplygin"),
    ("nonholonomic-pendulum", "general"),
])
def test_special_form_priority(entry_id, expected):
    s = systems.default_state(entry_id)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert dynamics.special_form(systems.build(entry_id), s) == expected


def test_chaplygin_needs_evaluation_point_or_traits():
    # T and U have to be sampled before the Čaplygin hypotheses can be asserted
    assert dynamics.applicable_forms(systems.build("affine-particle")) == set()
