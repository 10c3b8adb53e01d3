import math

import numpy as np
import pytest
from hypothesis import settings

from nonholonomic import ChartDims, ConstraintSet, EmbeddingModel, EnergyModel, KinematicState, Structure, SystemSpec
from nonholonomic.systems import CATALOG

settings.register_profile("suite", max_examples=40, deadline=None)
settings.load_profile("suite")

CATALOG_IDS = sorted(CATALOG)


def state(q, v, t=0.0) -> KinematicState:
    return KinematicState(np.asarray(q, float), np.asarray(v, float), t)


def oscillator(stiffness: float = 1.0, mass: float = 1.0) -> SystemSpec:
    """Unconstrained 1-d oscillator as an energy model: q̈ = -(k/M) q."""
    energy = EnergyModel(lambda q, qd, t: 0.5 * mass * qd[0] * qd[0], lambda q, t: -0.5 * stiffness * q[0] * q[0])
    return SystemSpec(ChartDims(1, 1), ConstraintSet(lambda q, v, t: [], 0), energy=energy, label="oscillator")


def free_particle(mass: float = 2.0, potential=None) -> SystemSpec:
    emb = EmbeddingModel((mass,), lambda q, t: [q[0], q[1], q[2]], dim=3, affine=True)
    return SystemSpec(ChartDims(3, 3), ConstraintSet(lambda q, v, t: [], 0), emb,
                      EnergyModel.from_embedding(emb, potential), label="free particle")


def polar_particle(mass: float = 1.5) -> SystemSpec:
    """Planar particle in polar coordinates: non-constant metric, nonzero Christoffel terms."""
    from nonholonomic.diff import cos, sin

    emb = EmbeddingModel((mass,), lambda q, t: [q[0] * cos(q[1]), q[0] * sin(q[1])], dim=2)
    return SystemSpec(ChartDims(2, 2), ConstraintSet(lambda q, v, t: [], 0), emb, label="polar particle",
                      singular_guard=lambda s: s.q[0] > 1e-6)


@pytest.fixture(params=CATALOG_IDS)
def catalog_id(request):
    return request.param


def rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))


def close(a, b, tol=1e-12) -> bool:
    return math.isclose(float(a), float(b), rel_tol=tol, abs_tol=tol)
