"""Catalog of example systems: constraints, embeddings, potentials, integrals, samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    ChartDims,
    ConstraintSet,
    EmbeddingModel,
    EnergyModel,
    KinematicState,
    Structure,
    SystemSpec,
)
from .diff import cos, sin, sqrt, tan
from .errors import ConfigurationError

# guards keep a small margin so that sampled states are well conditioned
GUARD_EPS = 1e-12


@dataclass(frozen=True)
class Integral:
    """A scalar function of the state expected to stay constant along motion."""

    name: str
    kind: str  # "energy", "jacobi" or "affine"
    func: Callable[[KinematicState], float]
    note: str = ""

    def __call__(self, s: KinematicState) -> float:
        return float(self.func(s))


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    title: str
    defaults: dict
    builder: Callable[[dict], SystemSpec]
    default_state: Callable[[dict], KinematicState]
    sampler: Callable[[dict, np.random.Generator], KinematicState]
    integrals: Callable[[dict], list]
    printed_integrals: Callable[[dict], list] = field(default=lambda p: [])
    potentials: tuple = ("none",)


CATALOG: dict[str, CatalogEntry] = {}


def _register(entry: CatalogEntry) -> CatalogEntry:
    CATALOG[entry.id] = entry
    return entry


def _positive(params: dict, *names: str) -> None:
    for name in names:
        val = params[name]
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ConfigurationError(f"parameter {name}={val!r} must be strictly positive")


def _choice(params: dict, name: str, options) -> None:
    if params[name] not in options:
        raise ConfigurationError(f"parameter {name}={params[name]!r} must be one of {sorted(options)}")


def _branch(params: dict) -> int:
    b = params["branch"]
    if b not in (1, -1):
        raise ConfigurationError(f"branch must be +1 or -1, got {b!r}")
    return int(b)


def resolve_params(entry_id: str, params: dict | None = None) -> dict:
    entry = get_entry(entry_id)
    merged = dict(entry.defaults)
    for key, val in (params or {}).items():
        if key not in merged:
            raise ConfigurationError(
                f"unknown parameter {key!r} for {entry_id}; known: {', '.join(sorted(merged))}"
            )
        merged[key] = val
    return merged


def get_entry(entry_id: str) -> CatalogEntry:
    try:
        return CATALOG[entry_id]
    except KeyError:
        raise ConfigurationError(f"unknown system id {entry_id!r}; known: {', '.join(CATALOG)}") from None


def build(entry_id: str, params: dict | None = None) -> SystemSpec:
    entry = get_entry(entry_id)
    p = resolve_params(entry_id, params)
    spec = entry.builder(p)
    spec.meta.update({"id": entry_id, "params": p})
    return spec


def default_state(entry_id: str, params: dict | None = None) -> KinematicState:
    entry = get_entry(entry_id)
    return entry.default_state(resolve_params(entry_id, params))


def sample_states(entry_id: str, count: int, seed: int = 0, params: dict | None = None) -> list[KinematicState]:
    """``count`` random admissible states (guards hold with a conditioning margin)."""
    entry = get_entry(entry_id)
    p = resolve_params(entry_id, params)
    spec = build(entry_id, p)
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise ConfigurationError(f"sampler for {entry_id} cannot find admissible states")
        s = entry.sampler(p, rng)
        if spec.admissible(s):
            out.append(s)
    return out


def expected_integrals(entry_id: str, params: dict | None = None) -> list[Integral]:
    entry = get_entry(entry_id)
    return entry.integrals(resolve_params(entry_id, params))


def printed_integrals(entry_id: str, params: dict | None = None) -> list[Integral]:
    """Integrals transcribed literally from the reference text (may differ from the engine's)."""
    entry = get_entry(entry_id)
    p = resolve_params(entry_id, params)
    printed = entry.printed_integrals(p)
    return printed if printed else entry.integrals(p)


def _state(q, v, t=0.0) -> KinematicState:
    return KinematicState(np.asarray(q, float), np.asarray(v, float), t)


# ---------------------------------------------------------------------------
# potentials (force-function convention: forces are +∂U/∂q)
# ---------------------------------------------------------------------------


def _height_potential(weights: list[tuple[int, float]], g: float):
    """U = -g Σ wᵢ q[idx]: uniform gravity along the axis stored in those coordinates."""

    def potential(q, t):
        total = 0.0
        for idx, w in weights:
            total = total - g * w * q[idx]
        return total

    return potential


def _trap_potential(kappa: float, idxs: list[int]):
    """U = -½ κ Σ q[idx]²: isotropic harmonic attraction to the origin."""

    def potential(q, t):
        total = 0.0
        for idx in idxs:
            total = total - 0.5 * kappa * q[idx] * q[idx]
        return total

    return potential


def _energy_integral(spec_fn: Callable[[], SystemSpec], formula: Callable[[KinematicState, SystemSpec], float],
                     name: str, note: str, kind: str = "energy") -> Integral:
    holder = {}

    def func(s: KinematicState) -> float:
        if "spec" not in holder:
            holder["spec"] = spec_fn()
        return formula(s, holder["spec"])

    return Integral(name, kind, func, note)


def _U(spec: SystemSpec, s: KinematicState) -> float:
    if spec.energy.potential is None:
        return 0.0
    return float(spec.energy.potential(list(s.q), s.t))


# ---------------------------------------------------------------------------
# nonholonomic pendulum: q = (x1, y1, y2, x2)
# ---------------------------------------------------------------------------


def _pendulum_alpha(q, v, t):
    return [v[2] / q[3] * (q[1] - q[2] + q[0] * v[0] / v[1])]


def _pendulum_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2")
    _choice(p, "potential", {"none", "gravity", "trap"})
    emb = EmbeddingModel((p["M1"], p["M2"]), lambda q, t: [q[0], q[1], q[3], q[2]], dim=2, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(1, p["M1"]), (2, p["M2"])], p["g"])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], [0, 1, 2, 3])
    cons = ConstraintSet(_pendulum_alpha, 1, Structure("homogeneous", 1.0, stationary=True))
    guard = lambda s: abs(s.v[1]) > GUARD_EPS and abs(s.q[3]) > GUARD_EPS  # noqa: E731
    return SystemSpec(ChartDims(4, 3), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      "nonholonomic pendulum")


def _pendulum_sampler(p, rng):
    q = rng.uniform(-1.5, 1.5, 4)
    q[3] = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    v = rng.normal(size=3)
    v[1] = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    return _state(q, v, rng.uniform(0, 1))


def _pendulum_integrals(p):
    def formula(s, spec):
        a = spec.dependent_velocities(s)[0]
        return 0.5 * p["M1"] * (s.v[0] ** 2 + s.v[1] ** 2) + 0.5 * p["M2"] * (s.v[2] ** 2 + a * a) - _U(spec, s)

    return [_energy_integral(lambda: build("nonholonomic-pendulum", p), formula, "E",
                             "½M1(q̇1²+q̇2²) + ½M2(q̇3²+α1²) − U")]


_register(CatalogEntry(
    "nonholonomic-pendulum",
    "two planar points whose velocity normals meet on the y axis",
    {"M1": 1.0, "M2": 1.0, "g": 9.81, "kappa": 1.0, "potential": "gravity"},
    _pendulum_build,
    lambda p: _state([-1.3, -1.0, -1.1, 2.0], [2.5, -1.5, -0.6]),
    _pendulum_sampler,
    _pendulum_integrals,
    potentials=("none", "gravity", "trap"),
))


# ---------------------------------------------------------------------------
# perpendicular velocities: q = (x1, y1, x2, y2)
# ---------------------------------------------------------------------------


def _perp_alpha(q, v, t):
    return [-v[0] * v[2] / v[1]]


def _perp_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2")
    _choice(p, "potential", {"none", "gravity", "trap"})
    emb = EmbeddingModel((p["M1"], p["M2"]), lambda q, t: [q[0], q[1], q[2], q[3]], dim=2, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(1, p["M1"]), (3, p["M2"])], p["g"])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], [0, 1, 2, 3])
    cons = ConstraintSet(_perp_alpha, 1, Structure("homogeneous", 1.0, stationary=True, chaplygin=True))
    guard = lambda s: abs(s.v[1]) > GUARD_EPS  # noqa: E731
    return SystemSpec(ChartDims(4, 3), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      "perpendicular velocities")


def _perp_sampler(p, rng):
    q = rng.uniform(-1.5, 1.5, 4)
    v = rng.normal(size=3)
    v[1] = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    return _state(q, v, rng.uniform(0, 1))


def _perp_integrals(p):
    def formula(s, spec):
        a = spec.dependent_velocities(s)[0]
        return 0.5 * p["M1"] * (s.v[0] ** 2 + s.v[1] ** 2) + 0.5 * p["M2"] * (s.v[2] ** 2 + a * a) - _U(spec, s)

    return [_energy_integral(lambda: build("perpendicular-velocities", p), formula, "E",
                             "½M1(q̇1²+q̇2²) + ½M2(q̇3²+α1²) − U")]


_register(CatalogEntry(
    "perpendicular-velocities",
    "two planar points with perpendicular velocities",
    {"M1": 1.0, "M2": 1.0, "g": 9.81, "kappa": 1.0, "potential": "gravity"},
    _perp_build,
    lambda p: _state([0.8, 0.7, -0.8, 0.2], [1.4, -2.0, -0.2]),
    _perp_sampler,
    _perp_integrals,
    potentials=("none", "gravity", "trap"),
))


# ---------------------------------------------------------------------------
# constant speed point: q = (x, y, z), z vertical
# ---------------------------------------------------------------------------


def _speed_build(p: dict) -> SystemSpec:
    _positive(p, "M", "C")
    _choice(p, "potential", {"none", "gravity", "planar-trap"})
    sign = _branch(p)
    c2 = float(p["C"]) ** 2

    def alpha(q, v, t):
        return [sign * sqrt(c2 - v[0] * v[0] - v[1] * v[1])]

    emb = EmbeddingModel((p["M"],), lambda q, t: [q[0], q[1], q[2]], dim=3, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(2, p["M"])], p["g"])
    elif p["potential"] == "planar-trap":
        pot = _trap_potential(p["kappa"], [0, 1])
    cons = ConstraintSet(alpha, 1, Structure("general", None, stationary=True, chaplygin=True))
    # the radical must stay away from zero: the branch is fixed at construction
    guard = lambda s: c2 - s.v[0] ** 2 - s.v[1] ** 2 > GUARD_EPS * c2  # noqa: E731
    return SystemSpec(ChartDims(3, 2), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      "constant speed point")


def _speed_sampler(p, rng):
    c = float(p["C"])
    r = c * math.sqrt(rng.uniform(0.0, 0.8))
    phi = rng.uniform(0, 2 * math.pi)
    return _state(rng.uniform(-2, 2, 3), [r * math.cos(phi), r * math.sin(phi)], rng.uniform(0, 1))


_register(CatalogEntry(
    "constant-speed-point",
    "one point whose speed is constant",
    {"M": 1.0, "C": 1.0, "g": 1.0, "kappa": 1.0, "potential": "gravity", "branch": -1},
    _speed_build,
    lambda p: _state([0.0, 0.0, 0.0], [0.6 * p["C"], 0.0]),
    _speed_sampler,
    lambda p: [],
    potentials=("none", "gravity", "planar-trap"),
))


# ---------------------------------------------------------------------------
# N points with parallel velocities: q = (x1..xN, y1, y2..yN)
# ---------------------------------------------------------------------------


def _parallel_build(p: dict) -> SystemSpec:
    n_pts = p["N"]
    if not isinstance(n_pts, int) or n_pts < 2:
        raise ConfigurationError(f"N={n_pts!r} must be an integer ≥ 2")
    masses = p["masses"] if p["masses"] is not None else [1.0] * n_pts
    if len(masses) != n_pts:
        raise ConfigurationError(f"masses has {len(masses)} entries, expected N={n_pts}")
    for i, mass in enumerate(masses):
        if not mass > 0:
            raise ConfigurationError(f"mass M{i + 1}={mass} must be strictly positive")
    _choice(p, "potential", {"none", "gravity", "trap"})
    m = n_pts + 1

    def position(q, t):
        out = [q[0], q[n_pts]]
        for i in range(1, n_pts):
            out += [q[i], q[m + i - 1]]
        return out

    def alpha(q, v, t):
        return [v[nu + 1] * v[m - 1] / v[0] for nu in range(n_pts - 1)]

    emb = EmbeddingModel(tuple(masses), position, dim=2, affine=True)
    y_idx = [n_pts] + [m + i - 1 for i in range(1, n_pts)]
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential(list(zip(y_idx, masses)), p["g"])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], list(range(2 * n_pts)))
    cons = ConstraintSet(alpha, n_pts - 1, Structure("homogeneous", 1.0, stationary=True, chaplygin=True))
    guard = lambda s: abs(s.v[0]) > GUARD_EPS  # noqa: E731
    return SystemSpec(ChartDims(2 * n_pts, m), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      f"{n_pts} points with parallel velocities")


def _parallel_sampler(p, rng):
    n_pts = p["N"]
    q = rng.uniform(-1.5, 1.5, 2 * n_pts)
    v = rng.normal(size=n_pts + 1)
    v[0] = rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    return _state(q, v, rng.uniform(0, 1))


def _parallel_default(p):
    n_pts = p["N"]
    if n_pts == 3:
        return _state([-0.5, -0.8, -1.0, 1.0, 1.0, -1.2], [-1.6, -0.6, -2.1, 0.85])
    q = np.zeros(2 * n_pts)
    q[:n_pts] = np.arange(n_pts, dtype=float)
    v = np.full(n_pts + 1, 0.5)
    v[0] = 1.0
    v[1:n_pts] = 1.0 + 0.2 * np.arange(1, n_pts)
    return _state(q, v)


def _parallel_integrals(p):
    def formula(s, spec):
        qd = spec.full_velocity(s)
        mu = spec.embedding.mass_vector
        xdot = np.asarray([x for x in spec.embedding.position(list(qd), 0.0)])  # position map is linear
        return 0.5 * float(np.sum(mu * xdot * xdot)) - _U(spec, s)

    return [_energy_integral(lambda: build("parallel-velocities", p), formula, "E", "½ Σ Mi |Ṗi|² − U")]


_register(CatalogEntry(
    "parallel-velocities",
    "N planar points whose velocities stay parallel",
    {"N": 3, "masses": None, "g": 9.81, "kappa": 1.0, "potential": "gravity"},
    _parallel_build,
    _parallel_default,
    _parallel_sampler,
    _parallel_integrals,
    potentials=("none", "gravity", "trap"),
))


# ---------------------------------------------------------------------------
# two points with equal speed: q = (x1, y1, z1, x2, y2, z2)
# ---------------------------------------------------------------------------


def _equal_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2")
    _choice(p, "potential", {"none", "gravity", "trap"})
    sign = _branch(p)

    def alpha(q, v, t):
        return [sign * sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - v[3] * v[3] - v[4] * v[4])]

    emb = EmbeddingModel((p["M1"], p["M2"]), lambda q, t: list(q[:6]), dim=3, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(2, p["M1"]), (5, p["M2"])], p["g"])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], list(range(6)))
    cons = ConstraintSet(alpha, 1, Structure("homogeneous", 1.0, stationary=True, chaplygin=True))

    def guard(s):
        v = s.v
        rad = v[0] ** 2 + v[1] ** 2 + v[2] ** 2 - v[3] ** 2 - v[4] ** 2
        return rad > GUARD_EPS * max(1.0, float(v @ v))

    return SystemSpec(ChartDims(6, 5), cons, emb, EnergyModel.from_embedding(emb, pot), guard, "equal speed pair")


def _equal_sampler(p, rng):
    v = rng.normal(size=5)
    v[:3] *= 1.5
    return _state(rng.uniform(-1.5, 1.5, 6), v, rng.uniform(0, 1))


def _equal_integrals(p):
    def formula(s, spec):
        return 0.5 * (p["M1"] + p["M2"]) * float(s.v[:3] @ s.v[:3]) - _U(spec, s)

    return [_energy_integral(lambda: build("equal-speed-pair", p), formula, "E",
                             "½(M1+M2)(q̇1²+q̇2²+q̇3²) − U")]


_register(CatalogEntry(
    "equal-speed-pair",
    "two points in space with equal speeds",
    {"M1": 1.0, "M2": 2.0, "g": 9.81, "kappa": 1.0, "potential": "gravity", "branch": -1},
    _equal_build,
    lambda p: _state([-1.1, 0.25, 1.0, -0.75, -1.45, 0.3], [-0.3, 1.1, 0.55, -0.25, -1.0]),
    _equal_sampler,
    _equal_integrals,
    potentials=("none", "gravity", "trap"),
))


# ---------------------------------------------------------------------------
# midpoint knife edge: q = (angle, x_mid, y_mid), y vertical
# ---------------------------------------------------------------------------


def _knife_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2", "l")
    _choice(p, "potential", {"none", "gravity"})
    ell = float(p["l"])

    def position(q, t):
        c, s = cos(q[0]), sin(q[0])
        return [q[1] + ell * c, q[2] + ell * s, q[1] - ell * c, q[2] - ell * s]

    emb = EmbeddingModel((p["M1"], p["M2"]), position, dim=2)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(2, p["M1"] + p["M2"])], p["g"])
    cons = ConstraintSet(
        lambda q, v, t: [v[1] * tan(q[0])],
        1,
        Structure("linear", 1.0, stationary=True, chaplygin=True),
        linear_coeffs=lambda q, t: [[0.0, tan(q[0])]],
    )
    guard = lambda s: abs(math.cos(s.q[0])) > 1e-6  # noqa: E731
    return SystemSpec(ChartDims(3, 2), cons, emb, EnergyModel.from_embedding(emb, pot), guard, "midpoint knife edge")


def _knife_sampler(p, rng):
    return _state([rng.uniform(-1.3, 1.3), *rng.uniform(-2, 2, 2)], rng.normal(size=2), rng.uniform(0, 1))


def _knife_integrals(p):
    mt = p["M1"] + p["M2"]

    def formula(s, spec):
        sec2 = 1.0 / math.cos(s.q[0]) ** 2
        return 0.5 * mt * (p["l"] ** 2 * s.v[0] ** 2 + sec2 * s.v[1] ** 2) - _U(spec, s)

    return [_energy_integral(lambda: build("midpoint-knife", p), formula, "I",
                             "½(M1+M2)(ℓ²q̇1² + (1+tan²q1)q̇2²) + (M1+M2)g q3", kind="jacobi")]


_register(CatalogEntry(
    "midpoint-knife",
    "rigid pair whose midpoint moves along the join",
    {"M1": 1.0, "M2": 1.0, "l": 1.0, "g": 9.81, "potential": "gravity"},
    _knife_build,
    lambda p: _state([0.1, 0.0, 0.0], [0.05, 1.0]),
    _knife_sampler,
    _knife_integrals,
    potentials=("none", "gravity"),
))


# ---------------------------------------------------------------------------
# velocities orthogonal to the join: q = (x1, x2, y1, y2)
# ---------------------------------------------------------------------------


def _ortho_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2")
    _choice(p, "potential", {"none", "gravity", "modulated-gravity", "trap"})
    m1, m2, g = p["M1"], p["M2"], p["g"]

    def coeff(q):
        return (q[1] - q[0]) / (q[2] - q[3])

    emb = EmbeddingModel((m1, m2), lambda q, t: [q[0], q[2], q[1], q[3]], dim=2, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(2, m1), (3, m2)], g)
    elif p["potential"] == "modulated-gravity":
        eps, omega = p["eps"], p["omega"]

        def pot(q, t):
            return -g * (1.0 + eps * sin(omega * t)) * (m1 * q[2] + m2 * q[3])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], [0, 1, 2, 3])
    cons = ConstraintSet(
        lambda q, v, t: [coeff(q) * v[0], coeff(q) * v[1]],
        2,
        Structure("linear", 1.0, stationary=True),
        linear_coeffs=lambda q, t: [[coeff(q), 0.0], [0.0, coeff(q)]],
    )
    guard = lambda s: abs(s.q[2] - s.q[3]) > 1e-6  # noqa: E731
    return SystemSpec(ChartDims(4, 2), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      "velocities orthogonal to the join")


def _ortho_sampler(p, rng):
    q = rng.uniform(-1.5, 1.5, 4)
    q[3] = q[2] + rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    return _state(q, rng.normal(size=2), rng.uniform(0, 1))


def _ortho_default(p):
    if p["potential"] == "modulated-gravity":
        return _state([-1.3, -0.6, -1.05, -2.8], [1.35, 0.25])
    return _state([1.3, -0.4, 0.85, 2.75], [1.7, 1.05])


def _ortho_integrals(p):
    if p["potential"] == "modulated-gravity":
        return []

    def formula(s, spec):
        r = (s.q[1] - s.q[0]) / (s.q[2] - s.q[3])
        return 0.5 * (p["M1"] * s.v[0] ** 2 + p["M2"] * s.v[1] ** 2) * (1 + r * r) - _U(spec, s)

    return [_energy_integral(lambda: build("orthogonal-to-join", p), formula, "I",
                             "½(m1q̇1²+m2q̇2²)(1+((q2−q1)/(q3−q4))²) − U", kind="jacobi")]


_register(CatalogEntry(
    "orthogonal-to-join",
    "two planar points moving orthogonally to their join",
    {"M1": 1.0, "M2": 2.0, "g": 9.81, "kappa": 1.0, "eps": 0.5, "omega": 2.0, "potential": "trap"},
    _ortho_build,
    _ortho_default,
    _ortho_sampler,
    _ortho_integrals,
    potentials=("none", "gravity", "modulated-gravity", "trap"),
))


# ---------------------------------------------------------------------------
# perpendicular pair, P1 orthogonal to the join: q = (x1, x2, y1, y2)
# ---------------------------------------------------------------------------


def _pair_build(p: dict) -> SystemSpec:
    _positive(p, "M1", "M2")
    _choice(p, "potential", {"none", "gravity", "trap"})
    _choice(p, "formulation", {"linear", "quadratic"})
    m1, m2 = p["M1"], p["M2"]

    def r1(q):
        return -(q[1] - q[0]) / (q[3] - q[2])

    def r2(q):
        return (q[3] - q[2]) / (q[1] - q[0])

    emb = EmbeddingModel((m1, m2), lambda q, t: [q[0], q[2], q[1], q[3]], dim=2, affine=True)
    pot = None
    if p["potential"] == "gravity":
        pot = _height_potential([(2, m1), (3, m2)], p["g"])
    elif p["potential"] == "trap":
        pot = _trap_potential(p["kappa"], [0, 1, 2, 3])
    if p["formulation"] == "linear":
        cons = ConstraintSet(
            lambda q, v, t: [r1(q) * v[0], r2(q) * v[1]],
            2,
            Structure("linear", 1.0, stationary=True),
            linear_coeffs=lambda q, t: [[r1(q), 0.0], [0.0, r2(q)]],
        )

        def guard(s):
            return abs(s.q[1] - s.q[0]) > 1e-6 and abs(s.q[3] - s.q[2]) > 1e-6
    else:
        # orthogonality of P1's velocity to the join, plus perpendicular velocities
        def alpha(q, v, t):
            a1 = r1(q) * v[0]
            return [a1, -v[0] * v[1] / a1]

        cons = ConstraintSet(alpha, 2, Structure("homogeneous", 1.0, stationary=True))

        def guard(s):
            return (abs(s.q[1] - s.q[0]) > 1e-6 and abs(s.q[3] - s.q[2]) > 1e-6
                    and abs(s.v[0]) > GUARD_EPS)
    return SystemSpec(ChartDims(4, 2), cons, emb, EnergyModel.from_embedding(emb, pot), guard,
                      f"perpendicular pair ({p['formulation']})")


def _pair_sampler(p, rng):
    q = rng.uniform(-1.5, 1.5, 4)
    q[1] = q[0] + rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    q[3] = q[2] + rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)
    v = rng.normal(size=2)
    v[0] = rng.choice([-1, 1]) * rng.uniform(0.3, 2.0)
    return _state(q, v, rng.uniform(0, 1))


def _pair_integrals(p):
    def formula(s, spec):
        q, v = s.q, s.v
        r = (q[1] - q[0]) / (q[3] - q[2])
        return (0.5 * p["M1"] * v[0] ** 2 * (1 + r * r) + 0.5 * p["M2"] * v[1] ** 2 * (1 + 1 / (r * r))
                - _U(spec, s))

    return [_energy_integral(lambda: build("perp-pair-join", p), formula, "I",
                             "½M1q̇1²(1+r²) + ½M2q̇2²(1+r⁻²) − U, r=(q2−q1)/(q4−q3)",
                             kind="jacobi" if p["formulation"] == "linear" else "energy")]


_register(CatalogEntry(
    "perp-pair-join",
    "perpendicular velocities with P1 moving orthogonally to the join",
    {"M1": 1.0, "M2": 1.0, "g": 9.81, "kappa": 1.0, "potential": "none", "formulation": "linear"},
    _pair_build,
    lambda p: _state([-1.0, -2.2, 1.0, 2.8], [-0.5, -1.9]),
    _pair_sampler,
    _pair_integrals,
    potentials=("none", "gravity", "trap"),
))


# ---------------------------------------------------------------------------
# affine particle: q = (x, y, z), q̇3 = a q1 q̇2 + b q2 q̇1 + c
# ---------------------------------------------------------------------------


def _affine_build(p: dict) -> SystemSpec:
    _positive(p, "M")
    _choice(p, "potential", {"none", "planar-trap", "full-trap"})
    a, b, c, kappa = p["a"], p["b"], p["c"], p["kappa"]
    if c == 0:
        raise ConfigurationError("affine offset c must be nonzero")

    def alpha(q, v, t):
        return [a * q[0] * v[1] + b * q[1] * v[0] + c]

    emb = EmbeddingModel((p["M"],), lambda q, t: [q[0], q[1], q[2]], dim=3, affine=True)
    pot = None
    # V is the potential energy, U = -V
    if p["potential"] == "planar-trap":
        def pot(q, t):
            return -0.5 * kappa * (q[0] * q[0] + q[1] * q[1])
    elif p["potential"] == "full-trap":
        def pot(q, t):
            return -0.5 * kappa * (q[0] * q[0] + q[1] * q[1] + q[2] * q[2])
    cons = ConstraintSet(
        alpha, 1, Structure("affine", None, stationary=True, chaplygin=True),
        linear_coeffs=lambda q, t: [[b * q[1], a * q[0]]],
        affine_offset=lambda t: [c],
    )
    return SystemSpec(ChartDims(3, 2), cons, emb, EnergyModel.from_embedding(emb, pot), label="affine particle")


def _affine_sampler(p, rng):
    return _state(rng.uniform(-1.5, 1.5, 3), rng.normal(size=2), rng.uniform(0, 1))


def _affine_integrals(p):
    if p["potential"] == "full-trap":
        return []
    a, b, c, mass = p["a"], p["b"], p["c"], p["M"]

    def formula(s, spec):
        q, v = s.q, s.v
        ell = a * q[0] * v[1] + b * q[1] * v[0]
        return 0.5 * mass * (v[0] ** 2 + v[1] ** 2) + 0.5 * mass * (ell + c) * (ell - c) - _U(spec, s)

    return [_energy_integral(lambda: build("affine-particle", p), formula, "E",
                             "½M(q̇1²+q̇2²) + ½M(ℓ+c)(ℓ−c) + V, ℓ = a q1 q̇2 + b q2 q̇1", kind="affine")]


def _affine_printed(p):
    if p["potential"] == "full-trap":
        return []
    a, b, c, mass = p["a"], p["b"], p["c"], p["M"]

    def printed(s):
        q, v = s.q, s.v
        ell = a * q[0] * v[1] + b * q[1] * v[0]
        return 0.5 * mass * (v[0] ** 2 + v[1] ** 2) - 0.5 * mass * (ell + c) * (ell - c)

    return [Integral("printed", "affine", printed, "½M(q̇1²+q̇2²) − ½M(ℓ+c)(ℓ−c) as transcribed")]


_register(CatalogEntry(
    "affine-particle",
    "particle under an affine velocity constraint",
    {"M": 1.0, "a": 0.5, "b": 0.3, "c": 1.0, "kappa": 1.0, "potential": "planar-trap"},
    _affine_build,
    lambda p: _state([0.5, -0.3, 0.0], [0.4, 0.7]),
    _affine_sampler,
    _affine_integrals,
    _affine_printed,
    potentials=("none", "planar-trap", "full-trap"),
))
