"""Domain types: dimensions, states, constraint sets, embedding/energy models, systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diff
from .diff import DUAL, DerivativeBackend, Partials, primal
from .errors import ConfigurationError, InadmissibleStateError, SingularityError

TAU_CLS = 1e-9


@dataclass(frozen=True)
class ChartDims:
    """Coordinate count ``n``, independent velocities ``m`` and constraints ``k = n - m``."""

    n: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"need at least one independent velocity, got m={self.m}")
        if self.m > self.n:
            raise ConfigurationError(f"m={self.m} exceeds n={self.n}")

    @property
    def k(self) -> int:
        return self.n - self.m

    @classmethod
    def from_counts(cls, n: int, k: int) -> "ChartDims":
        if k >= n:
            raise ConfigurationError(f"constraint count k={k} must be below n={n}")
        if k < 0:
            raise ConfigurationError(f"negative constraint count k={k}")
        return cls(n, n - k)


@dataclass(frozen=True)
class KinematicState:
    """Phase point: all coordinates ``q``, independent velocities ``v``, time ``t``."""

    q: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.array(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(-1))
        object.__setattr__(self, "t", float(self.t))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v)) and math.isfinite(self.t))

    def replace(self, q=None, v=None, t=None) -> "KinematicState":
        return KinematicState(
            self.q if q is None else q, self.v if v is None else v, self.t if t is None else t
        )


@dataclass(frozen=True)
class Structure:
    """Structural class of a constraint set.

    ``kind`` is one of ``general``, ``homogeneous``, ``linear``, ``affine``;
    ``degree`` is the homogeneity degree when known. ``stationary`` means no
    explicit time dependence; ``chaplygin`` means the constraints do not
    involve the dependent coordinates.
    """

    kind: str = "general"
    degree: float | None = None
    stationary: bool = False
    chaplygin: bool = False
    diagnostic: str = ""

    def __post_init__(self):
        if self.kind not in ("general", "homogeneous", "linear", "affine"):
            raise ConfigurationError(f"unknown structure kind {self.kind!r}")
        if self.kind == "linear" and self.degree is None:
            object.__setattr__(self, "degree", 1.0)

    @property
    def tag(self) -> str:
        if self.kind == "homogeneous":
            d = self.degree
            ds = str(int(d)) if d is not None and float(d).is_integer() else f"{d:g}"
            return f"homogeneous({ds})"
        return self.kind

    @property
    def degree_one(self) -> bool:
        """Whether Euler's relation ``v·∂α/∂v = α`` holds (linear or homogeneous of degree 1)."""
        return self.kind == "linear" or (self.kind == "homogeneous" and self.degree == 1.0)

    def __str__(self) -> str:
        return self.tag


@dataclass(frozen=True)
class ConstraintSet:
    """Explicit velocity constraints ``q̇_{m+ν} = α_ν(q, v, t)``, ν = 1..k.

    ``alpha`` maps ``(q, v, t)`` to a sequence of ``k`` values. Optional
    structured data: ``linear_coeffs(q, t) -> k×m`` with ``α = a·v`` (plus
    ``affine_offset(t) -> k`` for affine constraints) and
    ``quadratic = (gamma, beta)`` for the rational form
    ``α_ν = vᵀγ^ν v / β^ν·v``.
    """

    alpha: Callable
    k: int
    structure: Structure = Structure()
    linear_coeffs: Callable | None = None
    affine_offset: Callable | None = None
    quadratic: tuple[Callable, Callable] | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ConfigurationError("negative constraint count")

    def values(self, q, v, t) -> np.ndarray:
        try:
            out = [primal(x) for x in self.alpha(list(q), list(v), t)]
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise SingularityError(f"constraint evaluation failed: {exc}") from exc
        arr = np.array(out, dtype=float)
        if arr.shape != (self.k,):
            raise ConfigurationError(f"alpha returned {arr.shape[0]} values, expected k={self.k}")
        if not np.all(np.isfinite(arr)):
            raise SingularityError("non-finite constraint value", index=(int(np.argmin(np.isfinite(arr))),))
        return arr

    def partials(self, s: KinematicState, backend: DerivativeBackend = DUAL, order: int = 2) -> Partials:
        return backend.partials(self.alpha, [s.q, s.v, s.t], ["q", "v", "t"], order)

    def __call__(self, q, v, t):
        return self.alpha(q, v, t)


def _mass_vector(masses: Sequence[float], dim: int) -> np.ndarray:
    return np.repeat(np.asarray(masses, dtype=float), dim)


@dataclass(frozen=True)
class EmbeddingModel:
    """Positions of ``N`` point masses in ``dim``-space as a function of ``(q, t)``.

    ``position(q, t)`` returns the flat list ``(P₁, …, P_N)`` of length
    ``N*dim``. Set ``affine=True`` only when the map is affine in ``q`` and
    time independent; the metric is then cached.
    """

    masses: tuple
    position: Callable
    dim: int = 3
    affine: bool = False

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        if not masses:
            raise ConfigurationError("embedding needs at least one point mass")
        for i, mass in enumerate(masses):
            if not (mass > 0.0 and math.isfinite(mass)):
                raise ConfigurationError(f"mass M{i + 1}={mass} must be strictly positive")

    @property
    def point_count(self) -> int:
        return len(self.masses)

    @property
    def mass_vector(self) -> np.ndarray:
        return _mass_vector(self.masses, self.dim)

    def kinetic(self, q, qd, t):
        """½ Σ Mᵢ |Ṗᵢ|² with ``Ṗ`` obtained as a directional derivative of the position map."""
        _, xdot = diff.directional(self.position, [q, t], [qd, 1.0])
        mu = self.mass_vector
        total = 0.0
        for mass, x in zip(mu, xdot):
            total = total + 0.5 * mass * x * x
        return total


@dataclass(frozen=True)
class EnergyModel:
    """Kinetic energy ``T(q, q̇, t)``, force function ``U(q, t)`` and extra generalized forces.

    Forces are ``+∂U/∂q``, so
    uniform gravity along +y reads ``U = -M g y``. ``forces(q, qd, t)`` adds
    non-potential generalized forces; when present, energy claims are disabled.
    """

    kinetic: Callable
    potential: Callable | None = None
    forces: Callable | None = None

    @classmethod
    def from_embedding(
        cls, embedding: EmbeddingModel, potential: Callable | None = None, forces: Callable | None = None
    ) -> "EnergyModel":
        return cls(embedding.kinetic, potential, forces)

    @property
    def conservative(self) -> bool:
        return self.forces is None


def _always_admissible(s: KinematicState) -> bool:
    return True


@dataclass(frozen=True)
class SystemSpec:
    """A constrained mechanical system ready for simulation."""

    dims: ChartDims
    constraints: ConstraintSet
    embedding: EmbeddingModel | None = None
    energy: EnergyModel | None = None
    singular_guard: Callable[[KinematicState], bool] = _always_admissible
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dims.k != self.constraints.k:
            raise ConfigurationError(
                f"dims give k={self.dims.k} but constraint set has k={self.constraints.k}"
            )
        if self.embedding is None and self.energy is None:
            raise ConfigurationError("system needs an embedding or an energy model")
        if self.energy is None:
            object.__setattr__(self, "energy", EnergyModel.from_embedding(self.embedding))
        object.__setattr__(self, "_metric_cache", {})

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def m(self) -> int:
        return self.dims.m

    @property
    def k(self) -> int:
        return self.dims.k

    def check_state(self, s: KinematicState) -> None:
        if s.q.shape != (self.n,) or s.v.shape != (self.m,):
            raise InadmissibleStateError(
                f"state shape q{s.q.shape}/v{s.v.shape} does not match n={self.n}, m={self.m}"
            )
        if not s.is_finite():
            raise InadmissibleStateError("state has non-finite entries")
        if not self.singular_guard(s):
            raise InadmissibleStateError(f"state lies on the singular set of {self.label or 'system'}")

    def admissible(self, s: KinematicState) -> bool:
        try:
            self.check_state(s)
        except InadmissibleStateError:
            return False
        return True

    def dependent_velocities(self, s: KinematicState) -> np.ndarray:
        return self.constraints.values(s.q, s.v, s.t)

    def full_velocity(self, s: KinematicState) -> np.ndarray:
        return np.concatenate([s.v, self.dependent_velocities(s)])

    def restricted_kinetic(self, q, v, t):
        """T*(q, v, t) = T(q, v, α(q, v, t), t) for any number type."""
        dep = self.constraints.alpha(q, v, t)
        return self.energy.kinetic(q, list(v) + list(dep), t)

    def lagrangian(self, q, v, t):
        """L* = T* + U."""
        out = self.restricted_kinetic(q, v, t)
        if self.energy.potential is not None:
            out = out + self.energy.potential(q, t)
        return out

    def generalized_forces(self, s: KinematicState, backend: DerivativeBackend = DUAL) -> np.ndarray:
        """(F^(q₁), …, F^(qₙ)): ∂U/∂q plus any explicit non-potential forces."""
        forces = np.zeros(self.n)
        if self.energy.potential is not None:
            p = backend.partials(self.energy.potential, [s.q, s.t], ["q", "t"], order=1)
            forces += p.d("q")[0]
        if self.energy.forces is not None:
            qd = self.full_velocity(s)
            forces += np.array([primal(f) for f in self.energy.forces(list(s.q), list(qd), s.t)])
        return forces


# ---------------------------------------------------------------------------
# classification and validation
# ---------------------------------------------------------------------------


def _scale(values: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(values))) if values.size else 0.0)


def classify_constraints(
    constraints: ConstraintSet,
    samples: Sequence[KinematicState],
    m: int | None = None,
    tol: float = TAU_CLS,
    backend: DerivativeBackend = DUAL,
) -> Structure:
    """Finest structural tag consistent with every sample.

    linear ⊂ homogeneous(1) ⊂ general; affine when ``α`` is affine in ``v``
    with a nonzero velocity-free part. Homogeneity degree comes from the
    scaling law ``α(q, λv, t) = λᵈ α(q, v, t)`` over λ ∈ {½, 2, 3}.
    """
    if len(samples) < 8:
        raise ConfigurationError("classification needs at least 8 admissible samples")
    k = constraints.k
    if k == 0:
        return Structure("linear", 1.0, stationary=True, chaplygin=True)
    m = len(samples[0].v) if m is None else m
    affine_in_v = True
    offset_max = 0.0
    stationary = True
    chaplygin = True
    partials = []
    for s in samples:
        p = constraints.partials(s, backend, order=2)
        partials.append(p)
        alpha = p.value.astype(float)
        av = p.d("v")
        sc = _scale(np.concatenate([alpha, (np.abs(av) @ np.abs(s.v))]))
        if np.max(np.abs(p.dd("v", "v"))) > tol * sc:
            affine_in_v = False
        offset_max = max(offset_max, float(np.max(np.abs(alpha - av @ s.v))) / sc)
        if np.max(np.abs(p.d("t"))) > tol * sc:
            stationary = False
        if np.max(np.abs(p.d("q")[:, m:]), initial=0.0) > tol * sc:
            chaplygin = False
    if affine_in_v:
        kind = "linear" if offset_max <= tol else "affine"
        return Structure(kind, 1.0 if kind == "linear" else None, stationary, chaplygin)

    degrees = []
    diagnostic = ""
    for s, p in zip(samples, partials):
        alpha = p.value.astype(float)
        for lam in (0.5, 2.0, 3.0):
            try:
                scaled = constraints.values(s.q, lam * s.v, s.t)
            except (SingularityError, ConfigurationError):
                continue
            for a0, a1 in zip(alpha, scaled):
                if abs(a0) <= tol * _scale(alpha):
                    continue
                ratio = a1 / a0
                if ratio <= 0.0:
                    diagnostic = f"sign change under scaling by {lam}"
                    degrees.append(math.nan)
                    continue
                degrees.append(math.log(ratio) / math.log(lam))
    degrees = np.array(degrees)
    if degrees.size == 0 or not np.all(np.isfinite(degrees)):
        return Structure("general", None, stationary, chaplygin, diagnostic or "no usable scaling samples")
    d = float(np.mean(degrees))
    if float(np.max(np.abs(degrees - d))) > 1e3 * tol:
        return Structure(
            "general", None, stationary, chaplygin,
            f"inconsistent scaling degrees in [{degrees.min():.6g}, {degrees.max():.6g}]",
        )
    if abs(d - round(d)) <= 1e3 * tol:
        d = float(round(d))
    return Structure("homogeneous", d, stationary, chaplygin)


@dataclass(frozen=True)
class SystemTraits:
    """Constraint structure plus the system-level facts energy claims depend on."""

    structure: Structure
    chaplygin: bool  # α, T and forces free of the dependent coordinates
    lagrangian_free_of_dependent: bool  # ∂L*/∂q_{m+ν} ≡ 0
    stationary_lagrangian: bool  # ∂L*/∂t ≡ 0
    stationary_metric: bool  # T has no explicit time dependence
    conservative: bool  # forces derive from a potential only
    has_potential: bool


def classify_system(spec: SystemSpec, samples: Sequence[KinematicState], tol: float = TAU_CLS) -> SystemTraits:
    for s in samples:
        spec.check_state(s)
    structure = spec.constraints.structure
    if structure.kind == "general" and structure.degree is None:
        structure = classify_constraints(spec.constraints, samples, spec.m, tol)
    m = spec.m
    t_free_dep = True
    l_free_dep = True
    l_stat = True
    t_stat = True
    f_free_dep = True
    for s in samples:
        lp = jet_lagrangian_partials(spec, s, order=1)
        tp = diff.jet_partials(spec.restricted_kinetic, [s.q, s.v, s.t], ["q", "v", "t"], order=1)
        sc = _scale(np.array([tp.value[0], lp.value[0]], dtype=float))
        if np.max(np.abs(tp.d("q")[0, m:]), initial=0.0) > tol * sc:
            t_free_dep = False
        if np.max(np.abs(lp.d("q")[0, m:]), initial=0.0) > tol * sc:
            l_free_dep = False
        if abs(lp.d("t")[0, 0] if np.ndim(lp.d("t")) > 1 else lp.d("t")[0]) > tol * sc:
            l_stat = False
        qd = spec.full_velocity(s)
        tt = diff.jet_partials(spec.energy.kinetic, [s.q, qd, s.t], ["q", "qd", "t"], order=1)
        if abs(float(np.ravel(tt.d("t"))[0])) > tol * sc:
            t_stat = False
        if spec.energy.potential is not None and spec.k:
            up = diff.jet_partials(spec.energy.potential, [s.q, s.t], ["q", "t"], order=2)
            if np.max(np.abs(up.dd("q", "q")[0][:, m:])) > tol * sc:
                f_free_dep = False
        if spec.energy.forces is not None:
            f_free_dep = False
    return SystemTraits(
        structure=structure,
        chaplygin=structure.chaplygin and t_free_dep and f_free_dep,
        lagrangian_free_of_dependent=structure.chaplygin and l_free_dep,
        stationary_lagrangian=l_stat,
        stationary_metric=t_stat,
        conservative=spec.energy.conservative,
        has_potential=spec.energy.potential is not None,
    )


def jet_lagrangian_partials(spec: SystemSpec, s: KinematicState, order: int = 2) -> Partials:
    return diff.jet_partials(spec.lagrangian, [s.q, s.v, s.t], ["q", "v", "t"], order)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    worst: float = 0.0
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _metric_at(emb: EmbeddingModel, q, t):
    p = diff.jet_partials(emb.position, [q, t], ["q", "t"], order=1)
    jac = p.d("q")
    xt = np.ravel(p.grad[:, p.blocks["t"]])
    mu = emb.mass_vector
    g = jac.T @ (mu[:, None] * jac)
    b = jac.T @ (mu * xt)
    c = 0.5 * float(np.sum(mu * xt * xt))
    return g, b, c


def validate(spec: SystemSpec, samples: Sequence[KinematicState], tol: float = TAU_CLS) -> ValidationReport:
    """Check the invariants of ``spec`` at ``samples``; every check reports its worst residual."""
    if not samples:
        raise ConfigurationError("validation needs at least one sample")
    for s in samples:
        spec.check_state(s)
    checks = []
    worst = 0.0
    for s in samples:
        alpha = spec.dependent_velocities(s)
        worst = max(worst, float(np.max(np.abs(alpha), initial=0.0)))
    checks.append(Check("constraints finite", True, worst))

    if spec.embedding is not None:
        emb = spec.embedding
        sym = psd = quad = 0.0
        for s in samples:
            x = np.asarray([primal(v) for v in emb.position(list(s.q), s.t)])
            if x.shape != (emb.point_count * emb.dim,):
                raise ConfigurationError(
                    f"position map returned {x.shape[0]} components, expected {emb.point_count * emb.dim}"
                )
            g, b, c = _metric_at(emb, s.q, s.t)
            sym = max(sym, float(np.max(np.abs(g - g.T))))
            psd = min(psd, float(np.min(np.linalg.eigvalsh(0.5 * (g + g.T)))))
            qd = spec.full_velocity(s)
            t_model = primal(spec.energy.kinetic(list(s.q), list(qd), s.t))
            t_quad = 0.5 * qd @ g @ qd + b @ qd + c
            quad = max(quad, abs(t_model - t_quad) / max(1.0, abs(t_quad)))
        checks.append(Check("metric symmetric", sym <= 1e-12 * max(1.0, np.max(emb.masses)), sym))
        checks.append(Check("metric positive semidefinite", psd >= -1e-12, psd))
        checks.append(Check("kinetic energy quadratic form", quad <= 1e-12, quad))

    if spec.energy.potential is not None:
        gap = 0.0
        for s in samples:
            exact = diff.jet_partials(spec.energy.potential, [s.q, s.t], ["q", "t"], order=1).d("q")[0]
            approx = diff.fd_partials(spec.energy.potential, [s.q, s.t], ["q", "t"], order=1).d("q")[0]
            gap = max(gap, float(np.max(np.abs(exact - approx))))
        checks.append(Check("potential gradient", gap <= 1e-6, gap))

    declared = spec.constraints.structure
    if declared.kind in ("linear", "affine") and spec.k:
        lin = off = 0.0
        for s in samples:
            p = spec.constraints.partials(s)
            sc = _scale(p.value.astype(float))
            lin = max(lin, float(np.max(np.abs(p.dd("v", "v")))) / sc)
            offset = p.value.astype(float) - p.d("v") @ s.v
            if declared.kind == "linear":
                off = max(off, float(np.max(np.abs(offset))) / sc)
            if spec.constraints.linear_coeffs is not None:
                a = np.array([[primal(x) for x in row] for row in spec.constraints.linear_coeffs(list(s.q), s.t)])
                lin = max(lin, float(np.max(np.abs(a - p.d("v")))) / sc)
        checks.append(Check(f"{declared.kind} structure", max(lin, off) <= tol, max(lin, off)))
    elif declared.kind == "homogeneous" and spec.k:
        res = 0.0
        d = declared.degree
        for s in samples:
            base = spec.dependent_velocities(s)
            for lam in (0.5, 2.0, 3.0):
                s2 = s.replace(v=lam * s.v)
                if not spec.admissible(s2):
                    continue
                scaled = spec.dependent_velocities(s2)
                res = max(res, float(np.max(np.abs(scaled - lam**d * base))) / _scale(base))
        checks.append(Check(f"homogeneous({d:g}) structure", res <= tol, res))
    if declared.stationary and spec.k:
        worst = 0.0
        for s in samples:
            worst = max(worst, float(np.max(np.abs(spec.constraints.partials(s, order=1).d("t")))))
        checks.append(Check("stationary constraints", worst <= tol, worst))
    if declared.chaplygin and spec.k:
        worst = 0.0
        for s in samples:
            worst = max(worst, float(np.max(np.abs(spec.constraints.partials(s, order=1).d("q")[:, spec.m :]))))
        checks.append(Check("constraints free of dependent coordinates", worst <= tol, worst))
    return ValidationReport(tuple(checks))
