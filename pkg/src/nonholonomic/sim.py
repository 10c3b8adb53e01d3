"""Adaptive integration of the reduced system (q, v) with per-step diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853

from .core import KinematicState, SystemSpec, SystemTraits
from .dynamics import accel_lagrangian, accel_newtonian, reduce_special
from .errors import FormulationError, InadmissibleStateError, SingularityError

PATHS = ("newtonian", "lagrangian", "reduced")
# stage evaluations per DOP853 step attempt (11 new stages plus the endpoint)
_EVALS_PER_ATTEMPT = 12


class _GuardViolation(Exception):
    pass


def accelerations(spec: SystemSpec, s: KinematicState, path: str = "newtonian",
                  traits: SystemTraits | None = None) -> np.ndarray:
    if path == "newtonian":
        return accel_newtonian(spec, s)
    if path == "lagrangian":
        return accel_lagrangian(spec, s)
    if path == "reduced":
        return reduce_special(spec, s, traits=traits)
    raise ValueError(f"unknown dynamics path {path!r}; expected one of {PATHS}")


def default_path(spec: SystemSpec) -> str:
    return "newtonian" if spec.embedding is not None else "lagrangian"


def derivative_field(spec: SystemSpec, s: KinematicState, path: str | None = None,
                     traits: SystemTraits | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(q̇ on all coordinates, independent accelerations) at ``s``."""
    spec.check_state(s)
    path = path or default_path(spec)
    return spec.full_velocity(s), accelerations(spec, s, path, traits)


@dataclass
class Trajectory:
    """Accepted steps of one integration. ``aborted`` holds the reason when the run stopped early."""

    n: int
    m: int
    t: list = field(default_factory=list)
    q: list = field(default_factory=list)
    v: list = field(default_factory=list)
    a: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    integrals: dict = field(default_factory=dict)
    applied_form: str = ""
    stats: dict = field(default_factory=dict)
    aborted: str | None = None

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> KinematicState:
        return KinematicState(self.q[i], self.v[i], self.t[i])

    def states(self) -> list[KinematicState]:
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self) -> KinematicState:
        return self.state(-1)

    @property
    def completed(self) -> bool:
        return self.aborted is None


Diagnostics = Callable[[KinematicState, np.ndarray], dict]


def integrate(
    spec: SystemSpec,
    s0: KinematicState,
    t_end: float,
    tol: float = 1e-10,
    path: str | None = None,
    traits: SystemTraits | None = None,
    integrals: Sequence | None = None,
    diagnostics: bool = True,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Integrate from ``s0.t`` to ``t_end`` with rtol = atol = ``tol``.

    ``integrals`` are callables of a state recorded at each accepted step.
    With ``diagnostics`` the energy and the balance residual are recorded too.
    Guard violations, singular assembly, step underflow and non-finite states
    stop the run; the partial trajectory carries the reason.
    """
    if not (1e-13 <= tol <= 1e-3):
        raise ValueError(f"tol={tol} outside [1e-13, 1e-3]")
    spec.check_state(s0)
    if not t_end > s0.t:
        raise ValueError("t_end must exceed the initial time")
    path = path or default_path(spec)
    n, m = spec.n, spec.m
    integrals = list(integrals or [])
    traj = Trajectory(n, m, integrals={getattr(f, "name", f"I{i + 1}"): [] for i, f in enumerate(integrals)})
    names = list(traj.integrals)

    if diagnostics:
        from . import energy as energy_mod

        if traits is None and spec.meta.get("id") is not None:
            traits = energy_mod._traits_for(spec, None)

    def record(s: KinematicState, a: np.ndarray) -> None:
        traj.t.append(s.t)
        traj.q.append(s.q.copy())
        traj.v.append(s.v.copy())
        traj.a.append(np.asarray(a, float).copy())
        if diagnostics:
            rep = energy_mod.balance_residual(spec, s, a, traits=traits)
            traj.energy.append(rep.energy)
            traj.residual.append(rep.residual)
            traj.applied_form = rep.applied_form
        for name, f in zip(names, integrals):
            traj.integrals[name].append(float(f(s)))

    def fun(t, y):
        s = KinematicState(y[:n], y[n:], t)
        if not s.is_finite():
            raise _GuardViolation("non-finite state")
        if not spec.singular_guard(s):
            raise _GuardViolation(f"guard violated at t={t:.17g}")
        qd = spec.full_velocity(s)
        a = accelerations(spec, s, path, traits)
        return np.concatenate([qd, a])

    calls = [0]

    def counted(t, y):
        calls[0] += 1
        return fun(t, y)

    y0 = np.concatenate([s0.q, s0.v])
    record(s0, accelerations(spec, s0, path, traits))
    steps = rejections = 0
    h_min, h_max = np.inf, 0.0
    try:
        solver = DOP853(counted, s0.t, y0, t_end, rtol=tol, atol=tol)
        span = t_end - s0.t
        while solver.status == "running":
            if steps >= max_steps:
                traj.aborted = f"step limit {max_steps} reached"
                break
            before = calls[0]
            t_prev = solver.t
            message = solver.step()
            if solver.status == "failed":
                traj.aborted = f"step underflow: {message}"
                break
            h = solver.t - t_prev
            if h < 1e-14 * span and solver.status == "running":
                traj.aborted = f"step underflow (h={h:.3e})"
                break
            attempts = max(1, (calls[0] - before) // _EVALS_PER_ATTEMPT)
            rejections += attempts - 1
            steps += 1
            h_min, h_max = min(h_min, h), max(h_max, h)
            y = solver.y
            s = KinematicState(y[:n], y[n:], solver.t)
            if not s.is_finite():
                traj.aborted = "non-finite state"
                break
            if not spec.singular_guard(s):
                traj.aborted = f"guard violated at t={solver.t:.17g}"
                break
            record(s, accelerations(spec, s, path, traits))
    except _GuardViolation as exc:
        traj.aborted = str(exc)
    except (SingularityError, FormulationError, InadmissibleStateError) as exc:
        traj.aborted = f"{type(exc).__name__}: {exc}"
    traj.stats = {
        "steps": steps,
        "rejections": rejections,
        "evaluations": calls[0],
        "h_min": float(h_min) if steps else 0.0,
        "h_max": float(h_max),
        "path": path,
    }
    return traj


def drift_report(traj: Trajectory, integrals: Sequence | None = None) -> dict:
    """Max over samples of |I(t) − I(t₀)| / max(1, |I(t₀)|) for each integral."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    series = dict(traj.integrals)
    if integrals is not None:
        states = traj.states()
        for i, f in enumerate(integrals):
            series[getattr(f, "name", f"I{i + 1}")] = [float(f(s)) for s in states]
    out = {}
    for name, values in series.items():
        vals = np.asarray(values, float)
        if vals.size == 0:
            continue
        out[name] = float(np.max(np.abs(vals - vals[0])) / max(1.0, abs(vals[0])))
    return out


def time_reversal_error(
    spec: SystemSpec,
    s0: KinematicState,
    t_end: float,
    tol: float = 1e-10,
    reversed_spec: SystemSpec | None = None,
    path: str | None = None,
) -> float:
    """Integrate forward, negate v, integrate back; distance of the return point from ``s0``.

    Systems whose dependent velocities come from a radical need
    ``reversed_spec`` built on the opposite branch.
    """
    fwd = integrate(spec, s0, s0.t + t_end, tol, path=path, diagnostics=False)
    if not fwd.completed:
        raise SingularityError(f"forward run aborted: {fwd.aborted}")
    back_spec = reversed_spec or spec
    end = fwd.final
    back = integrate(back_spec, KinematicState(end.q, -end.v, s0.t), s0.t + t_end, tol, path=path,
                     diagnostics=False)
    if not back.completed:
        raise SingularityError(f"reverse run aborted: {back.aborted}")
    ret = back.final
    return float(max(np.max(np.abs(ret.q - s0.q)), np.max(np.abs(-ret.v - s0.v))))
