"""Forward-mode differentiation for user-supplied mechanical functions.

Two number types share one tag ordering so they can nest freely:

* :class:`Dual` carries a single scalar tangent. It is used for directional
  derivatives, most importantly the total time derivative along the
  constrained motion.
* :class:`Jet` carries a full gradient and (optionally) Hessian over a block
  of seeded variables. It is the workhorse for assembling equations of motion.

Every seeding call draws a fresh, strictly larger tag. In a binary operation
the operand with the larger tag is the outer one and treats the other as a
constant, so derivatives taken inside a function that is itself being
differentiated never get confused.

User functions must do arithmetic with ``+ - * / **`` and the elementary
functions exported here (:func:`sqrt`, :func:`sin`, ...), which dispatch on
floats, duals and jets alike.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SingularityError

_tags = itertools.count(1)


def _tag(x) -> int:
    return getattr(x, "tag", 0)


def primal(x) -> float:
    """Strip every perturbation layer and return the underlying float."""
    while isinstance(x, (Dual, Jet)):
        x = x.val
    return float(x)


# ---------------------------------------------------------------------------
# elementary functions: value, first and second derivative in terms of x, f(x)
# ---------------------------------------------------------------------------


def _fsqrt(x: float) -> float:
    return math.sqrt(x) if x >= 0.0 else math.nan


def _flog(x: float) -> float:
    return math.log(x) if x > 0.0 else math.nan


@dataclass(frozen=True)
class _Elementary:
    name: str
    f: Callable
    d1: Callable  # (x, fx) -> f'(x)
    d2: Callable  # (x, fx) -> f''(x)


_SQRT = _Elementary(
    "sqrt",
    _fsqrt,
    lambda x, fx: 0.5 / fx,
    lambda x, fx: -0.25 / (fx * x),
)
_SIN = _Elementary("sin", math.sin, lambda x, fx: cos(x), lambda x, fx: -fx)
_COS = _Elementary("cos", math.cos, lambda x, fx: -sin(x), lambda x, fx: -fx)
_TAN = _Elementary(
    "tan", math.tan, lambda x, fx: 1.0 + fx * fx, lambda x, fx: 2.0 * fx * (1.0 + fx * fx)
)
_EXP = _Elementary("exp", math.exp, lambda x, fx: fx, lambda x, fx: fx)
_LOG = _Elementary("log", _flog, lambda x, fx: 1.0 / x, lambda x, fx: -1.0 / (x * x))
_ATAN = _Elementary(
    "atan",
    math.atan,
    lambda x, fx: 1.0 / (1.0 + x * x),
    lambda x, fx: -2.0 * x / ((1.0 + x * x) * (1.0 + x * x)),
)
_RECIP = _Elementary(
    "recip", lambda x: 1.0 / x, lambda x, fx: -fx * fx, lambda x, fx: 2.0 * fx * fx * fx
)


def _apply(fn: _Elementary, x):
    if isinstance(x, (Dual, Jet)):
        return x._unary(fn)
    return fn.f(x)


def sqrt(x):
    return _apply(_SQRT, x)


def sin(x):
    return _apply(_SIN, x)


def cos(x):
    return _apply(_COS, x)


def tan(x):
    return _apply(_TAN, x)


def exp(x):
    return _apply(_EXP, x)


def log(x):
    return _apply(_LOG, x)


def atan(x):
    return _apply(_ATAN, x)


def _recip(x):
    return _apply(_RECIP, x)


def _real_pow(x: float, n: float) -> float:
    # negative base with a fractional exponent has no real value
    if x < 0.0 and n != int(n):
        return float("nan")
    return float(x) ** n


def _power(n: float) -> _Elementary:
    return _Elementary(
        f"pow{n}",
        lambda x: _real_pow(x, n),
        lambda x, fx: n * _real_pow(x, n - 1),
        lambda x, fx: n * (n - 1) * _real_pow(x, n - 2),
    )


class _Number:
    """Shared operator plumbing; subclasses implement the same-tag rules."""

    __slots__ = ()
    tag: int

    # subclasses provide: _add_same, _mul_same, _scale(c), _shift(c), _unary

    def __add__(self, o):
        if isinstance(o, np.ndarray):
            return NotImplemented
        to = _tag(o)
        if to > self.tag:
            return o._shift(self)
        if to == self.tag:
            return self._add_same(o)
        return self._shift(o)

    __radd__ = __add__

    def __neg__(self):
        return self._scale(-1.0)

    def __pos__(self):
        return self

    def __sub__(self, o):
        if isinstance(o, np.ndarray):
            return NotImplemented
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, np.ndarray):
            return NotImplemented
        to = _tag(o)
        if to > self.tag:
            return o._scale(self)
        if to == self.tag:
            return self._mul_same(o)
        return self._scale(o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, np.ndarray):
            return NotImplemented
        to = _tag(o)
        if to > self.tag:
            return o._unary(_RECIP)._scale(self)
        if to == self.tag:
            return self._mul_same(o._unary(_RECIP))
        return self._scale(_recip(o))

    def __rtruediv__(self, o):
        return self._unary(_RECIP)._scale(o)

    def __pow__(self, n):
        if isinstance(n, (Dual, Jet)):
            return exp(n * log(self))
        if n == 2:
            return self * self
        if n == 1:
            return self
        return self._unary(_power(n))

    def __rpow__(self, base):
        return exp(self * log(base))

    def __abs__(self):
        return -self if primal(self) < 0.0 else self

    def __float__(self):
        return primal(self)

    def __lt__(self, o):
        return primal(self) < primal(o)

    def __le__(self, o):
        return primal(self) <= primal(o)

    def __gt__(self, o):
        return primal(self) > primal(o)

    def __ge__(self, o):
        return primal(self) >= primal(o)


class Dual(_Number):
    """Number ``val + eps·ε`` with ε² = 0; ``val`` and ``eps`` may be lower-tag numbers."""

    __slots__ = ("val", "eps", "tag")

    def __init__(self, val, eps, tag: int):
        self.val = val
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    def _add_same(self, o: "Dual") -> "Dual":
        return Dual(self.val + o.val, self.eps + o.eps, self.tag)

    def _mul_same(self, o: "Dual") -> "Dual":
        return Dual(self.val * o.val, self.val * o.eps + self.eps * o.val, self.tag)

    def _shift(self, c) -> "Dual":
        return Dual(self.val + c, self.eps, self.tag)

    def _scale(self, c) -> "Dual":
        return Dual(self.val * c, self.eps * c, self.tag)

    def _unary(self, fn: _Elementary) -> "Dual":
        fx = _apply(fn, self.val)
        return Dual(fx, fn.d1(self.val, fx) * self.eps, self.tag)


class Jet(_Number):
    """Second-order truncated Taylor expansion over a seeded variable block.

    ``grad`` has shape ``(p,)``; ``hess`` has shape ``(p, p)`` or is ``None``
    for first-order jets. Entries may be lower-tag numbers (object arrays).
    """

    __slots__ = ("val", "grad", "hess", "tag")

    def __init__(self, val, grad: np.ndarray, hess: np.ndarray | None, tag: int):
        self.val = val
        self.grad = grad
        self.hess = hess
        self.tag = tag

    def __repr__(self) -> str:
        return f"Jet({self.val!r}, grad={self.grad!r}, tag={self.tag})"

    def _add_same(self, o: "Jet") -> "Jet":
        h = None if self.hess is None else self.hess + o.hess
        return Jet(self.val + o.val, self.grad + o.grad, h, self.tag)

    def _mul_same(self, o: "Jet") -> "Jet":
        a, b = self.val, o.val
        g = self.grad * b + o.grad * a
        h = None
        if self.hess is not None:
            cross = np.multiply.outer(self.grad, o.grad)
            h = self.hess * b + o.hess * a + cross + cross.T
        return Jet(a * b, g, h, self.tag)

    def _shift(self, c) -> "Jet":
        return Jet(self.val + c, self.grad, self.hess, self.tag)

    def _scale(self, c) -> "Jet":
        h = None if self.hess is None else self.hess * c
        return Jet(self.val * c, self.grad * c, h, self.tag)

    def _unary(self, fn: _Elementary) -> "Jet":
        x = self.val
        fx = _apply(fn, x)
        d1 = fn.d1(x, fx)
        g = self.grad * d1
        h = None
        if self.hess is not None:
            h = self.hess * d1 + np.multiply.outer(self.grad, self.grad) * fn.d2(x, fx)
        return Jet(fx, g, h, self.tag)


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partials:
    """Value, gradient and Hessian of a vector function over a flat variable vector.

    ``value`` has shape ``(r,)``, ``grad`` ``(r, p)`` and ``hess`` ``(r, p, p)``
    (``None`` for first order). ``blocks`` maps argument names to slices of
    the flat variable vector.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None
    blocks: dict

    def d(self, name: str) -> np.ndarray:
        return self.grad[:, self.blocks[name]]

    def dd(self, a: str, b: str) -> np.ndarray:
        if self.hess is None:
            raise ValueError("second derivatives were not requested")
        return self.hess[:, self.blocks[a], self.blocks[b]]


def _flatten_args(args: Sequence, names: Sequence[str]):
    sizes, flat, blocks, start = [], [], {}, 0
    for name, a in zip(names, args):
        if np.ndim(a) == 0:
            flat.append(a)
            blocks[name] = start
            sizes.append(None)
            start += 1
        else:
            arr = list(a)
            flat.extend(arr)
            blocks[name] = slice(start, start + len(arr))
            sizes.append(len(arr))
            start += len(arr)
    return flat, sizes, blocks


def _unflatten(flat: list, sizes: list) -> list:
    out, i = [], 0
    for s in sizes:
        if s is None:
            out.append(flat[i])
            i += 1
        else:
            out.append(flat[i : i + s])
            i += s
    return out


def _as_list(res) -> tuple[list, bool]:
    if isinstance(res, (list, tuple, np.ndarray)):
        return list(res), True
    return [res], False


def _check_finite(arr: np.ndarray, what: str) -> None:
    if arr.dtype != object and not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))
        raise SingularityError(f"non-finite {what}", index=tuple(int(i) for i in bad[0]))


def _call(func, args):
    try:
        return func(*args)
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise SingularityError(f"evaluation failed: {exc}") from exc


def jet_partials(
    func: Callable, args: Sequence, names: Sequence[str], order: int = 2
) -> Partials:
    """Seed every entry of ``args`` as a jet variable and evaluate ``func(*args)``.

    ``func`` may return a scalar or a sequence; the result is always stacked
    as a vector of outputs.
    """
    flat, sizes, blocks = _flatten_args(args, names)
    p = len(flat)
    tag = next(_tags)
    eye = np.eye(p)
    zero_h = np.zeros((p, p)) if order >= 2 else None
    seeded = [Jet(x, eye[i], zero_h, tag) for i, x in enumerate(flat)]
    res, _ = _as_list(_call(func, _unflatten(seeded, sizes)))
    r = len(res)
    vals = [None] * r
    grads = [None] * r
    hesss = [None] * r
    for j, y in enumerate(res):
        if isinstance(y, Jet) and y.tag == tag:
            vals[j], grads[j], hesss[j] = y.val, y.grad, y.hess
        else:
            vals[j], grads[j], hesss[j] = y, np.zeros(p), zero_h
    value = _stack(vals)
    grad = np.array(grads) if r else np.zeros((0, p))
    hess = None
    if order >= 2:
        hess = np.array(hesss) if r else np.zeros((0, p, p))
    _check_finite(value, "value")
    _check_finite(grad, "first derivative")
    if hess is not None:
        _check_finite(hess, "second derivative")
    return Partials(value, grad, hess, blocks)


def _stack(vals: list) -> np.ndarray:
    if any(isinstance(v, (Dual, Jet)) for v in vals):
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
        return out
    return np.array([float(v) for v in vals], dtype=float)


def fd_partials(
    func: Callable,
    args: Sequence,
    names: Sequence[str],
    order: int = 2,
    step: float = 1e-5,
    step2: float = 1e-4,
) -> Partials:
    """Central finite-difference counterpart of :func:`jet_partials`.

    Per-variable steps are ``step * max(1, |x|)``; second derivatives use the
    coarser ``step2`` to keep cancellation error below truncation error.
    """
    flat, sizes, blocks = _flatten_args(args, names)
    z0 = np.array([primal(x) for x in flat], dtype=float)
    p = len(z0)

    def f(z):
        res, _ = _as_list(_call(func, _unflatten(list(z), sizes)))
        return np.array([primal(y) for y in res], dtype=float)

    value = f(z0)
    r = len(value)
    grad = np.zeros((r, p))
    for i in range(p):
        h = step * max(1.0, abs(z0[i]))
        e = np.zeros(p)
        e[i] = h
        grad[:, i] = (f(z0 + e) - f(z0 - e)) / (2.0 * h)
    hess = None
    if order >= 2:
        hess = np.zeros((r, p, p))
        hs = [step2 * max(1.0, abs(z)) for z in z0]
        for i in range(p):
            ei = np.zeros(p)
            ei[i] = hs[i]
            hess[:, i, i] = (f(z0 + ei) - 2.0 * value + f(z0 - ei)) / (hs[i] ** 2)
            for j in range(i + 1, p):
                ej = np.zeros(p)
                ej[j] = hs[j]
                hij = (
                    f(z0 + ei + ej) - f(z0 + ei - ej) - f(z0 - ei + ej) + f(z0 - ei - ej)
                ) / (4.0 * hs[i] * hs[j])
                hess[:, i, j] = hij
                hess[:, j, i] = hij
    _check_finite(value, "value")
    _check_finite(grad, "first derivative")
    return Partials(value, grad, hess, blocks)


def directional(func: Callable, args: Sequence, directions: Sequence):
    """Derivative of ``func(*args)`` along ``directions`` (same structure as ``args``).

    Returns ``(value, derivative)``; both are scalars or lists matching the
    output of ``func``.
    """
    tag = next(_tags)
    seeded = []
    for a, d in zip(args, directions):
        if np.ndim(a) == 0:
            seeded.append(Dual(a, d, tag))
        else:
            seeded.append([Dual(x, dx, tag) for x, dx in zip(a, d)])
    res, is_seq = _as_list(_call(func, seeded))
    vals, ders = [], []
    for y in res:
        if isinstance(y, Dual) and y.tag == tag:
            vals.append(y.val)
            ders.append(y.eps)
        else:
            vals.append(y)
            ders.append(0.0)
    for d in ders:
        if not isinstance(d, (Dual, Jet)) and not math.isfinite(d):
            raise SingularityError("non-finite directional derivative")
    if is_seq:
        return vals, ders
    return vals[0], ders[0]


@dataclass(frozen=True)
class DerivativeBackend:
    """Selects between exact forward mode (``"dual"``) and central differences (``"fd"``)."""

    mode: str = "dual"
    fd_step: float = 1e-5
    fd_step2: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("dual", "fd"):
            raise ValueError(f"unknown derivative mode {self.mode!r}")

    def partials(self, func, args, names, order=2) -> Partials:
        if self.mode == "dual":
            return jet_partials(func, args, names, order)
        return fd_partials(func, args, names, order, self.fd_step, self.fd_step2)

    def directional(self, func, args, directions):
        if self.mode == "dual":
            return directional(func, args, directions)
        h = self.fd_step
        plus = [np.asarray(a, dtype=float) + h * np.asarray(d, dtype=float) for a, d in zip(args, directions)]
        minus = [np.asarray(a, dtype=float) - h * np.asarray(d, dtype=float) for a, d in zip(args, directions)]
        fix = lambda xs: [float(x) if np.ndim(x) == 0 else list(x) for x in xs]  # noqa: E731
        f0 = _call(func, fix([np.asarray(a, dtype=float) for a in args]))
        fp = np.asarray(_call(func, fix(plus)), dtype=float)
        fm = np.asarray(_call(func, fix(minus)), dtype=float)
        der = (fp - fm) / (2.0 * h)
        if np.ndim(der) == 0:
            return f0, float(der)
        return list(f0), list(der)


DUAL = DerivativeBackend("dual")
FINITE_DIFFERENCE = DerivativeBackend("fd")


# ---------------------------------------------------------------------------
# state-level conveniences for scalar f(q, v, t)
# ---------------------------------------------------------------------------


def _state_partials(f, s, backend: DerivativeBackend, order: int) -> Partials:
    return backend.partials(f, [s.q, s.v, s.t], ["q", "v", "t"], order)


def grad_v(f: Callable, s, backend: DerivativeBackend = DUAL) -> np.ndarray:
    """Gradient of scalar ``f(q, v, t)`` with respect to the independent velocities."""
    return _state_partials(f, s, backend, 1).d("v")[0]


def grad_q(f: Callable, s, backend: DerivativeBackend = DUAL) -> np.ndarray:
    return _state_partials(f, s, backend, 1).d("q")[0]


def partial_t(f: Callable, s, backend: DerivativeBackend = DUAL) -> float:
    return float(_state_partials(f, s, backend, 1).d("t")[0])


@dataclass(frozen=True)
class MixedSecond:
    vq: np.ndarray  # (m, n)
    vv: np.ndarray  # (m, m)
    vt: np.ndarray  # (m,)


def second_mixed(f: Callable, s, backend: DerivativeBackend = DUAL) -> MixedSecond:
    """Second derivatives of ``f`` with one velocity index: ∂²f/∂vᵢ∂q, ∂²f/∂vᵢ∂v, ∂²f/∂vᵢ∂t."""
    p = _state_partials(f, s, backend, 2)
    return MixedSecond(p.dd("v", "q")[0], p.dd("v", "v")[0], p.dd("v", "t")[0])


def total_derivative(
    f: Callable, s, a: np.ndarray, alpha: Callable, backend: DerivativeBackend = DUAL
) -> float:
    """Time derivative of ``f(q, v, t)`` along the constrained motion with accelerations ``a``.

    The dependent velocities are ``alpha(q, v, t)``, so the coordinate
    direction is ``(v, alpha)``.
    """
    dep = [primal(x) for x in alpha(list(s.q), list(s.v), s.t)]
    qdot = np.concatenate([np.asarray(s.v, dtype=float), np.asarray(dep, dtype=float)])
    _, der = backend.directional(f, [s.q, s.v, s.t], [qdot, a, 1.0])
    return der
