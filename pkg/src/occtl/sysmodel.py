"""System models: dynamics with outputs, Jacobians, and variational augmentation.

A system is a pair of expression lists, the state derivative f and the output
map h, over the variables x1..xn and t.  The variational (linearised-along-a-
trajectory) system is never entered by hand: `augment` derives it from f and h
with dual-number differentiation, so the xi-dynamics are always the exact
Jacobian of the supplied right-hand side.

JSON document format::

    {"name": str, "n": int, "m": int, "f": [str, ...], "h": [str, ...]}

with expressions written in the `occtl.exprlang` grammar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .exprlang import (
    Call, Expr, compile_expr, differentiate, dual_env, evaluate,
    evaluate_dual, free_vars, parse, to_source,
)

__all__ = [
    "SystemSpec", "AugmentedSystem", "JacobianBundle", "SystemValidationError",
    "validate", "eval_fh", "jacobians", "augment", "finite_diff_jacobian",
    "vector_field", "system_from_json", "system_to_json", "builtin_system",
    "BUILTIN_NAMES",
]


class SystemValidationError(ValueError):
    """A system specification violates a dimensional or naming invariant."""


@dataclass(frozen=True)
class SystemSpec:
    """Dynamics ``xdot = f(x, t)`` with output ``y = h(x, t)``.

    f has n components and h has m components; every expression may only
    mention x1..xn and t.  Instances are immutable and shareable.
    """

    name: str
    n: int
    m: int
    f: tuple[Expr, ...]
    h: tuple[Expr, ...]

    @classmethod
    def from_strings(cls, name: str, n: int, m: int,
                     f: list[str], h: list[str]) -> "SystemSpec":
        return cls(name, n, m, tuple(parse(s) for s in f),
                   tuple(parse(s) for s in h))

    @cached_property
    def state_names(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.n))

    @cached_property
    def time_invariant(self) -> bool:
        """True when no expression of f or h mentions t."""
        return all("t" not in free_vars(e) for e in self.f + self.h)

    def sources(self) -> dict[str, list[str]]:
        return {"f": [to_source(e) for e in self.f],
                "h": [to_source(e) for e in self.h]}


def _uses_abs(e: Expr) -> bool:
    if isinstance(e, Call) and e.fn == "abs":
        return True
    children = getattr(e, "__dataclass_fields__", {})
    return any(isinstance(v, Expr) and _uses_abs(v)
               for v in (getattr(e, name) for name in children))


def validate(spec: SystemSpec) -> SystemSpec:
    """Check the dimensional and naming invariants; return the spec unchanged.

    Raises SystemValidationError on dimension mismatches, variables outside
    x1..xn and t, or use of abs in f or h (the right-hand sides must be
    continuously differentiable).
    """
    if spec.n < 1 or spec.m < 1:
        raise SystemValidationError(
            f"{spec.name!r}: need n >= 1 and m >= 1, got n={spec.n}, m={spec.m}")
    if len(spec.f) != spec.n:
        raise SystemValidationError(
            f"{spec.name!r}: f has {len(spec.f)} components, expected n={spec.n}")
    if len(spec.h) != spec.m:
        raise SystemValidationError(
            f"{spec.name!r}: h has {len(spec.h)} components, expected m={spec.m}")
    allowed = set(spec.state_names) | {"t"}
    for label, exprs in (("f", spec.f), ("h", spec.h)):
        for i, e in enumerate(exprs):
            unknown = free_vars(e) - allowed
            if unknown:
                raise SystemValidationError(
                    f"{spec.name!r}: {label}[{i}] uses unknown variable(s) "
                    f"{sorted(unknown)} (state is x1..x{spec.n})")
            if _uses_abs(e):
                raise SystemValidationError(
                    f"{spec.name!r}: {label}[{i}] uses abs, which is not "
                    "differentiable; smooth right-hand sides are required")
    # touch the cached flag so a validated spec records its time dependence
    spec.time_invariant
    return spec


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _env(spec: SystemSpec, x: np.ndarray, t) -> dict:
    env: dict = {name: x[..., i] for i, name in enumerate(spec.state_names)}
    env["t"] = t
    return env


def _eval_stack(exprs: tuple[Expr, ...], env: Mapping) -> np.ndarray:
    cols = [np.asarray(evaluate(e, env), dtype=float) for e in exprs]
    return np.stack(np.broadcast_arrays(*cols), axis=-1) if len(cols) > 1 \
        else np.asarray(cols[0])[..., np.newaxis]


def eval_fh(spec: SystemSpec, x, t) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (f(x, t), h(x, t)).

    `x` may be a single state of shape (n,) or a batch (..., n); `t` a scalar
    or an array broadcastable against the batch.  Returns arrays shaped
    (..., n) and (..., m).
    """
    x = np.asarray(x, dtype=float)
    env = _env(spec, x, t)
    return _eval_stack(spec.f, env), _eval_stack(spec.h, env)


def _stack_vals(vals, shape) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape)
                     for v in vals], axis=-1)


def vector_field(spec: SystemSpec) -> Callable[[np.ndarray, float], np.ndarray]:
    """The state derivative as a plain ``field(x, t)`` callable.

    Components are compiled once, so the returned closure is cheap enough
    for adaptive integration loops.  Accepts single states (n,) or batches
    (..., n) and returns matching shapes.
    """
    fns = tuple(compile_expr(e) for e in spec.f)
    names = spec.state_names

    def field(x, t):
        x = np.asarray(x, dtype=float)
        env = {name: x[..., i] for i, name in enumerate(names)}
        env["t"] = t
        with np.errstate(all="ignore"):
            return _stack_vals([fn(env) for fn in fns], x[..., 0].shape)
    return field


@dataclass(frozen=True)
class JacobianBundle:
    """Partial derivatives of f and h at one point (or a batch of points).

    Jf is (..., n, n), Jh is (..., m, n), dh_dt is (..., m).
    """

    Jf: np.ndarray
    Jh: np.ndarray
    dh_dt: np.ndarray


def jacobians(spec: SystemSpec, x, t) -> JacobianBundle:
    """Exact Jacobians via dual numbers with identity seeding over x1..xn.

    dh_dt comes from the same pass by also seeding t.  Batched like eval_fh.
    """
    x = np.asarray(x, dtype=float)
    active = list(spec.state_names) + ["t"]
    env = dual_env(_env(spec, x, t), active)

    def rows(exprs):
        # dual gradients are (n+1,)+batch; split state part and move it last
        out = [evaluate_dual(e, env).grad for e in exprs]
        return np.stack([np.moveaxis(g[:spec.n], 0, -1) for g in out], axis=-2), out

    Jf, _ = rows(spec.f)
    Jh, h_grads = rows(spec.h)
    dh_dt = np.stack([g[spec.n] for g in h_grads], axis=-1)
    return JacobianBundle(Jf=Jf, Jh=Jh, dh_dt=dh_dt)


def finite_diff_jacobian(spec: SystemSpec, x, t, step: float
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference (Jf, Jh): the oracle the dual path is tested against."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.asarray(x, dtype=float)
    cols_f, cols_h = [], []
    for i in range(spec.n):
        dx = np.zeros_like(x)
        dx[..., i] = step
        f_hi, h_hi = eval_fh(spec, x + dx, t)
        f_lo, h_lo = eval_fh(spec, x - dx, t)
        cols_f.append((f_hi - f_lo) / (2.0 * step))
        cols_h.append((h_hi - h_lo) / (2.0 * step))
    return np.stack(cols_f, axis=-1), np.stack(cols_h, axis=-1)


# ---------------------------------------------------------------------------
# variational augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentedSystem:
    """State plus variational dynamics, 2n-dimensional.

    The combined field is F(x, xi, t) = (f(x, t), Jf(x, t) xi) with output
    nu = Jh(x, t) xi.  The xi-block is linear in xi and vanishes at xi = 0.
    The Jacobian entries are machine-differentiated from the base system and
    compiled once; they agree with the dual-number `jacobians` op exactly,
    which the test suite asserts.
    """

    base: SystemSpec

    @property
    def dimension(self) -> int:
        return 2 * self.base.n

    @cached_property
    def _f_fns(self):
        return tuple(compile_expr(e) for e in self.base.f)

    @cached_property
    def _jf_fns(self):
        names = self.base.state_names
        return tuple(tuple(compile_expr(differentiate(e, v)) for v in names)
                     for e in self.base.f)

    @cached_property
    def _jh_fns(self):
        names = self.base.state_names
        return tuple(tuple(compile_expr(differentiate(e, v)) for v in names)
                     for e in self.base.h)

    def field(self, state, t) -> np.ndarray:
        n = self.base.n
        state = np.asarray(state, dtype=float)
        env = {name: state[..., i] for i, name in enumerate(self.base.state_names)}
        env["t"] = t
        xi = [state[..., n + j] for j in range(n)]
        shape = state[..., 0].shape
        with np.errstate(all="ignore"):
            fx = [fn(env) for fn in self._f_fns]
            xidot = [sum(row[j](env) * xi[j] for j in range(n))
                     for row in self._jf_fns]
            return _stack_vals(fx + xidot, shape)

    def output(self, x, xi, t) -> np.ndarray:
        """nu = Jh(x, t) xi, shaped (..., m)."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        n = self.base.n
        env = {name: x[..., i] for i, name in enumerate(self.base.state_names)}
        env["t"] = t
        with np.errstate(all="ignore"):
            nu = [sum(row[j](env) * xi[..., j] for j in range(n))
                  for row in self._jh_fns]
            return _stack_vals(nu, np.broadcast_shapes(x[..., 0].shape,
                                                       np.shape(t)))


def augment(spec: SystemSpec) -> AugmentedSystem:
    """Attach the dual-number-derived variational dynamics to a system."""
    return AugmentedSystem(base=validate(spec))


# ---------------------------------------------------------------------------
# JSON interchange and built-in systems
# ---------------------------------------------------------------------------

def system_from_json(doc) -> SystemSpec:
    """Build and validate a SystemSpec from a JSON document (text or dict)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        spec = SystemSpec.from_strings(
            str(doc["name"]), int(doc["n"]), int(doc["m"]),
            list(doc["f"]), list(doc["h"]))
    except KeyError as missing:
        raise SystemValidationError(f"system document lacks key {missing}") from None
    return validate(spec)


def system_to_json(spec: SystemSpec) -> str:
    src = spec.sources()
    return json.dumps({"name": spec.name, "n": spec.n, "m": spec.m,
                       "f": src["f"], "h": src["h"]}, indent=2)


_BUILTIN_SOURCES = {
    # stable linear pair with a single-coordinate output
    "lti-remark1": dict(
        n=2, m=1,
        f=["-2*x1 + x2", "x1 - 2*x2"],
        h=["x1"]),
    # same dynamics, output ruined by an exponentially growing weight
    "lti-remark1-badout": dict(
        n=2, m=1,
        f=["-2*x1 + x2", "x1 - 2*x2"],
        h=["exp(2*t)*x1"]),
    # time-varying system whose state separates while the output contracts
    "ex1-timevarying": dict(
        n=2, m=1,
        f=["-0.1*x1^3 - (4 + sin(t) + 0.3*x1^2)*x2 + sin(x1 + x2) + cos(t)",
           "-0.1*x2^3 - (4 + sin(t) + 0.3*x2^2)*x1 + cos(x1 + x2) + sin(t)"],
        h=["x1 + x2"]),
    # unstable time-invariant system whose output settles to a constant
    "ex2-timeinvariant": dict(
        n=2, m=1,
        f=["-3*x2 - sin(x1 + x2)", "-3*x1 + cos(x1 + x2)"],
        h=["x1 + x2"]),
}

BUILTIN_NAMES = tuple(sorted(_BUILTIN_SOURCES))


def builtin_system(name: str) -> SystemSpec:
    """Return one of the named built-in systems, validated."""
    try:
        src = _BUILTIN_SOURCES[name]
    except KeyError:
        raise KeyError(
            f"unknown built-in system {name!r}; known: {', '.join(BUILTIN_NAMES)}"
        ) from None
    return validate(SystemSpec.from_strings(name, src["n"], src["m"],
                                            src["f"], src["h"]))
