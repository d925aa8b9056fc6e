"""Independent oracles shared by the test modules.

Everything here is deliberately computed without the package's own numerics:
closed-form eigendecompositions, bisection, and plain difference quotients.
"""

import numpy as np


def lti_analytic(x0, t):
    """Closed-form solution of xdot = [[-2,1],[1,-2]] x.

    Eigenpairs: value -1 with vector (1,1) and value -3 with vector (1,-1),
    so  x(t) = 1/2 (x10+x20) e^{-t} (1,1) + 1/2 (x10-x20) e^{-3t} (1,-1).
    `x0` has shape (..., 2); `t` broadcasts against the leading axes.
    """
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    a = 0.5 * (x0[..., 0] + x0[..., 1])
    b = 0.5 * (x0[..., 0] - x0[..., 1])
    e1, e3 = np.exp(-t), np.exp(-3.0 * t)
    return np.stack([a * e1 + b * e3, a * e1 - b * e3], axis=-1)


def bisect(fn, lo, hi, iterations=200):
    """Plain bisection for a sign change of fn on [lo, hi]."""
    flo = fn(lo)
    if flo * fn(hi) > 0:
        raise ValueError("no sign change on the bracket")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if flo * fn(mid) <= 0:
            hi = mid
        else:
            lo = mid
            flo = fn(lo)
    return 0.5 * (lo + hi)


def output_equilibrium_root():
    """Root of 3y = cos(y) - sin(y), the scalar reduction of the
    time-invariant demo system's output dynamics."""
    return bisect(lambda y: 3.0 * y - np.cos(y) + np.sin(y), 0.0, 1.0)


def counting_field(field):
    """Wrap a field so the number of evaluations can be asserted."""
    calls = {"n": 0}

    def wrapped(x, t):
        calls["n"] += 1
        return field(x, t)

    return wrapped, calls
