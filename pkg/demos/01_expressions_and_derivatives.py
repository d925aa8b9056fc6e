#!/usr/bin/env python3
# Expressions are the input language of the toolkit: every system right-hand
# side, output map, and certificate is plain text parsed into an immutable
# tree.  This walkthrough covers parsing, evaluation, and the three ways the
# toolkit differentiates things.

import numpy as np

from occtl import (
    differentiate, dual_env, evaluate, evaluate_dual, free_vars, parse,
    to_source,
)

# --- parsing ---------------------------------------------------------------

src = "-0.1*x1^3 - (4 + sin(t) + 0.3*x1^2)*x2 + sin(x1 + x2) + cos(t)"
ast = parse(src)
print("source:   ", src)
print("canonical:", to_source(ast))         # minimal-paren canonical form
print("variables:", sorted(free_vars(ast)))

# precedence: ^ binds tightest and is right-associative, unary minus sits
# between ^ and *
print("2^3^2      =", evaluate(parse("2^3^2"), {}))    # 512, not 64
print("-x^2 at 3  =", evaluate(parse("-x^2"), {"x": 3.0}))   # -(x^2) = -9

# --- evaluation ------------------------------------------------------------

# environments may hold floats or numpy arrays; arrays evaluate elementwise,
# which is what makes the falsification sampler fast
point = {"x1": 3.0, "x2": 3.0, "t": 0.0}
batch = {"x1": np.linspace(-1, 1, 5), "x2": np.zeros(5), "t": 0.0}
print("f1(3,3,0)  =", evaluate(ast, point))
print("f1 (batch) =", evaluate(ast, batch))

# --- derivatives, three ways ------------------------------------------------

# 1. dual numbers: exact forward-mode derivatives at a point.  Seed the
#    variables you want partials for; the gradient comes out alongside the
#    value in one pass.
env = dual_env(point, active=["x1", "x2", "t"])
d = evaluate_dual(ast, env)
print("value      =", float(d.value))
print("gradient   =", d.grad)               # (df/dx1, df/dx2, df/dt)

# 2. symbolic: build the derivative expression once, evaluate it anywhere.
#    The integrators compile these for their inner loops.
ddx2 = differentiate(ast, "x2")
print("df/dx2     =", to_source(ddx2))
print("agreement  =", float(evaluate(ddx2, point)) == float(d.grad[1]))

# 3. central differences: the independent oracle the other two are tested
#    against (never trust one derivative route without a second one)
h = 1e-6
hi = dict(point, x2=point["x2"] + h)
lo = dict(point, x2=point["x2"] - h)
fd = (evaluate(ast, hi) - evaluate(ast, lo)) / (2 * h)
print("fd check   =", abs(fd - d.grad[1]) < 1e-8)
