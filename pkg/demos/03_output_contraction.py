#!/usr/bin/env python3
# Output contraction: outputs of any two trajectories approach each other
# exponentially, with the bound scaled by the initial STATE distance.  The
# built-in time-varying system is the showcase: its state is violently
# non-contractive (finite-time escape), yet the output y = x1 + x2 contracts.

import numpy as np

from occtl import (
    SamplingPlan, builtin_system, check_output_contraction,
    check_partial_contraction, fit_rate, simulate_pair, verdict_json,
)

spec = builtin_system("ex1-timevarying")

# --- one pair, inspected by hand ---------------------------------------------

series = simulate_pair(spec, (-2.5, -5.0), (-1.5, -3.0), 0.0, 5.0)
print("pair horizon reached:", round(series.t_end, 4),
      "(truncated)" if series.truncated else "")
print("initial state distance :", series.dx0)
print("initial output distance:", series.dy0)
print("output distance, first/last grid point:",
      series.d[0], "->", series.d[-1])
print("state  distance, first/last grid point:",
      series.state_dist[0], "->", f"{series.state_dist[-1]:.3e}")

fit = fit_rate(series, scale=series.dx0)
print(f"fitted envelope: d(t) <= {fit.c_tight:.3f} "
      f"* exp(-{fit.alpha:.2f} (t - t0)) * dx0   (residual {fit.residual:.2e})")

# --- the sampled verdict ------------------------------------------------------

plan = SamplingPlan(box=((-5.0, 5.0), (-5.0, 5.0)), pairs=25, seed=7,
                    t0=0.0, tf=20.0)
verdict = check_output_contraction(spec, plan)
print("\noutput contraction verdict:", verdict_json(verdict))

# --- and the stricter notion it does NOT satisfy ------------------------------

# partial contraction rescales the bound by the initial OUTPUT distance.  For
# the linear built-in with y = x1 there are pairs with equal initial outputs
# whose outputs still separate, so no output-scaled bound can exist.
lti = builtin_system("lti-remark1")
plan_lti = SamplingPlan(box=((-5.0, 5.0), (-5.0, 5.0)), pairs=15, seed=7,
                        t0=0.0, tf=10.0)
print("\nplain output contraction (y = x1):",
      verdict_json(check_output_contraction(lti, plan_lti))["holds"])
partial = check_partial_contraction(lti, plan_lti)
print("partial contraction:", partial.holds)
print("witness (equal initial outputs, separating later):")
for key in ("x0", "partner", "dy0", "max_d"):
    print(f"  {key}: {partial.witness[key]}")
