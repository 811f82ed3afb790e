"""
The biphoton state and what random filtering does to it
=======================================================

Builds the double-Gaussian state on a 16-pixel grid, checks that the
exact joints violate the entropic steering bound, and then shows that the
domain filtered second keeps only a quarter of its measurement contrast.
"""

import math

import numpy as np

from eprcs.entropy_analysis import steering_witness
from eprcs.measurement_pipeline import run_acquisition
from eprcs.random_filters import apply_sensing, plan_sensing
from eprcs.spdc_model import REFERENCE_PARAMS, balanced_grid, build_state, momentum_joint, position_joint

params = REFERENCE_PARAMS
grid = balanced_grid(params, 16)
state = build_state(params, grid)
print(f"sigma_minus = {params.sigma_minus:.4e} mm, dx = {grid.dx:.4e} mm, dk = {grid.dk:.4e} rad/mm")

X = position_joint(state).values
K = momentum_joint(state).values
report = steering_witness(position_joint(state), momentum_joint(state))
print(f"H(X1|X2) = {report.h_x_cond:.3f}, H(K1|K2) = {report.h_k_cond:.3f}, bound = {report.bound:.3f} bits")
print("entangled:", report.entangled)

# Noiseless measurements with the momentum filters applied first.
plan = plan_sensing(16, 256, seed=1)
mv = run_acquisition(state, plan, math.inf)

# Momentum is measured exactly ...
print("max |y_k - A K| =", np.abs(mv.y_momentum - apply_sensing(plan, "momentum", K)).max())

# ... while position comes through the momentum filters with reduced contrast.
b = apply_sensing(plan, "position", X)[1:]
y = mv.y_position[1:]
print(f"least-squares slope of y_x against A X: {(y @ b) / (b @ b):.3f} (a quarter is expected)")
