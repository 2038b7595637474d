"""
Divergence-free velocities and the pressure they imply
======================================================

A random incompressible toy model is built, then the discrete Leray
projector is used to remove the constraint-violating part of a vector and to
recover the pressure that belongs to a given velocity.
"""

import numpy as np

from opinf_nse import build_leray, pressure_from_velocity, random_demo
from opinf_nse.model import dae_rhs, validate

# A 12-dimensional velocity with 3 pressure unknowns and one input.
model = random_demo(seed=3, n_v=12, n_p=3, m=1)
print(validate(model))

# Project an arbitrary vector. The result satisfies A12^T v = 0 and
# projecting a second time changes nothing.
proj = build_leray(model)
x = np.random.default_rng(0).standard_normal(model.n_v)
v = proj.apply(x)
print("constraint residual before:", np.linalg.norm(model.A12.T @ x))
print("constraint residual after: ", np.linalg.norm(model.A12.T @ v))
print("idempotence defect:        ", np.linalg.norm(proj.apply(v) - v))

# The pressure is an algebraic function of velocity and input. Plugging it
# into the DAE gives a velocity rate that keeps the constraint satisfied.
u = np.array([0.7])
p = pressure_from_velocity(model, v, u, proj=proj)
r_d, _ = dae_rhs(model, v, p, u)
rate = np.linalg.solve(model.E11, r_d)
print("pressure:", np.round(p, 4))
print("d/dt of A12^T v:", np.linalg.norm(model.A12.T @ rate))
