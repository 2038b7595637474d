"""
Operator inference reproduces the intrusive model
=================================================

With a divergence-free basis and exact time derivatives, the operators
learned from data coincide with the intrusive Galerkin operators, even
though inference never looks at the full-order matrices.
"""

import numpy as np

from opinf_nse import (build_leray, divfree_correct, galerkin_reduce, infer_velocity_model,
                       ode_rhs, pod_basis, random_demo)

model = random_demo(seed=7, n_v=20, n_p=4, m=2)
proj = build_leray(model)

# Sample random divergence-free states and inputs, and evaluate the
# velocity ODE to get exact derivatives.
rng = np.random.default_rng(1)
K = 400
V = proj.apply(rng.standard_normal((model.n_v, K)))
U = rng.standard_normal((model.m, K))
Vdot = np.column_stack([ode_rhs(model, V[:, k], U[:, k], proj=proj) for k in range(K)])

# The basis spans the whole divergence-free subspace (n_v - n_p directions).
basis = divfree_correct(pod_basis(V, model.n_v - model.n_p), proj)
X, Xdot = basis.vectors.T @ V, basis.vectors.T @ Vdot

learned = infer_velocity_model(X, Xdot, U, tol=0.0)
intrusive = galerkin_reduce(model, basis, force_ode=True)

for name in ("A", "H", "B"):
    gap = np.linalg.norm(getattr(learned, name) - getattr(intrusive, name))
    print(f"||{name}_learned - {name}_galerkin||_F = {gap:.2e}")
