"""Operator inference for quadratic index-2 DAEs of Navier-Stokes type.

Submodules
----------
linalg      quadratic layouts, truncated-SVD least squares, SPD solves
model       full-order and reduced model containers, random demo models
transform   Leray projector, pressure recovery, velocity splitting
simulate    semi-implicit Euler, RK4, finite-difference derivatives
pod         POD bases and intrusive Galerkin reduction
opinf       operator inference and L-curve tolerance selection
dmd         DMD, DMDc and quadratic DMD baselines
io          binary/CSV matrix files and JSON manifests
experiment  end-to-end comparison harness
cli         ``opinf-nse`` command line
"""

from .dmd import dmdc, dmdquad, rollout
from .experiment import ExperimentConfig, error_l2, run_experiment
from .io import (ingest_snapshots, load_model, read_matrix, save_model, save_snapshots,
                 write_matrix)
from .linalg import min_norm_lstsq, quadratic_features, truncated_svd
from .model import QuadDaeModel, ReducedQuadModel, SnapshotSet, random_demo, validate
from .opinf import infer_pressure_map, infer_velocity_model, l_curve_scan, pick_tolerance
from .pod import divfree_correct, galerkin_reduce, pod_basis
from .simulate import TimeGrid, estimate_derivatives, imex_euler_dae, integrate_ode
from .transform import build_leray, decompose_velocity, ode_rhs, pressure_from_velocity

__version__ = "0.1.0"
