"""Quasi-conformal image registration with the Linear Beltrami Solver."""

from .beltrami import alpha_from_mu, mu_from_map, square_to_faces
from .diagnostics import DiagnosticsReport, fold_report, jacobian_beltrami_check
from .imaging import read_pgm, warp, write_pgm
from .lbs import ConvergenceError, SolverConfig, laplacian_residual, solve_lbs
from .mesh import GridMesh, QCMap, build_grid_mesh
from .register import RegistrationConfig, RegistrationResult, register
from .spectral import compress, dft2, idft2
from .synth import SynthConfig, gen_random_mu, synth_pair

__version__ = "0.1.0"
