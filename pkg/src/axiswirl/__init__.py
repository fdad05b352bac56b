"""Axisymmetric swirling Navier-Stokes: solver, cylinder diagnostics,
oscillation ladders and a numerical laboratory for the supporting inequalities."""
from .grid import (EVEN, ODD, AxiGrid, Field2D, FlowState, ParityError, axi_laplacian,
                   divergence, make_grid)
from .solver import (BlowUpError, CFLError, RunResult, Scenario, SolverConfig, default_config,
                     kinetic_energy, project, run_scenario, step, step_gamma)
from .quadrature import (CoverageError, Cylinder, CylinderQuantities, ExponentParams,
                         FlowHistory, ball_integral, cylinder_quantities, weight_omega)
from .besov import besov_norm_b
from .harnack import (DecayParams, decay_envelope_check, decay_ladder, fit_decay_exponent,
                      oscillation, verify_local_max, verify_weak_harnack)
from .inequalities import (check_nash, check_weighted_poincare, run_embedding_corpus,
                           run_nash_corpus, run_poincare_corpus, verify_local_energy)

__version__ = "0.1.0"
