"""Fractional-order system models, MPC stimulation and seizure-mitigation experiments."""

from .fos_core import (FosModel, GlCoefficients, MvarModel, SimulationTrace, FosPlant,
                       fos_to_mvar, gl_coefficients, ictal_model, simulate_fos, simulate_mvar)
from .lti_augment import AugmentedLti, PredictionMatrices, augment, prediction_matrices
from .qp_mpc import (ConvergenceWarning, MpcConfig, MpcController, QpProblem, RiccatiSolution,
                     build_qp, mpc_step, riccati_lqr, run_closed_loop, solve_box_qp)
from .strategies import (BurstDisturbanceConfig, LineLengthDetector, OpenLoopConfig,
                         generate_bursts, line_length, open_loop_input, run_event_triggered)
from .sysid import IdentificationResult, identify, normalize, denormalize

__version__ = "0.1.0"
