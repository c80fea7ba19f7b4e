"""Informativity analysis and controller synthesis from trajectories of linear systems."""

__version__ = "0.1.0"

from .analysis import (
    AnalysisVerdict,
    informative_controllability,
    informative_stability,
    informative_stabilizability,
    informative_sysid,
)
from .data import (
    BlockMatrices,
    DataSet,
    Experiment,
    assemble,
    hankel,
    load_dataset,
    persistency_order,
)
from .dynamic_feedback import (
    Compensator,
    reconstruct_states,
    reduce_inputs,
    synth_io_feedback,
    synth_output_feedback,
)
from .errors import *  # noqa: F401,F403
from .lqr import LqrWeights, gain_from_data, informative_for_lqr, lqr_solvable
from .numerics import dare_solve, get_tolerances, place_spectrum, use_tolerances
from .oracle import Controller, SystemModel, consistent_set, simulate, verify_controller
from .state_feedback import deadbeat, stabilize_algebraic, stabilize_lmi
