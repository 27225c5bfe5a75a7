"""Simulator and optimization toolkit for learning-aided stochastic network control."""

from .controllers import BACKPRESSURE, OLAC, OLAC2, ControllerConfig, bp_decide, olac2_step, olac_decide
from .dual import (
    AnalysisConstants,
    DualSolverConfig,
    InstanceAnalysis,
    compute_analysis,
    dual_value,
    max_slack,
    maximize_dual,
    per_state_dual,
    primal_oracle,
    supergradient,
)
from .learning import DualLearnState, EmpiricalDistribution, dual_learn
from .model import (
    ActionSpec,
    InstanceError,
    NetworkInstance,
    StateSpec,
    build_two_queue_example,
    load_instance,
    load_instance_file,
    serialize_instance,
    validate,
)
from .queueing import QueueLedger, adjust_to, apply_slot, delay_stats
from .sim import RunResult, SimConfig, convergence_time, run

__version__ = "0.1.0"
