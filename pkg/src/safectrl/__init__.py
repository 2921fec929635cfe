"""safectrl: QP-based safety filters with robust high-relative-degree
barrier enforcement, plus the plant models and simulations that exercise
them."""

from .barrier import (
    BarrierEvaluation,
    EcbfPolicy,
    LinearInputConstraint,
    SmcbfPolicy,
    assemble_filter_qp,
    cbf_constraint_r1,
    check_sliding_condition,
    ecbf_constraint,
    pole_placement_gain,
    sat,
    smcbf_constraint,
)
from .nominal import LqrDesign, SmcTrackingDesign, lqr_control, smc_tracking_control, solve_care
from .qp import QpProblem, QpSolution, kkt_residuals, solve_active_set_oracle, solve_hildreth
from .sim import (
    ReferenceSpec,
    Scenario,
    TrajectoryLog,
    compute_metrics,
    generate_reference,
    rk4_step,
    run_closed_loop,
)

__version__ = "0.1.0"

__all__ = [
    "BarrierEvaluation", "EcbfPolicy", "LinearInputConstraint", "SmcbfPolicy",
    "assemble_filter_qp", "cbf_constraint_r1", "check_sliding_condition",
    "ecbf_constraint", "pole_placement_gain", "sat", "smcbf_constraint",
    "LqrDesign", "SmcTrackingDesign", "lqr_control", "smc_tracking_control",
    "solve_care",
    "QpProblem", "QpSolution", "kkt_residuals", "solve_active_set_oracle",
    "solve_hildreth",
    "ReferenceSpec", "Scenario", "TrajectoryLog", "compute_metrics",
    "generate_reference", "rk4_step", "run_closed_loop",
    "__version__",
]
