"""Signal matrix model: maximum-likelihood data-driven simulation, kernel FIR identification
and data-driven predictive control."""

__version__ = "0.1.0"

from .lti import (  # noqa: E402
    LtiSystem,
    NoiseModel,
    Trajectory,
    add_noise,
    check_minimality,
    g1,
    g2,
    impulse_response,
    simulate,
    tf_to_ss,
)
from .signal_matrix import (  # noqa: E402
    MatrixKind,
    SignalMatrixSet,
    build_hankel,
    build_page,
    check_rank_conditions,
    compress,
    partition,
    persistency_order,
)
from .estimator import (  # noqa: E402
    SmmProblem,
    lambda_weight,
    mle_objective,
    pinv_solution,
    sigma_y,
    smm_simulate,
    sqp_step,
)
from .kernel import (  # noqa: E402
    KernelSpec,
    smm_tc,
    empirical_bayes,
    fit_metric,
    kernel_combine,
    ls_fir,
    smm_fir,
    tc_kernel,
)
from .control import (  # noqa: E402
    ControllerConfig,
    control_cost,
    deepc_step,
    ideal_mpc_step,
    receding_horizon_run,
    smmpc_step,
    subpc_step,
)

__all__ = [
    "LtiSystem",
    "NoiseModel",
    "Trajectory",
    "add_noise",
    "check_minimality",
    "g1",
    "g2",
    "impulse_response",
    "simulate",
    "tf_to_ss",
    "MatrixKind",
    "SignalMatrixSet",
    "build_hankel",
    "build_page",
    "check_rank_conditions",
    "compress",
    "partition",
    "persistency_order",
    "SmmProblem",
    "lambda_weight",
    "mle_objective",
    "pinv_solution",
    "sigma_y",
    "smm_simulate",
    "sqp_step",
    "KernelSpec",
    "smm_tc",
    "empirical_bayes",
    "fit_metric",
    "kernel_combine",
    "ls_fir",
    "smm_fir",
    "tc_kernel",
    "ControllerConfig",
    "control_cost",
    "deepc_step",
    "ideal_mpc_step",
    "receding_horizon_run",
    "smmpc_step",
    "subpc_step",
]
