"""Binary factor-augmented regression for recession forecasting.

PCA factors from a large predictor panel enter a probit or unit-variance
logistic model for a binary outcome ``h`` periods ahead.
"""

__version__ = "0.1.0"

from binfar.errors import *  # noqa: E402,F401,F403
from binfar.factors import (  # noqa: E402
    FactorEstimate,
    PanelMatrix,
    estimate_factors,
    ic_values,
    rotation_matrix,
    select_num_factors,
)
from binfar.glm import (  # noqa: E402
    LOGISTIC,
    PROBIT,
    BinaryFarFit,
    Design,
    FitOptions,
    LinkFunction,
    fit,
    fitted_probabilities,
    get_link,
    log_likelihood,
    predict_proba,
    score_and_hessian,
)
from binfar.inference import BootstrapResult, BootstrapSpec, moving_block_bootstrap  # noqa: E402
from binfar.metrics import (  # noqa: E402
    RocCurve,
    marginal_r2,
    pseudo_r2,
    rmse,
    roc_auc,
    rotate_coefficients,
)
from binfar.simulate import DgpConfig, generate, preset, run_study  # noqa: E402
from binfar.data import (  # noqa: E402
    SeriesSpec,
    TargetSpec,
    apply_tcode,
    assemble_design,
    load_panel,
    load_recessions,
)
from binfar.backtest import BacktestConfig, BacktestData, in_sample, out_of_sample  # noqa: E402
