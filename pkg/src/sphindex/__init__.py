"""Robust single-index regression for unit-sphere responses."""

from .exceptions import (
    AllZeroResiduals,
    AntipodalPoint,
    BaseMismatch,
    BoundarySingularity,
    ConfigError,
    DataError,
    DegenerateCross,
    FailureRateExceeded,
    IndexOutOfRange,
    InvalidBeta,
    InvalidLambda,
    MalformedResults,
    NearZeroVector,
    NegativeComposition,
    NonFiniteCriterion,
    NoValidStart,
    NumericalError,
    OutOfRangeDelta,
    OutsideTheta,
    PoleAtK,
    RootNotBracketed,
    SingularDesign,
    SingularM0,
    SingularW0,
    SphindexError,
    UnknownColumn,
    ZeroRowSum,
)
from .geometry import (
    TangentVector,
    UnitVector,
    geodesic_distance,
    parallel_transport,
    project_to_sphere,
    projection_differential,
    riemannian_exp,
    riemannian_log,
    rotation_aligning,
    tangent_basis,
)
from .local_fit import (
    KernelSpec,
    LocalFit,
    LooFits,
    batch_local_m,
    criterion,
    local_linear_ls,
    local_linear_m,
    loo_fits,
)
from .losses import (
    DeltaCalc,
    LossSpec,
    are_esl,
    c_delta,
    delta_opt,
    irls_weight,
    irls_weights,
    k_delta,
    loss_eval,
    q_delta,
    r_delta,
    solve_lambda_scale,
    tradeoff_criterion,
)
from .model import (
    FitConfig,
    FitResult,
    MetricSummary,
    fit,
    metrics,
    predict,
    refit_at,
)
from .bootstrapping import (
    BootstrapResult,
    RotatedResidualSet,
    bootstrap_se,
    rotated_residuals,
)
from .diagnostics import (
    NuisanceBandwidths,
    NuisanceEstimates,
    SensitivityRow,
    empirical_sges,
    estimate_nuisance,
    influence,
    sensitivity_grid,
    standardized_influence,
)
from .ingest import ColumnTransform, IngestSpec, ingest_composition_csv
from .params import (
    Dataset,
    IndexParam,
    beta_from_theta,
    jacobian_beta,
    theta_from_beta,
)
from .sampling import (
    ContaminationSpec,
    MeanCurve,
    VmfSpec,
    contaminate,
    curve_values,
    eval_mean_curve,
    orthogonal_contaminant,
    sample_predictors,
    sample_vmf,
    sample_vmf_around,
)

__version__ = "0.1.0"
