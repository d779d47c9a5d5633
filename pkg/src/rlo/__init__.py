"""Composable optimizer generators with built-in stability diagnostics.

The package factors an optimizer into a manifold, a metric, a target
direction field with internal memory, and a lifting rate that relaxes a
velocity state toward the target. Classic optimizers (SGD, heavy-ball,
AdamW, Lion) are presets of the same loop, and every run can emit per-step
residual/forcing/Lyapunov diagnostics with certificate checks.
"""

from .diagnostics import (
    CSV_COLUMNS,
    CertificateReport,
    DiagnosticsRecord,
    InadmissibleParametersError,
    LyapunovParams,
    RecordSink,
    UUBReport,
    admissible_alpha_floor,
    check_descent_inequality,
    forcing,
    lyapunov_value,
    pl_constant,
    residual,
    tube_metrics,
    uub_floor,
    with_lyapunov,
)
from .engine import (
    ConfigError,
    ExtendedState,
    PoisonedGradientError,
    RLOConfig,
    Schedule,
    StepTrace,
    TrajectorySummary,
    constant_schedule,
    initial_state,
    make_preset,
    rlo_step,
    run_trajectory,
    schedule_value,
    validate_config,
)
from .fields import (
    FieldError,
    FieldSpec,
    OptimizerState,
    adaptive_field,
    belief_term,
    ema_update,
    generate_direction,
    global_normalize,
    interpolated_moment,
    sign_field,
    tanh_field,
    zero_state,
)
from .geometry import (
    EUCLIDEAN,
    SPHERE,
    DegenerateRetractionError,
    GeometryError,
    Metric,
    Point,
    Tangent,
    inner,
    norm,
    retract,
    riemannian_gradient,
    transport,
    zero_tangent,
)
from .testbed import (
    Dataset,
    DatasetFormatError,
    NoiseModel,
    ObjectiveHandle,
    QuadraticSpec,
    counter_rng,
    load_dataset_csv,
    make_logistic,
    make_mlp,
    make_quadratic,
    make_rayleigh,
    make_rosenbrock,
    make_two_gaussians,
    random_spd,
)

__version__ = "0.1.0"
