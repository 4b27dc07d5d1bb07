"""1D diatomic Vlasov-Poisson system with oscillatory molecular bonds.

A weighted-particle solver for the kinetic density of bonded atom pairs,
the self-consistent step field it generates, characteristic integration
with oscillation-event detection, every a-priori bound of the underlying
analysis as a machine-checkable certificate, and the fixed-point
(frozen-field) construction of the solution on short horizons.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DiatomicVlasovError,
    DomainError,
    EmptyEnsembleError,
    FieldGapError,
    InvalidCError,
    NoConfinementError,
    QuadratureError,
    RangeError,
    SegmentOutOfRangeError,
    StepUnderflowError,
    ToleranceError,
    VacuousBoundError,
)
from .hooke import (
    BalancePoints,
    Branch,
    HookeKind,
    HookeModel,
    balance_points,
    custom_model,
    force,
    force_derivative,
    inverse_potential,
    load_table_model,
    potential_to_midpoint,
    table_model,
    tangent_model,
    validate_model,
)
from .field import (
    ConstantField,
    Ensemble,
    FieldHistory,
    FieldSnapshot,
    ParticleState,
    StaticField,
    build_field,
    field_at,
    field_norms,
    field_pm,
    zero_field,
)
from .trajectory import (
    EventKind,
    OscillationEvent,
    StepControl,
    TrajectoryPath,
    detect_events,
    energy_residual,
    integrate,
    integrate_batch,
    jacobian_estimate,
    push,
)
from .bounds import (
    BoundCertificate,
    BoundParameters,
    CertReport,
    build_certificate,
    certify,
    chaotic_bound,
    confinement_time,
    displacement_bound,
    drift_rate_bound,
    excursion_envelope,
    global_envelope,
    gronwall_constants,
    omega_confinement,
    phase_bound,
    return_time_lower_bound,
    turning_point_band,
)
from .datum import BumpDatum, sample_datum
from .picard import (
    IterationRecord,
    SupportBounds,
    iterate,
    solve_linear,
    support_bounds,
)
from .simulator import (
    ContinuationStatus,
    Diagnostics,
    RunConfig,
    RunResult,
    check_continuation,
    diagnostics,
    run,
)
