"""Report and certificate models for fundsol."""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_serializer, field_validator


def complex_to_dict(value: complex | None) -> dict[str, float] | None:
    return None if value is None else {"re": value.real, "im": value.imag}


def _to_complex(value) -> complex:
    if isinstance(value, dict):
        try:
            return complex(float(value["re"]), float(value["im"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"Invalid complex value: {value}") from e
    if isinstance(value, list | tuple) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _exponent_to_json(value: float) -> float | str:
    return "inf" if math.isinf(value) else value


class CertificateStatus(str, Enum):
    CERTIFIED = "certified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


class SymbolCertificate(BaseModel):
    """Sampled certificate of conditions on the principal part P_m."""

    elliptic: bool
    min_principal_on_sphere: float
    nondegenerate: bool
    min_abs_hessdet_on_sphere: float
    sphere_sample_count: int
    lipschitz_margin: float
    principal_margin: float
    hessdet_margin: float
    elliptic_status: CertificateStatus
    nondegenerate_status: CertificateStatus

    model_config = ConfigDict(from_attributes=True)

    @property
    def passed(self) -> bool:
        return self.elliptic and self.nondegenerate


class ThresholdA(BaseModel):
    """Validity threshold a of the level-set radius."""

    a: float
    sphere_density: int
    s_scan_max: float
    s_scanned: list[float]
    valid: list[bool]


class RadialRoot(BaseModel):
    s: float
    omega: list[float]
    rho: float
    residual: float
    radial_derivative: float
    iterations: int = 0


class SigmaAuditRow(BaseModel):
    k: int
    s: float
    derivative: float
    weighted: float


class SigmaAudit(BaseModel):
    """Finite-difference audit of |d^k_s sigma| <= C_k (1 + s)^{-k}."""

    k_max: int
    constants: dict[int, float]
    refined_constants: dict[int, float]
    tangential_constants: dict[int, float]
    stable: dict[int, bool]
    noise_limited: dict[int, bool]
    passed: bool
    rows: list[SigmaAuditRow] = Field(default_factory=list)


class CriticalPoint(BaseModel):
    s: float
    branch: str
    omega: list[float]
    phase_value: float
    tangential_gradient_norm: float
    second_derivative: float
    iterations: int = 0
    duplicate_warning: bool = False

    @field_validator("branch")
    @classmethod
    def check_branch(cls, value: str) -> str:
        if value not in ("+", "-"):
            raise ValueError(f"Branch must be '+' or '-', got {value!r}")
        return value


class PhasePath(BaseModel):
    """Continued critical-point curves omega_plus(s), omega_minus(s)."""

    u: list[float]
    s_grid: list[float]
    points_plus: list[CriticalPoint]
    points_minus: list[CriticalPoint]
    derivative_constant: dict[str, float]
    derivative_slope: dict[str, float | None]
    limit_plus: list[float]
    limit_minus: list[float]


class InequalityFit(BaseModel):
    name: str
    c1: float | None = None
    c2: float | None = None
    refined_c1: float | None = None
    refined_c2: float | None = None
    stable: bool
    passed: bool


class PhaseCurveRow(BaseModel):
    s: float
    d_minus: float
    lower: float
    upper: float


class RadialPhaseAudit(BaseModel):
    """Fitted constants for the radial phase inequalities on a sampled s-range."""

    t: float
    r: float
    s_grid: list[float]
    s0: float
    segment_lower: float
    segment_upper: float
    inequalities: list[InequalityFit]
    passed: bool
    minus_slope_curve: list[PhaseCurveRow] = []


class SphereIntegralSample(BaseModel):
    lam: float
    s: float
    phi: complex
    phi_plus: complex
    phi_minus: complex
    psi0: complex
    psi_plus: complex
    psi_minus: complex
    error_estimate: float = 0.0

    @field_validator("phi", "phi_plus", "phi_minus", "psi0", "psi_plus", "psi_minus", mode="before")
    @classmethod
    def parse_complex(cls, value):
        return _to_complex(value)

    @field_serializer("phi", "phi_plus", "phi_minus", "psi0", "psi_plus", "psi_minus")
    def serialize_complex(self, value: complex, _info) -> dict[str, float]:
        return complex_to_dict(value)


class DecompositionAudit(BaseModel):
    """Stationary amplitudes Psi over a lambda sweep at one level s."""

    s: float
    samples: list[SphereIntegralSample]
    psi_variation: dict[str, float]
    psi0_weighted_decreasing: bool
    max_reconstruction_error: float
    passed: bool


class KernelMethod(str, Enum):
    FFT = "fft"
    RADIAL = "radial"
    COMPACT = "compact"
    CLOSED_FORM = "closed_form"
    SUM = "sum"


class KernelValue(BaseModel):
    """One sample of I(t, x) with its provenance and error estimate."""

    t: float
    x: list[float]
    value: complex
    method: KernelMethod
    error_estimate: float = Field(ge=0.0)

    @field_validator("value", mode="before")
    @classmethod
    def parse_value(cls, value):
        return _to_complex(value)

    @field_serializer("value")
    def serialize_value(self, value: complex, _info) -> dict[str, float]:
        return complex_to_dict(value)

    @property
    def modulus(self) -> float:
        return abs(self.value)


class EnvelopeSample(BaseModel):
    t: float
    x_norm: float
    modulus: float
    envelope: float
    ratio: float
    method: KernelMethod


class EnvelopeFit(BaseModel):
    """Envelope-ratio statistics over a sample lattice."""

    description: str
    regime: str
    mu: float
    sample_count: int
    max_ratio: float
    refined_max_ratio: float | None = None
    stability: float | None = None
    fitted_exponent: float | None = None
    passed: bool
    samples: list[EnvelopeSample] = []
    notes: list[str] = []


class SharpnessReport(BaseModel):
    m: int
    n: int
    window: tuple[float, float]
    mu: float
    q_min: float
    q_max: float
    slope: float
    tolerance: float
    passed: bool
    samples: list[EnvelopeSample] = []

    @property
    def band_ratio(self) -> float:
        return self.q_max / self.q_min if self.q_min > 0.0 else math.inf


class CompactDecayAudit(BaseModel):
    """Spatial slope of the low-frequency piece and its joint (1 + t + |x|)^{-1/m} bound."""

    k: int
    t: float
    window: tuple[float, float]
    slope: float
    bound_slope: float
    slope_passed: bool
    shifted_window: tuple[float, float] | None = None
    shifted_slope: float | None = None
    joint_max: float
    joint_slope: float
    joint_passed: bool
    samples: list[EnvelopeSample] = []

    @computed_field
    @property
    def passed(self) -> bool:
        return self.slope_passed and self.joint_passed


class PairClass(str, Enum):
    INTERIOR = "interior"
    EDGE = "edge"
    ENDPOINT_B = "endpoint_B"
    ENDPOINT_D = "endpoint_D"
    APEX_A_EXCLUDED = "apex_A_excluded"
    OUTSIDE = "outside"


class IndexPair(BaseModel):
    p: float
    q: float
    m: int
    classification: PairClass

    @field_serializer("p", "q")
    def serialize_exponent(self, value: float, _info) -> float | str:
        return _exponent_to_json(value)

    @field_validator("p", "q", mode="before")
    @classmethod
    def parse_exponent(cls, value):
        return math.inf if isinstance(value, str) and value.lower() in ("inf", "infinity") else value

    @property
    def admissible(self) -> bool:
        return self.classification in (PairClass.INTERIOR, PairClass.EDGE, PairClass.ENDPOINT_B, PairClass.ENDPOINT_D)


class NormEstimate(BaseModel):
    """Fitted time exponent of ||u(t)||_q / ||u0||_p against the predicted one."""

    pair: IndexPair
    regime: str
    t_grid: list[float]
    ratios: list[list[float]]
    max_ratios: list[float]
    fitted_exponent: float
    slope_error: float | None = None
    predicted_exponent: float
    secondary_prediction: float | None = None
    tolerance: float
    dropped: int = 0
    passed: bool
