"""Run configuration: environment defaults, TOML config files and logging setup."""

import math
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator

from fundsol.errors import ConfigError

# Load environment variables from .env files
load_dotenv()  # Load from .env in current directory
load_dotenv(Path.home() / ".env")  # Load from ~/.env

DEFAULT_OUTPUT_DIR = "fundsol-out"
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_SEED = 0
COMMANDS = ("certify", "rho-audit", "phase-audit", "sphere-decomp", "kernel", "decay", "sharpness", "lpq", "highfreq")


def get_threads(cli_value: int | None = None) -> int:
    """Worker cap for parallel sweeps.

    Priority:
    1. Command line argument
    2. Environment variable FUNDSOL_THREADS (from shell or .env files)
    3. Number of available cores
    """
    if cli_value is not None:
        return cli_value
    if threads := os.getenv("FUNDSOL_THREADS"):
        return int(threads)
    return os.cpu_count() or 1


def get_output_dir(cli_value: str | None = None) -> Path:
    """Artifact directory, same priority as get_threads (FUNDSOL_OUTPUT_DIR)."""
    return Path(cli_value or os.getenv("FUNDSOL_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR)


def get_log_level(cli_value: str | None = None) -> str:
    return (cli_value or os.getenv("FUNDSOL_LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()


def get_seed(cli_value: int | None = None) -> int:
    if cli_value is not None:
        return cli_value
    if seed := os.getenv("FUNDSOL_SEED"):
        return int(seed)
    return DEFAULT_SEED


def configure_logging(level: str) -> None:
    """Send loguru output to stderr at the given level."""
    logger.remove()
    logger.add(sys.stderr, level=level)


def _parse_exponent(value):
    return math.inf if isinstance(value, str) and value.lower() in ("inf", "infinity") else value


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CertifyConfig(Section):
    sphere_density: int | None = Field(default=None, ge=8)


class RhoAuditConfig(Section):
    k_max: int = Field(default=3, ge=0, le=3)
    s_points: int = Field(default=21, ge=5)
    s_max: float = Field(default=2.0**20, gt=0.0)
    sphere_points: int | None = Field(default=None, ge=8)


class PhaseAuditConfig(Section):
    t_values: list[float] = [1.0, 10.0]
    r_values: list[float] = [1.0, 10.0]
    s_max: float = Field(default=1000.0, gt=0.0)
    s_points: int = Field(default=25, ge=5)
    direction: list[float] | None = None


class SphereDecompConfig(Section):
    s: float = Field(default=1.0, gt=0.0)
    lam_min: float = Field(default=10.0, gt=0.0)
    lam_max: float = Field(default=1000.0, gt=0.0)
    lam_points: int = Field(default=9, ge=3)
    cap_radius: float = Field(default=0.5, gt=0.0)
    direction: list[float] | None = None


class KernelConfig(Section):
    t: float = 1.0
    points: list[list[float]] = [[5.0, 0.0]]
    strategy: Literal["auto", "fft", "split"] = "auto"


class DecayConfig(Section):
    regime: Literal["small_t", "large_t"] = "large_t"
    times: list[float] | None = None
    scales: list[float] = [float(c) for c in range(9)]
    strategy: Literal["auto", "fft", "split"] = "auto"
    alpha: list[int] | None = None
    compact_k: int | None = Field(default=None, ge=0, le=2)

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, value: list[int] | None) -> list[int] | None:
        if value is not None and (not value or any(a < 0 for a in value)):
            raise ValueError("alpha must be a non-empty multi-index of non-negative integers")
        return value


class SharpnessConfig(Section):
    m: int = Field(default=4, ge=2)
    n: int = Field(default=2, ge=2, le=3)
    window: tuple[float, float] = (8.0, 64.0)
    count: int = Field(default=12, ge=5)
    tolerance: float = Field(default=0.1, gt=0.0)


class DataFamilyConfig(Section):
    """Initial data of the exponent fits.

    Unset widths take the regime defaults; an unset grid is sized from the symbol and the largest time.
    """

    type: Literal["gaussian", "shifted_gaussian", "random_bandlimited"] = "gaussian"
    widths: list[float] | None = Field(default=None, min_length=3)
    points_per_axis: int | None = Field(default=None, ge=16)
    extent: float | None = Field(default=None, gt=0.0)
    center_factor: float = Field(default=8.0, gt=1.0)
    band: float = Field(default=0.5, gt=0.0, le=1.0)

    @field_validator("widths")
    @classmethod
    def validate_widths(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(w <= 0.0 for w in value):
            raise ValueError("widths must be positive")
        return value

    @model_validator(mode="after")
    def validate_grid(self) -> "DataFamilyConfig":
        if self.type == "random_bandlimited" and (self.points_per_axis is None or self.extent is None):
            raise ValueError("random_bandlimited data need points_per_axis and extent")
        return self


class PairSection(Section):
    pair: tuple[float, float] = (1.0, math.inf)
    t_grid: list[float] | None = None

    @field_validator("pair", mode="before")
    @classmethod
    def parse_pair(cls, value):
        if isinstance(value, str):
            value = value.split(",")
        return tuple(_parse_exponent(v.strip() if isinstance(v, str) else v) for v in value)

    @field_validator("pair")
    @classmethod
    def validate_pair(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not all(1.0 <= v <= math.inf for v in value):
            raise ValueError(f"p and q must lie in [1, inf], got {value}")
        return value

    @field_serializer("pair")
    def serialize_pair(self, value: tuple[float, float], _info) -> list[float | str]:
        return ["inf" if math.isinf(v) else v for v in value]


class LpqConfig(PairSection):
    regime: Literal["small_t", "large_t"] = "small_t"
    tolerance: float = Field(default=0.05, gt=0.0)
    family: DataFamilyConfig = DataFamilyConfig()


class HighfreqConfig(PairSection):
    a_cut: float = Field(default=2.0, gt=0.0)
    tolerance: float = Field(default=0.1, gt=0.0)
    family: DataFamilyConfig = DataFamilyConfig(type="shifted_gaussian")


class RunConfig(BaseModel):
    """Resolved configuration of one CLI run; echoed into every JSON summary."""

    model_config = ConfigDict(extra="forbid")

    command: str | None = None
    symbol: Path | None = None
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    seed: int = DEFAULT_SEED
    threads: int | None = None
    certify: CertifyConfig = CertifyConfig()
    rho_audit: RhoAuditConfig = RhoAuditConfig()
    phase_audit: PhaseAuditConfig = PhaseAuditConfig()
    sphere_decomp: SphereDecompConfig = SphereDecompConfig()
    kernel: KernelConfig = KernelConfig()
    decay: DecayConfig = DecayConfig()
    sharpness: SharpnessConfig = SharpnessConfig()
    lpq: LpqConfig = LpqConfig()
    highfreq: HighfreqConfig = HighfreqConfig()

    @field_validator("command")
    @classmethod
    def validate_command(cls, value: str | None) -> str | None:
        if value is not None and value not in COMMANDS:
            raise ValueError(f"Unknown command {value!r}; expected one of {', '.join(COMMANDS)}")
        return value

    @field_validator("symbol")
    @classmethod
    def validate_symbol(cls, value: Path | None) -> Path | None:
        if value is not None and not value.is_file():
            raise ValueError(f"Symbol file {value} does not exist")
        return value

    @field_serializer("symbol", "output_dir")
    def serialize_path(self, value: Path | None, _info) -> str | None:
        return None if value is None else value.as_posix()


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a TOML config file (sections named like the commands, dashes as underscores) and apply overrides.

    Raises:
        ConfigError: if the file cannot be read or does not validate
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        data = {key.replace("-", "_"): value for key, value in data.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            data[key] = {**data.get(key, {}), **{k: v for k, v in value.items() if v is not None}}
        else:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
