"""
Configuration management for speckit.
Run configuration (TOML file sections validated with pydantic) and environment
settings for logging and worker threads.
"""

import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import psutil
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .envelope_fit import default_g_grid
from .exceptions import ConfigError, SpeckitException
from .spectral_model import SpreadFunctionModel, WavelengthGrid
from .training_lab import (
    DEFAULT_AMPLITUDE_SCALE,
    DEFAULT_LINE_SETS,
    EXAMPLE_LINES,
    GaussianLine,
    TrainingSpec,
    scale_lines,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REQUIRED_SECTIONS = ("grids", "kernel", "noise", "alphas", "seeds", "fit")
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "data" / "defaults.toml"

LineRow = Tuple[float, float, float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Section):
    """Target (measured) and source (restored) wavelength grids in nm."""
    target_start: float = Field(default=450.0, description="First measured wavelength")
    target_step: float = Field(default=1.0, description="Measured grid step")
    target_count: int = Field(default=201, description="Number of measured nodes")
    source_start: float = Field(default=460.0, description="First restored wavelength")
    source_step: float = Field(default=1.0, description="Restored grid step")
    source_count: int = Field(default=181, description="Number of restored nodes")

    @model_validator(mode="after")
    def _valid_grids(self) -> "GridSection":
        self.target_grid()
        self.source_grid()
        return self

    def target_grid(self) -> WavelengthGrid:
        return WavelengthGrid(self.target_start, self.target_step, self.target_count)

    def source_grid(self) -> WavelengthGrid:
        return WavelengthGrid(self.source_start, self.source_step, self.source_count)


class KernelSection(_Section):
    q: float = Field(default=0.015, description="Width-to-wavelength ratio of the spread function")
    zeta: float = Field(default=0.0, description="Width perturbation assumed when restoring the example")

    @model_validator(mode="after")
    def _valid_model(self) -> "KernelSection":
        SpreadFunctionModel(self.q, self.zeta)
        return self

    def model(self) -> SpreadFunctionModel:
        return SpreadFunctionModel(self.q)

    def assumed_model(self) -> SpreadFunctionModel:
        return SpreadFunctionModel(self.q, self.zeta)


class LineSetSection(_Section):
    name: str = Field(description="Label used in curve ids")
    lines: List[LineRow] = Field(description="Rows of (center nm, relative amplitude, sigma nm)")

    @field_validator("lines")
    @classmethod
    def _valid_lines(cls, rows: List[LineRow]) -> List[LineRow]:
        if not rows:
            raise ValueError("a line set needs at least one line")
        for center, amplitude, sigma in rows:
            GaussianLine(center, amplitude, sigma)
        return rows


def _default_line_sets() -> List[LineSetSection]:
    return [LineSetSection(name=name, lines=list(rows)) for name, rows in DEFAULT_LINE_SETS.items()]


class LinesSection(_Section):
    amplitude_scale: float = Field(default=DEFAULT_AMPLITUDE_SCALE, description="Multiplier of relative amplitudes")
    sets: List[LineSetSection] = Field(default_factory=_default_line_sets, description="Training line sets")

    @field_validator("amplitude_scale")
    @classmethod
    def _nonnegative_scale(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("amplitude_scale must be nonnegative")
        return value

    @field_validator("sets")
    @classmethod
    def _unique_names(cls, sets: List[LineSetSection]) -> List[LineSetSection]:
        if not sets:
            raise ValueError("at least one line set is required")
        names = [s.name for s in sets]
        if len(set(names)) != len(names):
            raise ValueError("line set names must be unique")
        return sets


class NoiseSection(_Section):
    sds: List[float] = Field(default=[0.01, 0.02, 0.03, 0.04], description="Noise standard deviations")
    zetas: List[float] = Field(default=[-0.02, 0.01, 0.04], description="Kernel width perturbations")

    @field_validator("sds")
    @classmethod
    def _positive_sds(cls, values: List[float]) -> List[float]:
        if not values or any(not v > 0 for v in values):
            raise ValueError("noise SDs must be a non-empty list of positive values")
        return values

    @field_validator("zetas")
    @classmethod
    def _valid_zetas(cls, values: List[float]) -> List[float]:
        if not values or any(not 1.0 + z > 0 for z in values):
            raise ValueError("zetas must be a non-empty list of values above -1")
        return values


class AlphaSection(_Section):
    log10_min: float = Field(default=-6.0, description="Smallest log10(alpha)")
    log10_max: float = Field(default=0.0, description="Largest log10(alpha)")
    count: int = Field(default=41, description="Number of log-uniform alphas")

    @model_validator(mode="after")
    def _valid_range(self) -> "AlphaSection":
        if self.count < 2:
            raise ValueError("alpha count must be at least 2")
        if not self.log10_min < self.log10_max:
            raise ValueError("log10_min must be below log10_max")
        return self

    def log10_values(self) -> np.ndarray:
        return np.linspace(self.log10_min, self.log10_max, self.count)

    def values(self) -> np.ndarray:
        return 10.0 ** self.log10_values()


class SeedSection(_Section):
    training: List[int] = Field(default=[1, 2], description="Seeds of the training ensemble")
    example: int = Field(default=7, description="Noise seed of the original example")

    @field_validator("training")
    @classmethod
    def _nonnegative(cls, values: List[int]) -> List[int]:
        if not values or any(v < 0 for v in values):
            raise ValueError("training seeds must be a non-empty list of nonnegative integers")
        return values

    @field_validator("example")
    @classmethod
    def _nonnegative_example(cls, value: int) -> int:
        if value < 0:
            raise ValueError("example seed must be nonnegative")
        return value


class ExampleSection(_Section):
    """Original example: the spectrum to restore."""
    lines: List[LineRow] = Field(default_factory=lambda: list(EXAMPLE_LINES))
    noise_sd: float = Field(default=0.02, description="Noise SD of the measured spectrum")

    @field_validator("noise_sd")
    @classmethod
    def _positive_sd(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("noise_sd must be positive")
        return value


class FitSection(_Section):
    mode: Literal["scan", "analytic"] = "scan"
    g_min: float = 1e-3
    g_max: float = 1.0
    g_count: int = 25
    contact_tol: float = Field(default=1e-3, description="Allowed shortfall of the envelope in scan mode")
    tol: float = Field(default=1e-10, description="Relative alpha change ending the contact iteration")
    max_iter: int = 100
    g_init: float = 0.1

    @model_validator(mode="after")
    def _valid_fit(self) -> "FitSection":
        if not (0 < self.g_min <= self.g_max) or self.g_count < 1:
            raise ValueError("g grid needs 0 < g_min <= g_max and g_count >= 1")
        if self.contact_tol < 0 or self.tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.g_init > 0:
            raise ValueError("g_init must be positive")
        return self

    def g_grid(self) -> np.ndarray:
        return default_g_grid(self.g_count, self.g_min, self.g_max)

    def options(self) -> Dict[str, Any]:
        """Keyword options of select_from_curves."""
        return {
            "g_grid": self.g_grid(),
            "contact_tol": self.contact_tol,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "g_init": self.g_init,
        }


class IOSection(_Section):
    out: str = Field(default="speckit-run", description="Output directory")
    measured: Optional[str] = Field(default=None, description="Measured spectrum to restore")
    exact: Optional[str] = Field(default=None, description="Exact spectrum for validation")


class RunConfig(_Section):
    """Complete pipeline configuration."""
    grids: GridSection = Field(default_factory=GridSection)
    kernel: KernelSection = Field(default_factory=KernelSection)
    lines: LinesSection = Field(default_factory=LinesSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    alphas: AlphaSection = Field(default_factory=AlphaSection)
    seeds: SeedSection = Field(default_factory=SeedSection)
    example: ExampleSection = Field(default_factory=ExampleSection)
    fit: FitSection = Field(default_factory=FitSection)
    io: IOSection = Field(default_factory=IOSection)

    def training_spec(self) -> TrainingSpec:
        return TrainingSpec(
            line_sets=tuple(scale_lines(s.lines, self.lines.amplitude_scale) for s in self.lines.sets),
            line_set_names=tuple(s.name for s in self.lines.sets),
            noise_sds=tuple(self.noise.sds),
            zeta_values=tuple(self.noise.zetas),
            alpha_grid=self.alphas.values(),
            seeds=tuple(self.seeds.training),
            target_grid=self.grids.target_grid(),
            source_grid=self.grids.source_grid(),
            q=self.kernel.q,
        )

    def example_lines(self) -> Tuple[GaussianLine, ...]:
        return scale_lines(self.example.lines, self.lines.amplitude_scale)

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to dictionary"""
        return self.model_dump(mode="json")

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> "RunConfig":
        """Create config from dictionary"""
        try:
            return cls.model_validate(config_dict)
        except ValidationError as e:
            raise ConfigError(_describe_validation_error(e))

    def with_overrides(
        self,
        out: Optional[str] = None,
        seed: Optional[int] = None,
        mode: Optional[str] = None,
    ) -> "RunConfig":
        """Apply command-line overrides."""
        data = self.to_dict()
        if out is not None:
            data["io"]["out"] = out
        if seed is not None:
            data["seeds"]["example"] = seed
        if mode is not None:
            data["fit"]["mode"] = mode
        return RunConfig.from_dict(data)


class SpeckitSettings(BaseSettings):
    """Environment settings (SPECKIT_THREADS, SPECKIT_LOG_LEVEL, SPECKIT_JSON_LOGS)."""
    threads: int = Field(default=0, description="Worker threads, 0 = physical core count")
    log_level: str = Field(default="INFO", description="Log level")
    json_logs: bool = Field(default=False, description="Render logs as JSON lines")

    model_config = SettingsConfigDict(env_prefix="SPECKIT_", case_sensitive=False)

    @field_validator("threads")
    @classmethod
    def _nonnegative_threads(cls, value: int) -> int:
        if value < 0:
            raise ValueError("threads must be nonnegative")
        return value

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def _describe_validation_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "config"
    return f"invalid config field '{location}': {first['msg']}"


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a run configuration.

    Args:
        path: TOML file; built-in defaults when None

    Returns:
        RunConfig: validated configuration

    Raises:
        ConfigError: If the file is unreadable, a required section is missing or a field is invalid
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {str(e)}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {str(e)}")

    for section in REQUIRED_SECTIONS:
        if section not in raw:
            raise ConfigError(f"config file {path} is missing required section [{section}]")
    unknown = sorted(set(raw) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"config file {path} has unknown section(s): {', '.join(unknown)}")
    try:
        return RunConfig.from_dict(raw)
    except ConfigError:
        raise
    except SpeckitException as e:
        raise ConfigError(f"invalid config: {str(e)}")
