"""YAML run configurations for the command-line tools.

Every command reads one YAML document validated by a pydantic model;
unknown keys are rejected.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import ConfigError

Root = Union[float, Tuple[float, float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DesignGainsConfig(_Strict):
    n: Optional[int] = None
    roots: Optional[List[Root]] = None
    coeffs: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_target(self):
        if (self.roots is None) == (self.coeffs is None):
            raise ValueError("give exactly one of 'roots' or 'coeffs'")
        deg = len(self.roots) if self.roots is not None else len(self.coeffs) - 1
        if deg < 2 or deg % 2:
            raise ValueError(f"target degree must be even and >= 2, got {deg}")
        if self.n is not None and deg != 2 * self.n - 2:
            raise ValueError(f"n={self.n} needs a target of degree {2 * self.n - 2}, got {deg}")
        return self


class NoiseConfig(_Strict):
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0


class DisturbanceConfig(_Strict):
    amplitudes: List[float] = []
    omegas: List[float] = []

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.amplitudes) != len(self.omegas):
            raise ValueError("disturbance amplitudes and omegas must have equal length")
        return self


class StepConfig(_Strict):
    h: float = 1e-3
    T: float = 5.0
    stride: int = 1
    steady_fraction: float = 0.5


class LinearPlantConfig(_Strict):
    kind: Literal["linear"] = "linear"
    Phi: List[float]


class VdpPlantConfig(_Strict):
    kind: Literal["vdp"] = "vdp"
    alpha: float = 1.0
    beta: float = 0.5


class ObserverConfig(_Strict):
    label: Optional[str] = None
    kind: Literal["standard", "limited"]
    ell: float = 1.0
    gains: Optional[List[Union[float, Tuple[float, float]]]] = None
    roots: Optional[List[Root]] = None
    bound: Optional[float] = None
    init: Union[Literal["zero", "random", "match"], List[float]] = "zero"

    @model_validator(mode="after")
    def _gain_source(self):
        if (self.gains is None) == (self.roots is None):
            raise ValueError("observer needs exactly one of 'gains' or 'roots'")
        return self


class SimulateConfig(_Strict):
    plant: Union[LinearPlantConfig, VdpPlantConfig]
    x0: List[float]
    observers: List[ObserverConfig]
    noise: NoiseConfig = NoiseConfig()
    disturbance: DisturbanceConfig = DisturbanceConfig()
    sim: StepConfig = StepConfig()
    seed: int = 0


class OmegaGrid(_Strict):
    min: float = 1e3
    max: float = 1e6
    points: int = 20


class SensitivityConfig(_Strict):
    Phi: List[float]
    ell: float = 1.0
    K: Optional[List[float]] = None
    roots_std: Optional[List[Root]] = None
    ladder: Optional[List[Tuple[float, float]]] = None
    roots_new: Optional[List[Root]] = None
    omega: OmegaGrid = OmegaGrid()

    @model_validator(mode="after")
    def _gains(self):
        if (self.K is None) == (self.roots_std is None):
            raise ValueError("give exactly one of 'K' or 'roots_std'")
        if (self.ladder is None) == (self.roots_new is None):
            raise ValueError("give exactly one of 'ladder' or 'roots_new'")
        return self


class VdpBenchConfigModel(_Strict):
    alpha: float = 1.0
    beta: float = 0.5
    ell: float = 100.0
    z0: Tuple[float, float] = (1.0, 0.0)
    ladder: Optional[List[Tuple[float, float]]] = None
    K5: Optional[List[float]] = None
    noise_amplitude: float = 1e-2
    noise_omega: float = 1e3
    noise_phase: float = 0.0
    T_clean: float = 20.0
    h_clean: float = 1e-3
    T_noisy: float = 40.0
    h_noisy: float = 2.5e-4
    steady_fraction: float = 0.5
    bound: Optional[float] = None
    reference_T: float = 40.0


SCHEMAS = {
    "design-gains": DesignGainsConfig,
    "simulate": SimulateConfig,
    "sensitivity": SensitivityConfig,
    "vdp-bench": VdpBenchConfigModel,
}


def parse_config(command: str, text: str | None):
    """Validate a YAML document for ``command``; empty text means defaults."""
    model = SCHEMAS[command]
    try:
        data = yaml.safe_load(text) if text else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a YAML mapping")
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(command: str, path) -> object:
    if path is None:
        return parse_config(command, None)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(command, text)


def serialize_config(cfg) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
