"""System constants for the TTD hybrid beamforming simulator."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
FREE_SPACE_IMPEDANCE = 377.0


class ConfigurationError(ValueError):
    """Raised when array/channel dimensions are inconsistent."""


class Architecture(str, Enum):
    FULLY_CONNECTED = "fully-connected"
    SUB_CONNECTED = "sub-connected"


Absorption = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class SystemConfig:
    """Physical and architectural constants.

    Defaults follow the reference setup: 512-element half-wavelength ULA at
    100 GHz, 10 GHz bandwidth over 10 subcarriers, 4 users, 4 RF chains and
    16 TTDs per chain. ``antenna_spacing`` and ``t_max`` default to
    ``c / (2 f_c)`` and ``N / (2 f_c)`` respectively when left as ``None``.

    ``tx_power`` is per subcarrier (W); ``noise_density`` is dBm/Hz.
    """

    n_antennas: int = 512
    antenna_spacing: float | None = None
    center_freq: float = 100e9
    bandwidth: float = 10e9
    n_subcarriers: int = 10
    cp_length: int = 4
    n_users: int = 4
    n_rf: int = 4
    n_ttd: int = 16
    t_max: float | None = None
    tx_power: float = 1.0
    noise_density: float = -174.0
    architecture: Architecture = Architecture.FULLY_CONNECTED
    absorption: Absorption = 0.0
    n_scatterers: int = 4
    reflection_db: float = -15.0
    nlos_mode: str = "simplified"
    material_impedance: float = 188.5
    roughness: float = 1e-4
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        arch = Architecture(self.architecture)
        object.__setattr__(self, "architecture", arch)
        if self.antenna_spacing is None:
            object.__setattr__(self, "antenna_spacing", SPEED_OF_LIGHT / (2 * self.center_freq))
        if self.t_max is None:
            object.__setattr__(self, "t_max", self.n_antennas / (2 * self.center_freq))
        self.validate()

    def validate(self) -> None:
        N, K = self.n_antennas, self.n_users
        if min(N, K, self.n_rf, self.n_ttd, self.n_subcarriers) < 1:
            raise ConfigurationError("sizes must be positive integers")
        if not K <= self.n_rf <= N:
            raise ConfigurationError(f"need K <= N_RF <= N, got K={K}, N_RF={self.n_rf}, N={N}")
        if self.architecture is Architecture.FULLY_CONNECTED:
            if N % self.n_ttd:
                raise ConfigurationError(f"N={N} not divisible by N_T={self.n_ttd}")
        else:
            if N % self.n_rf or (N // self.n_rf) % self.n_ttd:
                raise ConfigurationError(
                    f"sub-connected needs N_RF | N and N_T | N/N_RF (N={N}, N_RF={self.n_rf}, N_T={self.n_ttd})"
                )
        if self.t_max < 0:
            raise ConfigurationError("t_max must be nonnegative")
        if not 0 <= self.bandwidth < 2 * self.center_freq:
            raise ConfigurationError("bandwidth must satisfy 0 <= B < 2 f_c")
        if self.cp_length < 0:
            raise ConfigurationError("cp_length must be nonnegative")
        if self.nlos_mode not in ("simplified", "full"):
            raise ConfigurationError(f"unknown nlos_mode {self.nlos_mode!r}")

    # -- derived quantities -------------------------------------------------

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_freq

    @property
    def is_sub(self) -> bool:
        return self.architecture is Architecture.SUB_CONNECTED

    @property
    def n_sub(self) -> int:
        """Antennas behind one RF chain."""
        return self.n_antennas // self.n_rf if self.is_sub else self.n_antennas

    @property
    def group_size(self) -> int:
        """Antennas behind one TTD."""
        return self.n_sub // self.n_ttd

    @property
    def noise_var(self) -> float:
        """Per-subcarrier noise power in watts."""
        return 10 ** ((self.noise_density - 30) / 10) * self.bandwidth / self.n_subcarriers

    @property
    def freqs(self) -> np.ndarray:
        m = np.arange(1, self.n_subcarriers + 1)
        return self.center_freq + self.bandwidth * (2 * m - 1 - self.n_subcarriers) / (2 * self.n_subcarriers)

    def k_abs(self, f: float) -> float:
        if callable(self.absorption):
            return float(self.absorption(f))
        return float(self.absorption)

    def replace(self, **changes: Any) -> "SystemConfig":
        """Copy with changes; derived defaults are recomputed unless given."""
        d = self.to_dict(explicit=False)
        d.update(changes)
        return SystemConfig.from_dict(d)

    # -- serialization -----------------------------------------------------

    def to_dict(self, explicit: bool = True) -> dict:
        if callable(self.absorption):
            raise ConfigurationError("callable absorption cannot be serialized")
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "extra":
                continue
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else v
        if not explicit:
            # keep spacing/t_max tied to N and f_c unless they were overridden
            if np.isclose(self.antenna_spacing, SPEED_OF_LIGHT / (2 * self.center_freq), rtol=1e-15, atol=0):
                out["antenna_spacing"] = None
            if np.isclose(self.t_max, self.n_antennas / (2 * self.center_freq), rtol=1e-15, atol=0):
                out["t_max"] = None
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        return cls.from_dict(json.loads(text))


def desk_config(**changes: Any) -> SystemConfig:
    """Reduced setup used by tests and the default acceptance runs."""
    base = dict(n_antennas=64, n_subcarriers=5, n_users=2, n_rf=2, n_ttd=4)
    base.update(changes)
    return SystemConfig(**base)
