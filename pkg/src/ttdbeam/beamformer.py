"""TTD hybrid beamformer: phase-shifter network, delay network, digital stage.

Phase shifters are stored as phases, one row per RF chain. For the
fully-connected architecture a row spans all ``N`` antennas; for the
sub-connected one it spans the chain's ``N / N_RF`` antennas. Within a row,
consecutive runs of ``group_size`` antennas share one TTD.

Subcarrier indices ``m`` are 0-based throughout this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import Architecture, ConfigurationError, SystemConfig

FORMAT_VERSION = 1


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseNetwork:
    phases: np.ndarray  # (N_RF, antennas per chain), radians
    n_ttd: int
    architecture: Architecture = Architecture.FULLY_CONNECTED

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float)
        if ph.ndim != 2 or ph.shape[1] % self.n_ttd:
            raise ConfigurationError(f"phase matrix {ph.shape} incompatible with N_T={self.n_ttd}")
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "architecture", Architecture(self.architecture))

    @property
    def n_rf(self) -> int:
        return self.phases.shape[0]

    @property
    def n_per_chain(self) -> int:
        return self.phases.shape[1]

    @property
    def n_antennas(self) -> int:
        if self.architecture is Architecture.SUB_CONNECTED:
            return self.n_rf * self.n_per_chain
        return self.n_per_chain

    @property
    def group_size(self) -> int:
        return self.n_per_chain // self.n_ttd

    def values(self) -> np.ndarray:
        """Unit-modulus PS weights, shape (N_RF, antennas per chain)."""
        return np.exp(1j * self.phases)

    def rows(self, n: int) -> slice:
        """Antenna rows driven by chain ``n``."""
        if self.architecture is Architecture.SUB_CONNECTED:
            return slice(n * self.n_per_chain, (n + 1) * self.n_per_chain)
        return slice(0, self.n_per_chain)

    def mask(self) -> np.ndarray:
        """Boolean support of the dense PS matrix A (N x N_RF*N_T)."""
        N, T, g = self.n_antennas, self.n_ttd, self.group_size
        out = np.zeros((N, self.n_rf * T), dtype=bool)
        for n in range(self.n_rf):
            base = self.rows(n).start
            for l in range(T):
                out[base + l * g : base + (l + 1) * g, n * T + l] = True
        return out

    def dense(self) -> np.ndarray:
        """Dense PS matrix A."""
        A = np.zeros((self.n_antennas, self.n_rf * self.n_ttd), dtype=complex)
        vals = self.values()
        T, g = self.n_ttd, self.group_size
        for n in range(self.n_rf):
            base = self.rows(n).start
            for l in range(T):
                A[base + l * g : base + (l + 1) * g, n * T + l] = vals[n, l * g : (l + 1) * g]
        return A


@dataclass(frozen=True)
class DelayNetwork:
    t: np.ndarray  # (N_RF, N_T), seconds

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    def within(self, t_max: float, tol: float = 0.0) -> bool:
        return bool(np.all(self.t >= -tol) and np.all(self.t <= t_max + tol))

    @classmethod
    def zeros(cls, n_rf: int, n_ttd: int) -> "DelayNetwork":
        return cls(np.zeros((n_rf, n_ttd)))


@dataclass(frozen=True)
class DigitalPrecoder:
    D: np.ndarray  # (M, N_RF, K)


@dataclass(frozen=True)
class FullyDigitalPrecoder:
    W: np.ndarray  # (M, N, K)


@dataclass(frozen=True)
class HybridBeamformer:
    ps: PhaseNetwork
    delays: DelayNetwork
    digital: DigitalPrecoder

    @property
    def architecture(self) -> Architecture:
        return self.ps.architecture

    @property
    def D(self) -> np.ndarray:
        return self.digital.D

    def with_digital(self, D) -> "HybridBeamformer":
        return HybridBeamformer(self.ps, self.delays, DigitalPrecoder(np.asarray(D)))

    def check_shapes(self, cfg: SystemConfig) -> None:
        if self.ps.n_antennas != cfg.n_antennas or self.ps.n_rf != cfg.n_rf or self.ps.n_ttd != cfg.n_ttd:
            raise ConfigurationError("phase network does not match configuration")
        if self.ps.architecture is not cfg.architecture:
            raise ConfigurationError("architecture mismatch")
        if self.delays.t.shape != (cfg.n_rf, cfg.n_ttd):
            raise ConfigurationError("delay matrix does not match configuration")
        if self.D.shape != (cfg.n_subcarriers, cfg.n_rf, cfg.n_users):
            raise ConfigurationError(f"digital precoder shape {self.D.shape} does not match configuration")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        D = self.D
        return {
            "version": FORMAT_VERSION,
            "architecture": self.architecture.value,
            "n_ttd": self.ps.n_ttd,
            "phases": self.ps.phases.tolist(),
            "delays": self.delays.t.tolist(),
            "digital": np.stack([D.real, D.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridBeamformer":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported beamformer format version {d.get('version')!r}")
        ri = np.asarray(d["digital"], dtype=float)
        return cls(
            PhaseNetwork(np.asarray(d["phases"]), int(d["n_ttd"]), Architecture(d["architecture"])),
            DelayNetwork(np.asarray(d["delays"])),
            DigitalPrecoder(ri[..., 0] + 1j * ri[..., 1]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "HybridBeamformer":
        return cls.from_dict(json.loads(text))


def ttd_response(delays: DelayNetwork, f: float) -> np.ndarray:
    """Block-diagonal T(f): block ``n`` is the column ``exp(-j 2 pi f t_n)``."""
    t = delays.t
    n_rf, n_t = t.shape
    T = np.zeros((n_rf * n_t, n_rf), dtype=complex)
    for n in range(n_rf):
        T[n * n_t : (n + 1) * n_t, n] = np.exp(-2j * np.pi * f * t[n])
    return T


def chain_weights(ps: PhaseNetwork, delays: DelayNetwork, freqs) -> np.ndarray:
    """Per-chain analog weights ``a_n * exp(-j 2 pi f t_n)``, shape (M, N_RF, antennas per chain)."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    ttd = np.exp(-2j * np.pi * freqs[:, None, None] * delays.t[None])  # (M, N_RF, N_T)
    ttd = np.repeat(ttd, ps.group_size, axis=2)
    return ps.values()[None] * ttd


def analog_stack(ps: PhaseNetwork, delays: DelayNetwork, freqs) -> np.ndarray:
    """Dense ``A T_m`` for every frequency, shape (M, N, N_RF)."""
    cw = chain_weights(ps, delays, freqs)
    M = cw.shape[0]
    out = np.zeros((M, ps.n_antennas, ps.n_rf), dtype=complex)
    for n in range(ps.n_rf):
        out[:, ps.rows(n), n] = cw[:, n]
    return out


def assemble_analog(ps: PhaseNetwork, delays: DelayNetwork, f: float, cfg: SystemConfig) -> np.ndarray:
    """``A T(f)`` as an N x N_RF matrix."""
    if ps.n_antennas != cfg.n_antennas or ps.n_rf != cfg.n_rf or ps.n_ttd != cfg.n_ttd:
        raise ConfigurationError("phase network does not match configuration")
    if delays.t.shape != (cfg.n_rf, cfg.n_ttd):
        raise ConfigurationError("delay matrix does not match configuration")
    return analog_stack(ps, delays, [f])[0]


def effective_stack(hb: HybridBeamformer, freqs) -> np.ndarray:
    """``A T_m D_m`` for all subcarriers, shape (M, N, K)."""
    return analog_stack(hb.ps, hb.delays, freqs) @ hb.D


def effective_precoder(hb: HybridBeamformer, m: int, cfg: SystemConfig) -> np.ndarray:
    """``A T_m D_m`` for subcarrier ``m`` (0-based)."""
    F = assemble_analog(hb.ps, hb.delays, cfg.freqs[m], cfg)
    return F @ hb.D[m]


def power_rescale(hb: HybridBeamformer, cfg: SystemConfig) -> HybridBeamformer:
    """Scale each ``D_m`` so that ``||A T_m D_m||_F^2 = P_t``."""
    P = effective_stack(hb, cfg.freqs)
    norms = np.linalg.norm(P, axis=(1, 2))
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("effective precoder has zero or non-finite norm")
    scale = np.sqrt(cfg.tx_power) / norms
    return hb.with_digital(hb.D * scale[:, None, None])


def random_hybrid(cfg: SystemConfig, rng: np.random.Generator, delays: bool = True) -> HybridBeamformer:
    """Random feasible beamformer; handy for tests and solver probes."""
    ps = PhaseNetwork(rng.uniform(-np.pi, np.pi, (cfg.n_rf, cfg.n_sub)), cfg.n_ttd, cfg.architecture)
    t = rng.uniform(0, cfg.t_max, (cfg.n_rf, cfg.n_ttd)) if delays else np.zeros((cfg.n_rf, cfg.n_ttd))
    D = rng.standard_normal((cfg.n_subcarriers, cfg.n_rf, cfg.n_users)) + 1j * rng.standard_normal(
        (cfg.n_subcarriers, cfg.n_rf, cfg.n_users)
    )
    return HybridBeamformer(ps, DelayNetwork(t), DigitalPrecoder(D))
