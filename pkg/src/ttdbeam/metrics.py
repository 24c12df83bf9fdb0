"""SINR, spectral efficiency, array gain and energy efficiency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamformer import FullyDigitalPrecoder, HybridBeamformer, effective_stack
from .channel import ChannelTensor, array_response
from .config import Architecture, SystemConfig


def user_gains(ch: ChannelTensor, P: np.ndarray) -> np.ndarray:
    """``G[m, k, i] = h_{m,k}^H p_{m,i}`` for precoders ``P`` of shape (M, N, K)."""
    return np.einsum("mkn,mni->mki", ch.h.conj(), P)


def sinr_from_precoders(ch: ChannelTensor, P: np.ndarray) -> np.ndarray:
    """SINR of every (m, k), shape (M, K)."""
    g2 = np.abs(user_gains(ch, P)) ** 2
    sig = np.einsum("mkk->mk", g2)
    interf = g2.sum(axis=2) - sig
    return sig / (interf + ch.noise_var)


def sinr(ch: ChannelTensor, hb: HybridBeamformer, m: int, k: int, cfg: SystemConfig) -> float:
    """SINR of user ``k`` on subcarrier ``m`` (both 0-based)."""
    P = effective_stack(hb, cfg.freqs)
    return float(sinr_from_precoders(ch, P)[m, k])


def modified_sinr_all(ch: ChannelTensor, W: np.ndarray, tx_power: float) -> np.ndarray:
    """SINR with the noise term loaded by ``||W_m||_F^2 / P_t``; zero where ``W_m = 0``."""
    g2 = np.abs(user_gains(ch, W)) ** 2
    sig = np.einsum("mkk->mk", g2)
    interf = g2.sum(axis=2) - sig
    wn = np.sum(np.abs(W) ** 2, axis=(1, 2))
    den = interf + ch.noise_var / tx_power * wn[:, None]
    out = np.zeros_like(sig)
    np.divide(sig, den, out=out, where=wn[:, None] > 0)
    return out


def modified_sinr_hat(ch: ChannelTensor, W: FullyDigitalPrecoder | np.ndarray, m: int, k: int, cfg: SystemConfig) -> float:
    W = W.W if isinstance(W, FullyDigitalPrecoder) else W
    return float(modified_sinr_all(ch, W, cfg.tx_power)[m, k])


def se_from_sinr(gamma: np.ndarray, cfg: SystemConfig) -> float:
    return float(np.sum(np.log2(1 + gamma)) / (cfg.n_subcarriers + cfg.cp_length))


def se_from_precoders(ch: ChannelTensor, P: np.ndarray, cfg: SystemConfig) -> float:
    return se_from_sinr(sinr_from_precoders(ch, P), cfg)


def spectral_efficiency(ch: ChannelTensor, hb: HybridBeamformer, cfg: SystemConfig) -> float:
    """Sum rate over users and subcarriers divided by ``M + L_CP`` (bit/s/Hz)."""
    return se_from_precoders(ch, effective_stack(hb, cfg.freqs), cfg)


def normalized_array_gain(f, theta, r, v, cfg: SystemConfig) -> float:
    """``|b(f, theta, r)^T v| / N``."""
    v = np.asarray(v)
    b = array_response(f, theta, r, cfg, n_elements=v.shape[-1])
    return float(np.abs(b @ v) / v.shape[-1])


@dataclass(frozen=True)
class PowerModel:
    """Component power draws in watts.

    ``ttd_count="physical"`` counts ``N_RF * N_T`` delay lines; ``"printed"``
    uses ``N * N_T`` instead.
    """

    p_bb: float = 0.3
    p_rf: float = 0.2
    p_ps: float = 0.03
    p_ttd: float = 0.1
    ttd_count: str = "physical"

    def __post_init__(self):
        if min(self.p_bb, self.p_rf, self.p_ps, self.p_ttd) < 0:
            raise ValueError("power draws must be nonnegative")
        if self.ttd_count not in ("physical", "printed"):
            raise ValueError(f"unknown ttd_count {self.ttd_count!r}")


_DIGITAL = {"OptimalDigital"}
_NO_TTD = {"ConventionalPS", "CF", "MCM", "MCCM"}


def power_consumption(cfg: SystemConfig, pm: PowerModel, scheme="FDA_Full") -> float:
    """Total transmitter power for a scheme id (string or enum)."""
    name = getattr(scheme, "value", scheme)
    N, n_rf, n_t = cfg.n_antennas, cfg.n_rf, cfg.n_ttd
    if name in _DIGITAL:
        return cfg.tx_power + pm.p_bb + N * pm.p_rf
    arch = cfg.architecture
    if name == "FDA_Full":
        arch = Architecture.FULLY_CONNECTED
    elif name == "FDA_Sub":
        arch = Architecture.SUB_CONNECTED
    n_ps = N * n_rf if arch is Architecture.FULLY_CONNECTED else N
    total = cfg.tx_power + pm.p_bb + n_rf * pm.p_rf + n_ps * pm.p_ps
    if name not in _NO_TTD:
        n_ttd = n_rf * n_t if pm.ttd_count == "physical" else N * n_t
        total += n_ttd * pm.p_ttd
    return total


def energy_efficiency(se: float, cfg: SystemConfig, pm: PowerModel, scheme="FDA_Full") -> float:
    """Spectral efficiency per watt of consumed power."""
    if se < 0:
        raise ValueError("spectral efficiency must be nonnegative")
    return se / power_consumption(cfg, pm, scheme)


@dataclass
class RateReport:
    rates: np.ndarray  # (M, K) log2(1 + SINR)
    spectral_efficiency: float
    energy_efficiency: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_precoders(cls, ch, P, cfg, pm: PowerModel | None = None, scheme="FDA_Full") -> "RateReport":
        rates = np.log2(1 + sinr_from_precoders(ch, P))
        se = float(rates.sum() / (cfg.n_subcarriers + cfg.cp_length))
        ee = energy_efficiency(se, cfg, pm, scheme) if pm is not None else None
        return cls(rates, se, ee)
