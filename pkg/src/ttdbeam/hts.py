"""Heuristic two-stage (HTS) design.

Stage one builds each RF chain's analog beamformer from the target user's
line-of-sight location only. The piecewise-near-field (PNF) design treats every
TTD sub-array as a small near-field array around its own center and lets the
delays line the sub-arrays up; the robust design refines the PNF starting point
by maximizing the exact average array gain over the band.

Stage two optimizes the digital precoder on the N_RF-dimensional equivalent
channels seen through the fixed analog front end.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import fp
from .beamformer import DelayNetwork, DigitalPrecoder, HybridBeamformer, PhaseNetwork, analog_stack
from .channel import ChannelTensor, Scenario, array_response, element_offsets
from .config import SPEED_OF_LIGHT, Architecture, SystemConfig
from .fda import SolverReport, delay_grid
from .metrics import se_from_precoders

C = SPEED_OF_LIGHT


class DesignMode(str, Enum):
    PNF = "PNF"
    ROBUST = "Robust"


@dataclass(frozen=True)
class PNFGeometry:
    xi: np.ndarray  # (N_T,) sub-array center offsets, meters
    nu: np.ndarray  # (N_T,) user range seen from each sub-array center
    vartheta: np.ndarray  # (N_T,) user angle seen from each sub-array center
    nu_tilde: np.ndarray  # (N_T, N/N_T) per-element ranges
    r: float

    @property
    def nu_max(self) -> float:
        return float(np.max(self.nu))


@dataclass(frozen=True)
class AnalogChainDesign:
    phases: np.ndarray  # (antennas per chain,)
    delays: np.ndarray  # (N_T,)
    user: int = 0
    mode: str = "PNF"

    def weights(self, freqs) -> np.ndarray:
        """Analog weights ``a * exp(-j 2 pi f t)`` for each frequency, shape (M, n)."""
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        g = self.phases.size // self.delays.size
        ttd = np.repeat(np.exp(-2j * np.pi * freqs[:, None] * self.delays[None]), g, axis=1)
        return np.exp(1j * self.phases)[None] * ttd


# -- geometry -------------------------------------------------------------------


def pnf_geometry(theta: float, r: float, cfg: SystemConfig) -> PNFGeometry:
    if r <= 0:
        raise ValueError("range must be positive")
    N, T, d = cfg.n_sub, cfg.n_ttd, cfg.antenna_spacing
    g = N // T
    xi = (np.arange(T) - (T - 1) / 2) * g * d
    nu = np.sqrt(r**2 + xi**2 - 2 * r * xi * np.cos(theta))
    cos_v = np.clip((r * np.cos(theta) - xi) / nu, -1.0, 1.0)
    vartheta = np.arccos(cos_v)
    chi = element_offsets(g) * d
    nu_t = np.sqrt(nu[:, None] ** 2 + chi[None] ** 2 - 2 * nu[:, None] * chi[None] * cos_v[:, None])
    return PNFGeometry(xi, nu, vartheta, nu_t, float(r))


def _phi_hat(geom: PNFGeometry, cfg: SystemConfig) -> np.ndarray:
    """Frequency-independent within-sub-array responses at f_c, shape (N_T, N/N_T)."""
    return np.exp(-2j * np.pi * cfg.center_freq * (geom.nu_tilde - geom.nu[:, None]) / C)


def pnf_approx_response(f, theta: float, r: float, cfg: SystemConfig) -> np.ndarray:
    """PNF approximation of ``b(f, theta, r)``; ``f`` may be an array."""
    geom = pnf_geometry(theta, r, cfg)
    ph = _phi_hat(geom, cfg)
    f = np.asarray(f, dtype=float)
    outer = np.exp(-2j * np.pi * f[..., None] * (geom.nu - r) / C)  # f.shape + (N_T,)
    return (outer[..., :, None] * ph).reshape(f.shape + (-1,))


def delta_criterion(nt_ratio: float, bw_ratio: float) -> float:
    """Worst-case PNF gain bound ``|x sin(pi y / (4 x)) / sin(pi y / 4)|``."""
    x, y = float(nt_ratio), float(bw_ratio)
    if not 0 < x <= 1 or not 0 <= y <= 1:
        raise ValueError("ratios must lie in (0, 1]")
    if y == 0:
        return 1.0
    return float(abs(x * np.sin(np.pi * y / (4 * x)) / np.sin(np.pi * y / 4)))


def min_ttds(n_antennas: int, bw_ratio: float, threshold: float) -> int:
    """Smallest integer N_T with ``delta_criterion(N_T / N, B / f_c) >= threshold``."""
    for nt in range(1, n_antennas + 1):
        if delta_criterion(nt / n_antennas, bw_ratio) >= threshold:
            return nt
    return n_antennas


def pnf_ps_design(theta: float, r: float, cfg: SystemConfig) -> np.ndarray:
    """PS phases ``a_l = conj(phi_hat_l)``, flattened to length N."""
    geom = pnf_geometry(theta, r, cfg)
    return -np.angle(_phi_hat(geom, cfg)).ravel()


# -- delays -------------------------------------------------------------------------


def prop2_bound(cfg: SystemConfig) -> float:
    """Delay range above which the closed-form PNF delays are always feasible."""
    N, T = cfg.n_sub, cfg.n_ttd
    return N * (T - 1) * cfg.antenna_spacing / (T * C)


def _pnf_gammas(geom: PNFGeometry, cfg: SystemConfig) -> np.ndarray:
    return np.exp(-2j * np.pi * cfg.freqs[:, None] * (geom.nu - geom.r)[None] / C)


def delay_objective(gam, delays, freqs) -> float:
    """``sum_m |sum_l gam[m, l] exp(-j 2 pi f_m t_l)|``."""
    return float(np.sum(np.abs(np.sum(gam * np.exp(-2j * np.pi * freqs[:, None] * delays[None]), axis=1))))


def pnf_objective(geom: PNFGeometry, delays, cfg: SystemConfig) -> float:
    return delay_objective(_pnf_gammas(geom, cfg), np.asarray(delays, dtype=float), cfg.freqs)


def coordinate_delay_search(gam, freqs, t_max, Q=1000, t0=None, tol=1e-3, max_sweeps=50):
    """Cyclic per-delay grid search on ``delay_objective``.

    The incumbent delay always competes with the grid, so the objective never
    decreases. The result is shifted so that its smallest delay is 0, which
    leaves the objective unchanged. Returns ``(delays, trace)``.
    """
    M, T = gam.shape
    grid = delay_grid(t_max, Q)
    E = np.exp(-2j * np.pi * freqs[:, None] * grid[None])  # (M, Q)
    t = np.zeros(T) if t0 is None else np.clip(np.asarray(t0, dtype=float), 0.0, t_max)
    terms = gam * np.exp(-2j * np.pi * freqs[:, None] * t[None])
    total = terms.sum(axis=1)
    trace = [float(np.sum(np.abs(total)))]
    for _ in range(max_sweeps):
        for l in range(T):
            rest = total - terms[:, l]
            vals = np.sum(np.abs(rest[:, None] + gam[:, l, None] * E), axis=0)
            q = int(np.argmax(vals))
            cur = float(np.sum(np.abs(total)))
            if vals[q] > cur:
                t[l] = grid[q]
                terms[:, l] = gam[:, l] * E[:, q]
                total = rest + terms[:, l]
        trace.append(float(np.sum(np.abs(total))))
        if trace[-1] - trace[-2] <= tol * abs(trace[-2]):
            break
    return t - t.min(), trace


def pnf_ttd_search(geom: PNFGeometry, cfg: SystemConfig, Q: int = 1000) -> np.ndarray:
    t0 = np.clip((geom.nu_max - geom.nu) / C, 0.0, cfg.t_max)
    t, _ = coordinate_delay_search(_pnf_gammas(geom, cfg), cfg.freqs, cfg.t_max, Q, t0)
    return t


def pnf_ttd_closed_form(geom: PNFGeometry, cfg: SystemConfig) -> np.ndarray:
    """Delays ``(nu_max - nu_l) / c``; falls back to the grid search when they may exceed ``t_max``."""
    if cfg.t_max < prop2_bound(cfg):
        return pnf_ttd_search(geom, cfg)
    return (geom.nu_max - geom.nu) / C


def pnf_design(theta: float, r: float, cfg: SystemConfig, user: int = 0) -> AnalogChainDesign:
    geom = pnf_geometry(theta, r, cfg)
    return AnalogChainDesign(pnf_ps_design(theta, r, cfg), pnf_ttd_closed_form(geom, cfg), user, "PNF")


# -- robust design ------------------------------------------------------------------


def _etas(theta, r, delays, cfg: SystemConfig) -> np.ndarray:
    """``eta_m = conj(b(f_m) * ttd_m)``, shape (M, n)."""
    b = array_response(cfg.freqs, theta, r, cfg, n_elements=cfg.n_sub)
    ttd = np.repeat(np.exp(-2j * np.pi * cfg.freqs[:, None] * delays[None]), cfg.group_size, axis=1)
    return np.conj(b * ttd)


def exact_gain_sum(theta, r, phases, delays, cfg: SystemConfig) -> float:
    """``sum_m |b(f_m)^T v_m|``."""
    eta = _etas(theta, r, np.asarray(delays, dtype=float), cfg)
    return float(np.sum(np.abs(eta.conj() @ np.exp(1j * phases))))


def average_gain(design: AnalogChainDesign, theta, r, cfg: SystemConfig) -> float:
    """Exact normalized gain averaged over subcarriers, in [0, 1]."""
    return exact_gain_sum(theta, r, design.phases, design.delays, cfg) / (cfg.n_subcarriers * cfg.n_sub)


def robust_mm_ps(theta, r, delays, cfg: SystemConfig, init_phases, tol=1e-3, max_iter=100):
    """Majorization-minimization on ``sum_m |eta_m^H a|`` over unit-modulus ``a``.

    Returns ``(phases, trace)``; the trace is non-decreasing.
    """
    eta = _etas(theta, r, np.asarray(delays, dtype=float), cfg)
    a = np.exp(1j * np.asarray(init_phases, dtype=float))
    proj = eta.conj() @ a
    trace = [float(np.sum(np.abs(proj)))]
    for _ in range(max_iter):
        mag = np.abs(proj)
        w = np.where(mag > 0, proj / np.where(mag > 0, mag, 1.0), proj)
        q = eta.T @ w
        a = np.where(q == 0, a, np.exp(1j * np.angle(q)))
        proj = eta.conj() @ a
        trace.append(float(np.sum(np.abs(proj))))
        if trace[-1] - trace[-2] <= tol * abs(trace[-2]):
            break
    return np.angle(a), trace


def robust_analog_design(theta, r, cfg: SystemConfig, user: int = 0, Q: int = 1000, tol=1e-3, max_sweeps=20):
    """Alternate MM phase updates and per-delay grid search, starting from PNF."""
    start = pnf_design(theta, r, cfg, user)
    phases, t = start.phases, start.delays
    b = array_response(cfg.freqs, theta, r, cfg, n_elements=cfg.n_sub)
    M, g = cfg.n_subcarriers, cfg.group_size
    obj = [exact_gain_sum(theta, r, phases, t, cfg)]
    for _ in range(max_sweeps):
        phases, _ = robust_mm_ps(theta, r, t, cfg, phases)
        gam = (b * np.exp(1j * phases)[None]).reshape(M, cfg.n_ttd, g).sum(axis=2)
        t, _ = coordinate_delay_search(gam, cfg.freqs, cfg.t_max, Q, t)
        obj.append(exact_gain_sum(theta, r, phases, t, cfg))
        if obj[-1] - obj[-2] <= tol * abs(obj[-2]):
            break
    return AnalogChainDesign(phases, t, user, "Robust")


# -- multi-chain assembly -------------------------------------------------------------


def chain_config(cfg: SystemConfig) -> SystemConfig:
    """Single-chain view of the array one RF chain drives."""
    if not cfg.is_sub:
        return cfg
    return cfg.replace(
        n_antennas=cfg.n_sub, n_rf=1, n_users=1, architecture=Architecture.FULLY_CONNECTED,
        antenna_spacing=cfg.antenna_spacing, t_max=cfg.t_max,
    )


def relative_location(theta: float, r: float, offset: float):
    """Angle and range of a point seen from a position ``offset`` meters along the array axis."""
    x, y = r * np.cos(theta) - offset, r * np.sin(theta)
    return float(np.arctan2(y, x)), float(np.hypot(x, y))


def chain_users(scn: Scenario, cfg: SystemConfig) -> list[int]:
    """Users served by each RF chain; surplus chains pick a seeded random user."""
    K = scn.n_users
    users = list(range(min(K, cfg.n_rf)))
    if cfg.n_rf > K:
        rng = np.random.default_rng([int(scn.rng_seed) & 0xFFFFFFFFFFFFFFFF, 0x7E57])
        users += [int(u) for u in rng.integers(0, K, cfg.n_rf - K)]
    return users


def design_chains(scn: Scenario, cfg: SystemConfig, designer) -> tuple[PhaseNetwork, DelayNetwork]:
    """Apply ``designer(theta, r, chain_cfg, user)`` to every RF chain."""
    sub_cfg = chain_config(cfg)
    phases, delays = [], []
    for n, k in enumerate(chain_users(scn, cfg)):
        u = scn.users[k]
        theta, r = u.angle, u.range
        if cfg.is_sub:
            offset = (n - (cfg.n_rf - 1) / 2) * cfg.n_sub * cfg.antenna_spacing
            theta, r = relative_location(theta, r, offset)
        des = designer(theta, r, sub_cfg, k)
        phases.append(des.phases)
        delays.append(des.delays)
    return PhaseNetwork(np.array(phases), cfg.n_ttd, cfg.architecture), DelayNetwork(np.array(delays))


# -- digital stage ----------------------------------------------------------------------


def equivalent_channel(h, ps: PhaseNetwork, delays: DelayNetwork, m: int, k: int, cfg: SystemConfig) -> np.ndarray:
    """``T_m^H A^H h_{m,k}`` for a channel tensor or raw (M, K, N) array."""
    h = getattr(h, "h", h)
    F = analog_stack(ps, delays, cfg.freqs[m : m + 1])[0]
    return F.conj().T @ h[m, k]


def digital_stage(ch: ChannelTensor, ps: PhaseNetwork, delays: DelayNetwork, cfg: SystemConfig,
                  tol: float = 1e-4, max_iter: int = 300):
    """FP sum-rate maximization on the equivalent channels, then per-subcarrier power scaling.

    Returns ``(DigitalPrecoder, trace)``.
    """
    F = analog_stack(ps, delays, cfg.freqs)
    Fh = F.conj().transpose(0, 2, 1)
    h_eq = np.einsum("mrn,mkn->mkr", Fh, ch.h)
    gram = Fh @ F
    D, trace = fp.sum_rate_fp(h_eq, ch.noise_var, cfg.tx_power, gram=gram, tol=tol, max_iter=max_iter)
    norms = np.linalg.norm(F @ D, axis=(1, 2))
    D = D * (np.sqrt(cfg.tx_power) / np.where(norms > 0, norms, 1.0))[:, None, None]
    return DigitalPrecoder(D), trace


def analog_designer(mode):
    mode = DesignMode(mode)
    if mode is DesignMode.PNF:
        return lambda th, r, c, k: pnf_design(th, r, c, k)
    return lambda th, r, c, k: robust_analog_design(th, r, c, k)


def solve_with_analog(ch: ChannelTensor, scn: Scenario, cfg: SystemConfig, designer, scheme: str) -> SolverReport:
    """Fixed analog design from ``designer`` followed by the digital stage."""
    t0 = time.perf_counter()
    ps, delays = design_chains(scn, cfg, designer)
    dig, trace = digital_stage(ch, ps, delays, cfg)
    hb = HybridBeamformer(ps, delays, dig)
    rep = SolverReport(scheme, beamformer=hb)
    rep.objective_phases = [trace]
    rep.inner_iters = len(trace) - 1
    rep.outer_iters = 1
    rep.converged = True
    rep.spectral_efficiency = se_from_precoders(ch, analog_stack(ps, delays, cfg.freqs) @ dig.D, cfg)
    rep.wall_time = time.perf_counter() - t0
    return rep


def hts_solve(ch: ChannelTensor, scn: Scenario, cfg: SystemConfig, mode="PNF") -> SolverReport:
    mode = DesignMode(mode)
    return solve_with_analog(ch, scn, cfg, analog_designer(mode), f"HTS_{mode.value}")
