"""Reference schemes: fully-digital, PS-only hybrid, and alternative analog designs.

The analog alternatives (CF, MCM, MCCM, far-field DPP, near-field PDF) are
reconstructions from short descriptions and are meant as comparison aids.
"""

from __future__ import annotations

import time
from enum import Enum

import numpy as np

from . import fp
from .beamformer import FullyDigitalPrecoder, HybridBeamformer
from .channel import ChannelTensor, array_response, element_offsets
from .config import SPEED_OF_LIGHT, SystemConfig
from .fda import FDAParams, SolverReport, solve_fda
from .hts import AnalogChainDesign, pnf_geometry, solve_with_analog
from .metrics import se_from_precoders

C = SPEED_OF_LIGHT


class SchemeId(str, Enum):
    OPTIMAL_DIGITAL = "OptimalDigital"
    CONVENTIONAL_PS = "ConventionalPS"
    CF = "CF"
    MCM = "MCM"
    MCCM = "MCCM"
    FAR_FIELD_DPP = "FarFieldDPP"
    NEAR_FIELD_PDF = "NearFieldPDF"
    FDA_FULL = "FDA_Full"
    FDA_SUB = "FDA_Sub"
    HTS_PNF = "HTS_PNF"
    HTS_ROBUST = "HTS_Robust"


def optimal_digital(ch: ChannelTensor, cfg: SystemConfig, tol: float = 1e-4, max_iter: int = 300):
    """Fully-digital FP sum-rate design scaled to ``||W_m||_F^2 = P_t``."""
    t0 = time.perf_counter()
    W, trace = fp.sum_rate_fp(ch.h, ch.noise_var, cfg.tx_power, tol=tol, max_iter=max_iter)
    norms = np.linalg.norm(W, axis=(1, 2))
    W = W * (np.sqrt(cfg.tx_power) / np.where(norms > 0, norms, 1.0))[:, None, None]
    rep = SolverReport(SchemeId.OPTIMAL_DIGITAL.value, fully_digital=W)
    rep.objective_phases = [trace]
    rep.inner_iters = len(trace) - 1
    rep.outer_iters = 1
    rep.converged = True
    rep.spectral_efficiency = se_from_precoders(ch, W, cfg)
    rep.wall_time = time.perf_counter() - t0
    return FullyDigitalPrecoder(W), rep


def conventional_ps(ch: ChannelTensor, cfg: SystemConfig, init: HybridBeamformer,
                    params: FDAParams | None = None) -> SolverReport:
    """FDA with every delay frozen at zero."""
    params = params or FDAParams()
    params = FDAParams(**{**params.__dict__, "freeze_delays": True})
    return solve_fda(ch, cfg, init, params, scheme=SchemeId.CONVENTIONAL_PS.value)


# -- analog alternatives (per RF chain) -------------------------------------------------


def _zero_delays(phases, cfg, user, mode):
    return AnalogChainDesign(np.asarray(phases, dtype=float), np.zeros(cfg.n_ttd), user, mode)


def cf_analog(theta, r, cfg: SystemConfig) -> np.ndarray:
    """Phases matched to the response at the center frequency."""
    return -np.angle(array_response(cfg.center_freq, theta, r, cfg, n_elements=cfg.n_sub))


def mcm_analog(theta, r, cfg: SystemConfig) -> np.ndarray:
    """Phases matched to the subcarrier-averaged response."""
    b = array_response(cfg.freqs, theta, r, cfg, n_elements=cfg.n_sub)
    return -np.angle(b.mean(axis=0))


def mccm_analog(theta, r, cfg: SystemConfig, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Phases of the principal eigenvector of the averaged response covariance."""
    b = array_response(cfg.freqs, theta, r, cfg, n_elements=cfg.n_sub)  # (M, n)
    mean = b.mean(axis=0)
    u = np.exp(1j * np.angle(mean))
    u = u / np.linalg.norm(u)
    for _ in range(max_iter):
        # R u with R = (1/M) sum_m b_m b_m^H, without forming R
        x = b.T @ (b.conj() @ u) / b.shape[0]
        nx = np.linalg.norm(x)
        if nx == 0:
            break
        x = x / nx
        done = np.linalg.norm(x - u * np.vdot(u, x)) < tol
        u = x
        if done:
            break
    # fix the free phase so that u^H mean is real positive
    u = u * np.exp(1j * np.angle(np.vdot(u, mean)))
    return -np.angle(u)


def far_field_dpp(theta, cfg: SystemConfig, user: int = 0) -> AnalogChainDesign:
    """Planar-wavefront phases per sub-array plus far-field inter-sub-array delays."""
    d, g, T = cfg.antenna_spacing, cfg.group_size, cfg.n_ttd
    chi = element_offsets(g) * d
    within = -2 * np.pi * cfg.center_freq * chi * np.cos(theta) / C
    xi = (np.arange(T) - (T - 1) / 2) * g * d
    tau = xi * np.cos(theta) / C
    t = np.clip(tau - tau.min(), 0.0, cfg.t_max)
    return AnalogChainDesign(np.tile(within, T), t, user, "FarFieldDPP")


def near_field_pdf(theta, r, cfg: SystemConfig, user: int = 0) -> AnalogChainDesign:
    """Far-field phases at each sub-array's own angle plus near-field inter-sub-array delays."""
    geom = pnf_geometry(theta, r, cfg)
    chi = element_offsets(cfg.group_size) * cfg.antenna_spacing
    within = -2 * np.pi * cfg.center_freq * chi[None] * np.cos(geom.vartheta)[:, None] / C
    t = np.clip((geom.nu_max - geom.nu) / C, 0.0, cfg.t_max)
    return AnalogChainDesign(within.ravel(), t, user, "NearFieldPDF")


ANALOG_DESIGNERS = {
    SchemeId.CF: lambda th, r, c, k: _zero_delays(cf_analog(th, r, c), c, k, "CF"),
    SchemeId.MCM: lambda th, r, c, k: _zero_delays(mcm_analog(th, r, c), c, k, "MCM"),
    SchemeId.MCCM: lambda th, r, c, k: _zero_delays(mccm_analog(th, r, c), c, k, "MCCM"),
    SchemeId.FAR_FIELD_DPP: lambda th, r, c, k: far_field_dpp(th, c, k),
    SchemeId.NEAR_FIELD_PDF: lambda th, r, c, k: near_field_pdf(th, r, c, k),
}


def analog_baseline(scheme, ch: ChannelTensor, scn, cfg: SystemConfig) -> SolverReport:
    """One of the analog alternatives followed by the HTS digital stage."""
    scheme = SchemeId(scheme)
    return solve_with_analog(ch, scn, cfg, ANALOG_DESIGNERS[scheme], scheme.value)
