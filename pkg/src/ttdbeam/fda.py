"""Penalty-based fully-digital approximation (FDA) solver.

The hybrid beamformer ``A T_m D_m`` is fitted to an auxiliary fully-digital
precoder ``W_m`` through a penalty ``(1/rho) sum_m ||W_m - A T_m D_m||_F^2``
while ``W`` itself climbs the loaded-SINR sum rate through the quadratic
transform. ``rho`` shrinks geometrically until the fit is tight.

For the fully-connected architecture the (A, T) block is solved by a second
penalty loop with a splitting variable ``V_m ~ A T_m``. For the sub-connected
architecture the block-diagonal structure lets (A, T) be updated directly.

Two safeguards keep every sweep monotone in the penalized objective:
the delay search always considers the incumbent delay next to the grid, and
the output of the inner (A, T) loop is only accepted when it does not increase
``sum_m ||W_m - A T_m D_m||^2``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import fp
from .beamformer import (
    DelayNetwork,
    DigitalPrecoder,
    HybridBeamformer,
    PhaseNetwork,
    analog_stack,
    power_rescale,
)
from .channel import ChannelTensor
from .config import ConfigurationError, SystemConfig
from .metrics import se_from_precoders


@dataclass(frozen=True)
class FDAParams:
    rho: float = 1e3
    rho_bar: float = 1e3
    c_factor: float = 0.5
    grid_size: int = 1000
    inner_tol: float = 1e-3
    penalty_tol: float = 1e-3
    max_inner: int = 50
    max_outer: int = 30
    alg1_max_inner: int = 50
    alg1_max_outer: int = 500
    keep_current_delay: bool = True
    freeze_delays: bool = False

    def __post_init__(self):
        if self.rho <= 0 or self.rho_bar <= 0:
            raise ValueError("penalty factors must be positive")
        if not 0 < self.c_factor < 1:
            raise ValueError("c_factor must lie in (0, 1)")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "FDAParams":
        return cls(**d)


@dataclass
class FDAState:
    W: np.ndarray  # (M, N, K)
    hb: HybridBeamformer
    mu: np.ndarray  # (M, K)
    lam: np.ndarray  # (M, K)
    rho: float
    rho_bar: float
    params: FDAParams = field(default_factory=FDAParams)
    V: np.ndarray | None = None  # (M, N, N_RF), fully-connected only
    flags: list = field(default_factory=list)


@dataclass
class SolverReport:
    scheme: str
    beamformer: HybridBeamformer | None = None
    fully_digital: np.ndarray | None = None
    spectral_efficiency: float = float("nan")
    objective_phases: list = field(default_factory=list)  # one list per fixed-rho phase
    penalty_trace: list = field(default_factory=list)  # rho used in each outer iteration
    residual_trace: list = field(default_factory=list)  # max_m relative residual after each outer iteration
    trace_rows: list = field(default_factory=list)
    outer_iters: int = 0
    inner_iters: int = 0
    wall_time: float = 0.0
    converged: bool = False
    flags: list = field(default_factory=list)

    @property
    def objective_trace(self) -> list:
        return [v for phase in self.objective_phases for v in phase]

    @property
    def iterations(self) -> int:
        return self.inner_iters

    def write_trace(self, path) -> None:
        """CSV with columns iteration, objective, penalty_residual, rho."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "penalty_residual", "rho"])
            for i, (obj, res, rho) in enumerate(self.trace_rows):
                w.writerow([i, repr(obj), repr(res), repr(rho)])


# -- small helpers ----------------------------------------------------------


def delay_grid(t_max: float, Q: int) -> np.ndarray:
    """Uniform search set ``{0, t_max/(Q-1), ..., t_max}``."""
    if Q == 1 or t_max == 0:
        return np.zeros(1)
    return np.linspace(0.0, t_max, Q)


def _ps_from_targets(C, ps: PhaseNetwork, delays: DelayNetwork, freqs) -> PhaseNetwork:
    """Maximize ``sum_m Re{c_{m,n}^H (a_n * ttd_{m,n})}`` over unit-modulus ``a``.

    ``C`` has shape (M, N_RF, antennas per chain).
    """
    rot = np.exp(2j * np.pi * freqs[:, None, None] * delays.t[None])
    acc = np.sum(C * np.repeat(rot, ps.group_size, axis=2), axis=0)
    phases = np.where(acc == 0, ps.phases, np.angle(acc))
    return PhaseNetwork(phases, ps.n_ttd, ps.architecture)


def _delay_coefficients(C, ps: PhaseNetwork) -> np.ndarray:
    """``coef[m, n, l] = c_{m,n,l}^H a_{n,l}``."""
    M, n_rf, n = C.shape
    prod = C.conj() * ps.values()[None]
    return prod.reshape(M, n_rf, ps.n_ttd, ps.group_size).sum(axis=3)


def _delay_search(coef, delays: DelayNetwork, freqs, t_max, Q, keep_current=True) -> DelayNetwork:
    """Per-delay argmax of ``sum_m Re{coef e^{-j 2 pi f_m t}}`` on the grid."""
    grid = delay_grid(t_max, Q)
    E = np.exp(-2j * np.pi * freqs[:, None] * grid[None])  # (M, Q)
    vals = np.real(np.einsum("mnl,mq->nlq", coef, E))
    idx = np.argmax(vals, axis=2)  # first max -> smallest delay
    best = np.take_along_axis(vals, idx[..., None], axis=2)[..., 0]
    t = grid[idx]
    if keep_current:
        cur = np.real(np.sum(coef * np.exp(-2j * np.pi * freqs[:, None, None] * delays.t[None]), axis=0))
        t = np.where(cur > best, delays.t, t)
    return DelayNetwork(t)


def _sub_targets(W, hb: HybridBeamformer) -> np.ndarray:
    """``phi_{m,n} = W_m[rows_n] conj(D_m[n])``, shape (M, N_RF, N_sub)."""
    ps = hb.ps
    out = np.empty((W.shape[0], ps.n_rf, ps.n_per_chain), dtype=complex)
    for n in range(ps.n_rf):
        out[:, n] = np.einsum("mik,mk->mi", W[:, ps.rows(n)], hb.D[:, n].conj())
    return out


def penalty(W, hb: HybridBeamformer, freqs) -> float:
    """``sum_m ||W_m - A T_m D_m||_F^2``."""
    return float(np.sum(np.abs(W - analog_stack(hb.ps, hb.delays, freqs) @ hb.D) ** 2))


def relative_residual(W, hb: HybridBeamformer, freqs) -> float:
    """``max_m ||W_m - A T_m D_m||_F / ||W_m||_F``."""
    diff = np.linalg.norm(W - analog_stack(hb.ps, hb.delays, freqs) @ hb.D, axis=(1, 2))
    den = np.linalg.norm(W, axis=(1, 2))
    if np.any(den == 0):
        return float("inf")
    return float(np.max(diff / den))


def objective(state: FDAState, ch: ChannelTensor, cfg: SystemConfig) -> float:
    """Penalized objective: loaded-SINR sum rate (nats) minus ``(1/rho)`` times the fit error."""
    gam = fp.loaded_sinr(ch.h, state.W, ch.noise_var, cfg.tx_power)
    return float(np.sum(np.log1p(gam)) - penalty(state.W, state.hb, cfg.freqs) / state.rho)


def splitting_objective(state: FDAState, cfg: SystemConfig, V=None) -> float:
    """``sum_m ||W_m - V_m D_m||^2 + (1/rho_bar) ||V_m - A T_m||^2``."""
    V = state.V if V is None else V
    F = analog_stack(state.hb.ps, state.hb.delays, cfg.freqs)
    return float(np.sum(np.abs(state.W - V @ state.hb.D) ** 2) + np.sum(np.abs(V - F) ** 2) / state.rho_bar)


# -- fully-connected blocks ---------------------------------------------------


def update_ps_full(state: FDAState, cfg: SystemConfig) -> PhaseNetwork:
    C = np.transpose(state.V, (0, 2, 1))
    return _ps_from_targets(C, state.hb.ps, state.hb.delays, cfg.freqs)


def update_ttd_full(state: FDAState, cfg: SystemConfig) -> DelayNetwork:
    C = np.transpose(state.V, (0, 2, 1))
    coef = _delay_coefficients(C, state.hb.ps)
    p = state.params
    return _delay_search(coef, state.hb.delays, cfg.freqs, cfg.t_max, p.grid_size, p.keep_current_delay)


def update_v(state: FDAState, cfg: SystemConfig) -> np.ndarray:
    """``V_m = (W_m D_m^H + (1/rho_bar) A T_m)(D_m D_m^H + (1/rho_bar) I)^{-1}``."""
    D = state.hb.D
    F = analog_stack(state.hb.ps, state.hb.delays, cfg.freqs)
    reg = 1.0 / state.rho_bar
    R = state.W @ D.conj().transpose(0, 2, 1) + reg * F
    Q = D @ D.conj().transpose(0, 2, 1) + reg * np.eye(D.shape[1])
    # Q is Hermitian, so V = R Q^{-1} = (Q^{-1} R^H)^H
    return np.linalg.solve(Q, R.conj().transpose(0, 2, 1)).conj().transpose(0, 2, 1)


def inner_penalty_loop(state: FDAState, cfg: SystemConfig):
    """Alternate PS, TTD and V updates under a shrinking ``rho_bar``.

    ``rho_bar`` restarts from its initial value on every call. Returns
    ``(ps, delays, V, info)`` without touching ``state``; the caller decides
    whether to accept the result.
    """
    p = state.params
    sub = FDAState(
        W=state.W, hb=state.hb, mu=state.mu, lam=state.lam, rho=state.rho, rho_bar=p.rho_bar, params=p
    )
    sub.V = analog_stack(sub.hb.ps, sub.hb.delays, cfg.freqs)
    info = {"outer": 0, "inner": 0, "converged": False, "phases": []}
    for _ in range(p.alg1_max_outer):
        info["outer"] += 1
        trace = [splitting_objective(sub, cfg)]
        for _ in range(p.alg1_max_inner):
            sub.hb = HybridBeamformer(update_ps_full(sub, cfg), sub.hb.delays, sub.hb.digital)
            if not p.freeze_delays:
                sub.hb = HybridBeamformer(sub.hb.ps, update_ttd_full(sub, cfg), sub.hb.digital)
            sub.V = update_v(sub, cfg)
            trace.append(splitting_objective(sub, cfg))
            info["inner"] += 1
            if trace[-2] - trace[-1] <= p.inner_tol * abs(trace[-2]):
                break
        info["phases"].append(trace)
        F = analog_stack(sub.hb.ps, sub.hb.delays, cfg.freqs)
        vn = np.linalg.norm(sub.V, axis=(1, 2))
        res = np.linalg.norm(sub.V - F, axis=(1, 2)) / np.where(vn > 0, vn, 1.0)
        if np.max(res) < p.penalty_tol:
            info["converged"] = True
            break
        sub.rho_bar *= p.c_factor
    return sub.hb.ps, sub.hb.delays, sub.V, info


# -- blocks shared by both architectures ---------------------------------------


def update_digital(state: FDAState, cfg: SystemConfig) -> DigitalPrecoder:
    """Least-squares fit ``D_m = (F^H F)^{-1} F^H W_m`` with ``F = A T_m``."""
    F = analog_stack(state.hb.ps, state.hb.delays, cfg.freqs)
    Fh = F.conj().transpose(0, 2, 1)
    G = Fh @ F
    rhs = Fh @ state.W
    if np.max(np.linalg.cond(G)) > 1e12:
        tr = np.real(np.trace(G, axis1=1, axis2=2))
        G = G + (1e-12 * np.maximum(tr, 1.0))[:, None, None] * np.eye(G.shape[1])
        if "ridge" not in state.flags:
            state.flags.append("ridge")
    return DigitalPrecoder(np.linalg.solve(G, rhs))


def update_mu(state: FDAState, ch: ChannelTensor, cfg: SystemConfig) -> np.ndarray:
    return fp.update_mu(ch.h, state.W, ch.noise_var, cfg.tx_power)


def update_lambda(state: FDAState, ch: ChannelTensor, cfg: SystemConfig) -> np.ndarray:
    return fp.update_lambda(ch.h, state.W, state.mu, ch.noise_var, cfg.tx_power)


def update_w(state: FDAState, ch: ChannelTensor, cfg: SystemConfig) -> np.ndarray:
    """Closed-form maximizer of the transformed, penalized objective over ``W``."""
    anchor = analog_stack(state.hb.ps, state.hb.delays, cfg.freqs) @ state.hb.D
    return fp.update_x(
        ch.h, state.mu, state.lam, ch.noise_var, cfg.tx_power, anchor=anchor, inv_rho=1.0 / state.rho
    )


# -- sub-connected blocks ---------------------------------------------------------


def update_ps_sub(state: FDAState, cfg: SystemConfig) -> PhaseNetwork:
    C = _sub_targets(state.W, state.hb)
    return _ps_from_targets(C, state.hb.ps, state.hb.delays, cfg.freqs)


def update_ttd_sub(state: FDAState, cfg: SystemConfig) -> DelayNetwork:
    C = _sub_targets(state.W, state.hb)
    coef = _delay_coefficients(C, state.hb.ps)
    p = state.params
    return _delay_search(coef, state.hb.delays, cfg.freqs, cfg.t_max, p.grid_size, p.keep_current_delay)


# -- drivers ------------------------------------------------------------------------


def _analog_step_full(state: FDAState, cfg: SystemConfig) -> None:
    before = penalty(state.W, state.hb, cfg.freqs)
    ps, delays, V, info = inner_penalty_loop(state, cfg)
    cand = HybridBeamformer(ps, delays, state.hb.digital)
    if not info["converged"] and "splitting-cap" not in state.flags:
        state.flags.append("splitting-cap")
    if penalty(state.W, cand, cfg.freqs) <= before:
        state.hb = cand
        state.V = V


def _analog_step_sub(state: FDAState, cfg: SystemConfig) -> None:
    state.hb = HybridBeamformer(update_ps_sub(state, cfg), state.hb.delays, state.hb.digital)
    if not state.params.freeze_delays:
        state.hb = HybridBeamformer(state.hb.ps, update_ttd_sub(state, cfg), state.hb.digital)


def init_state(ch: ChannelTensor, cfg: SystemConfig, init: HybridBeamformer, params: FDAParams) -> FDAState:
    init.check_shapes(cfg)
    hb = init
    if params.freeze_delays:
        hb = HybridBeamformer(init.ps, DelayNetwork.zeros(cfg.n_rf, cfg.n_ttd), init.digital)
    W = analog_stack(hb.ps, hb.delays, cfg.freqs) @ hb.D
    st = FDAState(W=W, hb=hb, mu=np.zeros(ch.noise_var.shape), lam=np.zeros(ch.noise_var.shape, complex),
                  rho=params.rho, rho_bar=params.rho_bar, params=params)
    st.mu = update_mu(st, ch, cfg)
    st.lam = update_lambda(st, ch, cfg)
    return st


def _solve(ch, cfg, init, params, analog_step, scheme) -> SolverReport:
    t0 = time.perf_counter()
    params = params or FDAParams()
    st = init_state(ch, cfg, init, params)
    rep = SolverReport(scheme)
    freqs = cfg.freqs
    for _ in range(params.max_outer):
        rep.outer_iters += 1
        J = objective(st, ch, cfg)
        phase = [J]
        rep.trace_rows.append((J, relative_residual(st.W, st.hb, freqs), st.rho))
        for _ in range(params.max_inner):
            analog_step(st, cfg)
            st.hb = st.hb.with_digital(update_digital(st, cfg).D)
            st.mu = update_mu(st, ch, cfg)
            st.lam = update_lambda(st, ch, cfg)
            st.W = update_w(st, ch, cfg)
            J = objective(st, ch, cfg)
            rep.inner_iters += 1
            rep.trace_rows.append((J, relative_residual(st.W, st.hb, freqs), st.rho))
            prev = phase[-1]
            phase.append(J)
            if J - prev <= params.inner_tol * abs(prev):
                break
        rep.objective_phases.append(phase)
        rep.penalty_trace.append(st.rho)
        res = relative_residual(st.W, st.hb, freqs)
        rep.residual_trace.append(res)
        if res < params.penalty_tol:
            rep.converged = True
            break
        st.rho *= params.c_factor
    if not rep.converged:
        rep.flags.append("outer-cap")
    rep.flags.extend(f for f in st.flags if f not in rep.flags)
    hb = power_rescale(st.hb, cfg)
    rep.beamformer = hb
    rep.fully_digital = st.W
    rep.spectral_efficiency = se_from_precoders(ch, analog_stack(hb.ps, hb.delays, freqs) @ hb.D, cfg)
    rep.wall_time = time.perf_counter() - t0
    return rep


def solve_fda_full(ch: ChannelTensor, cfg: SystemConfig, init: HybridBeamformer, params: FDAParams | None = None,
                   scheme: str = "FDA_Full") -> SolverReport:
    """Penalty FDA for the fully-connected architecture."""
    if cfg.is_sub:
        raise ConfigurationError("solve_fda_full needs a fully-connected configuration")
    return _solve(ch, cfg, init, params, _analog_step_full, scheme)


def solve_fda_sub(ch: ChannelTensor, cfg: SystemConfig, init: HybridBeamformer, params: FDAParams | None = None,
                  scheme: str = "FDA_Sub") -> SolverReport:
    """Penalty FDA for the sub-connected architecture."""
    if not cfg.is_sub:
        raise ConfigurationError("solve_fda_sub needs a sub-connected configuration")
    return _solve(ch, cfg, init, params, _analog_step_sub, scheme)


def solve_fda(ch, cfg, init, params=None, scheme=None) -> SolverReport:
    if cfg.is_sub:
        return solve_fda_sub(ch, cfg, init, params, scheme or "FDA_Sub")
    return solve_fda_full(ch, cfg, init, params, scheme or "FDA_Full")
