"""Invariant battery run by ``ttdbeam check``.

Each check returns ``(ok, detail)``. ``check_suite`` runs them all, prints one
line per check and reports overall success.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fda, fp
from .baselines import ANALOG_DESIGNERS
from .beamformer import HybridBeamformer, PhaseNetwork, analog_stack, power_rescale, random_hybrid
from .channel import array_response, build_channel, sample_scenario
from .config import SystemConfig, desk_config
from .hts import (
    delta_criterion,
    design_chains,
    min_ttds,
    pnf_approx_response,
    pnf_geometry,
    pnf_objective,
    pnf_ttd_closed_form,
    robust_mm_ps,
    analog_designer,
)


def _small(arch="fully-connected", **kw):
    base = dict(n_antennas=16, n_subcarriers=4, n_users=2, n_rf=2, n_ttd=2, architecture=arch)
    base.update(kw)
    return SystemConfig(**base)


def _random_state(cfg, seed):
    rng = np.random.default_rng(seed)
    scn = sample_scenario(seed, cfg)
    ch = build_channel(scn, cfg)
    hb = power_rescale(random_hybrid(cfg, rng), cfg)
    W = analog_stack(hb.ps, hb.delays, cfg.freqs) @ hb.D
    W = W + 0.3 * np.linalg.norm(W) / np.sqrt(W.size) * (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
    st = fda.FDAState(W=W, hb=hb, mu=np.zeros((cfg.n_subcarriers, cfg.n_users)),
                      lam=np.zeros((cfg.n_subcarriers, cfg.n_users), complex), rho=10.0, rho_bar=5.0)
    st.mu = fda.update_mu(st, ch, cfg)
    st.lam = fda.update_lambda(st, ch, cfg)
    st.V = analog_stack(hb.ps, hb.delays, cfg.freqs) + 0.1 * (rng.standard_normal((cfg.n_subcarriers, cfg.n_antennas, cfg.n_rf)))
    return st, ch, rng


def check_delta_thresholds():
    a = min_ttds(512, 0.1, 0.8)
    b = min_ttds(512, 0.3, 0.8)
    return a == 36 and b == 105, f"N_T(B/f_c=0.1)={a}, N_T(B/f_c=0.3)={b}"


def check_closed_form_alignment(n=20):
    cfg = SystemConfig()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(n):
        g = pnf_geometry(rng.uniform(0, np.pi), rng.uniform(1, 20), cfg)
        t = pnf_ttd_closed_form(g, cfg)
        if t.min() < 0 or t.max() > cfg.t_max:
            return False, "delay out of range"
        worst = max(worst, abs(pnf_objective(g, t, cfg) / (cfg.n_subcarriers * cfg.n_ttd) - 1))
    return worst < 1e-9, f"max relative error {worst:.2e}"


def check_pnf_range_invariance():
    cfg = SystemConfig(n_antennas=256, n_ttd=16)
    f = cfg.freqs[-1]
    gains = [abs(array_response(f, 1e-6, r, cfg) @ pnf_approx_response(f, 1e-6, r, cfg).conj()) / 256 for r in (5, 10, 15)]
    spread = max(gains) - min(gains)
    return spread < 1e-9, f"spread {spread:.2e}, gain {gains[0]:.4f}, delta {delta_criterion(16 / 256, 0.1):.4f}"


def _probe_unit_modulus(obj, phases, rng, n=300, scale=0.3):
    f0 = obj(phases)
    best = -np.inf
    for i in range(n):
        s = scale if i % 2 else np.pi
        best = max(best, obj(phases + rng.uniform(-s, s, phases.shape)))
    return best - f0 <= 1e-9 * max(1.0, abs(f0)), f"best probe gain {best - f0:.2e}"


def check_ps_update_full():
    cfg = _small()
    st, ch, rng = _random_state(cfg, 3)
    ps = fda.update_ps_full(st, cfg)

    def obj(ph):
        hb = HybridBeamformer(PhaseNetwork(ph, cfg.n_ttd, cfg.architecture), st.hb.delays, st.hb.digital)
        return -fda.splitting_objective(fda.FDAState(st.W, hb, st.mu, st.lam, st.rho, st.rho_bar, V=st.V), cfg)

    return _probe_unit_modulus(obj, ps.phases, rng)


def check_ps_update_sub():
    cfg = _small("sub-connected")
    st, ch, rng = _random_state(cfg, 4)
    ps = fda.update_ps_sub(st, cfg)

    def obj(ph):
        hb = HybridBeamformer(PhaseNetwork(ph, cfg.n_ttd, cfg.architecture), st.hb.delays, st.hb.digital)
        return -fda.penalty(st.W, hb, cfg.freqs)

    return _probe_unit_modulus(obj, ps.phases, rng)


def check_v_stationarity():
    cfg = _small()
    st, _, rng = _random_state(cfg, 5)
    V = fda.update_v(st, cfg)
    f0 = fda.splitting_objective(st, cfg, V)
    worst = 0.0
    for _ in range(200):
        E = rng.standard_normal(V.shape) + 1j * rng.standard_normal(V.shape)
        worst = max(worst, f0 - fda.splitting_objective(st, cfg, V + 1e-3 * E))
    return worst <= 1e-9 * max(1.0, f0), f"best decrease {worst:.2e}"


def check_digital_orthogonality():
    cfg = _small()
    st, _, _ = _random_state(cfg, 6)
    D = fda.update_digital(st, cfg).D
    F = analog_stack(st.hb.ps, st.hb.delays, cfg.freqs)
    res = F.conj().transpose(0, 2, 1) @ (st.W - F @ D)
    rel = np.max(np.abs(res)) / max(np.max(np.abs(F.conj().transpose(0, 2, 1) @ st.W)), 1e-300)
    return rel < 1e-9, f"relative residual correlation {rel:.2e}"


def check_w_update():
    cfg = _small()
    st, ch, rng = _random_state(cfg, 7)
    anchor = analog_stack(st.hb.ps, st.hb.delays, cfg.freqs) @ st.hb.D
    W = fda.update_w(st, ch, cfg)

    def g(X):
        return fp.surrogate(ch.h, X, st.mu, st.lam, ch.noise_var, cfg.tx_power, anchor=anchor, inv_rho=1 / st.rho)

    f0 = g(W)
    s = np.linalg.norm(W) / np.sqrt(W.size)
    best = max(g(W + 1e-3 * s * (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))) for _ in range(200))
    return best - f0 <= 1e-9 * max(1.0, abs(f0)), f"best probe gain {best - f0:.2e}"


def check_mm_monotone():
    cfg = _small(n_antennas=32, n_ttd=4, n_subcarriers=6, bandwidth=30e9)
    rng = np.random.default_rng(8)
    t = rng.uniform(0, cfg.t_max, cfg.n_ttd)
    _, trace = robust_mm_ps(1.0, 4.0, t, cfg, rng.uniform(-np.pi, np.pi, cfg.n_antennas))
    d = np.diff(trace)
    return bool(np.all(d >= -1e-12 * np.abs(trace[:-1]))), f"{len(trace)} steps"


def analog_designs(cfg: SystemConfig, seed: int = 0):
    scn = sample_scenario(seed, cfg)
    out = {"PNF": design_chains(scn, cfg, analog_designer("PNF")),
           "Robust": design_chains(scn, cfg, analog_designer("Robust"))}
    for sid, fn in ANALOG_DESIGNERS.items():
        out[sid.value] = design_chains(scn, cfg, fn)
    return out


def check_design_invariants(mutate=None):
    """Mask, unit-modulus and delay-range invariants of every analog design."""
    problems = []
    for arch in ("fully-connected", "sub-connected"):
        cfg = desk_config(architecture=arch)
        for name, (ps, delays) in analog_designs(cfg).items():
            A = ps.dense()
            if mutate is not None:
                A = mutate(A)
            mask = ps.mask()
            if np.any(A[~mask] != 0):
                problems.append(f"{arch}/{name}: analog-mask")
            if not np.allclose(np.abs(A[mask]), 1.0, atol=1e-12):
                problems.append(f"{arch}/{name}: unit-modulus")
            if not delays.within(cfg.t_max):
                problems.append(f"{arch}/{name}: delay-range")
    return not problems, "; ".join(problems) or "all designs valid"


def check_power_rescale():
    cfg = desk_config()
    hb = power_rescale(random_hybrid(cfg, np.random.default_rng(9)), cfg)
    P = analog_stack(hb.ps, hb.delays, cfg.freqs) @ hb.D
    err = np.max(np.abs(np.linalg.norm(P, axis=(1, 2)) ** 2 / cfg.tx_power - 1))
    return err < 1e-10, f"max relative power error {err:.2e}"


CHECKS = {
    "delta-thresholds": check_delta_thresholds,
    "closed-form-delay-alignment": check_closed_form_alignment,
    "pnf-range-invariance": check_pnf_range_invariance,
    "ps-update-full-optimal": check_ps_update_full,
    "ps-update-sub-optimal": check_ps_update_sub,
    "v-update-stationary": check_v_stationarity,
    "digital-lstsq-orthogonal": check_digital_orthogonality,
    "w-update-optimal": check_w_update,
    "mm-monotone": check_mm_monotone,
    "design-invariants": check_design_invariants,
    "power-rescale": check_power_rescale,
}


@dataclass
class CheckReport:
    results: list = field(default_factory=list)  # (name, ok, detail)

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    @property
    def failed(self) -> list:
        return [name for name, ok, _ in self.results if not ok]

    def lines(self) -> list:
        return [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in self.results]


def check_suite(overrides: dict | None = None, verbose: bool = True) -> CheckReport:
    """Run every check; ``overrides`` maps names to replacement callables."""
    checks = dict(CHECKS)
    checks.update(overrides or {})
    rep = CheckReport()
    for name, fn in checks.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rep.results.append((name, bool(ok), detail))
    if verbose:
        for line in rep.lines():
            print(line)
        print(f"{len(rep.results) - len(rep.failed)}/{len(rep.results)} checks passed")
    return rep
