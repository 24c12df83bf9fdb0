"""Shared fixtures: small random solver states."""

import numpy as np

from ttdbeam import fda
from ttdbeam.beamformer import analog_stack, power_rescale, random_hybrid
from ttdbeam.channel import build_channel, sample_scenario
from ttdbeam.config import SystemConfig


def small_config(arch="fully-connected", **kw):
    base = dict(n_antennas=16, n_subcarriers=4, n_users=2, n_rf=2, n_ttd=2, architecture=arch)
    base.update(kw)
    return SystemConfig(**base)


def random_state(cfg, seed, rho=10.0, rho_bar=5.0, params=None):
    """Solver state with W off the hybrid manifold and a perturbed V."""
    rng = np.random.default_rng(seed)
    ch = build_channel(sample_scenario(seed, cfg), cfg)
    hb = power_rescale(random_hybrid(cfg, rng), cfg)
    F = analog_stack(hb.ps, hb.delays, cfg.freqs)
    W = F @ hb.D
    W = W + 0.3 * np.linalg.norm(W) / np.sqrt(W.size) * (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
    zeros = np.zeros((cfg.n_subcarriers, cfg.n_users))
    st = fda.FDAState(W=W, hb=hb, mu=zeros, lam=zeros.astype(complex), rho=rho, rho_bar=rho_bar,
                      params=params or fda.FDAParams())
    st.mu = fda.update_mu(st, ch, cfg)
    st.lam = fda.update_lambda(st, ch, cfg)
    if not cfg.is_sub:
        st.V = F + 0.1 * (rng.standard_normal(F.shape) + 1j * rng.standard_normal(F.shape))
    return st, ch, rng


def fd_gradient(f, X, step):
    """Central-difference gradient of a real function of a complex array (real and imaginary parts)."""
    g = np.zeros(X.shape, dtype=complex)
    it = np.nditer(np.zeros(X.shape), flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        for unit, part in ((1.0, 1.0), (1j, 1j)):
            E = np.zeros(X.shape, dtype=complex)
            E[i] = unit * step
            g[i] += part * (f(X + E) - f(X - E)) / (2 * step)
    return g


def normalized_fd_gradient(f, X):
    """FD gradient norm made dimensionless by ``|f| / ||X||``."""
    scale = np.linalg.norm(X)
    g = fd_gradient(f, X, 1e-4 * scale / np.sqrt(X.size))
    return float(np.linalg.norm(g) * scale / max(abs(f(X)), 1e-300))
