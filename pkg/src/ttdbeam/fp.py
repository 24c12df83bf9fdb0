"""Quadratic-transform / Lagrangian-dual sum-rate machinery.

All routines work on a generic linear model ``y_{m,k} = h_{m,k}^H x_{m,k}``
where the precoder ``X_m`` lives in some n-dimensional space and its radiated
power is ``tr(X_m^H G_m X_m)`` for a Hermitian gram ``G_m`` (identity when
omitted). The fully-digital case uses ``G = I``; the HTS digital stage uses
``G_m = (A T_m)^H A T_m``.

Rates are in nats so that the transforms are exact; divide by ``ln 2`` for bits.
"""

from __future__ import annotations

import numpy as np


def _power(X, gram):
    if gram is None:
        return np.sum(np.abs(X) ** 2, axis=(1, 2))
    return np.real(np.einsum("mik,mij,mjk->m", X.conj(), gram, X))


def _interference_plus_noise(h, X, noise, tx_power, gram):
    g2 = np.abs(np.einsum("mkn,mni->mki", h.conj(), X)) ** 2
    total = g2.sum(axis=2)
    return g2, total + noise / tx_power * _power(X, gram)[:, None]


def loaded_sinr(h, X, noise, tx_power, gram=None):
    """SINR with noise scaled by ``power(X_m) / P_t``; zero for a zero precoder."""
    g2, den_all = _interference_plus_noise(h, X, noise, tx_power, gram)
    sig = np.einsum("mkk->mk", g2)
    den = den_all - sig
    out = np.zeros_like(sig)
    np.divide(sig, den, out=out, where=den > 0)
    return out


def update_mu(h, X, noise, tx_power, gram=None):
    return loaded_sinr(h, X, noise, tx_power, gram)


def update_lambda(h, X, mu, noise, tx_power, gram=None):
    """Quadratic-transform auxiliaries; zero where the precoder vanishes."""
    _, den = _interference_plus_noise(h, X, noise, tx_power, gram)
    num = np.sqrt(1 + mu) * np.einsum("mkn,mnk->mk", h.conj(), X)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def update_x(h, mu, lam, noise, tx_power, gram=None, anchor=None, inv_rho=0.0):
    """Maximizer of the transformed objective over the precoder.

    Solves ``(inv_rho I + sum_k |lam_k|^2 (h_k h_k^H + s_k/P G)) X
    = inv_rho * anchor + sum_k sqrt(1 + mu_k) lam_k h_k e_k^T`` per subcarrier.
    """
    M, K, n = h.shape
    w = np.abs(lam) ** 2  # (M, K)
    Q = np.einsum("mk,mki,mkj->mij", w, h, h.conj())
    load = np.sum(w * noise, axis=1) / tx_power  # (M,)
    G = np.broadcast_to(np.eye(n), (M, n, n)) if gram is None else gram
    Q = Q + load[:, None, None] * G
    rhs = np.transpose(h * (np.sqrt(1 + mu) * lam)[..., None], (0, 2, 1)).astype(complex)
    if inv_rho:
        Q = Q + inv_rho * np.eye(n)
        rhs = rhs + inv_rho * anchor
    else:
        # guard a singular gram without perturbing well-posed systems
        tr = np.real(np.trace(Q, axis1=1, axis2=2))
        Q = Q + (1e-13 * tr / n)[:, None, None] * np.eye(n)
    return np.linalg.solve(Q, rhs)


def surrogate(h, X, mu, lam, noise, tx_power, gram=None, anchor=None, inv_rho=0.0, full=True):
    """Transformed objective; ``full=False`` drops the terms that only involve ``mu``."""
    g = np.einsum("mkn,mni->mki", h.conj(), X)
    own = np.einsum("mkk->mk", g)
    total = np.sum(np.abs(g) ** 2, axis=2) + noise / tx_power * _power(X, gram)[:, None]
    val = np.sum(2 * np.sqrt(1 + mu) * np.real(lam.conj() * own) - np.abs(lam) ** 2 * total)
    if full:
        val += np.sum(np.log1p(mu) - mu)
    if inv_rho:
        val -= inv_rho * np.sum(np.abs(X - anchor) ** 2)
    return float(val)


def regularized_zf(h, noise, tx_power, gram=None):
    """MMSE-style starting point ``(sum_k h_k h_k^H + K s/P G)^{-1} H``."""
    M, K, n = h.shape
    G = np.broadcast_to(np.eye(n), (M, n, n)) if gram is None else gram
    Q = np.einsum("mki,mkj->mij", h, h.conj()) + (K * noise.mean(axis=1) / tx_power)[:, None, None] * G
    tr = np.real(np.trace(Q, axis1=1, axis2=2))
    Q = Q + (1e-12 * tr / n)[:, None, None] * np.eye(n)
    return np.linalg.solve(Q, np.transpose(h, (0, 2, 1)))


def water_filling(gains, noise, total):
    """Powers ``p_k = max(0, level - noise_k / gains_k)`` summing to ``total``."""
    floor = np.where(gains > 0, noise / np.where(gains > 0, gains, 1.0), np.inf)
    order = np.argsort(floor)
    f = floor[order]
    p = np.zeros_like(floor)
    for n in range(len(f), 0, -1):
        level = (total + np.sum(f[:n])) / n
        if level > f[n - 1]:
            p[order[:n]] = level - f[:n]
            break
    return p


def zf_water_filling(h, noise, tx_power, gram=None):
    """Regularized-ZF directions with water-filled powers on every subcarrier.

    Directions are normalized in the radiated-power metric; the effective gain
    of user ``k`` ignores residual interference.
    """
    X = regularized_zf(h, noise, tx_power, gram)
    M, n, K = X.shape
    for m in range(M):
        G = np.eye(n) if gram is None else gram[m]
        norms = np.sqrt(np.maximum(np.real(np.einsum("ik,ij,jk->k", X[m].conj(), G, X[m])), 1e-300))
        U = X[m] / norms
        gains = np.abs(np.einsum("kn,nk->k", h[m].conj(), U)) ** 2
        X[m] = U * np.sqrt(water_filling(gains, noise[m], tx_power))
    return X


def sum_rate_fp(h, noise, tx_power, gram=None, init=None, tol=1e-4, max_iter=300):
    """Maximize the loaded-SINR sum rate by alternating mu, lambda, X updates.

    Starts from regularized ZF with water-filled powers unless ``init`` is
    given. Returns ``(X, trace)`` where ``trace`` holds the nat-valued sum rate
    after each iteration (non-decreasing).
    """
    X = zf_water_filling(h, noise, tx_power, gram) if init is None else np.array(init, dtype=complex)
    rate = float(np.sum(np.log1p(loaded_sinr(h, X, noise, tx_power, gram))))
    trace = [rate]
    for _ in range(max_iter):
        mu = update_mu(h, X, noise, tx_power, gram)
        lam = update_lambda(h, X, mu, noise, tx_power, gram)
        X_new = update_x(h, mu, lam, noise, tx_power, gram)
        new = float(np.sum(np.log1p(loaded_sinr(h, X_new, noise, tx_power, gram))))
        if new < rate:
            # numerical noise at a fixed point; keep the incumbent
            break
        X = X_new
        trace.append(new)
        if new - rate <= tol * abs(rate):
            break
        rate = new
    return X, trace
