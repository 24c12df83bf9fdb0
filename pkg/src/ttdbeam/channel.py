"""Near-field wideband multipath channel.

Array responses use the exact spherical-wave propagation distance; the LoS
gain follows the free-space law with optional molecular absorption and NLoS
paths are scaled by a reflection coefficient.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import FREE_SPACE_IMPEDANCE, SPEED_OF_LIGHT, ConfigurationError, SystemConfig

C = SPEED_OF_LIGHT


@dataclass(frozen=True)
class UserGeometry:
    angle: float
    range: float
    noise_var: float

    def __post_init__(self):
        if self.range <= 0 or self.noise_var <= 0:
            raise ValueError("user range and noise variance must be positive")


@dataclass(frozen=True)
class ScattererGeometry:
    angle: float
    range: float
    incidence: float = 0.0
    material_impedance: float = 188.5
    roughness: float = 1e-4
    avg_reflection_db: float = -15.0
    # phase of the simplified-mode reflection; drawn once per scenario
    reflection_phase: float = 0.0

    def __post_init__(self):
        if self.range <= 0:
            raise ValueError("scatterer range must be positive")
        if not 0 <= self.incidence < np.pi / 2:
            raise ValueError("incidence angle must lie in [0, pi/2)")


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserGeometry, ...]
    scatterers: tuple[tuple[ScattererGeometry, ...], ...]
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.users) != len(self.scatterers):
            raise ConfigurationError("one scatterer list per user is required")

    @property
    def n_users(self) -> int:
        return len(self.users)

    def to_dict(self) -> dict:
        return {
            "users": [asdict(u) for u in self.users],
            "scatterers": [[asdict(s) for s in group] for group in self.scatterers],
            "rng_seed": int(self.rng_seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            users=tuple(UserGeometry(**u) for u in d["users"]),
            scatterers=tuple(tuple(ScattererGeometry(**s) for s in g) for g in d["scatterers"]),
            rng_seed=int(d.get("rng_seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ChannelTensor:
    """Channels ``h[m, k]`` (shape M x K x N) with per-(m, k) noise powers."""

    h: np.ndarray
    noise_var: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.h.shape

    def scaled(self, alpha: complex) -> "ChannelTensor":
        return ChannelTensor(self.h * alpha, self.noise_var)


def subcarrier_freq(cfg: SystemConfig, m: int) -> float:
    """Frequency of subcarrier ``m`` (1-based)."""
    M = cfg.n_subcarriers
    if not 1 <= m <= M:
        raise IndexError(f"subcarrier index {m} outside 1..{M}")
    return cfg.center_freq + cfg.bandwidth * (2 * m - 1 - M) / (2 * M)


def element_offsets(n_elements: int) -> np.ndarray:
    """Element positions in units of the spacing, centered on the array."""
    return np.arange(n_elements) - (n_elements - 1) / 2


def propagation_distance(n, r, theta, cfg: SystemConfig):
    """Distance from (1-based) antenna ``n`` to the point at range ``r``, angle ``theta``."""
    chi = np.asarray(n) - 1 - (cfg.n_antennas - 1) / 2
    d = cfg.antenna_spacing
    return np.sqrt(r**2 + chi**2 * d**2 - 2 * r * chi * d * np.cos(theta))


def _distances(theta, r, n_elements, d):
    chi = element_offsets(n_elements)
    return np.sqrt(r**2 + chi**2 * d**2 - 2 * r * chi * d * np.cos(theta))


def array_response(f, theta, r, cfg: SystemConfig, n_elements: int | None = None) -> np.ndarray:
    """Near-field response ``b(f, theta, r)``.

    ``f`` may be an array, in which case the result has shape ``f.shape + (N,)``.
    """
    N = cfg.n_antennas if n_elements is None else n_elements
    rn = _distances(theta, r, N, cfg.antenna_spacing)
    f = np.asarray(f, dtype=float)
    return np.exp(-2j * np.pi * f[..., None] / C * (rn - r))


def los_gain(f, r, cfg: SystemConfig):
    """Free-space amplitude ``c / (4 pi f r)`` with absorption ``exp(-k_abs r / 2)``."""
    f = np.asarray(f, dtype=float)
    kabs = np.vectorize(cfg.k_abs)(f) if callable(cfg.absorption) else cfg.k_abs(0.0)
    return C / (4 * np.pi * f * r) * np.exp(-0.5 * kabs * r)


def reflection_coeff(f, s: ScattererGeometry, mode: str = "simplified") -> complex:
    """Reflection coefficient of one scatterer.

    In ``"full"`` mode this is the rough-surface Fresnel coefficient (real);
    in ``"simplified"`` mode the average magnitude with the scatterer's stored
    random phase.
    """
    if mode == "simplified":
        return 10 ** (s.avg_reflection_db / 20) * np.exp(1j * s.reflection_phase)
    if s.material_impedance <= 0:
        raise ValueError("material impedance must be positive")
    n_r = FREE_SPACE_IMPEDANCE / s.material_impedance
    phi_in = s.incidence
    phi_ref = np.arctan(np.sin(phi_in) / n_r)
    fresnel = (np.cos(phi_in) - n_r * np.cos(phi_ref)) / (np.cos(phi_in) + n_r * np.cos(phi_ref))
    rough = np.exp(-0.5 * (4 * np.pi * f * s.roughness * np.cos(phi_in) / C) ** 2)
    return fresnel * rough + 0j


def _scatterer_to_user(u: UserGeometry, s: ScattererGeometry) -> float:
    ux, uy = u.range * np.cos(u.angle), u.range * np.sin(u.angle)
    sx, sy = s.range * np.cos(s.angle), s.range * np.sin(s.angle)
    return float(np.hypot(ux - sx, uy - sy))


def build_channel(scn: Scenario, cfg: SystemConfig, path_scale: complex = 1.0) -> ChannelTensor:
    """Assemble ``h[m, k] = beta b*(f_m, user) + sum_l beta_l b*(f_m, scatterer_l)``.

    The LoS gain carries phase ``-2 pi f_m r_k / c``; each NLoS gain carries the
    phase of its full BS-scatterer-user path plus the reflection phase.
    ``path_scale`` multiplies every path gain (used by linearity checks).
    """
    if scn.n_users != cfg.n_users:
        raise ConfigurationError(f"scenario has {scn.n_users} users, config expects {cfg.n_users}")
    fm = cfg.freqs
    M, K, N = cfg.n_subcarriers, cfg.n_users, cfg.n_antennas
    h = np.zeros((M, K, N), dtype=complex)
    noise = np.empty((M, K))
    for k, u in enumerate(scn.users):
        alpha = los_gain(fm, u.range, cfg)
        beta = alpha * np.exp(-2j * np.pi * fm * u.range / C)
        h[:, k] = beta[:, None] * np.conj(array_response(fm, u.angle, u.range, cfg))
        for s in scn.scatterers[k]:
            gamma = np.array([reflection_coeff(f, s, cfg.nlos_mode) for f in fm])
            path = s.range + _scatterer_to_user(u, s)
            beta_s = np.abs(gamma) * alpha * np.exp(1j * np.angle(gamma) - 2j * np.pi * fm * path / C)
            h[:, k] += beta_s[:, None] * np.conj(array_response(fm, s.angle, s.range, cfg))
        noise[:, k] = u.noise_var
    return ChannelTensor(h * path_scale, noise)


def sample_scenario(seed: int, cfg: SystemConfig) -> Scenario:
    """Random users in [5, 15] m, angles in [pi/6, 5 pi/6], scatterers between BS and user."""
    rng = np.random.default_rng(seed)
    users, scatterers = [], []
    for _ in range(cfg.n_users):
        r = rng.uniform(5.0, 15.0)
        theta = rng.uniform(np.pi / 6, 5 * np.pi / 6)
        users.append(UserGeometry(angle=float(theta), range=float(r), noise_var=cfg.noise_var))
        group = []
        for _ in range(cfg.n_scatterers):
            group.append(
                ScattererGeometry(
                    angle=float(rng.uniform(0.0, np.pi)),
                    range=float(rng.uniform(1.0, r)),
                    incidence=float(rng.uniform(0.0, np.pi / 2 * 0.999)),
                    material_impedance=cfg.material_impedance,
                    roughness=cfg.roughness,
                    avg_reflection_db=cfg.reflection_db,
                    reflection_phase=float(rng.uniform(0.0, 2 * np.pi)),
                )
            )
        scatterers.append(tuple(group))
    return Scenario(users=tuple(users), scatterers=tuple(scatterers), rng_seed=int(seed))
