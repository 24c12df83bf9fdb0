import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttdbeam.channel import (
    ChannelTensor,
    Scenario,
    ScattererGeometry,
    UserGeometry,
    array_response,
    build_channel,
    los_gain,
    propagation_distance,
    reflection_coeff,
    sample_scenario,
    subcarrier_freq,
)
from ttdbeam.config import SPEED_OF_LIGHT as C
from ttdbeam.config import SystemConfig, desk_config


def test_subcarrier_freq_examples():
    cfg = SystemConfig()
    assert subcarrier_freq(cfg, 1) == pytest.approx(95.5e9)
    assert subcarrier_freq(cfg, 10) == pytest.approx(104.5e9)
    with pytest.raises(IndexError):
        subcarrier_freq(cfg, 0)
    with pytest.raises(IndexError):
        subcarrier_freq(cfg, 11)


def test_single_subcarrier_sits_at_center():
    cfg = SystemConfig(n_subcarriers=1)
    assert subcarrier_freq(cfg, 1) == cfg.center_freq


def test_propagation_distance_matches_cartesian_geometry():
    cfg = desk_config()
    theta, r = 0.9, 4.0
    n = np.arange(1, cfg.n_antennas + 1)
    x = (n - 1 - (cfg.n_antennas - 1) / 2) * cfg.antenna_spacing
    expected = np.hypot(r * np.cos(theta) - x, r * np.sin(theta))
    np.testing.assert_allclose(propagation_distance(n, r, theta, cfg), expected, rtol=1e-13)


def test_array_response_broadside_center_phase():
    cfg = SystemConfig(n_antennas=9, n_ttd=1, n_rf=2, n_users=2)
    b = array_response(cfg.center_freq, np.pi / 2, 3.0, cfg)
    assert b[4] == pytest.approx(1.0)
    np.testing.assert_allclose(b, b[::-1])


def test_array_response_far_field_limit_is_planar():
    cfg = desk_config()
    theta, f = 1.1, cfg.center_freq
    chi = np.arange(cfg.n_antennas) - (cfg.n_antennas - 1) / 2
    planar = np.exp(2j * np.pi * f * chi * cfg.antenna_spacing * np.cos(theta) / C)
    b = array_response(f, theta, 1e7, cfg)
    assert abs(np.vdot(planar, b)) / cfg.n_antennas > 1 - 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, np.pi - 0.01), st.floats(0.5, 50.0), st.floats(50e9, 150e9))
def test_array_response_unit_modulus(theta, r, f):
    cfg = desk_config()
    np.testing.assert_allclose(np.abs(array_response(f, theta, r, cfg)), 1.0, rtol=1e-12)


def test_array_response_vectorized_over_frequency():
    cfg = desk_config()
    b = array_response(cfg.freqs, 0.7, 5.0, cfg)
    assert b.shape == (cfg.n_subcarriers, cfg.n_antennas)
    np.testing.assert_allclose(b[2], array_response(cfg.freqs[2], 0.7, 5.0, cfg))


def test_los_gain_free_space_and_absorption():
    cfg = SystemConfig()
    assert los_gain(1e11, 10.0, cfg) == pytest.approx(C / (4 * np.pi * 1e11 * 10.0))
    lossy = SystemConfig(absorption=0.2)
    assert los_gain(1e11, 10.0, lossy) / los_gain(1e11, 10.0, cfg) == pytest.approx(np.exp(-1.0))


def test_fresnel_normal_incidence():
    # Z = 188.5 ohm -> n_r = 2; smooth surface -> (1 - 2) / (1 + 2)
    s = ScattererGeometry(angle=1.0, range=2.0, incidence=0.0, roughness=0.0)
    assert reflection_coeff(1e11, s, "full") == pytest.approx(-1 / 3)


def test_roughness_attenuates():
    s = ScattererGeometry(angle=1.0, range=2.0, incidence=0.3, roughness=1e-4)
    smooth = ScattererGeometry(angle=1.0, range=2.0, incidence=0.3, roughness=0.0)
    ratio = abs(reflection_coeff(1e11, s, "full")) / abs(reflection_coeff(1e11, smooth, "full"))
    expected = np.exp(-0.5 * (4 * np.pi * 1e11 * 1e-4 * np.cos(0.3) / C) ** 2)
    assert ratio == pytest.approx(expected)


def test_simplified_reflection_magnitude():
    s = ScattererGeometry(angle=1.0, range=2.0, reflection_phase=0.4)
    g = reflection_coeff(1e11, s)
    assert abs(g) == pytest.approx(10 ** (-15 / 20))
    assert np.angle(g) == pytest.approx(0.4)


def test_los_only_channel_is_scaled_conjugate_response():
    cfg = desk_config(n_users=1, n_rf=1)
    u = UserGeometry(angle=1.2, range=7.0, noise_var=cfg.noise_var)
    ch = build_channel(Scenario((u,), ((),)), cfg)
    f = cfg.freqs
    beta = los_gain(f, 7.0, cfg) * np.exp(-2j * np.pi * f * 7.0 / C)
    expected = beta[:, None] * np.conj(array_response(f, 1.2, 7.0, cfg))
    np.testing.assert_allclose(ch.h[:, 0], expected, rtol=1e-12)


def test_channel_is_linear_in_path_scale():
    cfg = desk_config()
    scn = sample_scenario(5, cfg)
    a = build_channel(scn, cfg)
    b = build_channel(scn, cfg, path_scale=2.5 - 1j)
    np.testing.assert_allclose(b.h, (2.5 - 1j) * a.h, rtol=1e-12)
    np.testing.assert_allclose(a.scaled(2.5 - 1j).h, b.h)


def test_sample_scenario_deterministic_and_in_range():
    cfg = desk_config()
    s1, s2 = sample_scenario(11, cfg), sample_scenario(11, cfg)
    assert s1 == s2
    for u, group in zip(s1.users, s1.scatterers):
        assert 5 <= u.range <= 15
        assert np.pi / 6 <= u.angle <= 5 * np.pi / 6
        assert len(group) == cfg.n_scatterers
        assert all(1 <= s.range <= u.range for s in group)


def test_scenario_json_round_trip():
    cfg = desk_config()
    scn = sample_scenario(3, cfg)
    assert Scenario.from_json(scn.to_json()) == scn


def test_channel_shapes():
    cfg = desk_config()
    ch = build_channel(sample_scenario(0, cfg), cfg)
    assert isinstance(ch, ChannelTensor)
    assert ch.shape == (cfg.n_subcarriers, cfg.n_users, cfg.n_antennas)
    assert np.all(ch.noise_var == cfg.noise_var)
