import numpy as np
import pytest

from ttdbeam import fda
from ttdbeam.baselines import (
    ANALOG_DESIGNERS,
    SchemeId,
    analog_baseline,
    cf_analog,
    conventional_ps,
    far_field_dpp,
    mccm_analog,
    mcm_analog,
    near_field_pdf,
    optimal_digital,
)
from ttdbeam.channel import array_response, build_channel, sample_scenario
from ttdbeam.config import SystemConfig, desk_config
from ttdbeam.harness import cf_init, pnf_init
from ttdbeam.hts import AnalogChainDesign, average_gain, design_chains, pnf_design, robust_analog_design


def _zero_delay_gain(phases, theta, r, cfg):
    return average_gain(AnalogChainDesign(phases, np.zeros(cfg.n_ttd)), theta, r, cfg)


def test_scheme_ids_are_verbatim_strings():
    assert SchemeId("FDA_Full") is SchemeId.FDA_FULL
    assert len(SchemeId) == 11
    assert {s.value for s in ANALOG_DESIGNERS} == {"CF", "MCM", "MCCM", "FarFieldDPP", "NearFieldPDF"}


def test_cf_unit_gain_at_center():
    cfg = desk_config()
    a = cf_analog(1.1, 7.0, cfg)
    b = array_response(cfg.center_freq, 1.1, 7.0, cfg)
    assert abs(b @ np.exp(1j * a)) / cfg.n_antennas == pytest.approx(1.0)


def test_single_subcarrier_collapses_to_cf():
    cfg = desk_config(n_subcarriers=1)
    cf = np.exp(1j * cf_analog(0.9, 6.0, cfg))
    np.testing.assert_allclose(np.exp(1j * mcm_analog(0.9, 6.0, cfg)), cf, atol=1e-12)
    np.testing.assert_allclose(np.exp(1j * mccm_analog(0.9, 6.0, cfg)), cf, atol=1e-9)


def test_mccm_is_principal_eigenvector_projection():
    cfg = desk_config(bandwidth=30e9)
    b = array_response(cfg.freqs, 1.0, 5.0, cfg)
    R = b.T @ b.conj() / cfg.n_subcarriers
    assert np.allclose(R, R.conj().T)
    assert np.linalg.eigvalsh(R).min() > -1e-9
    w, V = np.linalg.eigh(R)
    u = V[:, -1]
    u = u * np.exp(1j * np.angle(np.vdot(u, b.mean(axis=0))))
    np.testing.assert_allclose(np.exp(1j * mccm_analog(1.0, 5.0, cfg)), np.exp(-1j * np.angle(u)), atol=1e-6)


def test_gain_ordering_on_defaults():
    cfg = SystemConfig()
    theta, r = np.pi / 4, 10.0
    cf = _zero_delay_gain(cf_analog(theta, r, cfg), theta, r, cfg)
    mcm = _zero_delay_gain(mcm_analog(theta, r, cfg), theta, r, cfg)
    mccm = _zero_delay_gain(mccm_analog(theta, r, cfg), theta, r, cfg)
    robust = average_gain(robust_analog_design(theta, r, cfg), theta, r, cfg)
    assert cf <= mcm <= robust
    assert mccm >= mcm
    # band edge: CF falls below the robust design
    f = cfg.freqs[-1]
    b = array_response(f, theta, r, cfg)
    rob = robust_analog_design(theta, r, cfg).weights(f)[0]
    assert abs(b @ np.exp(1j * cf_analog(theta, r, cfg))) < abs(b @ rob)


def test_far_field_dpp_matches_pnf_far_away():
    cfg = desk_config()
    theta, r = 1.2, 1e6
    dpp = far_field_dpp(theta, cfg)
    pnf = pnf_design(theta, r, cfg)
    assert abs(average_gain(dpp, theta, r, cfg) - average_gain(pnf, theta, r, cfg)) < 1e-3
    assert np.all(dpp.delays >= 0) and np.all(dpp.delays <= cfg.t_max)


def test_dpp_and_pdf_below_pnf_in_near_field():
    cfg = SystemConfig()
    theta, r = np.pi / 3, 10.0
    pnf = average_gain(pnf_design(theta, r, cfg), theta, r, cfg)
    assert average_gain(far_field_dpp(theta, cfg), theta, r, cfg) <= pnf
    assert average_gain(near_field_pdf(theta, r, cfg), theta, r, cfg) <= pnf


def test_pdf_equals_pnf_with_single_element_groups():
    cfg = SystemConfig(n_antennas=16, n_ttd=16, n_rf=4)
    pdf = near_field_pdf(0.8, 3.0, cfg)
    pnf = pnf_design(0.8, 3.0, cfg)
    np.testing.assert_allclose(np.exp(1j * pdf.phases), np.exp(1j * pnf.phases), atol=1e-12)
    np.testing.assert_allclose(pdf.delays, pnf.delays, atol=1e-20)


@pytest.mark.parametrize("arch", ["fully-connected", "sub-connected"])
def test_baseline_designs_satisfy_invariants(arch):
    cfg = desk_config(architecture=arch)
    scn = sample_scenario(0, cfg)
    for fn in ANALOG_DESIGNERS.values():
        ps, delays = design_chains(scn, cfg, fn)
        A = ps.dense()
        assert np.all(A[~ps.mask()] == 0)
        np.testing.assert_allclose(np.abs(A[ps.mask()]), 1.0)
        assert delays.within(cfg.t_max)


def test_optimal_digital_power_and_single_user_mrt():
    cfg = desk_config(n_users=1, n_rf=1, n_subcarriers=1)
    ch = build_channel(sample_scenario(1, cfg), cfg)
    W, rep = optimal_digital(ch, cfg)
    w, h = W.W[0, :, 0], ch.h[0, 0]
    assert np.linalg.norm(w) ** 2 == pytest.approx(cfg.tx_power)
    assert abs(np.vdot(h, w)) / (np.linalg.norm(h) * np.linalg.norm(w)) == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(rep.objective_trace) >= 0)


def test_conventional_keeps_zero_delays_and_trails_fda():
    cfg = desk_config()
    scn = sample_scenario(2, cfg)
    ch = build_channel(scn, cfg)
    conv = conventional_ps(ch, cfg, cf_init(ch, scn, cfg))
    assert conv.scheme == "ConventionalPS"
    np.testing.assert_array_equal(conv.beamformer.delays.t, 0.0)
    full = fda.solve_fda(ch, cfg, pnf_init(ch, scn, cfg))
    assert conv.spectral_efficiency <= full.spectral_efficiency


def test_conventional_matches_ttd_in_narrowband():
    cfg = desk_config(n_subcarriers=1)
    scn = sample_scenario(3, cfg)
    ch = build_channel(scn, cfg)
    conv = conventional_ps(ch, cfg, cf_init(ch, scn, cfg)).spectral_efficiency
    full = fda.solve_fda(ch, cfg, pnf_init(ch, scn, cfg)).spectral_efficiency
    assert conv == pytest.approx(full, rel=1e-2)


def test_digital_upper_bounds_hybrid_schemes():
    cfg = desk_config()
    scn = sample_scenario(4, cfg)
    ch = build_channel(scn, cfg)
    _, dig = optimal_digital(ch, cfg)
    for sid in ANALOG_DESIGNERS:
        assert analog_baseline(sid, ch, scn, cfg).spectral_efficiency <= dig.spectral_efficiency + 1e-6
