import numpy as np
import pytest
from scipy import signal

from ecdlsim.noise import (EcdlGeometry, NoiseSpec, PhaseTrace, add_drift,
                           ecdl_linewidth, generate_phase, linewidth_to_h0,
                           lorentzian_linewidth)


def test_zero_spec_gives_zero_trace():
    spec = NoiseSpec(h_coeffs={}, f_low=1.0, f_high=100.0)
    tr = generate_phase(spec, 1.0, 1000.0, seed=42)
    assert np.all(tr.samples == 0.0)


def test_determinism_bit_identical():
    spec = NoiseSpec(h_coeffs={0: 2.5}, f_low=1.0, f_high=400.0)
    a = generate_phase(spec, 2.0, 1000.0, seed=7)
    b = generate_phase(spec, 2.0, 1000.0, seed=7)
    assert np.array_equal(a.samples, b.samples)
    c = generate_phase(spec, 2.0, 1000.0, seed=8)
    assert not np.array_equal(a.samples, c.samples)


def test_white_fm_psd_flat():
    # frozen oracle: Welch periodogram of the derived frequency trace
    spec = NoiseSpec(h_coeffs={0: 1.0}, f_low=1.0, f_high=5e4)
    fs = 1e5
    psds = []
    for seed in range(10):
        tr = generate_phase(spec, 10.0, fs, seed)
        fr, p = signal.welch(tr.frequency(), fs, window="hann",
                             nperseg=1 << 16, detrend=False)
        psds.append(p)
    p = np.mean(psds, axis=0)
    band = (fr > 10) & (fr < 4e4)
    assert np.mean(p[band]) == pytest.approx(1.0, rel=0.10)


@pytest.mark.parametrize("alpha", [-2, -1, 0, 1, 2])
def test_psd_slope_round_trip(alpha):
    fs = 4096.0
    spec = NoiseSpec(h_coeffs={alpha: 1.0}, f_low=0.05, f_high=1000.0)
    slopes = []
    for seed in range(20):
        tr = generate_phase(spec, 16.0, fs, seed)
        fr, p = signal.welch(tr.frequency(), fs, window="hann",
                             nperseg=1 << 13, detrend=False)
        band = (fr >= 0.5) & (fr <= 100.0)
        slopes.append(np.polyfit(np.log(fr[band]), np.log(p[band]), 1)[0])
    assert np.mean(slopes) == pytest.approx(alpha, abs=0.15)


def test_white_fm_phase_variance_grows_linearly():
    spec = NoiseSpec(h_coeffs={0: 1.0}, f_low=0.1, f_high=500.0)
    fs = 1000.0
    phis = np.array([generate_phase(spec, 4.0, fs, s).samples
                     for s in range(500)])
    idx = np.unique(np.logspace(np.log10(40), np.log10(400), 10).astype(int))
    var = np.var(phis[:, idx], axis=0)
    slope = np.polyfit(np.log(idx), np.log(var), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_lorentzian_linewidth():
    assert lorentzian_linewidth(0.0) == 0.0
    assert lorentzian_linewidth(1.0) == pytest.approx(np.pi)
    # the sub-20-kHz free-running regime
    assert lorentzian_linewidth(6366.2) == pytest.approx(2.0e4, rel=1e-4)
    assert linewidth_to_h0(lorentzian_linewidth(3.7)) == pytest.approx(3.7)
    with pytest.raises(ValueError):
        lorentzian_linewidth(-1.0)


def test_ecdl_linewidth_examples():
    base = dict(delta_nu_ld=1e7, diode_length=1e-3, refractive_index=3.5)
    assert ecdl_linewidth(EcdlGeometry(cavity_length=0.0, **base)) == 1e7
    long_lw = ecdl_linewidth(EcdlGeometry(cavity_length=0.20, **base))
    short_lw = ecdl_linewidth(EcdlGeometry(cavity_length=0.02, **base))
    assert long_lw == pytest.approx(2.96e3, rel=0.01)
    assert short_lw == pytest.approx(222e3, rel=0.01)
    # ratio of narrowing factors between the two cavity lengths
    assert short_lw / long_lw == pytest.approx(75.0, rel=0.01)


def test_ecdl_linewidth_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        dn, L, Lld, n = (rng.uniform(1e6, 1e9), rng.uniform(0.01, 0.5),
                         rng.uniform(2e-4, 3e-3), rng.uniform(1.0, 4.0))
        g = EcdlGeometry(dn, L, Lld, n)
        assert ecdl_linewidth(EcdlGeometry(dn, L * 1.5, Lld, n)) < ecdl_linewidth(g)
        assert ecdl_linewidth(EcdlGeometry(dn, L, Lld, n + 0.5)) > ecdl_linewidth(g)
        assert ecdl_linewidth(EcdlGeometry(dn * 2, L, Lld, n)) > ecdl_linewidth(g)


def test_add_drift_identity_and_chirp():
    fs = 1000.0
    zero = PhaseTrace(sample_rate=fs, samples=np.zeros(int(100 * fs)))
    assert add_drift(zero, 0.0) is zero
    drifted = add_drift(zero, 0.05)
    # mean frequency over the final 1 s gate of a 100 s linear chirp
    f_gate = (drifted.samples[-1] - drifted.samples[int(99 * fs)]) / (
        2 * np.pi * (drifted.times()[-1] - 99.0))
    assert f_gate == pytest.approx(4.975, rel=1e-3)


def test_add_drift_superposition():
    rng = np.random.default_rng(3)
    tr = PhaseTrace(sample_rate=100.0, samples=rng.normal(size=1000))
    a = add_drift(add_drift(tr, 0.3), -0.1)
    b = add_drift(tr, 0.2)
    np.testing.assert_allclose(a.samples, b.samples, atol=1e-9)


def test_generate_phase_drift_term():
    spec = NoiseSpec(h_coeffs={}, drift_rate=0.05, f_low=1.0, f_high=100.0)
    tr = generate_phase(spec, 10.0, 1000.0, seed=0)
    t = np.arange(tr.samples.size) / 1000.0
    np.testing.assert_allclose(tr.samples, np.pi * 0.05 * t ** 2, atol=1e-9)


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        NoiseSpec(h_coeffs={0: -1.0})
    with pytest.raises(ValueError):
        NoiseSpec(h_coeffs={0: np.nan})
    with pytest.raises(ValueError):
        NoiseSpec(h_coeffs={3: 1.0})
    with pytest.raises(ValueError):
        NoiseSpec(h_coeffs={}, f_low=2.0, f_high=1.0)
    spec = NoiseSpec(h_coeffs={0: 1.0}, f_low=1.0, f_high=400.0)
    with pytest.raises(ValueError):
        generate_phase(spec, 0.0005, 1000.0, seed=0)  # underflows the grid
    with pytest.raises(ValueError):
        generate_phase(spec, 1.0, 500.0, seed=0)  # Nyquist below f_high
    with pytest.raises(ValueError):
        PhaseTrace(sample_rate=1.0, samples=np.array([]))
    with pytest.raises(ValueError):
        PhaseTrace(sample_rate=1.0, samples=np.array([1.0, np.inf]))
