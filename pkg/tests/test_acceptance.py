"""End-to-end acceptance checks.

Each test covers one numbered criterion and prints a single summary line on
success (run pytest with -s or -rP to see them). Tolerances are fixed here
and are not meant to be loosened.
"""

from pathlib import Path

import numpy as np
import pytest
from scipy import optimize, signal

from ecdlsim.harmonics import (excitation_efficiency, excitation_spectrum,
                               lorentzian, multiply_phase)
from ecdlsim.metrics import SpectrumEstimate, allan, counter, field_spectrum
from ecdlsim.noise import (EcdlGeometry, NoiseSpec, PhaseTrace, add_drift,
                           ecdl_linewidth, generate_phase)
from ecdlsim.optics import CavityModel, PdhConfig, pdh_slope
from ecdlsim.scenario import load_scenario, run_scenario
from ecdlsim.servo import ServoConfig, closed_loop_suppression, run_lock

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def _report(num, text):
    print(f"criterion {num}: PASS  {text}")


def test_criterion_1_efficiency_identities():
    eta_long = excitation_efficiency(1e-3, 8)
    eta_short = excitation_efficiency(13e-3, 8)
    assert eta_long == pytest.approx(0.938, abs=0.002)
    assert eta_short == pytest.approx(0.435, abs=0.005)
    _report(1, f"eta(1e-3,8)={eta_long:.4f}  eta(13e-3,8)={eta_short:.4f}")


def test_criterion_2_carrier_fraction_round_trip():
    fs = 1e6
    var_target = 1e-3
    spec = NoiseSpec(h_coeffs={2: var_target / 1e5}, f_low=1.0, f_high=1e5)
    fracs = []
    for seed in range(20):
        tr = generate_phase(spec, 2.0, fs, seed)
        assert np.var(tr.samples) == pytest.approx(var_target, rel=0.1)
        fspec = field_spectrum(tr, rbw=10.0)
        fracs.append(np.max(fspec.psd))
    fracs = np.array(fracs)
    assert np.all(np.abs(fracs - 0.999) <= 5e-4)
    _report(2, f"carrier fraction {fracs.mean():.5f} "
               f"(spread {fracs.min():.5f}..{fracs.max():.5f}, 20 seeds)")


def test_criterion_3_linewidth_quadrupling():
    fs = 1e5
    spec = NoiseSpec(h_coeffs={0: 100.0 / np.pi}, f_low=0.5, f_high=4e4)
    acc = None
    for seed in range(20):
        tr = generate_phase(spec, 4.0, fs, seed)
        s2 = field_spectrum(multiply_phase(tr, 2), rbw=1.0)
        acc = s2.psd if acc is None else acc + s2.psd
    acc /= 20.0
    f = s2.freqs
    win = np.abs(f) <= 3000.0

    def model(f, amp, fwhm):
        return amp * lorentzian(f, fwhm)

    popt, _ = optimize.curve_fit(model, f[win], acc[win], p0=[1.0, 400.0])
    fwhm = abs(popt[1])
    assert 350.0 <= fwhm <= 450.0
    _report(3, f"fitted FWHM after x2 multiplication: {fwhm:.1f} Hz")


def test_criterion_4_closed_loop_suppression_law():
    # scaled-down loop: 10 MHz update rate, 300 kHz fast corner, the same
    # dimensionless gain and a tenfold slower integrator
    cavity = CavityModel(fsr=1.5e9, linewidth=1e4)
    pdh = PdhConfig(mod_freq=2e7, mod_depth=1.08)
    servo = ServoConfig(fast_gain=1843.775958681034, fast_bw=3e5,
                        pi1_ki=11584.786013315632, hv_actuator=1e6,
                        pzt_actuator=1e8, sim_rate=1e7)
    laser = NoiseSpec(h_coeffs={0: 6366.2}, f_low=10.0, f_high=4e6)
    res = run_lock(laser, cavity, pdh, servo, duration=2.0, seed=2)
    assert res.locked
    free = generate_phase(laser, 2.0, 1e7, seed=2)

    nper = 1 << 20
    fr, p_res = signal.welch(res.residual.samples, 1e7, nperseg=nper,
                             detrend="constant")
    _, p_free = signal.welch(free.samples, 1e7, nperseg=nper,
                             detrend="constant")
    fr, p_res, p_free = fr[1:], p_res[1:], p_free[1:]
    sup = closed_loop_suppression(servo, pdh_slope(pdh, cavity), fr)

    worst = 1.0
    for f1, f2 in zip(np.logspace(2, 5, 13)[:-1], np.logspace(2, 5, 13)[1:]):
        band = (fr >= f1) & (fr < f2)
        mc = np.mean(p_res[band]) / np.mean(p_free[band])
        an = np.mean(1.0 / sup[band] ** 2)
        ratio = mc / an
        assert 0.5 <= ratio <= 2.0, (f1, f2, ratio)
        worst = max(worst, max(ratio, 1.0 / ratio))
    _report(4, f"MC/analytic suppression within factor {worst:.2f} "
               "over 1e2..1e5 Hz")


def test_criterion_5_drift_tracking():
    cavity = CavityModel(fsr=1.5e9, linewidth=1e4, drift_rate=0.05)
    pdh = PdhConfig(mod_freq=2e7, mod_depth=1.08)
    laser = NoiseSpec(h_coeffs={}, f_low=0.01, f_high=100.0)
    servo = ServoConfig(fast_gain=18437.75958681034, fast_bw=3e3,
                        pi1_ki=115.84786013315631, hv_actuator=1e6,
                        pzt_actuator=1e8, pzt_bw=1e3, sim_rate=1e5)
    res = run_lock(laser, cavity, pdh, servo, duration=200.0, seed=0,
                   actuator_decim=10)
    assert res.locked
    rms = float(np.sqrt(np.mean(res.residual.samples ** 2)))
    assert rms < 1e-3
    hv = res.actuator_traces["hv"]
    hv_mean = float(np.mean(hv[-hv.size // 10:]))
    assert abs(hv_mean) < 0.05 * servo.hv_range
    _report(5, f"locked over 200 s of 50 mHz/s drift, residual rms "
               f"{rms:.2e} rad, PI1 mean {hv_mean:+.2e} V")


def test_criterion_6_allan_oracles():
    # white FM
    h0 = 4.0
    spec = NoiseSpec(h_coeffs={0: h0}, f_low=0.001, f_high=400.0)
    tr = generate_phase(spec, 2000.0, 1e3, seed=0)
    res = allan(counter(tr, gate=0.01), gate=0.01, nu0=1.0,
                taus=[0.1, 0.3, 1.0, 3.0, 10.0])
    np.testing.assert_allclose(res.sigma_y, np.sqrt(h0 / (2 * res.taus)),
                               rtol=0.10)

    # pure drift
    d, nu0 = 0.05, 1e6
    ramp = add_drift(PhaseTrace(sample_rate=100.0,
                                samples=np.zeros(50000)), d)
    readings = counter(ramp, gate=1.0)[:-1]
    dres = allan(readings, gate=1.0, nu0=nu0, taus=[1.0, 2.0, 5.0, 10.0])
    np.testing.assert_allclose(dres.sigma_y, d * dres.taus / (np.sqrt(2) * nu0),
                               rtol=0.05)

    # flat thermal floor scenario (beat of two sources: sqrt(2) higher)
    sc = load_scenario(f"{SCENARIO_DIR}/thermal_floor.cfg")
    floor = sc.cavity.thermal_floor
    nu0 = sc.analysis["allan_nu0_hz"]
    h_m1 = sc.laser.h_coeffs[-1]
    assert h_m1 == pytest.approx((nu0 * floor) ** 2 / (2 * np.log(2)),
                                 rel=1e-9)
    sig = []
    for seed in sc.seeds:
        tra = generate_phase(sc.laser, sc.duration, sc.servo.sim_rate, seed)
        trb = generate_phase(sc.laser, sc.duration, sc.servo.sim_rate,
                             seed + 10_000_019)
        beat_tr = PhaseTrace(sample_rate=tra.sample_rate,
                             samples=tra.samples - trb.samples)
        r = allan(counter(beat_tr, gate=0.01), gate=0.01, nu0=nu0,
                  taus=[0.1, 0.2, 0.5, 1.0])
        sig.append(r.sigma_y)
    plateau = np.mean(sig, axis=0) / np.sqrt(2)
    np.testing.assert_allclose(plateau, floor, rtol=0.15)
    _report(6, f"white-FM and drift oracles hold; floor plateau "
               f"{plateau.mean():.3g} vs {floor:g}")


def test_criterion_7_ecdl_narrowing():
    rng = np.random.default_rng(12)
    for _ in range(3):
        dn = rng.uniform(1e6, 1e8)
        L = rng.uniform(0.02, 0.40)
        Lld = rng.uniform(5e-4, 2e-3)
        n = rng.uniform(2.0, 4.0)
        expect = dn / (1.0 + L / (n * Lld)) ** 2
        got = ecdl_linewidth(EcdlGeometry(dn, L, Lld, n))
        assert got == pytest.approx(expect, rel=1e-12)
    default = ecdl_linewidth(EcdlGeometry(
        delta_nu_ld=1e7, cavity_length=0.20, diode_length=1e-3,
        refractive_index=3.5))
    assert default <= 2e4
    _report(7, f"narrowing formula exact; 20 cm default {default:.0f} Hz")


def _lorentzian_field(fwhm, df=2.0, half_span=1e4):
    n = int(2 * half_span / df) + 1
    f = np.linspace(-half_span, half_span, n)
    p = lorentzian(f, fwhm)
    return SpectrumEstimate(freqs=f, psd=p / np.sum(p), rbw=df, averages=1,
                            kind="field")


def test_criterion_8_lineshape_ordering():
    grid = np.linspace(-8000.0, 8000.0, 4001)
    narrow = excitation_spectrum(_lorentzian_field(2.0), 1.3, 1e3, grid)
    broad = excitation_spectrum(_lorentzian_field(120.0), 1.3, 1e3, grid)

    def width_at(level, prof):
        above = grid[prof >= level]
        return above[-1] - above[0]

    levels = np.linspace(0.05, 0.5, 10)
    for level in levels:
        assert width_at(level, broad) > width_at(level, narrow), level
    _report(8, "120 Hz drive strictly broader than 2 Hz drive at all "
               "levels up to half maximum")


@pytest.mark.parametrize("name", ["long_ecdl", "short_ecdl",
                                  "drift_handoff", "thermal_floor"])
def test_criterion_9_scenario_determinism(name, tmp_path):
    sc = load_scenario(f"{SCENARIO_DIR}/{name}.cfg")
    run_scenario(sc, tmp_path / "a")
    run_scenario(sc, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "summary.csv" in files and "manifest.json" in files
    for fname in files:
        assert (tmp_path / "a" / fname).read_bytes() == \
               (tmp_path / "b" / fname).read_bytes(), fname
    _report(9, f"{name}: {len(files)} artifacts byte-identical across re-runs")
