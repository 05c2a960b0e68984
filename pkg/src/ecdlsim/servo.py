"""Discrete-time three-branch locking loop: fast proportional path, PI to a
high-voltage actuator, and a slow integrator offloading to a piezo."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .noise import NoiseSpec, PhaseTrace, generate_phase
from .optics import CavityModel, PdhConfig, pdh_slope


@dataclass(frozen=True)
class ServoConfig:
    """Gains, corners and actuator coefficients for the three branches.

    All continuous-time blocks are discretized with the bilinear transform at
    ``sim_rate``. The fast branch is a proportional amplifier with a single
    pole at ``fast_bw``; PI 1 drives the HV actuator; PI 2 is a pure
    integrator with time constant ``pi2_tau`` that steers the piezo so the
    average PI 1 output returns to mid-range.
    """

    fast_gain: float = 0.0      # Hz/V
    fast_bw: float = 3e6        # Hz
    pi1_kp: float = 0.0
    pi1_ki: float = 0.0         # 1/s
    hv_actuator: float = 1e6    # Hz/V
    hv_range: float = 10.0      # V
    pi2_tau: float = 1.0        # s
    pzt_actuator: float = 1e8   # Hz/V
    pzt_range: float = 10.0     # V
    pzt_bw: float = 1e3         # Hz
    sim_rate: float = 1e8       # Hz
    nonlinear_pdh: bool = False

    def __post_init__(self):
        if not self.sim_rate >= 20.0 * self.fast_bw:
            raise ValueError("sim_rate must be >= 20 * fast_bw")
        for name in ("fast_gain", "pi1_kp", "pi1_ki", "hv_actuator",
                     "pzt_actuator"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.hv_range < 0 or self.pzt_range < 0:
            raise ValueError("actuator ranges must be >= 0")
        if not self.pi2_tau > 0:
            raise ValueError("pi2_tau must be > 0")
        if not self.pzt_bw > 0 or not self.fast_bw > 0:
            raise ValueError("branch bandwidths must be > 0")


@dataclass
class LockResult:
    residual: PhaseTrace
    actuator_traces: dict
    actuator_decim: int
    locked: bool
    saturation_events: int
    final_detuning: float
    failure_step: int | None = None
    pdh_slope_used: float = 0.0


def _lpf_coeffs(corner: float, dt: float) -> tuple[float, float]:
    """Bilinear single-pole low-pass: y_k = b*(x_k + x_{k-1}) - a*y_{k-1}."""
    k = 2.0 / (dt * 2.0 * math.pi * corner)
    return 1.0 / (1.0 + k), (1.0 - k) / (1.0 + k)


@njit(cache=True)
def _pdh_inline(delta, r1, r2, fsr, fm, amp, cos_t, sin_t):
    ph0 = np.exp(2j * np.pi * delta / fsr)
    php = np.exp(2j * np.pi * (delta + fm) / fsr)
    phm = np.exp(2j * np.pi * (delta - fm) / fsr)
    f0 = (r1 - r2 * ph0) / (1.0 - r1 * r2 * ph0)
    fp = (r1 - r2 * php) / (1.0 - r1 * r2 * php)
    fmn = (r1 - r2 * phm) / (1.0 - r1 * r2 * phm)
    chi = f0 * np.conj(fp) - np.conj(f0) * fmn
    return amp * (chi.imag * cos_t - chi.real * sin_t)


@njit(cache=True)
def _run_loop(phi_free, dt, slope, cav_drift,
              fast_gain, bf, af, kp, ki, hv_act, hv_range,
              pi2_tau, pzt_act, pzt_range, bz, az,
              nonlinear, r1, r2, fsr, fm, amp, cos_t, sin_t,
              decim, n_tail):
    n = phi_free.shape[0]
    n_store = (n + decim - 1) // decim
    resid = np.empty(n)
    fast_hist = np.empty(n_store)
    hv_hist = np.empty(n_store)
    pzt_hist = np.empty(n_store)
    two_pi = 2.0 * np.pi

    corr = 0.0          # total actuator frequency correction, Hz
    phi_corr = 0.0      # integrated correction + cavity phase, rad
    e_p = 0.0
    yf_p = 0.0
    integ1 = 0.0
    v1_p = 0.0
    integ2 = 0.0
    v2_p = 0.0
    yz_p = 0.0
    phi_prev = 0.0
    nsat = 0
    fail = -1
    tail_sum = 0.0
    clamp_tail = 0
    tail10 = n - n // 10

    for k in range(n):
        nu_cav = cav_drift * (k * dt)
        dphi = phi_free[k] - phi_prev
        phi_prev = phi_free[k]
        delta = dphi / (two_pi * dt) + corr - nu_cav
        phi_corr += two_pi * (corr - nu_cav) * dt
        resid[k] = phi_free[k] + phi_corr

        if nonlinear:
            e = _pdh_inline(delta, r1, r2, fsr, fm, amp, cos_t, sin_t)
        else:
            e = slope * delta

        # fast proportional branch through its single-pole corner
        yf = bf * (e + e_p) - af * yf_p
        yf_p = yf

        # PI 1 with anti-windup: the integrator freezes while clamped
        cand = integ1 + ki * dt * 0.5 * (e + e_p)
        u1 = kp * e + cand
        clamped = False
        if u1 > hv_range:
            v1 = hv_range
            nsat += 1
            clamped = True
        elif u1 < -hv_range:
            v1 = -hv_range
            nsat += 1
            clamped = True
        else:
            v1 = u1
            integ1 = cand
        e_p = e

        # PI 2: pure integrator on the PI 1 output, scaled to piezo volts
        cand2 = integ2 + (dt * 0.5 / pi2_tau) * (v1 + v1_p) * (hv_act / pzt_act)
        clamped2 = False
        if cand2 > pzt_range:
            v2 = pzt_range
            nsat += 1
            clamped2 = True
        elif cand2 < -pzt_range:
            v2 = -pzt_range
            nsat += 1
            clamped2 = True
        else:
            v2 = cand2
            integ2 = cand2
        v1_p = v1
        yz = bz * (v2 + v2_p) - az * yz_p
        v2_p = v2
        yz_p = yz

        if clamped and clamped2 and fail < 0:
            fail = k
        if k >= tail10 and (clamped or clamped2):
            clamp_tail += 1
        if k >= n - n_tail:
            tail_sum += delta

        corr = -(fast_gain * yf + hv_act * v1 + pzt_act * yz)

        if k % decim == 0:
            j = k // decim
            fast_hist[j] = yf
            hv_hist[j] = v1
            pzt_hist[j] = yz

        if not np.isfinite(corr):
            resid[k:] = np.nan
            return (resid, fast_hist, hv_hist, pzt_hist, nsat, k,
                    np.nan, clamp_tail)

    return (resid, fast_hist, hv_hist, pzt_hist, nsat, fail,
            tail_sum / n_tail, clamp_tail)


@dataclass
class ServoState:
    """Mutable loop state for single-step simulation."""

    servo: ServoConfig
    slope: float
    cavity: CavityModel
    pdh: PdhConfig | None = None
    k: int = 0
    correction: float = 0.0
    phi_free: float = 0.0
    phi_corr: float = 0.0
    residual: float = 0.0
    detuning: float = 0.0
    error: float = 0.0
    e_prev: float = 0.0
    yf_prev: float = 0.0
    integ1: float = 0.0
    v1: float = 0.0
    v1_prev: float = 0.0
    integ2: float = 0.0
    v2_prev: float = 0.0
    yz_prev: float = 0.0
    saturation_events: int = 0
    _consts: tuple = field(default=None, repr=False)

    def _constants(self, dt):
        if self._consts is None or self._consts[0] != dt:
            bf, af = _lpf_coeffs(self.servo.fast_bw, dt)
            bz, az = _lpf_coeffs(self.servo.pzt_bw, dt)
            self._consts = (dt, bf, af, bz, az, _pdh_constants(self.pdh, self.cavity))
        return self._consts


def _pdh_constants(pdh: PdhConfig | None, cavity: CavityModel):
    """Scalars consumed by the nonlinear in-loop PDH evaluation."""
    if pdh is None:
        return (0.9, 0.9, 1.0, 0.1, 0.0, 1.0, 0.0)
    from scipy.special import j0, j1
    r1, r2 = cavity.mirror_amplitudes()
    amp = -2.0 * j0(pdh.mod_depth) * j1(pdh.mod_depth) * pdh.photodetector_gain
    return (r1, r2, cavity.fsr, pdh.mod_freq, amp,
            math.cos(pdh.demod_phase), math.sin(pdh.demod_phase))


def step(state: ServoState, free_run_phase_increment: float, dt: float) -> ServoState:
    """Advance the closed loop by one sample.

    ``free_run_phase_increment`` is the phase the uncorrected laser would
    accumulate over this step, rad. Mirrors the vectorized kernel used by
    :func:`run_lock`; kept as the readable reference implementation.
    """
    sv = state.servo
    if abs(dt * sv.sim_rate - 1.0) > 1e-9:
        raise ValueError("dt must equal 1/sim_rate")
    _, bf, af, bz, az, pdh_c = state._constants(dt)
    two_pi = 2.0 * math.pi

    nu_cav = state.cavity.drift_rate * (state.k * dt)
    state.phi_free += free_run_phase_increment
    delta = (free_run_phase_increment / (two_pi * dt)
             + state.correction - nu_cav)
    state.phi_corr += two_pi * (state.correction - nu_cav) * dt
    state.residual = state.phi_free + state.phi_corr
    state.detuning = delta

    if sv.nonlinear_pdh:
        e = _pdh_inline(delta, *pdh_c)
    else:
        e = state.slope * delta
    state.error = e
    if not math.isfinite(e):
        raise FloatingPointError(f"non-finite loop state at step {state.k}")

    yf = bf * (e + state.e_prev) - af * state.yf_prev
    state.yf_prev = yf

    cand = state.integ1 + sv.pi1_ki * dt * 0.5 * (e + state.e_prev)
    u1 = sv.pi1_kp * e + cand
    if abs(u1) > sv.hv_range:
        v1 = math.copysign(sv.hv_range, u1)
        state.saturation_events += 1
    else:
        v1 = u1
        state.integ1 = cand
    state.e_prev = e

    cand2 = state.integ2 + (dt * 0.5 / sv.pi2_tau) * (v1 + state.v1_prev) * (
        sv.hv_actuator / sv.pzt_actuator)
    if abs(cand2) > sv.pzt_range:
        v2 = math.copysign(sv.pzt_range, cand2)
        state.saturation_events += 1
    else:
        v2 = cand2
        state.integ2 = cand2
    state.v1_prev = v1
    state.v1 = v1
    yz = bz * (v2 + state.v2_prev) - az * state.yz_prev
    state.v2_prev = v2
    state.yz_prev = yz

    state.correction = -(sv.fast_gain * yf + sv.hv_actuator * v1
                         + sv.pzt_actuator * yz)
    state.k += 1
    return state


def run_lock(laser: NoiseSpec, cavity: CavityModel, pdh: PdhConfig,
             servo: ServoConfig, duration: float, seed: int,
             actuator_decim: int = 1) -> LockResult:
    """Simulate a full locking run and return the in-loop residual.

    Deterministic per seed. The cavity drift is absorbed by PI 1 and then
    handed off to the piezo branch so that PI 1's average output returns
    toward mid-range.
    """
    fs = servo.sim_rate
    n = int(round(duration * fs))
    if n < 1e4:
        raise ValueError("duration * sim_rate must be >= 1e4 steps")
    dt = 1.0 / fs

    free = generate_phase(laser, duration, fs, seed)
    slope = pdh_slope(pdh, cavity)
    # The loop applies negative feedback assuming a positive discriminant;
    # a negative slope (demod convention) is folded into the error sign.
    eff_slope = abs(slope)

    bf, af = _lpf_coeffs(servo.fast_bw, dt)
    bz, az = _lpf_coeffs(servo.pzt_bw, dt)
    pdh_c = _pdh_constants(pdh, cavity)
    n_tail = min(n, max(1000, n // 100))

    (resid, fast_h, hv_h, pzt_h, nsat, fail, final_det, clamp_tail) = _run_loop(
        free.samples, dt, eff_slope, cavity.drift_rate,
        servo.fast_gain, bf, af, servo.pi1_kp, servo.pi1_ki,
        servo.hv_actuator, servo.hv_range, servo.pi2_tau,
        servo.pzt_actuator, servo.pzt_range, bz, az,
        servo.nonlinear_pdh, *pdh_c, actuator_decim, n_tail)

    if not np.all(np.isfinite(resid)):
        raise FloatingPointError(
            f"simulation diverged (non-finite state at step {fail})")

    tail_frac = clamp_tail / max(1, n // 10)
    locked = (abs(final_det) < cavity.linewidth / 10.0) and tail_frac < 0.5
    return LockResult(
        residual=PhaseTrace(sample_rate=fs, samples=resid, label="residual"),
        actuator_traces={"fast": fast_h, "hv": hv_h, "pzt": pzt_h},
        actuator_decim=actuator_decim,
        locked=locked,
        saturation_events=int(nsat),
        final_detuning=float(final_det),
        failure_step=None if fail < 0 else int(fail),
        pdh_slope_used=slope,
    )


def closed_loop_suppression(servo: ServoConfig, pdh_slope_value: float, f):
    """|1 + G(f)| of the discretized loop, including the one-step update delay.

    G is the product of the discriminator slope, the three branch transfer
    functions and the actuator coefficients, evaluated on the bilinear grid
    at ``sim_rate``. The measured residual PSD equals the free-running PSD
    divided by the square of this value.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("f must be > 0")
    dt = 1.0 / servo.sim_rate
    zi = np.exp(-2j * np.pi * f * dt)
    w = 2.0 / dt * (1.0 - zi) / (1.0 + zi)  # bilinear s
    h_fast = 1.0 / (1.0 + w / (2.0 * np.pi * servo.fast_bw))
    h_pzt = 1.0 / (1.0 + w / (2.0 * np.pi * servo.pzt_bw))
    pi1 = servo.pi1_kp + servo.pi1_ki / w
    g = zi * abs(pdh_slope_value) * (
        servo.fast_gain * h_fast
        + servo.hv_actuator * pi1 * (1.0 + h_pzt / (w * servo.pi2_tau)))
    out = np.abs(1.0 + g)
    return float(out) if out.ndim == 0 else out
