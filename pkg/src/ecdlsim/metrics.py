"""Measurement emulation: beat notes, PSD estimation, counter and Allan
deviation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .noise import PhaseTrace

#: Default optical carrier for fractional-frequency normalization (972 nm).
DEFAULT_NU0 = 3.08e14

KINDS = ("phase", "frequency", "field")


@dataclass(frozen=True)
class SpectrumEstimate:
    """One-sided PSD (phase / frequency kinds) or a two-sided normalized
    power-per-bin field spectrum.

    ``psd`` units: rad^2/Hz for kind "phase", Hz^2/Hz for "frequency", and
    fractional power per bin (summing to one) for "field".
    """

    freqs: np.ndarray
    psd: np.ndarray
    rbw: float
    averages: int
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "psd", np.asarray(self.psd, dtype=float))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(self.psd < 0):
            raise ValueError("psd must be >= 0")
        if not self.rbw > 0:
            raise ValueError("rbw must be > 0")


@dataclass(frozen=True)
class AllanResult:
    taus: np.ndarray
    sigma_y: np.ndarray
    gate: float
    nu0: float
    drift_subtracted: bool = False
    omitted: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        object.__setattr__(self, "sigma_y", np.asarray(self.sigma_y, dtype=float))
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be increasing")
        if np.any(self.sigma_y < 0):
            raise ValueError("sigma_y must be >= 0")
        if self.taus.size and self.gate > np.min(self.taus):
            raise ValueError("gate must not exceed min(taus)")


def beat(a: PhaseTrace, b: PhaseTrace, offset: float = 0.0) -> PhaseTrace:
    """Beat-note phase 2*pi*offset*t + phi_a - phi_b."""
    if a.sample_rate != b.sample_rate:
        raise ValueError("sample rates must match")
    if a.samples.size != b.samples.size:
        raise ValueError("trace lengths must match")
    phase = a.samples - b.samples
    if offset:
        phase = phase + 2.0 * np.pi * offset * a.times()
    return PhaseTrace(sample_rate=a.sample_rate, samples=phase,
                      t0=a.t0, label=f"beat({a.label},{b.label})")


def estimate_psd(trace: PhaseTrace, segment_len: int, overlap: float = 0.5,
                 kind: str = "phase") -> SpectrumEstimate:
    """Welch averaged periodogram (Hann window) of a phase trace.

    kind "phase" gives S_phi in rad^2/Hz; kind "frequency" differentiates to
    the instantaneous frequency first and gives S_nu in Hz^2/Hz. One-sided;
    Parseval holds against the time-domain variance.
    """
    if kind == "phase":
        x = trace.samples
    elif kind == "frequency":
        x = trace.frequency()
    else:
        raise ValueError("kind must be 'phase' or 'frequency'")
    if segment_len > x.size:
        raise ValueError("segment_len exceeds trace length")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    fs = trace.sample_rate
    noverlap = int(segment_len * overlap)
    # a constant phase offset is arbitrary; leaving it in leaks DC power
    # into the first bins through the window
    freqs, psd = signal.welch(x, fs, window="hann", nperseg=segment_len,
                              noverlap=noverlap, detrend="constant")
    step = segment_len - noverlap
    averages = 1 + (x.size - segment_len) // step
    win = signal.get_window("hann", segment_len)
    enbw = fs * np.sum(win ** 2) / np.sum(win) ** 2
    return SpectrumEstimate(freqs=freqs[1:], psd=psd[1:], rbw=enbw,
                            averages=averages, kind=kind)


def field_spectrum(trace: PhaseTrace, rbw: float) -> SpectrumEstimate:
    """Two-sided power spectrum of the complex field exp(i*phi(t)).

    Rectangular segments so an on-bin carrier stays in a single bin; psd
    holds the fractional power per bin and sums to one. Peak normalization
    for display is left to the exporter.
    """
    if rbw < 2.0 / trace.duration:
        raise ValueError("rbw must be >= 2/duration")
    fs = trace.sample_rate
    nper = int(fs / rbw)
    nper = min(nper, trace.samples.size)
    nseg = trace.samples.size // nper
    fld = np.exp(1j * trace.samples[: nseg * nper]).reshape(nseg, nper)
    spec = np.fft.fft(fld, axis=1) / nper
    power = np.mean(np.abs(spec) ** 2, axis=0)
    power = np.fft.fftshift(power)
    freqs = np.fft.fftshift(np.fft.fftfreq(nper, 1.0 / fs))
    return SpectrumEstimate(freqs=freqs, psd=power, rbw=fs / nper,
                            averages=nseg, kind="field")


def counter(trace: PhaseTrace, gate: float, nu0: float = 0.0) -> np.ndarray:
    """Dead-time-free gate-averaged frequency readings, Hz.

    reading_k = (phi((k+1)*tau) - phi(k*tau)) / (2*pi*tau) + nu0.
    """
    fs = trace.sample_rate
    if gate < 10.0 / fs:
        raise ValueError("gate must be >= 10 sample periods")
    if gate > trace.duration:
        raise ValueError("gate longer than the trace")
    n_gates = int(trace.duration / gate)
    idx = np.round(np.arange(n_gates + 1) * gate * fs).astype(np.int64)
    idx = np.minimum(idx, trace.samples.size - 1)
    phi = trace.samples[idx]
    return np.diff(phi) / (2.0 * np.pi * gate) + nu0


def allan(readings: np.ndarray, gate: float, nu0: float = DEFAULT_NU0,
          taus=None, subtract_drift: bool = False) -> AllanResult:
    """Overlapping Allan deviation of fractional frequency readings/nu0.

    taus must be integer multiples of the gate time; taus with fewer than
    three averaged readings are omitted and recorded in ``omitted``.
    """
    y = np.asarray(readings, dtype=float)
    # the estimator is invariant to a constant offset; removing it first
    # avoids catastrophic cancellation when readings carry a large carrier
    y = (y - np.mean(y)) / nu0
    if subtract_drift:
        t = np.arange(y.size) * gate
        y = y - np.polyval(np.polyfit(t, y, 1), t)
    if taus is None:
        max_m = y.size // 3
        ms, m = [], 1
        while m <= max_m:
            ms.append(m)
            m *= 2
    else:
        ms = []
        for tau in np.atleast_1d(taus):
            m = tau / gate
            if abs(m - round(m)) > 1e-9:
                raise ValueError(f"tau {tau} is not an integer multiple of the gate")
            ms.append(int(round(m)))
    # cumulative phase-like sums make the overlapping estimator O(n)
    x = np.concatenate(([0.0], np.cumsum(y))) * gate
    out_t, out_s, omitted = [], [], []
    for m in ms:
        tau = m * gate
        if x.size < 2 * m + 1 or (y.size - 2 * m + 1) < 2:
            omitted.append(tau)
            warnings.warn(f"tau={tau}: insufficient data, omitted", stacklevel=2)
            continue
        d = x[2 * m:] - 2.0 * x[m:-m] + x[:-2 * m]
        out_t.append(tau)
        out_s.append(math.sqrt(0.5 * np.mean(d ** 2)) / tau)
    return AllanResult(taus=np.array(out_t), sigma_y=np.array(out_s),
                       gate=gate, nu0=nu0, drift_subtracted=subtract_drift,
                       omitted=tuple(omitted))
