"""Phase-noise propagation through harmonic generation and multi-photon
excitation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import SpectrumEstimate
from .noise import PhaseTrace


@dataclass(frozen=True)
class PhaseMetrics:
    """Integrated phase noise and the carrier power it implies."""

    phi2_rms: float            # rad^2, carrier excluded
    carrier_fraction: float
    bandwidth: float = 1e7     # Hz

    def __post_init__(self):
        if self.phi2_rms < 0:
            raise ValueError("phi2_rms must be >= 0")
        if not 0 < self.carrier_fraction <= 1:
            raise ValueError("carrier_fraction must be in (0, 1]")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")

    @classmethod
    def from_phi2(cls, phi2_rms: float, bandwidth: float = 1e7) -> "PhaseMetrics":
        return cls(phi2_rms=phi2_rms, carrier_fraction=carrier_fraction(phi2_rms),
                   bandwidth=bandwidth)


def multiply_phase(trace: PhaseTrace, m: int) -> PhaseTrace:
    """Harmonic phase multiplication: each sample scaled by the order m.

    Integrated phase noise scales by m**2, so a phase-diffusion line is
    broadened fourfold per doubling.
    """
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    if m == 1:
        return trace
    return PhaseTrace(sample_rate=trace.sample_rate, samples=m * trace.samples,
                      t0=trace.t0, label=trace.label)


def carrier_fraction(phi2_rms: float) -> float:
    """Fraction of power left in the carrier, exp(-phi2_rms)."""
    if phi2_rms < 0:
        raise ValueError("phi2_rms must be >= 0")
    return math.exp(-phi2_rms)


def excitation_efficiency(phi2_rms_fundamental: float, n_photons: int) -> float:
    """Multi-photon excitation efficiency exp(-(n * phi_rms)**2).

    Identical to carrier_fraction(n**2 * phi2) since the n-photon drive sees
    the fundamental's phase multiplied n-fold.
    """
    if phi2_rms_fundamental < 0:
        raise ValueError("phi2_rms must be >= 0")
    if n_photons < 1 or int(n_photons) != n_photons:
        raise ValueError("n_photons must be a positive integer")
    return math.exp(-(n_photons ** 2) * phi2_rms_fundamental)


def rms_phase_in_bandwidth(spectrum: SpectrumEstimate, bandwidth: float) -> float:
    """Integrated phase variance (rad^2) within +-bandwidth of the carrier.

    For phase or frequency PSDs this is the direct integral (the frequency
    kind is converted via S_phi = S_nu / f^2). For field spectra it is
    -ln(carrier fraction) with the carrier defined as the single resolution
    bin at the spectral peak.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    if spectrum.rbw > bandwidth / 100.0:
        raise ValueError("spectrum resolution must be <= bandwidth/100")
    f = spectrum.freqs
    if np.max(np.abs(f)) < bandwidth:
        raise ValueError(
            f"spectrum spans only {np.max(np.abs(f)):g} Hz; "
            f"{bandwidth:g} Hz required")
    if spectrum.kind == "field":
        peak = int(np.argmax(spectrum.psd))
        sel = np.abs(f - f[peak]) <= bandwidth
        total = float(np.sum(spectrum.psd[sel]))
        if total <= 0:
            return 0.0
        frac = float(spectrum.psd[peak]) / total
        return -math.log(frac)
    df = float(f[1] - f[0])
    sel = (f > 0) & (f <= bandwidth)
    if spectrum.kind == "frequency":
        s_phi = spectrum.psd[sel] / f[sel] ** 2
    else:
        s_phi = spectrum.psd[sel]
    return float(np.sum(s_phi) * df)


def lorentzian(f, fwhm: float):
    """Unit-area Lorentzian profile."""
    f = np.asarray(f, dtype=float)
    hw = fwhm / 2.0
    return hw / (np.pi * (f ** 2 + hw ** 2))


def excitation_spectrum(laser_243_spectrum: SpectrumEstimate,
                        natural_width: float, transit_width: float,
                        detuning_grid) -> np.ndarray:
    """Two-photon excitation line profile versus detuning, peak-normalized.

    Convolves an atomic Lorentzian of FWHM (natural_width + transit_width)
    with the self-convolution of the 243 nm field spectrum (the two-photon
    drive spectrum).
    """
    if natural_width < 0 or transit_width < 0:
        raise ValueError("widths must be >= 0")
    detuning_grid = np.asarray(detuning_grid, dtype=float)
    if np.any(np.diff(detuning_grid) <= 0):
        raise ValueError("detuning_grid must be strictly increasing")
    if laser_243_spectrum.kind != "field":
        raise ValueError("laser spectrum must be of kind 'field'")
    f = laser_243_spectrum.freqs
    df = np.diff(f)
    if not np.allclose(df, df[0], rtol=1e-6):
        raise ValueError("laser spectrum grid must be uniform")
    df = float(df[0])
    p = laser_243_spectrum.psd / np.sum(laser_243_spectrum.psd)
    peak = int(np.argmax(p))
    f_rel = f - f[peak]

    drive = np.convolve(p, p)
    f_drive = 2.0 * f_rel[0] + np.arange(drive.size) * df

    width = natural_width + transit_width
    if width > 0:
        half = max(10.0 * width, 5.0 * df)
        m = int(math.ceil(half / df))
        fk = np.arange(-m, m + 1) * df
        kernel = lorentzian(fk, width)
        kernel = kernel / np.sum(kernel)
        profile = np.convolve(drive, kernel)
        f_prof = f_drive[0] - m * df + np.arange(profile.size) * df
    else:
        profile, f_prof = drive, f_drive

    profile = profile / np.max(profile)
    return np.interp(detuning_grid, f_prof, profile, left=0.0, right=0.0)
