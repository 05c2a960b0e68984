"""Fabry-Perot reference cavity and Pound-Drever-Hall discriminator."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import j0, j1


@dataclass(frozen=True)
class CavityModel:
    """Two-mirror reference cavity used as the frequency discriminator.

    Parameters
    ----------
    fsr : float
        Free spectral range, Hz.
    linewidth : float
        FWHM of the resonance, Hz.
    drift_rate : float
        Linear drift of the resonance frequency, Hz/s.
    thermal_floor : float
        Fractional-frequency Allan floor of the spacer (dimensionless).
    coupling : float
        Mirror asymmetry ratio; 1.0 is critically coupled (full on-resonance
        reflection dip).
    """

    fsr: float
    linewidth: float
    drift_rate: float = 0.0
    thermal_floor: float = 0.0
    coupling: float = 1.0

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ValueError("linewidth must be > 0")
        if not self.fsr > self.linewidth:
            raise ValueError("fsr must exceed linewidth")
        if self.thermal_floor < 0:
            raise ValueError("thermal_floor must be >= 0")
        if not self.coupling > 0:
            raise ValueError("coupling must be > 0")

    @property
    def finesse(self) -> float:
        return self.fsr / self.linewidth

    def mirror_amplitudes(self) -> tuple[float, float]:
        """Amplitude reflectivities (r1, r2) reproducing the finesse.

        Solves finesse = pi*sqrt(r1*r2)/(1 - r1*r2) and splits the product
        according to the coupling ratio.
        """
        fin = self.finesse
        x = (-math.pi + math.sqrt(math.pi ** 2 + 4.0 * fin ** 2)) / (2.0 * fin)
        rho = x * x  # r1 * r2
        r1 = rho ** (1.0 / (1.0 + self.coupling))
        r2 = rho / r1
        return r1, r2


@dataclass(frozen=True)
class PdhConfig:
    """Phase-modulation and demodulation settings for the PDH error signal."""

    mod_freq: float
    mod_depth: float = 1.08
    photodetector_gain: float = 1.0
    demod_phase: float = 0.0

    def __post_init__(self):
        if not self.mod_freq > 0:
            raise ValueError("mod_freq must be > 0")
        if not 0 < self.mod_depth < 1.5:
            raise ValueError("mod_depth must be in (0, 1.5)")

    def validate_against(self, cavity: CavityModel) -> None:
        if not self.mod_freq > cavity.linewidth:
            raise ValueError("mod_freq must exceed the cavity linewidth "
                             "(resolved-sideband regime)")


def _fold_detuning(detuning, fsr):
    folded = (np.asarray(detuning, dtype=float) + fsr / 2) % fsr - fsr / 2
    if np.any(np.abs(np.asarray(detuning) - folded) > 1e-9 * fsr):
        warnings.warn("detuning outside one FSR folded back into "
                      "(-FSR/2, FSR/2]; multi-order lock is not modeled",
                      stacklevel=3)
    return folded


def cavity_reflection(detuning, cavity: CavityModel):
    """Complex reflection coefficient of the cavity at a given detuning (Hz).

    Lossless symmetric two-mirror model; |r| <= 1 everywhere and the modulus
    is minimal on resonance.
    """
    delta = _fold_detuning(detuning, cavity.fsr)
    r1, r2 = cavity.mirror_amplitudes()
    phase = np.exp(2j * np.pi * delta / cavity.fsr)
    return (r1 - r2 * phase) / (1.0 - r1 * r2 * phase)


def _reflection_derivative(detuning, cavity: CavityModel):
    """d(reflection)/d(detuning), per Hz."""
    delta = np.asarray(detuning, dtype=float)
    r1, r2 = cavity.mirror_amplitudes()
    phase = np.exp(2j * np.pi * delta / cavity.fsr)
    dphase = (2j * np.pi / cavity.fsr) * phase
    denom = 1.0 - r1 * r2 * phase
    return dphase * r2 * (r1 * r1 - 1.0) / (denom * denom)


def _demod_projection(chi, pdh: PdhConfig) -> float:
    """Project the sideband interference term onto the demodulation phase."""
    c, s = math.cos(pdh.demod_phase), math.sin(pdh.demod_phase)
    scale = -2.0 * j0(pdh.mod_depth) * j1(pdh.mod_depth) * pdh.photodetector_gain
    return scale * (np.imag(chi) * c - np.real(chi) * s)


def pdh_error(detuning, pdh: PdhConfig, cavity: CavityModel):
    """PDH error signal (V per watt of incident power) at a detuning in Hz.

    Odd in detuning with a single zero crossing at resonance. First-order
    sidebands only; mod_depth < 1.5 keeps higher orders below 5 % power.
    """
    pdh.validate_against(cavity)
    f0 = cavity_reflection(detuning, cavity)
    fp = cavity_reflection(np.asarray(detuning) + pdh.mod_freq, cavity)
    fm = cavity_reflection(np.asarray(detuning) - pdh.mod_freq, cavity)
    chi = f0 * np.conj(fp) - np.conj(f0) * fm
    return _demod_projection(chi, pdh)


def pdh_slope(pdh: PdhConfig, cavity: CavityModel) -> float:
    """Analytic discriminant d(pdh_error)/d(detuning) at resonance, V/Hz.

    Positive for the default demod_phase = 0 convention; shifting the
    demodulation phase by pi flips the sign.
    """
    pdh.validate_against(cavity)
    f0 = cavity_reflection(0.0, cavity)
    fp = cavity_reflection(pdh.mod_freq, cavity)
    fm = cavity_reflection(-pdh.mod_freq, cavity)
    d0 = _reflection_derivative(0.0, cavity)
    dp = _reflection_derivative(pdh.mod_freq, cavity)
    dm = _reflection_derivative(-pdh.mod_freq, cavity)
    dchi = (d0 * np.conj(fp) + f0 * np.conj(dp)
            - np.conj(d0) * fm - np.conj(f0) * dm)
    return float(_demod_projection(dchi, pdh))
