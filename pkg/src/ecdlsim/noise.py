"""Power-law phase noise synthesis and linewidth conversions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Counter-based RNG; algorithm name is recorded in run manifests so results
# stay reproducible across releases.
RNG_ALGORITHM = "Philox"

ALLOWED_EXPONENTS = (-2, -1, 0, 1, 2)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class PhaseTrace:
    """Uniformly sampled optical phase deviation in radians.

    Parameters
    ----------
    sample_rate : float
        Sample rate in Hz.
    samples : ndarray
        Phase deviation values, rad.
    t0 : float
        Start time, s.
    label : str
        Free-text tag carried through analysis outputs.
    """

    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if self.samples.size == 0:
            raise ValueError("samples must be non-empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        self.samples.setflags(write=False)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def frequency(self) -> np.ndarray:
        """Instantaneous frequency deviation, Hz (one sample shorter)."""
        return np.diff(self.samples) * self.sample_rate / (2.0 * np.pi)


@dataclass(frozen=True)
class NoiseSpec:
    """Free-running oscillator model: one-sided frequency-noise PSD
    S_nu(f) = sum_alpha h_alpha * f**alpha plus a linear frequency drift.

    Coefficients are keyed by integer exponent alpha in {-2..2} and carry
    units Hz^2 * Hz^(-alpha-1).
    """

    h_coeffs: dict = field(default_factory=dict)
    drift_rate: float = 0.0
    f_low: float = 1.0
    f_high: float = 1e7

    def __post_init__(self):
        for alpha, h in self.h_coeffs.items():
            if alpha not in ALLOWED_EXPONENTS:
                raise ValueError(f"unsupported PSD exponent {alpha}")
            if not (math.isfinite(h) and h >= 0):
                raise ValueError(f"h_{alpha} must be finite and >= 0")
        if not self.f_low > 0:
            raise ValueError("f_low must be > 0")
        if not self.f_high > self.f_low:
            raise ValueError("f_high must exceed f_low")
        if not math.isfinite(self.drift_rate):
            raise ValueError("drift_rate must be finite")

    def psd(self, f: np.ndarray) -> np.ndarray:
        """Evaluate S_nu(f) in Hz^2/Hz. Below f_low the PSD is clamped to its
        f_low value; above f_high it is zero."""
        f = np.asarray(f, dtype=float)
        fc = np.maximum(f, self.f_low)
        s = np.zeros_like(fc)
        for alpha, h in self.h_coeffs.items():
            if h:
                s += h * fc ** alpha
        s[f > self.f_high] = 0.0
        return s


@dataclass(frozen=True)
class EcdlGeometry:
    """Geometry of an external-cavity diode laser in Littrow configuration."""

    delta_nu_ld: float
    cavity_length: float
    diode_length: float = 1e-3
    refractive_index: float = 3.5

    def __post_init__(self):
        if not self.delta_nu_ld > 0:
            raise ValueError("delta_nu_ld must be > 0")
        if self.cavity_length < 0:
            raise ValueError("cavity_length must be >= 0")
        if not self.diode_length > 0:
            raise ValueError("diode_length must be > 0")
        if not self.refractive_index >= 1:
            raise ValueError("refractive_index must be >= 1")


def generate_phase(spec: NoiseSpec, duration: float, sample_rate: float,
                   seed: int) -> PhaseTrace:
    """Synthesize a free-running phase trace from a power-law noise model.

    Frequency-domain shaping of white Gaussian noise: a white spectrum is
    multiplied by sqrt(S_nu) on the rFFT grid, transformed back to a
    frequency-deviation series and integrated to phase. Deterministic for a
    fixed (spec, duration, sample_rate, seed).
    """
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError("duration * sample_rate must be >= 2")
    if sample_rate / 2 < spec.f_high:
        raise ValueError("sample_rate/2 must cover spec.f_high")
    dt = 1.0 / sample_rate
    f = np.fft.rfftfreq(n, dt)
    s_nu = spec.psd(f)
    w = _rng(seed).standard_normal(n)
    spectrum = np.fft.rfft(w) * np.sqrt(s_nu * sample_rate / 2.0)
    nu = np.fft.irfft(spectrum, n)
    phi = 2.0 * np.pi * np.cumsum(nu) * dt
    if spec.drift_rate:
        t = np.arange(n) * dt
        phi = phi + np.pi * spec.drift_rate * t ** 2
    return PhaseTrace(sample_rate=sample_rate, samples=phi)


def lorentzian_linewidth(h0: float) -> float:
    """FWHM of the Lorentzian line of a white-FM oscillator: pi * h0."""
    if h0 < 0:
        raise ValueError("h0 must be >= 0")
    return math.pi * h0


def linewidth_to_h0(delta_nu: float) -> float:
    """Inverse of :func:`lorentzian_linewidth`."""
    if delta_nu < 0:
        raise ValueError("delta_nu must be >= 0")
    return delta_nu / math.pi


def ecdl_linewidth(geom: EcdlGeometry) -> float:
    """Linewidth of an ECDL, narrowed by extending the external cavity.

    Returns delta_nu_ld / (1 + L / (n * L_ld))**2.
    """
    factor = 1.0 + geom.cavity_length / (geom.refractive_index * geom.diode_length)
    return geom.delta_nu_ld / factor ** 2


def add_drift(trace: PhaseTrace, rate: float) -> PhaseTrace:
    """Add a linear frequency chirp: phase(t) += 2*pi*(rate/2)*t**2."""
    if not math.isfinite(rate):
        raise ValueError("rate must be finite")
    if rate == 0.0:
        return trace
    t = trace.times()
    return PhaseTrace(sample_rate=trace.sample_rate,
                      samples=trace.samples + np.pi * rate * t ** 2,
                      t0=trace.t0, label=trace.label)
