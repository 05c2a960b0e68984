"""CSV and binary export of traces, spectra and Allan results.

Numeric CSV fields use the shortest round-trip decimal representation; the
binary trace frame is little-endian: magic "ECPT", u16 version, f64 sample
rate, u64 count, f64 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .metrics import AllanResult, SpectrumEstimate
from .noise import PhaseTrace

MAGIC = b"ECPT"
VERSION = 1


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_to_csv(trace: PhaseTrace, path) -> None:
    t = trace.times()
    with open(path, "w") as fh:
        fh.write("time_s,phase_rad\n")
        for ti, pi in zip(t, trace.samples):
            fh.write(f"{_fmt(ti)},{_fmt(pi)}\n")


def trace_from_csv(path) -> PhaseTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    t, phi = data[:, 0], data[:, 1]
    dt = np.diff(t)
    fs = 1.0 / np.mean(dt)
    return PhaseTrace(sample_rate=fs, samples=phi, t0=float(t[0]))


def trace_to_binary(trace: PhaseTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Hdq", VERSION, trace.sample_rate,
                             trace.samples.size))
        fh.write(trace.samples.astype("<f8").tobytes())


def trace_from_binary(path) -> PhaseTrace:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a phase-trace frame (bad magic)")
    version, fs, n = struct.unpack_from("<Hdq", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported frame version {version}")
    header = 4 + struct.calcsize("<Hdq")
    samples = np.frombuffer(raw, dtype="<f8", count=n, offset=header)
    return PhaseTrace(sample_rate=fs, samples=samples.copy())


def spectrum_to_csv(spectrum: SpectrumEstimate, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# kind={spectrum.kind} rbw_hz={_fmt(spectrum.rbw)} "
                 f"averages={spectrum.averages}\n")
        unit = {"phase": "rad2_per_hz", "frequency": "hz2_per_hz",
                "field": "fractional_power"}[spectrum.kind]
        fh.write(f"freq_hz,psd_{unit}\n")
        for f, p in zip(spectrum.freqs, spectrum.psd):
            fh.write(f"{_fmt(f)},{_fmt(p)}\n")


def allan_to_csv(result: AllanResult, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# gate_s={_fmt(result.gate)} nu0_hz={_fmt(result.nu0)} "
                 f"drift_subtracted={result.drift_subtracted}\n")
        fh.write("tau_s,sigma_y\n")
        for t, s in zip(result.taus, result.sigma_y):
            fh.write(f"{_fmt(t)},{_fmt(s)}\n")


def profile_to_csv(detuning, amplitude, path) -> None:
    with open(path, "w") as fh:
        fh.write("detuning_hz,amplitude\n")
        for d, a in zip(detuning, amplitude):
            fh.write(f"{_fmt(d)},{_fmt(a)}\n")
