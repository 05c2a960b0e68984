"""Desk-scale simulation of a cavity-stabilized external-cavity diode laser:
phase-noise synthesis, Pound-Drever-Hall locking, harmonic multiplication
and stability analysis."""

from .harmonics import (PhaseMetrics, carrier_fraction, excitation_efficiency,
                        excitation_spectrum, multiply_phase,
                        rms_phase_in_bandwidth)
from .metrics import (AllanResult, SpectrumEstimate, allan, beat,
                      counter, estimate_psd, field_spectrum)
from .noise import (EcdlGeometry, NoiseSpec, PhaseTrace, add_drift,
                    ecdl_linewidth, generate_phase, linewidth_to_h0,
                    lorentzian_linewidth)
from .optics import CavityModel, PdhConfig, cavity_reflection, pdh_error, pdh_slope
from .scenario import Scenario, load_scenario, run_scenario
from .servo import (LockResult, ServoConfig, ServoState,
                    closed_loop_suppression, run_lock, step)

__all__ = [name for name in dir() if not name.startswith("_")]
