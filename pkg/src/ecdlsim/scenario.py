"""Scenario configs: a line-oriented INI dialect with units in key names,
plus the simulation/analysis orchestration behind the CLI."""

from __future__ import annotations

import configparser
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import harmonics, metrics, traceio
from .noise import RNG_ALGORITHM, EcdlGeometry, NoiseSpec, PhaseTrace
from .optics import CavityModel, PdhConfig
from .servo import ServoConfig, run_lock

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("ecdlsim")
except Exception:  # pragma: no cover - not installed
    VERSION = "0.1.0"


class ScenarioError(ValueError):
    """Config parse or validation failure (CLI exit code 2)."""


class LockLostError(RuntimeError):
    """Simulation finished unlocked (CLI exit code 3)."""


_H_KEYS = {"h_minus2": -2, "h_minus1": -1, "h0": 0, "h_plus1": 1, "h_plus2": 2}

ANALYSES = ("psd", "field", "allan", "efficiency", "lineshape")

#: every tunable key with its default; None marks required keys.
DEFAULTS = {
    "scenario": {"name": None, "duration_s": None, "seeds": "0"},
    "laser": {"h_minus2": "0", "h_minus1": "0", "h0": "0", "h_plus1": "0",
              "h_plus2": "0", "drift_rate_hz_per_s": "0",
              "f_low_hz": "10", "f_high_hz": "1e7"},
    "geometry": {"delta_nu_ld_hz": "1e7", "cavity_length_m": "0.20",
                 "diode_length_m": "1e-3", "refractive_index": "3.5"},
    "cavity": {"fsr_hz": "1.5e9", "linewidth_hz": "1e4",
               "drift_rate_hz_per_s": "0", "thermal_floor": "0",
               "coupling": "1.0"},
    "pdh": {"mod_freq_hz": "2e7", "mod_depth_rad": "1.08",
            "photodetector_gain_v_per_w": "1.0", "demod_phase_rad": "0"},
    "servo": {"fast_gain_hz_per_v": "0", "fast_bw_hz": "3e6",
              "pi1_kp": "0", "pi1_ki_per_s": "0",
              "hv_actuator_hz_per_v": "1e6", "hv_range_v": "10",
              "pi2_tau_s": "1.0", "pzt_actuator_hz_per_v": "1e8",
              "pzt_range_v": "10", "pzt_bw_hz": "1e3",
              "sim_rate_hz": "1e8", "nonlinear_pdh": "false"},
    "analysis": {"outputs": "psd", "bandwidth_hz": "", "psd_segment": "",
                 "field_rbw_hz": "", "allan_gate_s": "0.01",
                 "allan_taus_s": "", "allan_nu0_hz": str(metrics.DEFAULT_NU0),
                 "allan_beat": "false", "n_photons": "8",
                 "actuator_decim": "100",
                 "lineshape_natural_width_hz": "1.3",
                 "lineshape_transit_width_hz": "1e3",
                 "lineshape_span_hz": "2e4", "lineshape_points": "801"},
}


@dataclass
class Scenario:
    name: str
    laser: NoiseSpec
    geometry: EcdlGeometry
    cavity: CavityModel
    pdh: PdhConfig
    servo: ServoConfig
    analysis: dict
    seeds: list
    duration: float
    defaulted: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.name, self.laser, self.geometry, self.cavity, self.pdh,
                self.servo, self.analysis, self.seeds, self.duration) == \
               (other.name, other.laser, other.geometry, other.cavity,
                other.pdh, other.servo, other.analysis, other.seeds,
                other.duration)


def _getfloat(sec: dict, section: str, key: str) -> float:
    try:
        return float(sec[key])
    except ValueError as exc:
        raise ScenarioError(f"{section}.{key}: {exc}") from None


def _getbool(sec: dict, section: str, key: str) -> bool:
    val = sec[key].strip().lower()
    if val in ("true", "1", "yes", "on"):
        return True
    if val in ("false", "0", "no", "off"):
        return False
    raise ScenarioError(f"{section}.{key}: not a boolean: {sec[key]!r}")


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file.

    Missing keys are filled from :data:`DEFAULTS` and recorded in
    ``Scenario.defaulted`` so no silent assumptions exist.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None

    merged: dict[str, dict] = {}
    defaulted = []
    for section, keys in DEFAULTS.items():
        present = dict(parser.items(section)) if parser.has_section(section) else {}
        for key in present:
            if key not in keys:
                raise ScenarioError(f"unknown key {section}.{key}")
        merged[section] = {}
        for key, default in keys.items():
            if key in present:
                merged[section][key] = present[key]
            else:
                if default is None:
                    raise ScenarioError(f"missing required key {section}.{key}")
                merged[section][key] = default
                defaulted.append(f"{section}.{key}")
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ScenarioError(f"unknown section [{section}]")
    return _build_scenario(merged, tuple(defaulted))


def _component(section: str, factory, kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ScenarioError(f"{section}.{exc}") from None


def _build_scenario(merged: dict, defaulted: tuple) -> Scenario:
    sc = merged["scenario"]
    try:
        seeds = [int(s) for s in sc["seeds"].split(",") if s.strip()]
    except ValueError:
        raise ScenarioError(f"scenario.seeds: not an integer list: {sc['seeds']!r}")
    if not seeds:
        raise ScenarioError("scenario.seeds must be non-empty")
    duration = _getfloat(sc, "scenario", "duration_s")
    if not duration > 0:
        raise ScenarioError("scenario.duration_s must be > 0")

    la = merged["laser"]
    h_coeffs = {alpha: _getfloat(la, "laser", key)
                for key, alpha in _H_KEYS.items()}
    laser = _component("laser", NoiseSpec, dict(
        h_coeffs={a: h for a, h in h_coeffs.items() if h},
        drift_rate=_getfloat(la, "laser", "drift_rate_hz_per_s"),
        f_low=_getfloat(la, "laser", "f_low_hz"),
        f_high=_getfloat(la, "laser", "f_high_hz")))

    ge = merged["geometry"]
    geometry = _component("geometry", EcdlGeometry, dict(
        delta_nu_ld=_getfloat(ge, "geometry", "delta_nu_ld_hz"),
        cavity_length=_getfloat(ge, "geometry", "cavity_length_m"),
        diode_length=_getfloat(ge, "geometry", "diode_length_m"),
        refractive_index=_getfloat(ge, "geometry", "refractive_index")))

    ca = merged["cavity"]
    cavity = _component("cavity", CavityModel, dict(
        fsr=_getfloat(ca, "cavity", "fsr_hz"),
        linewidth=_getfloat(ca, "cavity", "linewidth_hz"),
        drift_rate=_getfloat(ca, "cavity", "drift_rate_hz_per_s"),
        thermal_floor=_getfloat(ca, "cavity", "thermal_floor"),
        coupling=_getfloat(ca, "cavity", "coupling")))

    pd = merged["pdh"]
    pdh = _component("pdh", PdhConfig, dict(
        mod_freq=_getfloat(pd, "pdh", "mod_freq_hz"),
        mod_depth=_getfloat(pd, "pdh", "mod_depth_rad"),
        photodetector_gain=_getfloat(pd, "pdh", "photodetector_gain_v_per_w"),
        demod_phase=_getfloat(pd, "pdh", "demod_phase_rad")))
    try:
        pdh.validate_against(cavity)
    except ValueError as exc:
        raise ScenarioError(f"pdh.{exc}") from None

    sv = merged["servo"]
    servo = _component("servo", ServoConfig, dict(
        fast_gain=_getfloat(sv, "servo", "fast_gain_hz_per_v"),
        fast_bw=_getfloat(sv, "servo", "fast_bw_hz"),
        pi1_kp=_getfloat(sv, "servo", "pi1_kp"),
        pi1_ki=_getfloat(sv, "servo", "pi1_ki_per_s"),
        hv_actuator=_getfloat(sv, "servo", "hv_actuator_hz_per_v"),
        hv_range=_getfloat(sv, "servo", "hv_range_v"),
        pi2_tau=_getfloat(sv, "servo", "pi2_tau_s"),
        pzt_actuator=_getfloat(sv, "servo", "pzt_actuator_hz_per_v"),
        pzt_range=_getfloat(sv, "servo", "pzt_range_v"),
        pzt_bw=_getfloat(sv, "servo", "pzt_bw_hz"),
        sim_rate=_getfloat(sv, "servo", "sim_rate_hz"),
        nonlinear_pdh=_getbool(sv, "servo", "nonlinear_pdh")))

    an = dict(merged["analysis"])
    outputs = [o.strip() for o in an["outputs"].split(",") if o.strip()]
    for o in outputs:
        if o not in ANALYSES:
            raise ScenarioError(f"analysis.outputs: unknown analysis {o!r}")
    analysis = {
        "outputs": outputs,
        "bandwidth_hz": (float(an["bandwidth_hz"]) if an["bandwidth_hz"]
                         else min(1e7, servo.sim_rate / 2)),
        "psd_segment": int(an["psd_segment"]) if an["psd_segment"] else 0,
        "field_rbw_hz": (float(an["field_rbw_hz"]) if an["field_rbw_hz"]
                         else 0.0),
        "allan_gate_s": _getfloat(an, "analysis", "allan_gate_s"),
        "allan_taus_s": [float(t) for t in an["allan_taus_s"].split(",")
                         if t.strip()] or None,
        "allan_nu0_hz": _getfloat(an, "analysis", "allan_nu0_hz"),
        "allan_beat": _getbool(an, "analysis", "allan_beat"),
        "n_photons": int(an["n_photons"]),
        "actuator_decim": int(an["actuator_decim"]),
        "lineshape_natural_width_hz": _getfloat(
            an, "analysis", "lineshape_natural_width_hz"),
        "lineshape_transit_width_hz": _getfloat(
            an, "analysis", "lineshape_transit_width_hz"),
        "lineshape_span_hz": _getfloat(an, "analysis", "lineshape_span_hz"),
        "lineshape_points": int(an["lineshape_points"]),
    }
    if analysis["bandwidth_hz"] > servo.sim_rate / 2:
        raise ScenarioError("analysis.bandwidth_hz exceeds the simulation "
                            "Nyquist frequency")

    return Scenario(name=sc["name"], laser=laser, geometry=geometry,
                    cavity=cavity, pdh=pdh, servo=servo, analysis=analysis,
                    seeds=seeds, duration=duration, defaulted=defaulted)


def dump_scenario(scenario: Scenario, flag_defaults: bool = False) -> str:
    """Serialize a scenario back to config text; reparses to an equal value.

    With ``flag_defaults`` a trailing comment block lists every key that was
    filled from defaults when the scenario was loaded.
    """
    s = scenario
    an = s.analysis
    lines = []

    def sec(name, pairs):
        lines.append(f"[{name}]")
        for k, v in pairs:
            lines.append(f"{k} = {v}")
        lines.append("")

    sec("scenario", [("name", s.name),
                     ("duration_s", repr(s.duration)),
                     ("seeds", ",".join(str(x) for x in s.seeds))])
    h = {alpha: s.laser.h_coeffs.get(alpha, 0.0) for alpha in (-2, -1, 0, 1, 2)}
    sec("laser", [("h_minus2", repr(h[-2])), ("h_minus1", repr(h[-1])),
                  ("h0", repr(h[0])), ("h_plus1", repr(h[1])),
                  ("h_plus2", repr(h[2])),
                  ("drift_rate_hz_per_s", repr(s.laser.drift_rate)),
                  ("f_low_hz", repr(s.laser.f_low)),
                  ("f_high_hz", repr(s.laser.f_high))])
    sec("geometry", [("delta_nu_ld_hz", repr(s.geometry.delta_nu_ld)),
                     ("cavity_length_m", repr(s.geometry.cavity_length)),
                     ("diode_length_m", repr(s.geometry.diode_length)),
                     ("refractive_index", repr(s.geometry.refractive_index))])
    sec("cavity", [("fsr_hz", repr(s.cavity.fsr)),
                   ("linewidth_hz", repr(s.cavity.linewidth)),
                   ("drift_rate_hz_per_s", repr(s.cavity.drift_rate)),
                   ("thermal_floor", repr(s.cavity.thermal_floor)),
                   ("coupling", repr(s.cavity.coupling))])
    sec("pdh", [("mod_freq_hz", repr(s.pdh.mod_freq)),
                ("mod_depth_rad", repr(s.pdh.mod_depth)),
                ("photodetector_gain_v_per_w", repr(s.pdh.photodetector_gain)),
                ("demod_phase_rad", repr(s.pdh.demod_phase))])
    sec("servo", [("fast_gain_hz_per_v", repr(s.servo.fast_gain)),
                  ("fast_bw_hz", repr(s.servo.fast_bw)),
                  ("pi1_kp", repr(s.servo.pi1_kp)),
                  ("pi1_ki_per_s", repr(s.servo.pi1_ki)),
                  ("hv_actuator_hz_per_v", repr(s.servo.hv_actuator)),
                  ("hv_range_v", repr(s.servo.hv_range)),
                  ("pi2_tau_s", repr(s.servo.pi2_tau)),
                  ("pzt_actuator_hz_per_v", repr(s.servo.pzt_actuator)),
                  ("pzt_range_v", repr(s.servo.pzt_range)),
                  ("pzt_bw_hz", repr(s.servo.pzt_bw)),
                  ("sim_rate_hz", repr(s.servo.sim_rate)),
                  ("nonlinear_pdh", str(s.servo.nonlinear_pdh).lower())])
    sec("analysis", [
        ("outputs", ",".join(an["outputs"])),
        ("bandwidth_hz", repr(an["bandwidth_hz"])),
        ("psd_segment", an["psd_segment"] or ""),
        ("field_rbw_hz", repr(an["field_rbw_hz"]) if an["field_rbw_hz"] else ""),
        ("allan_gate_s", repr(an["allan_gate_s"])),
        ("allan_taus_s", ",".join(repr(t) for t in an["allan_taus_s"] or [])),
        ("allan_nu0_hz", repr(an["allan_nu0_hz"])),
        ("allan_beat", str(an["allan_beat"]).lower()),
        ("n_photons", an["n_photons"]),
        ("actuator_decim", an["actuator_decim"]),
        ("lineshape_natural_width_hz", repr(an["lineshape_natural_width_hz"])),
        ("lineshape_transit_width_hz", repr(an["lineshape_transit_width_hz"])),
        ("lineshape_span_hz", repr(an["lineshape_span_hz"])),
        ("lineshape_points", an["lineshape_points"])])
    if flag_defaults and scenario.defaulted:
        lines.append("# defaulted keys (not set in the source file):")
        for key in scenario.defaulted:
            lines.append(f"#   {key}")
        lines.append("")
    return "\n".join(lines)


def _fmt(x) -> str:
    return repr(float(x))


def _phi2_of_residual(residual: PhaseTrace, scenario: Scenario):
    an = scenario.analysis
    n = residual.samples.size
    seg = an["psd_segment"] or min(n, 1 << max(10, (n // 8).bit_length()))
    seg = min(seg, n)
    spec = metrics.estimate_psd(residual, segment_len=seg, kind="phase")
    phi2 = harmonics.rms_phase_in_bandwidth(spec, an["bandwidth_hz"])
    return phi2, spec


def run_scenario(scenario: Scenario, out_dir, allow_unlock: bool = False) -> dict:
    """Run every seed of a scenario and write its artifact files.

    Writes summary.csv plus one CSV per requested analysis and a
    manifest.json recording seeds, versions, the RNG algorithm and every
    defaulted parameter. Raises LockLostError (after writing outputs) if any
    seed fails to lock and ``allow_unlock`` is not set.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    an = scenario.analysis
    rows = []
    psd_acc = field_acc = None
    psd_meta = field_meta = None
    allan_results = []
    lineshape = None
    unlocked = []

    for seed in scenario.seeds:
        res = run_lock(scenario.laser, scenario.cavity, scenario.pdh,
                       scenario.servo, scenario.duration, seed,
                       actuator_decim=an["actuator_decim"])
        phi2, spec = _phi2_of_residual(res.residual, scenario)
        eff = harmonics.excitation_efficiency(phi2, an["n_photons"])
        rows.append((seed, res.locked, res.saturation_events, phi2,
                     harmonics.carrier_fraction(phi2), eff,
                     res.final_detuning))
        if not res.locked:
            unlocked.append(seed)

        if "psd" in an["outputs"]:
            psd_acc = spec.psd if psd_acc is None else psd_acc + spec.psd
            psd_meta = spec
        if "field" in an["outputs"]:
            rbw = an["field_rbw_hz"] or max(2.0 / res.residual.duration,
                                            res.residual.sample_rate / (1 << 20))
            fspec = metrics.field_spectrum(res.residual, rbw)
            field_acc = fspec.psd if field_acc is None else field_acc + fspec.psd
            field_meta = fspec
        if "allan" in an["outputs"]:
            trace = res.residual
            if an["allan_beat"]:
                other = run_lock(scenario.laser, scenario.cavity, scenario.pdh,
                                 scenario.servo, scenario.duration,
                                 seed + 10_000_019,
                                 actuator_decim=an["actuator_decim"])
                trace = metrics.beat(trace, other.residual)
            # readings stay as deviations: adding the full optical carrier
            # at double precision would quantize away a 1e-15 floor
            readings = metrics.counter(trace, an["allan_gate_s"])
            allan_results.append(metrics.allan(
                readings, an["allan_gate_s"], nu0=an["allan_nu0_hz"],
                taus=an["allan_taus_s"]))
        if "lineshape" in an["outputs"] and lineshape is None:
            uv = harmonics.multiply_phase(res.residual, 4)  # 972 nm -> 243 nm
            rbw = max(2.0 / uv.duration, uv.sample_rate / (1 << 18))
            fspec = metrics.field_spectrum(uv, rbw)
            grid = np.linspace(-an["lineshape_span_hz"] / 2,
                               an["lineshape_span_hz"] / 2,
                               an["lineshape_points"])
            prof = harmonics.excitation_spectrum(
                fspec, an["lineshape_natural_width_hz"],
                an["lineshape_transit_width_hz"], grid)
            lineshape = (grid, prof)

    with open(out / "summary.csv", "w") as fh:
        fh.write("seed,locked,saturation_events,phi2_rms_rad2,"
                 "carrier_fraction,efficiency,final_detuning_hz\n")
        for seed, locked, nsat, phi2, cf, eff, det in rows:
            fh.write(f"{seed},{int(locked)},{nsat},{_fmt(phi2)},"
                     f"{_fmt(cf)},{_fmt(eff)},{_fmt(det)}\n")

    nseeds = len(scenario.seeds)
    if psd_acc is not None:
        avg = metrics.SpectrumEstimate(
            freqs=psd_meta.freqs, psd=psd_acc / nseeds, rbw=psd_meta.rbw,
            averages=psd_meta.averages * nseeds, kind="phase")
        traceio.spectrum_to_csv(avg, out / "psd.csv")
    if field_acc is not None:
        avg = metrics.SpectrumEstimate(
            freqs=field_meta.freqs, psd=field_acc / nseeds,
            rbw=field_meta.rbw, averages=field_meta.averages * nseeds,
            kind="field")
        traceio.spectrum_to_csv(avg, out / "field.csv")
    if allan_results:
        first = allan_results[0]
        sigma = np.sqrt(np.mean([r.sigma_y ** 2 for r in allan_results], axis=0))
        traceio.allan_to_csv(
            metrics.AllanResult(taus=first.taus, sigma_y=sigma,
                                gate=first.gate, nu0=first.nu0,
                                drift_subtracted=first.drift_subtracted,
                                omitted=first.omitted),
            out / "allan.csv")
    if lineshape is not None:
        traceio.profile_to_csv(*lineshape, out / "lineshape.csv")

    manifest = {
        "scenario": scenario.name,
        "seeds": scenario.seeds,
        "duration_s": scenario.duration,
        "rng_algorithm": RNG_ALGORITHM,
        "version": VERSION,
        "defaulted": list(scenario.defaulted),
        "config": dump_scenario(scenario),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    summary = {"rows": rows, "unlocked": unlocked, "out": str(out)}
    if unlocked and not allow_unlock:
        raise LockLostError(
            f"seeds {unlocked} did not lock (see {out}/summary.csv)")
    return summary


def _sweep_point(args):
    cfg_text, overrides, out_dir, allow_unlock = args
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(cfg_text)
    for (section, key), value in overrides.items():
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "scenario.cfg"
    with open(cfg_path, "w") as fh:
        parser.write(fh)
    scenario = load_scenario(cfg_path)
    try:
        summary = run_scenario(scenario, out, allow_unlock=allow_unlock)
        lost = False
    except LockLostError:
        summary = {"rows": [], "unlocked": scenario.seeds, "out": str(out)}
        lost = True
    return overrides, summary, lost


def sweep(scenario_path, param_grid: dict, out_root, jobs: int = 1,
          allow_unlock: bool = False) -> list:
    """Cartesian sweep over numeric config keys.

    ``param_grid`` maps "section.key" to a list of values. Each grid point
    runs in its own output directory; a sweep.csv aggregates the summaries.
    """
    load_scenario(scenario_path)  # validate the base file early
    cfg_text = Path(scenario_path).read_text()
    keys = []
    for dotted in param_grid:
        section, _, key = dotted.partition(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ScenarioError(f"sweep: unknown key {dotted}")
        keys.append((section, key))
    values = [param_grid[f"{s}.{k}"] for s, k in keys]
    out_root = Path(out_root)
    tasks = []
    for i, combo in enumerate(product(*values)):
        overrides = {kk: str(v) for kk, v in zip(keys, combo)}
        tasks.append((cfg_text, overrides, str(out_root / f"point_{i:04d}"),
                      allow_unlock))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]

    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "sweep.csv", "w") as fh:
        header = [f"{s}.{k}" for s, k in keys]
        fh.write(",".join(header) +
                 ",seed,locked,saturation_events,phi2_rms_rad2,"
                 "carrier_fraction,efficiency,final_detuning_hz\n")
        for overrides, summary, lost in results:
            prefix = ",".join(overrides[kk] for kk in keys)
            for seed, locked, nsat, phi2, cf, eff, det in summary["rows"]:
                fh.write(f"{prefix},{seed},{int(locked)},{nsat},{_fmt(phi2)},"
                         f"{_fmt(cf)},{_fmt(eff)},{_fmt(det)}\n")
    return results
