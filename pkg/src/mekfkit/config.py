"""INI scenario files.

Angles are written in degrees and biases in deg/h; conversion to radians
happens when the scenario is run.  Unknown sections or keys are errors so
typos do not silently fall back to defaults.

Example::

    [scenario]
    name = my-run
    runs = 20
    duration_s = 1800
    filters = MEKF, IMEKF

    [truth]
    att_std_deg = 30
"""

from __future__ import annotations

import configparser
import datetime as _dt
from dataclasses import replace
from importlib import resources
from typing import Optional

import numpy as np

from . import engine
from .alignment import DEFAULT_SWEEP, ImuNoise, SyntheticCase
from .harness import PRESETS, Scenario


class ConfigError(ValueError):
    pass


def _floats(text: str, n: Optional[int] = None) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


def _fmt(vals) -> str:
    return ", ".join(repr(float(v)) for v in np.atleast_1d(vals))


def _bool(text: str) -> bool:
    try:
        return configparser.ConfigParser.BOOLEAN_STATES[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected true or false, got {text!r}") from None


def _epoch(text: str) -> _dt.datetime:
    try:
        e = _dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise ConfigError(f"bad epoch {text!r}; use ISO 8601") from None
    return e if e.tzinfo else e.replace(tzinfo=_dt.timezone.utc)


# section -> key -> (Scenario or SpacecraftConfig attribute, parser)
_SCENARIO_KEYS = {
    "scenario": {
        "name": ("name", str.strip),
        "runs": ("runs", int),
        "seed": ("seed", int),
        "duration_s": ("duration", float),
        "filters": ("filters", lambda s: tuple(f.strip() for f in s.split(",") if f.strip())),
    },
    "sensors": {
        "gyro_hz": ("gyro_hz", float),
        "obs_hz": ("obs_hz", float),
        "sigma_v": ("sigma_v", float),
        "sigma_u": ("sigma_u", float),
        "sun_std": ("sun_std", float),
        "mag_std": ("mag_std", float),
        "sun_fixed": ("sun_fixed", lambda s: _floats(s, 3)),
        "sensor_noise": ("sensor_noise", _bool),
    },
    "truth": {
        "omega0_deg_s": ("omega0_deg_s", lambda s: _floats(s, 3)),
        "att_std_deg": ("att_std_deg", float),
        "q0": ("q0_true", lambda s: _floats(s, 4)),
        "bias_std_deg_h": ("bias_std_deg_h", float),
        "bias0_deg_h": ("bias0_deg_h", lambda s: _floats(s, 3)),
    },
    "estimate": {
        "q0": ("q0_est", lambda s: _floats(s, 4)),
        "bias0_deg_h": ("bias0_est_deg_h", lambda s: _floats(s, 3)),
        "p0_att_deg": ("p0_att_deg", float),
        "p0_bias_deg_h": ("p0_bias_deg_h", float),
    },
}

_SPACECRAFT_KEYS = {
    "inertia_kg_m2": ("inertia", lambda s: _inertia(_floats(s))),
    "altitude_km": ("altitude_km", float),
    "inclination_deg": ("inclination_deg", float),
    "raan_deg": ("raan_deg", float),
    "argp_deg": ("argp_deg", float),
    "true_anomaly_deg": ("true_anomaly_deg", float),
    "epoch": ("epoch", _epoch),
}


def _inertia(vals) -> np.ndarray:
    if len(vals) == 3:
        return np.diag(vals)
    if len(vals) == 9:
        return np.array(vals).reshape(3, 3)
    raise ConfigError("inertia_kg_m2 takes 3 (diagonal) or 9 numbers")


def _parser(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return cp


def _apply(cp, section, keys, source):
    out = {}
    for key, raw in cp[section].items():
        if key not in keys:
            raise ConfigError(f"{source}: unknown key {key!r} in [{section}]; valid: {', '.join(keys)}")
        attr, parse = keys[key]
        try:
            out[attr] = parse(raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None
        except ValueError:
            raise ConfigError(f"{source}: [{section}] {key}: cannot parse {raw!r}") from None
    return out


def scenario_from_ini(text: str, source: str = "<config>", base: Optional[Scenario] = None) -> Scenario:
    """Build a scenario from INI text, starting from ``base`` (default: built-in defaults).

    A ``preset`` key in ``[scenario]`` selects a built-in preset as the base.
    """
    cp = _parser(text, source)
    known = set(_SCENARIO_KEYS) | {"spacecraft"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{source}: unknown section [{sec}]; valid: {', '.join(sorted(known))}")
    if cp.has_option("scenario", "preset"):
        preset = cp.get("scenario", "preset").strip()
        cp.remove_option("scenario", "preset")
        base = load_preset(preset)
    s = base if base is not None else Scenario()
    kw = {}
    for sec, keys in _SCENARIO_KEYS.items():
        if cp.has_section(sec):
            kw.update(_apply(cp, sec, keys, source))
    noise = {k: kw.pop(k) for k in ("sigma_v", "sigma_u") if k in kw}
    if noise:
        kw["noise"] = replace(s.noise, **noise)
    if cp.has_section("truth"):
        # an explicit distribution in the file replaces the base's fixed value and vice versa
        if "att_std_deg" in kw and "q0_true" not in kw:
            kw["q0_true"] = None
        if "q0_true" in kw and "att_std_deg" not in kw:
            kw["att_std_deg"] = None
        if "bias_std_deg_h" in kw and "bias0_deg_h" not in kw:
            kw["bias0_deg_h"] = (0.0, 0.0, 0.0)
        if "bias0_deg_h" in kw and "bias_std_deg_h" not in kw:
            kw["bias_std_deg_h"] = None
    if cp.has_section("spacecraft"):
        try:
            kw["spacecraft"] = replace(s.spacecraft, **_apply(cp, "spacecraft", _SPACECRAFT_KEYS, source))
        except ValueError as exc:
            raise ConfigError(f"{source}: [spacecraft]: {exc}") from None
    try:
        return replace(s, **kw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def scenario_to_ini(s: Scenario) -> str:
    """INI text that reproduces ``s`` exactly when read back."""
    sc = s.spacecraft
    lines = [
        "[scenario]",
        f"name = {s.name}",
        f"runs = {s.runs}",
        f"seed = {s.seed}",
        f"duration_s = {float(s.duration)!r}",
        f"filters = {', '.join(s.filters)}",
        "",
        "[spacecraft]",
        f"inertia_kg_m2 = {_fmt(sc.inertia.ravel())}",
        f"altitude_km = {float(sc.altitude_km)!r}",
        f"inclination_deg = {float(sc.inclination_deg)!r}",
        f"raan_deg = {float(sc.raan_deg)!r}",
        f"argp_deg = {float(sc.argp_deg)!r}",
        f"true_anomaly_deg = {float(sc.true_anomaly_deg)!r}",
        f"epoch = {sc.epoch.isoformat()}",
        "",
        "[sensors]",
        f"gyro_hz = {float(s.gyro_hz)!r}",
        f"obs_hz = {float(s.obs_hz)!r}",
        f"sigma_v = {float(s.noise.sigma_v)!r}",
        f"sigma_u = {float(s.noise.sigma_u)!r}",
        f"sun_std = {float(s.sun_std)!r}",
        f"mag_std = {float(s.mag_std)!r}",
    ]
    if s.sun_fixed is not None:
        lines.append(f"sun_fixed = {_fmt(s.sun_fixed)}")
    if not s.sensor_noise:
        lines.append("sensor_noise = false")
    lines += ["", "[truth]", f"omega0_deg_s = {_fmt(s.omega0_deg_s)}"]
    if s.q0_true is not None:
        lines.append(f"q0 = {_fmt(s.q0_true)}")
    else:
        lines.append(f"att_std_deg = {float(s.att_std_deg or 0.0)!r}")
    if s.bias_std_deg_h is not None:
        lines.append(f"bias_std_deg_h = {float(s.bias_std_deg_h)!r}")
    else:
        lines.append(f"bias0_deg_h = {_fmt(s.bias0_deg_h)}")
    lines += [
        "",
        "[estimate]",
        f"q0 = {_fmt(s.q0_est)}",
        f"bias0_deg_h = {_fmt(s.bias0_est_deg_h)}",
        f"p0_att_deg = {float(s.p0_att_deg)!r}",
        f"p0_bias_deg_h = {float(s.p0_bias_deg_h)!r}",
    ]
    return "\n".join(lines) + "\n"


def load_preset(name: str) -> Scenario:
    """Preset by name from the shipped INI files, falling back to the compiled-in table."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}")
    path = resources.files("mekfkit") / "presets" / f"{name}.ini"
    if path.is_file():
        return scenario_from_ini(path.read_text(), source=f"preset {name}", base=Scenario())
    return PRESETS[name]()


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return scenario_from_ini(text, source=str(path))


# alignment experiments

_ALIGN_KEYS = {
    "duration_s": float,
    "imu_hz": float,
    "latitude_deg": float,
    "window_s": float,
    "seed": int,
    "sweep_deg": _floats,
    "pitch_roll_deg": float,
    "p0_deg": lambda s: _floats(s, 3),
    "sigma_rel": float,
    "base_ypr_deg": lambda s: _floats(s, 3),
    "amplitudes_deg": lambda s: _floats(s, 3),
    "periods_s": lambda s: _floats(s, 3),
    "gyro_bias_deg_h": float,
    "gyro_arw_deg_rt_h": float,
    "accel_bias_ug": float,
    "accel_vrw_ug_rt_hz": float,
}


def alignment_from_ini(text: str, source: str = "<config>") -> dict:
    """Parse an ``[alignment]`` section into a synthetic case and filter settings.

    Returns ``dict(case=SyntheticCase, sweep_deg=tuple, pitch_roll_deg=float,
    filter=dict)``.
    """
    cp = _parser(text, source)
    for sec in cp.sections():
        if sec != "alignment":
            raise ConfigError(f"{source}: unknown section [{sec}]; alignment files use [alignment]")
    raw = {}
    if cp.has_section("alignment"):
        raw = _apply(cp, "alignment", {k: (k, p) for k, p in _ALIGN_KEYS.items()}, source)
    return alignment_settings(**raw)


def alignment_settings(**raw) -> dict:
    base = SyntheticCase()
    profile = replace(base.profile, **{k: raw.pop(k) for k in ("base_ypr_deg", "amplitudes_deg", "periods_s")
                                       if k in raw})
    nz = {k: raw.pop(k) for k in ("gyro_bias_deg_h", "gyro_arw_deg_rt_h", "accel_bias_ug", "accel_vrw_ug_rt_hz")
          if k in raw}
    noise = replace(ImuNoise(), **nz)
    case_kw = {k: raw.pop(k) for k in ("duration_s", "imu_hz", "latitude_deg", "window_s", "seed") if k in raw}
    rename = {"duration_s": "duration", "window_s": "window"}
    case = replace(base, profile=profile, noise=noise, **{rename.get(k, k): v for k, v in case_kw.items()})
    filt = {k: raw.pop(k) for k in ("p0_deg", "sigma_rel") if k in raw}
    out = dict(case=case, sweep_deg=tuple(raw.pop("sweep_deg", DEFAULT_SWEEP)),
               pitch_roll_deg=raw.pop("pitch_roll_deg", 10.0), filter=filt)
    if raw:
        raise ConfigError(f"unknown alignment settings: {', '.join(raw)}")
    return out


def alignment_to_ini(settings: dict) -> str:
    c = settings["case"]
    p, n = c.profile, c.noise
    lines = [
        "[alignment]",
        f"duration_s = {float(c.duration)!r}",
        f"imu_hz = {float(c.imu_hz)!r}",
        f"latitude_deg = {float(c.latitude_deg)!r}",
        f"window_s = {float(c.window)!r}",
        f"seed = {c.seed}",
        f"sweep_deg = {_fmt(settings['sweep_deg'])}",
        f"pitch_roll_deg = {float(settings['pitch_roll_deg'])!r}",
        f"base_ypr_deg = {_fmt(p.base_ypr_deg)}",
        f"amplitudes_deg = {_fmt(p.amplitudes_deg)}",
        f"periods_s = {_fmt(p.periods_s)}",
        f"gyro_bias_deg_h = {float(n.gyro_bias_deg_h)!r}",
        f"gyro_arw_deg_rt_h = {float(n.gyro_arw_deg_rt_h)!r}",
        f"accel_bias_ug = {float(n.accel_bias_ug)!r}",
        f"accel_vrw_ug_rt_hz = {float(n.accel_vrw_ug_rt_hz)!r}",
    ]
    for k, v in settings["filter"].items():
        lines.append(f"{k} = {_fmt(v) if np.ndim(v) else repr(float(v))}")
    return "\n".join(lines) + "\n"


def valid_filters() -> tuple:
    return tuple(engine.FILTERS)
