"""
Experiment configuration: defaults, presets, file/flag loading and validation.

Configuration sources are applied in order: built-in defaults, a preset
(``--preset`` or a ``preset`` key in the file), the config file, then
``--set key=value`` overrides. Nested sections use dotted keys, e.g.
``integrator.tol_rel=1e-9``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .decoherence import DecoherenceModel, SlitLabel
from .dynamics import IntegratorSettings
from .errors import ConfigError
from .velocity_field import FieldContext
from .wavepacket import HBAR, H_PLANCK, NEUTRON_MASS, GaussianPacket

MASSES = {"neutron": NEUTRON_MASS}


@dataclass
class IntegratorConfig:
    dt_init: float = 1e-5
    dt_min: float = 1e-13
    dt_max: float = 1e-3
    tol_rel: float = 1e-8
    tol_abs: float = 1e-11


@dataclass
class HistogramConfig:
    bins: int = 300
    half_range: float | None = None  # m; None -> 6 x (spread at t_final + separation)
    smooth: bool = False


@dataclass
class OutputConfig:
    saved_trajectories: int = 200
    analytic_points: int = 2000


@dataclass
class CheckConfig:
    l1_max: float = 0.02
    max_abort_fraction: float = 0.005


@dataclass
class ExperimentConfig:
    name: str = "custom"
    slit_separation: float = 126.0e-6
    sigma0: float = 10.0e-6
    wavelength: float = 1.845e-9
    mass: float = NEUTRON_MASS
    hbar: float = HBAR
    flight_time: float = 2.33e-2
    tau_c: float = math.inf
    tau_s: float | None = None
    eta: float | None = None
    c1: complex = complex(1 / math.sqrt(2))
    c2: complex = complex(1 / math.sqrt(2))
    p0: float = 0.0
    alpha_phase: float = 0.0
    n_trajectories: int = 10000
    seed: int = 1
    threads: int = 1
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    check: CheckConfig = field(default_factory=CheckConfig)

    # Derived quantities -------------------------------------------------
    @property
    def screening_time(self) -> float:
        """Resolved tau_s (inf when screening is off)."""
        if self.tau_s is not None:
            return self.tau_s
        if self.eta is None or math.isinf(self.eta):
            return math.inf
        return self.eta * self.tau_c

    @property
    def eta_value(self) -> float:
        if self.eta is not None:
            return self.eta
        tau_s = self.screening_time
        if math.isinf(tau_s):
            return math.inf
        return tau_s / self.tau_c if self.tau_c > 0 else math.inf

    @property
    def screening(self) -> bool:
        return math.isfinite(self.screening_time)

    @property
    def longitudinal_velocity(self) -> float:
        """v_z = h / (m lambda)."""
        return H_PLANCK / (self.mass * self.wavelength)

    @property
    def detector_distance(self) -> float:
        return self.longitudinal_velocity * self.flight_time

    def packets(self) -> tuple[GaussianPacket, GaussianPacket]:
        half = 0.5 * self.slit_separation
        return (
            GaussianPacket(half, self.sigma0, self.p0, self.mass, self.hbar),
            GaussianPacket(-half, self.sigma0, self.p0, self.mass, self.hbar),
        )

    def model(self) -> DecoherenceModel:
        return DecoherenceModel(self.tau_c, self.screening_time, self.c1, self.c2, self.alpha_phase)

    def field_context(self, traversed: SlitLabel = SlitLabel.SLIT1) -> FieldContext:
        """Field for this run; with screening, ``run_ensemble`` swaps in each trajectory's own slit."""
        p1, p2 = self.packets()
        if not self.screening:
            return FieldContext(self.model(), p1, p2)
        return FieldContext(self.model(), p1, p2, screening_enabled=True, traversed=traversed)

    def unscreened_context(self) -> FieldContext:
        p1, p2 = self.packets()
        m = DecoherenceModel(self.tau_c, math.inf, self.c1, self.c2, self.alpha_phase)
        return FieldContext(m, p1, p2)

    def integrator_settings(self) -> IntegratorSettings:
        ic = self.integrator
        return IntegratorSettings(self.flight_time, ic.dt_init, ic.dt_min, ic.dt_max, ic.tol_rel, ic.tol_abs)

    def histogram_range(self) -> tuple[float, float]:
        if self.histogram.half_range is not None:
            return -self.histogram.half_range, self.histogram.half_range
        p1, p2 = self.packets()
        half = 6.0 * (max(float(p1.spread(self.flight_time)), float(p2.spread(self.flight_time))) + self.slit_separation)
        return -half, half

    @property
    def symmetric(self) -> bool:
        return abs(self.c1) == abs(self.c2) and self.p0 == 0 and (self.c1 * np.conj(self.c2)).imag == 0

    # Serialization ------------------------------------------------------
    def to_dict(self, derived: bool = False) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                out[f.name] = {k: _plain(v) for k, v in dataclasses.asdict(value).items()}
            else:
                out[f.name] = _plain(value)
        if derived:
            out["derived"] = {
                "tau_s": _plain(self.screening_time),
                "eta": _plain(self.eta_value),
                "longitudinal_velocity": self.longitudinal_velocity,
                "detector_distance": self.detector_distance,
                "screening": self.screening,
                "config_sha256": self.digest(),
            }
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical resolved configuration (threads excluded)."""
        payload = self.to_dict()
        payload.pop("threads", None)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(value):
    if isinstance(value, complex):
        if value.imag == 0:
            return _plain(value.real)
        return f"{value.real!r}{value.imag:+.17g}j"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


# Parsing ---------------------------------------------------------------

_TIME_KEYWORDS = {"inf": math.inf, "infinity": math.inf, "zero": 0.0}


def _parse_float(name, value, allow_inf=False, allow_zero_keyword=False, positive=False, nonneg=False):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, str):
        key = value.strip().lower()
        if key in _TIME_KEYWORDS:
            if key == "zero" and not allow_zero_keyword:
                raise ConfigError(f"{name}: keyword 'zero' is not allowed here")
            value = _TIME_KEYWORDS[key]
        else:
            try:
                value = float(key)
            except ValueError:
                raise ConfigError(f"{name}: cannot parse {value!r} as a number") from None
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {value!r} as a number") from None
    if math.isnan(value):
        raise ConfigError(f"{name}: NaN is not allowed")
    if math.isinf(value) and not allow_inf:
        raise ConfigError(f"{name}: must be finite (use a keyword where a limit is allowed)")
    if positive and not value > 0:
        raise ConfigError(f"{name}: must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{name}: must be non-negative, got {value!r}")
    return value


def _parse_int(name, value, minimum=None):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    try:
        as_float = float(value)
        out = int(as_float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {value!r} as an integer") from None
    if out != as_float:
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if minimum is not None and out < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {out}")
    return out


def _parse_complex(name, value):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a complex number, got {value!r}")
    try:
        out = complex(value.replace(" ", "").replace("i", "j") if isinstance(value, str) else value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {value!r} as a complex number") from None
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise ConfigError(f"{name}: must be finite")
    return out


def _parse_bool(name, value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("1", "true", "yes", "on"):
        return True
    if isinstance(value, str) and value.strip().lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {value!r}")


def _parse_mass(value):
    if isinstance(value, str) and value.strip().lower() in MASSES:
        return MASSES[value.strip().lower()]
    return _parse_float("mass", value, positive=True)


_TOP_PARSERS = {
    "name": lambda v: str(v),
    "slit_separation": lambda v: _parse_float("slit_separation", v, positive=True),
    "sigma0": lambda v: _parse_float("sigma0", v, positive=True),
    "wavelength": lambda v: _parse_float("wavelength", v, positive=True),
    "mass": _parse_mass,
    "hbar": lambda v: _parse_float("hbar", v, positive=True),
    "flight_time": lambda v: _parse_float("flight_time", v, positive=True),
    "tau_c": lambda v: _parse_float("tau_c", v, allow_inf=True, allow_zero_keyword=True, nonneg=True),
    "tau_s": lambda v: None if v is None else _parse_float("tau_s", v, allow_inf=True, positive=True),
    "eta": lambda v: None if v is None else _parse_float("eta", v, allow_inf=True, positive=True),
    "c1": lambda v: _parse_complex("c1", v),
    "c2": lambda v: _parse_complex("c2", v),
    "p0": lambda v: _parse_float("p0", v),
    "alpha_phase": lambda v: _parse_float("alpha_phase", v),
    "n_trajectories": lambda v: _parse_int("n_trajectories", v, minimum=1),
    "seed": lambda v: _parse_int("seed", v, minimum=0),
    "threads": lambda v: _parse_int("threads", v, minimum=1),
}

_SECTION_PARSERS = {
    "integrator": {
        "dt_init": lambda v: _parse_float("integrator.dt_init", v, positive=True),
        "dt_min": lambda v: _parse_float("integrator.dt_min", v, positive=True),
        "dt_max": lambda v: _parse_float("integrator.dt_max", v, positive=True),
        "tol_rel": lambda v: _parse_float("integrator.tol_rel", v, positive=True),
        "tol_abs": lambda v: _parse_float("integrator.tol_abs", v, positive=True),
    },
    "histogram": {
        "bins": lambda v: _parse_int("histogram.bins", v, minimum=1),
        "half_range": lambda v: None
        if v is None or (isinstance(v, str) and v.lower() == "auto")
        else _parse_float("histogram.half_range", v, positive=True),
        "smooth": lambda v: _parse_bool("histogram.smooth", v),
    },
    "output": {
        "saved_trajectories": lambda v: _parse_int("output.saved_trajectories", v, minimum=0),
        "analytic_points": lambda v: _parse_int("output.analytic_points", v, minimum=2),
    },
    "check": {
        "l1_max": lambda v: _parse_float("check.l1_max", v, positive=True),
        "max_abort_fraction": lambda v: _parse_float("check.max_abort_fraction", v, nonneg=True),
    },
}

_SECTION_TYPES = {
    "integrator": IntegratorConfig,
    "histogram": HistogramConfig,
    "output": OutputConfig,
    "check": CheckConfig,
}


def load_presets() -> dict:
    text = resources.files("qtraj").joinpath("presets.yaml").read_text()
    return yaml.safe_load(text)


def _preset_values(name: str, presets: dict, seen=()) -> dict:
    if name not in presets:
        raise ConfigError(f"preset: unknown preset {name!r} (known: {', '.join(sorted(presets))})")
    if name in seen:
        raise ConfigError(f"preset: cyclic base chain at {name!r}")
    entry = dict(presets[name])
    base = entry.pop("base", None)
    entry.pop("description", None)
    values = _preset_values(base, presets, seen + (name,)) if base else {}
    _merge(values, entry)
    values["name"] = name
    return values


def _flatten(raw: dict, prefix="") -> dict:
    out = {}
    for key, value in raw.items():
        if isinstance(value, dict) and (prefix + key) in _SECTION_PARSERS:
            out.update(_flatten(value, prefix + key + "."))
        else:
            out[prefix + key] = value
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"--set: expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set: empty key in {text!r}")
    return key, value.strip()


def resolve(values: dict) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from flat ``key -> value`` pairs."""
    top = {}
    sections = {name: {} for name in _SECTION_PARSERS}
    for key, value in values.items():
        if "." in key:
            section, sub = key.split(".", 1)
            if section not in _SECTION_PARSERS or sub not in _SECTION_PARSERS[section]:
                raise ConfigError(f"{key}: unknown configuration key")
            sections[section][sub] = _SECTION_PARSERS[section][sub](value)
        else:
            if key not in _TOP_PARSERS:
                raise ConfigError(f"{key}: unknown configuration key")
            top[key] = _TOP_PARSERS[key](value)

    if top.get("tau_s") is not None and top.get("eta") is not None:
        raise ConfigError("tau_s, eta: give at most one of them (the other is derived)")
    for name in ("c1", "c2"):
        top.setdefault(name, complex(1 / math.sqrt(2)))
    norm = math.sqrt(abs(top["c1"]) ** 2 + abs(top["c2"]) ** 2)
    if norm == 0:
        raise ConfigError("c1, c2: both coefficients are zero")
    top["c1"] = top["c1"] / norm
    top["c2"] = top["c2"] / norm

    cfg = ExperimentConfig(
        **top, **{name: _SECTION_TYPES[name](**sections[name]) for name in _SECTION_PARSERS}
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.eta is not None and math.isfinite(cfg.eta) and cfg.tau_c == 0:
        raise ConfigError("eta: a finite eta with tau_c = zero gives tau_s = 0")
    if cfg.eta is not None and math.isfinite(cfg.eta) and math.isinf(cfg.tau_c):
        raise ConfigError("eta: a finite eta with tau_c = inf gives an infinite tau_s; set tau_s instead")
    ic = cfg.integrator
    if not (ic.dt_min <= ic.dt_init <= ic.dt_max):
        raise ConfigError("integrator: need dt_min <= dt_init <= dt_max")
    if cfg.screening and (cfg.c1 == 0 or cfg.c2 == 0):
        raise ConfigError("c1, c2: screening needs both coefficients non-zero")
    try:
        cfg.integrator_settings()
        cfg.model()
        cfg.packets()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must contain a mapping")
    return data


def _merge(values: dict, new: dict):
    # tau_s and eta are alternatives: a source naming one drops the other.
    named = {k for k in new if k in ("tau_s", "eta")}
    if len(named) == 1:
        values.pop(({"tau_s", "eta"} - named).pop(), None)
    values.update(new)


def load_config(path=None, preset=None, overrides=(), seed=None, threads=None) -> ExperimentConfig:
    """Resolve a configuration from a file, a preset and ``key=value`` overrides."""
    file_values = _flatten(read_config_file(path)) if path else {}
    preset = preset or file_values.get("preset")
    file_values.pop("preset", None)
    values = {}
    if preset:
        _merge(values, _flatten(_preset_values(preset, load_presets())))
    _merge(values, file_values)
    for item in overrides:
        key, value = parse_assignment(item) if isinstance(item, str) else item
        _merge(values, {key: value})
    if seed is not None:
        values["seed"] = seed
    if threads is not None:
        values["threads"] = threads
    return resolve(values)
