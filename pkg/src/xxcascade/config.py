"""Flat ``key = value`` experiment configuration.

Keys carry a dotted section prefix and units in their names::

    experiment = tomography
    seed = 7
    cascade.fss_ueV = 1.3
    tomography.target_concurrence = 0.84

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
``--set key=value`` overrides use the same syntax and are applied after the
file is parsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .cascade import CascadeParams, ParameterError
from .hardware import BeamSplitterModel, DetectorModel, ExperimentClock, HistSpec

EXPERIMENTS = ("cascade-scan", "tomography", "cross-correlation", "hom", "g2", "rabi", "fss")


class ConfigError(ValueError):
    """Carries every problem found, each as a human-readable line."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _opt_float(s: str):
    return None if s.lower() in ("none", "") else float(s)


def _float_list(s: str) -> tuple[float, ...]:
    items = [p.strip() for p in s.split(",") if p.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(p) for p in items)


def _str(s: str) -> str:
    return s


def _typed(cls) -> dict:
    conv = {int: _int, float: _float, bool: _bool}
    out = {}
    for f in fields(cls):
        t = f.type if not isinstance(f.type, str) else {"int": int, "float": float, "bool": bool}.get(f.type)
        out[f.name] = conv.get(t, _opt_float)
    return out


# Section -> key -> (parser, default).  Component sections take their
# defaults from the dataclasses themselves.
OPTION_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"workers": (_int, 1)},
    "scan": {"fss_grid_ueV": (_float_list, (0.0, 1.2, 6.5))},
    "tomography": {
        "source": (_str, "model"),
        "n_per_setting": (_float, 1e5),
        "target_concurrence": (_opt_float, None),
    },
    "correlation": {"settings": (_str, "HH,HV,DD,DA,RR,RL")},
    "hom": {"v_in": (_float, 0.93), "line": (_str, "XX"), "fit_half_window_ns": (_float, 0.6)},
    "g2": {"line": (_str, "XX")},
    "rabi": {"pulse_areas_pi": (_float_list, tuple(0.25 * k for k in range(1, 17)))},
    "fss": {
        "true_fss_ueV": (_float, 1.2),
        "noise_ueV": (_float, 0.5),
        "n_angles": (_int, 19),
        "phase_deg": (_float, 0.0),
        "offset_ueV": (_float, 0.0),
    },
}

COMPONENTS = {
    "cascade": CascadeParams,
    "clock": ExperimentClock,
    "detector": DetectorModel,
    "beamsplitter": BeamSplitterModel,
    "hist": HistSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str
    params: CascadeParams = field(default_factory=CascadeParams)
    clock: ExperimentClock = field(default_factory=ExperimentClock)
    detector: DetectorModel = field(default_factory=DetectorModel)
    beamsplitter: BeamSplitterModel = field(default_factory=BeamSplitterModel)
    hist: HistSpec = field(default_factory=HistSpec)
    options: dict = field(default_factory=dict)
    # Raw key/value pairs after overrides, for the manifest snapshot.
    raw: dict = field(default_factory=dict)

    def option(self, section: str, key: str):
        return self.options[section][key]

    def snapshot(self) -> str:
        """Canonical text form; excludes keys that cannot change results (``run.*``, ``output_dir``)."""
        keys = sorted(k for k in self.raw if not k.startswith("run.") and k != "output_dir")
        return "".join(f"{k} = {self.raw[k]}\n" for k in keys)


def parse_text(text: str, source: str = "<config>") -> tuple[dict[str, tuple[int, str]], list[str]]:
    """Key -> (line number, raw value), plus syntax errors with line numbers."""
    entries: dict[str, tuple[int, str]] = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if key in entries:
            errors.append(f"{source}:{lineno}: duplicate key {key!r} (first set on line {entries[key][0]})")
            continue
        entries[key] = (lineno, value)
    return entries, errors


def parse_override(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError([f"--set {item!r}: expected key=value"])
    return key.strip(), value.strip()


def build_config(entries: dict[str, tuple[int, str]], source: str = "<config>") -> tuple[ExperimentConfig | None, list[str]]:
    """Type-check and validate every key; returns (config or None, errors)."""
    errors: list[str] = []

    def where(key):
        lineno = entries[key][0]
        return f"{source}:{lineno}" if lineno else "--set"

    experiment = entries.get("experiment", (0, ""))[1]
    if "experiment" not in entries:
        errors.append(f"{source}: missing required key 'experiment'")
    elif experiment not in EXPERIMENTS:
        errors.append(f"{where('experiment')}: experiment: must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}")
    seed = None
    if "seed" not in entries:
        errors.append(f"{source}: missing required key 'seed' (runs are never seeded from the clock)")
    else:
        try:
            seed = _int(entries["seed"][1])
            if seed < 0:
                raise ValueError("must be >= 0")
        except ValueError as exc:
            errors.append(f"{where('seed')}: seed: {exc}")
    output_dir = entries.get("output_dir", (0, "out"))[1]

    comp_values: dict[str, dict] = {name: {} for name in COMPONENTS}
    options = {sec: {k: d for k, (_, d) in spec.items()} for sec, spec in OPTION_SCHEMA.items()}
    for key, (lineno, value) in entries.items():
        if key in ("experiment", "seed", "output_dir"):
            continue
        section, dot, name = key.partition(".")
        if not dot:
            errors.append(f"{where(key)}: unknown key {key!r}")
            continue
        if section in COMPONENTS:
            schema = _typed(COMPONENTS[section])
            if name not in schema:
                errors.append(f"{where(key)}: unknown key {key!r}")
                continue
            parser = schema[name]
        elif section in OPTION_SCHEMA and name in OPTION_SCHEMA[section]:
            parser = OPTION_SCHEMA[section][name][0]
        else:
            errors.append(f"{where(key)}: unknown key {key!r}")
            continue
        try:
            parsed = parser(value)
            if isinstance(parsed, float) and not math.isfinite(parsed):
                raise ValueError(f"must be finite, got {value!r}")
        except ValueError as exc:
            errors.append(f"{where(key)}: {name}: {exc}")
            continue
        if section in COMPONENTS:
            comp_values[section][name] = parsed
        else:
            options[section][name] = parsed

    # The interference experiment is the only one that needs pulse pairs.
    comp_values["clock"].setdefault("double_pulse", experiment == "hom")

    built = {}
    for section, cls in COMPONENTS.items():
        try:
            obj = cls(**comp_values[section])
        except ParameterError as exc:
            # Re-run the checks to report every failing field, not just the first.
            errors += [f"{section}.{e.field}: {e}" for e in _all_errors(cls, comp_values[section], exc)]
            continue
        except (TypeError, ValueError) as exc:
            errors.append(f"{section}: {exc}")
            continue
        built[section] = obj
    errors += _option_errors(options)
    if errors:
        return None, errors
    raw = {k: v for k, (_, v) in entries.items()}
    cfg = ExperimentConfig(
        experiment, seed, output_dir,
        built["cascade"], built["clock"], built["detector"], built["beamsplitter"], built["hist"],
        options, raw,
    )
    return cfg, []


def _all_errors(cls, values, first: ParameterError) -> list[ParameterError]:
    probe = object.__new__(cls)
    for f in fields(cls):
        object.__setattr__(probe, f.name, values.get(f.name, f.default))
    try:
        return probe.errors() or [first]
    except Exception:
        return [first]


def _option_errors(options) -> list[str]:
    out = []
    if options["run"]["workers"] < 1:
        out.append("run.workers: must be >= 1")
    if any(v < 0 for v in options["scan"]["fss_grid_ueV"]):
        out.append("scan.fss_grid_ueV: values must be >= 0")
    if options["tomography"]["source"] not in ("model", "events"):
        out.append("tomography.source: must be 'model' or 'events'")
    if not options["tomography"]["n_per_setting"] > 0:
        out.append("tomography.n_per_setting: must be > 0")
    tc = options["tomography"]["target_concurrence"]
    if tc is not None and not 0.0 <= tc <= 1.0:
        out.append("tomography.target_concurrence: must lie in [0, 1]")
    if not 0.0 <= options["hom"]["v_in"] <= 1.0:
        out.append("hom.v_in: must lie in [0, 1]")
    for sec in ("hom", "g2"):
        if options[sec]["line"] not in ("XX", "X"):
            out.append(f"{sec}.line: must be 'XX' or 'X'")
    if not options["hom"]["fit_half_window_ns"] > 0:
        out.append("hom.fit_half_window_ns: must be > 0")
    labels = [s.strip() for s in options["correlation"]["settings"].split(",")]
    if len(labels) != 6 or any(len(s) != 2 or any(c not in "HVDARL" for c in s) for s in labels):
        out.append("correlation.settings: need six two-letter labels over H,V,D,A,R,L")
    if any(a < 0 for a in options["rabi"]["pulse_areas_pi"]):
        out.append("rabi.pulse_areas_pi: values must be >= 0")
    if options["fss"]["true_fss_ueV"] < 0:
        out.append("fss.true_fss_ueV: must be >= 0")
    if options["fss"]["noise_ueV"] < 0:
        out.append("fss.noise_ueV: must be >= 0")
    if options["fss"]["n_angles"] < 8:
        out.append("fss.n_angles: need at least 8 angles")
    return out


def load_config(path, overrides=()) -> ExperimentConfig:
    """Parse, apply ``key=value`` overrides, and validate; raises ConfigError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read: {exc.strerror}"]) from exc
    entries, errors = parse_text(text, str(path))
    if errors:
        raise ConfigError(errors)
    for item in overrides:
        key, value = parse_override(item)
        entries[key] = (0, value)
    cfg, errors = build_config(entries, str(path))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(path, overrides=()) -> list[str]:
    """Every problem in the file, or an empty list when it is runnable."""
    try:
        load_config(path, overrides)
    except ConfigError as exc:
        return exc.errors
    return []
