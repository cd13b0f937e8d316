"""Run configuration: a small sectioned ``key = value`` format with mandatory units.

Example::

    [system]
    omega_eg = 6.067 GHz
    kappa    = 2.897 MHz
    cavity_dim = 5

Every physical quantity carries a unit suffix (hz, khz, mhz, ghz, s, ms, us, ns,
m, mm, um, nm, m/s; case-insensitive).  Values are normalised to Hz, seconds,
metres and m/s.  ``auto`` selects a derived default where one exists.  Unknown
sections or keys, missing or mismatched units and out-of-range values raise
:class:`ConfigError` naming the key and line.

The parser is hand-written rather than built on ``configparser`` because errors
must carry source line numbers, which ``configparser`` does not expose.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import AitSimError, ConfigError
from .model import DriveParams, PhononMode, SystemParams, comb_modes

UNITS = {
    "freq": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "velocity": {"m/s": 1.0},
}
CANONICAL_UNIT = {"freq": "Hz", "time": "s", "length": "m", "velocity": "m/s"}
ENGINES = ("mf", "me")
FIT_NAMES = ("gamma", "g_qh", "gamma_tilde", "omega_p_offset", "omega_q_offset",
             "amplitude", "background")


@dataclass(frozen=True)
class Key:
    kind: str                 # freq | time | length | velocity | int | float | bool | str | list | engine
    default: Any = None       # None means "auto" (derived) or "unset"
    minimum: float | None = None
    auto: bool = False        # accepts the literal ``auto``


def _f(default=None, minimum=None, auto=False):
    return Key("freq", default, minimum, auto)


SCHEMA: dict[str, dict[str, Key]] = {
    "system": {
        "omega_r": _f(4.910e9, 0.0),
        "kappa": _f(2.897e6, 0.0),
        "chi": _f(1.2e6),
        "omega_eg": _f(6.067e9, 0.0),
        "Gamma": _f(425e3, 0.0),
        "Gamma1": _f(None, 0.0, auto=True),
        "Gamma_phi": _f(0.0, 0.0),
        "omega_p": _f(6.064e9, 0.0),
        "gamma": _f(6.98e3, 0.0),
        "g_qh": _f(197e3),
        "n_modes": Key("int", 1, 1),
        "mode_spacing": _f(8.53e6, 0.0),
        "cavity_dim": Key("int", 5, 2),
        "phonon_dim": Key("int", 5, 2),
        "resonator_qubit_detuning": _f(1.07e9),
        "resonator_qubit_coupling": _f(81.04e6),
        "E_c": _f(260e6),
        "E_J": _f(40.2e9),
    },
    "drive": {
        "omega_d": _f(None, 0.0, auto=True),
        "eps_d": _f(1e3, 0.0),
        "eps_p": _f(10e3, 0.0),
    },
    "grid": {
        "fine_center": _f(None, 0.0, auto=True),
        "fine_span": _f(200e3, 0.0),
        "fine_step": _f(250.0, 0.0),
        "coarse_center": _f(None, 0.0, auto=True),
        "coarse_span": _f(20e6, 0.0),
        "coarse_step": _f(250e3, 0.0),
        "qubit_start": _f(None, 0.0, auto=True),
        "qubit_stop": _f(None, 0.0, auto=True),
        "qubit_step": _f(0.5e6, 0.0),
    },
    "design": {
        "v_s": Key("velocity", 1.11e4, 0.0),
        "t_s": Key("length", 650e-6, 0.0),
        "v_p": Key("velocity", None, 0.0, auto=True),
        "t_p": Key("length", None, 0.0, auto=True),
    },
    "fit": {
        "data": Key("str", None, auto=True),
        "free_params": Key("list", ("gamma", "g_qh", "amplitude", "background", "omega_p_offset")),
        "max_iterations": Key("int", 200, 1),
        "tol": Key("float", 1e-10, 0.0),
    },
    "run": {
        "engine": Key("engine", "mf"),
        "threads": Key("int", None, 1, auto=True),
    },
    "output": {
        "prefix": Key("str", ""),
        "normalize": Key("bool", True),
    },
}

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
_PAIR_RE = re.compile(r"^([A-Za-z_][\w]*)\s*=\s*(.*)$")
_QTY_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z/]+)?$")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; ``values[section][key]`` in SI units (``None`` = auto)."""

    values: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> Mapping[str, Any]:
        return self.values[section]

    def get(self, dotted: str) -> Any:
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def system_params(self) -> SystemParams:
        s = self.values["system"]
        if s["n_modes"] == 1:
            modes = (PhononMode(s["omega_p"], s["gamma"], s["g_qh"]),)
        else:
            modes = comb_modes(s["omega_p"], s["mode_spacing"], s["n_modes"], s["gamma"], s["g_qh"])
        return SystemParams(
            omega_r=s["omega_r"], kappa=s["kappa"], chi=s["chi"], omega_eg=s["omega_eg"],
            Gamma=s["Gamma"], phonon_modes=modes, Gamma1=s["Gamma1"], Gamma_phi=s["Gamma_phi"],
            cavity_dim=s["cavity_dim"], phonon_dim=s["phonon_dim"],
            resonator_qubit_detuning=s["resonator_qubit_detuning"],
            resonator_qubit_coupling=s["resonator_qubit_coupling"], E_c=s["E_c"], E_J=s["E_J"])

    def drive_params(self) -> DriveParams:
        d = self.values["drive"]
        omega_d = d["omega_d"] if d["omega_d"] is not None else self.values["system"]["omega_p"]
        return DriveParams(omega_d=omega_d, eps_d=d["eps_d"], eps_p=d["eps_p"])

    def qubit_freqs(self) -> np.ndarray:
        """Effective qubit frequencies of a Stark sweep (default: omega_eg +- 20 MHz)."""
        g = self.values["grid"]
        w = self.values["system"]["omega_eg"]
        start = g["qubit_start"] if g["qubit_start"] is not None else w - 20e6
        stop = g["qubit_stop"] if g["qubit_stop"] is not None else w + 20e6
        step = g["qubit_step"]
        if not stop >= start:
            raise ConfigError("qubit_stop must not be below qubit_start", key="grid.qubit_stop")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)

    def frequency_grid(self, stark: bool = False):
        """Coarse window plus one fine window per phonon mode (``fine_center`` overrides
        the window position for a single mode).  For Stark sweeps the coarse window is
        centred on the middle of the qubit sweep unless ``coarse_center`` is given."""
        from .spectroscopy import FrequencyGrid

        g = self.values["grid"]
        params = self.system_params()
        if g["fine_span"] > g["coarse_span"]:
            raise ConfigError("fine_span must not exceed coarse_span", key="grid.fine_span")
        centers = [m.omega_p for m in params.phonon_modes]
        if g["fine_center"] is not None:
            if len(centers) > 1:
                raise ConfigError("fine_center applies to single-mode systems only", key="grid.fine_center")
            centers = [g["fine_center"]]
        if g["coarse_center"] is not None:
            cc = g["coarse_center"]
        elif stark:
            qf = self.qubit_freqs()
            cc = 0.5 * (qf[0] + qf[-1])
        else:
            cc = params.omega_eg
        segs = [(cc - g["coarse_span"] / 2, cc + g["coarse_span"] / 2, g["coarse_step"])]
        segs += [(c - g["fine_span"] / 2, c + g["fine_span"] / 2, g["fine_step"]) for c in centers]
        try:
            return FrequencyGrid.from_segments(segs)
        except AitSimError as exc:
            raise ConfigError(str(exc), key="grid") from exc

    def with_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        values = {s: dict(v) for s, v in self.values.items()}
        for item in overrides:
            section, key, raw = _split_override(item)
            values[section][key] = _convert(section, key, raw, "--set")
        return RunConfig(values)


def _split_override(item: str) -> tuple[str, str, str]:
    m = re.match(r"^\s*([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=(.*)$", item)
    if not m:
        raise ConfigError(f"override {item!r} is not of the form section.key=value", line="--set")
    section, key, raw = m.group(1), m.group(2), m.group(3).strip()
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", key=f"{section}.{key}", line="--set")
    if key not in SCHEMA[section]:
        raise ConfigError("unknown key", key=f"{section}.{key}", line="--set")
    return section, key, raw


def _convert(section: str, key: str, raw: str, line) -> Any:
    spec = SCHEMA[section][key]
    name = f"{section}.{key}"
    if spec.auto and raw.lower() == "auto":
        return None
    kind = spec.kind
    if kind in UNITS:
        m = _QTY_RE.match(raw)
        if not m:
            raise ConfigError(f"cannot parse {raw!r} as a quantity", key=name, line=line)
        unit = (m.group(2) or "").lower()
        if not unit:
            raise ConfigError(f"missing unit (expected one of {', '.join(UNITS[kind])})", key=name, line=line)
        if unit not in UNITS[kind]:
            raise ConfigError(f"unit {m.group(2)!r} is not a {kind} unit "
                              f"(expected one of {', '.join(UNITS[kind])})", key=name, line=line)
        # decimal scaling so that e.g. 1.07 GHz is exactly 1070000000 Hz
        value = float(Decimal(m.group(1)) * Decimal(repr(UNITS[kind][unit])))
    elif kind in ("int", "float"):
        try:
            value = int(raw) if kind == "int" else float(raw)
        except ValueError:
            raise ConfigError(f"expected a{'n integer' if kind == 'int' else ' number'}, got {raw!r}",
                              key=name, line=line) from None
    elif kind == "bool":
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigError(f"expected true/false, got {raw!r}", key=name, line=line)
        return low in ("true", "yes", "1")
    elif kind == "engine":
        low = raw.lower()
        aliases = {"mf": "mf", "mean_field": "mf", "me": "me", "master_equation": "me"}
        if low not in aliases:
            raise ConfigError(f"engine must be me or mf, got {raw!r}", key=name, line=line)
        return aliases[low]
    elif kind == "list":
        items = tuple(x.strip() for x in raw.split(",") if x.strip())
        bad = [x for x in items if x not in FIT_NAMES]
        if bad or not items:
            raise ConfigError(f"unknown fit parameter(s) {bad} (choose from {', '.join(FIT_NAMES)})",
                              key=name, line=line)
        return items
    else:
        return raw
    if not math.isfinite(value):
        raise ConfigError("value must be finite", key=name, line=line)
    if spec.minimum is not None and value < spec.minimum:
        raise ConfigError(f"value {value:g} below the minimum {spec.minimum:g}", key=name, line=line)
    return value


def defaults() -> dict[str, dict[str, Any]]:
    return {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def parse_config(text: str, overrides: Iterable[str] = ()) -> RunConfig:
    """Parse configuration text, fill defaults and apply ``section.key=value`` overrides."""
    values = defaults()
    seen: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        m = _PAIR_RE.match(line)
        if not m:
            raise ConfigError(f"cannot parse {line!r}", line=lineno)
        key, raw = m.group(1), m.group(2).strip()
        if section is None:
            raise ConfigError("key outside of any section", key=key, line=lineno)
        if key not in SCHEMA[section]:
            raise ConfigError("unknown key", key=f"{section}.{key}", line=lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[section, key]})",
                              key=f"{section}.{key}", line=lineno)
        seen[section, key] = lineno
        values[section][key] = _convert(section, key, raw, lineno)
    return RunConfig(values).with_overrides(overrides)


def load_config(path, overrides: Iterable[str] = ()) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def shipped_config(name: str = "table_s1") -> str:
    """Text of a configuration shipped with the package."""
    return resources.files("aitsim.configs").joinpath(f"{name}.ini").read_text(encoding="utf-8")


def _format(kind: str, value: Any) -> str:
    if value is None:
        return "auto"
    if kind in UNITS:
        return f"{float(value)!r} {CANONICAL_UNIT[kind]}"
    if kind == "bool":
        return "true" if value else "false"
    if kind == "list":
        return ", ".join(value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text (SI units, shortest round-tripping floats) that re-parses to ``cfg``."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, spec in keys.items():
            out.append(f"{key} = {_format(spec.kind, cfg.values[section][key])}")
        out.append("")
    return "\n".join(out)


def flat_items(cfg: RunConfig) -> list[tuple[str, str]]:
    """``(section.key, canonical value)`` pairs, for metadata sidecars."""
    return [(f"{s}.{k}", _format(spec.kind, cfg.values[s][k]))
            for s, keys in SCHEMA.items() for k, spec in keys.items()]
