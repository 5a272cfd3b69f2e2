"""Run configuration files.

A config is a small INI file::

    [run]
    preset = ca40            ; optional starting point
    encoding = frequency     ; or polarization
    scheme = 3
    reexcitation = yes
    units = 2pi*MHz          ; or rad/us

    [node]                   ; applies to both nodes
    g_1 = 9.36
    Delta_1,Delta_2 = 400
    gamma_ie = 10.78x1/3
    delta = 0.5kappa

    [node_a]                 ; per-node overrides
    delta = 0

Keys may be written with the parameter-table column names (``l/mm``,
``R_c/mm``, ``F``, ``FSR``, ``g_1``, ``kappa``, ``Omega_1``,
``Delta_1,Delta_2``, ``gamma_ie``, ``gamma_xe``, ``delta``, Greek letters
allowed) or the field names of :class:`~cartsim.model.NodeConfig`.
Values accept simple arithmetic (``10.78*1/3``, ``5x10^4``) and a
trailing ``kappa`` for the birefringence. Unknown keys are an error.
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path

from .experiments import load_preset
from .model import TWO_PI, BirefringenceSpec, CavityGeometry, DriveConfig, NodeConfig, derive_geometry


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_GREEK = {"Ω": "Omega", "ω": "Omega", "Δ": "Delta", "δ": "delta", "κ": "kappa", "γ": "gamma",
          "θ": "theta", "ℱ": "F", "𝓕": "F"}

# canonical field -> accepted spellings after normalization (see _normalize)
_ALIASES = {
    "g1": ("g1", "g_1"),
    "g2": ("g2", "g_2"),
    "kappa": ("kappa",),
    "omega1": ("omega1", "omega_1"),
    "omega2": ("omega2", "omega_2"),
    "delta1": ("delta1", "Delta_1", "Delta1"),
    "delta2": ("delta2", "Delta_2", "Delta2"),
    "detunings": ("Delta_1,Delta_2", "Delta", "detuning"),
    "gamma_ie": ("gamma_ie",),
    "gamma_xe": ("gamma_xe",),
    "delta": ("delta", "birefringence"),
    "axis": ("axis",),
    "theta": ("theta",),
    "encoding": ("encoding",),
    "length": ("length", "l/mm", "l"),
    "mirror_roc": ("mirror_roc", "R_c/mm", "R_c"),
    "finesse": ("finesse", "F", "mathcalF"),
    "fsr": ("FSR", "fsr"),
    "wavelength": ("wavelength", "wavelength/nm"),
    "label": ("ion species", "ionspecies", "label"),
}
_LOOKUP = {}
for _canon, _names in _ALIASES.items():
    for _n in _names:
        # capitalised Delta means detuning, lower-case delta birefringence: keep case for those
        _LOOKUP[_n if "elta" in _n else _n.lower()] = _canon

RUN_KEYS = {"preset", "encoding", "scheme", "reexcitation", "units", "points", "windows"}
SECTIONS = {"run", "node", "node_a", "node_b"}
UNITS = {"2pi*mhz": 1.0, "2pi mhz": 1.0, "mhz": 1.0, "rad/us": 1.0 / TWO_PI}


def _normalize(key: str) -> str | None:
    k = key.strip()
    for g, name in _GREEK.items():
        k = k.replace(g, name)
    for ch in "$\\{} ":
        k = k.replace(ch, "")
    if k in _LOOKUP:
        return _LOOKUP[k]
    if k.lower() in _LOOKUP and "elta" not in k:
        return _LOOKUP[k.lower()]
    return None


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval(node.operand))
    raise ValueError("unsupported expression")


def parse_number(text: str) -> float:
    """Evaluate ``10.78x1/3``, ``5×10^4`` and similar plain arithmetic."""
    expr = text.strip().replace("×", "*").replace("x", "*").replace("^", "**").replace("−", "-")
    try:
        value = _eval(ast.parse(expr, mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot read number {text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"non-finite value {text!r}")
    return value


def parse_birefringence(text: str, kappa: float) -> float:
    t = text.strip().replace("κ", "kappa")
    if t.endswith("kappa"):
        factor = t[: -len("kappa")].strip().rstrip("*") or "1"
        return parse_number(factor) * kappa
    return parse_number(t)


@dataclass
class RunConfig:
    """Resolved run settings: two node configs plus evaluation options."""

    node_a: NodeConfig
    node_b: NodeConfig
    preset: str | None = None
    encoding: str = "frequency"
    scheme: int = 3
    reexcitation: bool = False
    points: int | None = None
    geometry: CavityGeometry | None = None
    quoted_fsr: float | None = None
    windows: list[float] | None = None
    notes: dict = field(default_factory=dict)

    def to_ini(self) -> str:
        """INI text that reproduces this configuration exactly."""
        lines = ["[run]", f"encoding = {self.encoding}", f"scheme = {self.scheme}",
                 f"reexcitation = {'yes' if self.reexcitation else 'no'}", "units = 2pi*MHz"]
        if self.points:
            lines.append(f"points = {self.points}")
        if self.windows:
            lines.append("windows = " + ", ".join(repr(w) for w in self.windows))
        for name, node in (("node_a", self.node_a), ("node_b", self.node_b)):
            lines += ["", f"[{name}]"]
            d = node.to_dict()
            for key in ("g1", "g2", "kappa", "gamma_ie", "gamma_xe", "omega1", "omega2", "delta1", "delta2",
                        "theta", "delta"):
                lines.append(f"{key} = {d[key]!r}")
            lines.append("axis = " + ", ".join(repr(a) for a in d["axis"]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = {"preset": self.preset, "encoding": self.encoding, "scheme": self.scheme,
               "reexcitation": self.reexcitation, "points": self.points, "windows": self.windows,
               "node_a": self.node_a.to_dict(), "node_b": self.node_b.to_dict()}
        if self.geometry is not None:
            g = derive_geometry(self.geometry)
            out["geometry"] = {"length_mm": self.geometry.length, "mirror_roc_mm": self.geometry.mirror_roc,
                               "finesse": self.geometry.finesse, "wavelength_nm": self.geometry.wavelength,
                               "fsr": g.fsr, "kappa": g.kappa, "waist_um": g.waist}
        return out


def _apply_node_section(node: NodeConfig, items: dict[str, str], scale: float, where: str,
                        geometry: dict) -> NodeConfig:
    fields: dict[str, str] = {}
    for raw_key, value in items.items():
        canon = _normalize(raw_key)
        if canon is None:
            raise ConfigError(f"unknown key {raw_key!r} in [{where}]")
        fields[canon] = value

    for key in ("length", "mirror_roc", "finesse", "wavelength", "fsr"):
        if key in fields:
            geometry[key] = parse_number(fields.pop(key))
    fields.pop("label", None)

    kw: dict = {}
    for key in ("g1", "g2", "kappa", "gamma_ie", "gamma_xe"):
        if key in fields:
            kw[key] = parse_number(fields.pop(key)) * scale
    if "kappa" not in kw and not node.kappa and {"length", "mirror_roc", "finesse"} <= geometry.keys():
        kw["kappa"] = _geometry(geometry).kappa
    if "encoding" in fields:
        kw["encoding"] = fields.pop("encoding").strip()
    drive = {}
    if "detunings" in fields:
        d = parse_number(fields.pop("detunings")) * scale
        drive["delta1"] = drive["delta2"] = d
    for key in ("omega1", "omega2", "delta1", "delta2"):
        if key in fields:
            drive[key] = parse_number(fields.pop(key)) * scale
    if "theta" in fields:
        drive["theta"] = parse_number(fields.pop("theta"))
    bire = {}
    if "axis" in fields:
        bire["axis"] = tuple(parse_number(v) for v in fields.pop("axis").split(","))
    kappa = kw.get("kappa", node.kappa)
    if "delta" in fields:
        text = fields.pop("delta")
        value = parse_birefringence(text, kappa)
        bire["delta"] = value if "kappa" in text or "κ" in text else value * scale
    if fields:
        raise ConfigError(f"unhandled keys {sorted(fields)} in [{where}]")
    try:
        return replace(node, drive=replace(node.drive, **drive),
                       birefringence=replace(node.birefringence, **bire), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _geometry(geometry: dict):
    return derive_geometry(CavityGeometry(geometry["length"], geometry["mirror_roc"], geometry["finesse"],
                                          geometry.get("wavelength", 866.0)))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_run_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    """Read an INI config file (or string) into a :class:`RunConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keep case: Delta (detuning) vs delta (birefringence)
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path) as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc

    unknown = set(parser.sections()) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    bad = set(run) - RUN_KEYS
    if bad:
        raise ConfigError(f"unknown keys {sorted(bad)} in [run]")

    scale = UNITS.get(run.get("units", "2pi*MHz").strip().lower())
    if scale is None:
        raise ConfigError(f"unknown units {run['units']!r}; use 2pi*MHz or rad/us")

    preset_name = run.get("preset")
    geometry_fields: dict = {}
    quoted_fsr = None
    if preset_name:
        try:
            preset = load_preset(preset_name.strip())
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc
        base = preset.node
        if preset.geometry:
            geometry_fields = {"length": preset.geometry.length, "mirror_roc": preset.geometry.mirror_roc,
                               "finesse": preset.geometry.finesse, "wavelength": preset.geometry.wavelength}
        quoted_fsr = preset.quoted_fsr
    else:
        base = NodeConfig()

    if parser.has_section("node"):
        base = _apply_node_section(base, dict(parser["node"]), scale, "node", geometry_fields)
    node_a, node_b = base, base
    if parser.has_section("node_a"):
        node_a = _apply_node_section(base, dict(parser["node_a"]), scale, "node_a", dict(geometry_fields))
    if parser.has_section("node_b"):
        node_b = _apply_node_section(base, dict(parser["node_b"]), scale, "node_b", dict(geometry_fields))

    encoding = run.get("encoding", node_a.encoding).strip()
    if encoding not in ("frequency", "polarization"):
        raise ConfigError(f"unknown encoding {encoding!r}")
    try:
        scheme = int(run.get("scheme", "3"))
        if scheme not in (1, 2, 3):
            raise ValueError
    except ValueError:
        raise ConfigError(f"scheme must be 1, 2 or 3, got {run.get('scheme')!r}") from None
    points = int(run["points"]) if "points" in run else None
    if points is not None and points < 8:
        raise ConfigError("points must be >= 8")
    windows = [parse_number(w) for w in run["windows"].split(",")] if "windows" in run else None
    geometry = None
    if {"length", "mirror_roc", "finesse"} <= geometry_fields.keys():
        try:
            geometry = CavityGeometry(geometry_fields["length"], geometry_fields["mirror_roc"],
                                      geometry_fields["finesse"], geometry_fields.get("wavelength", 866.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        quoted_fsr = geometry_fields.get("fsr", quoted_fsr)
    return RunConfig(node_a=replace(node_a, encoding=encoding), node_b=replace(node_b, encoding=encoding),
                     preset=preset_name, encoding=encoding, scheme=scheme,
                     reexcitation=_parse_bool(run.get("reexcitation", "no")), points=points,
                     geometry=geometry, quoted_fsr=quoted_fsr, windows=windows)


def run_config_from_preset(name: str, encoding: str = "frequency", scheme: int = 3,
                           reexcitation: bool = False) -> RunConfig:
    try:
        preset = load_preset(name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    node = replace(preset.node, encoding=encoding)
    return RunConfig(node, node, preset=preset.name, encoding=encoding, scheme=scheme,
                     reexcitation=reexcitation, geometry=preset.geometry, quoted_fsr=preset.quoted_fsr,
                     notes=dict(preset.notes))


__all__ = ["ConfigError", "RunConfig", "load_run_config", "run_config_from_preset", "parse_number",
           "parse_birefringence"]
