"""Run configuration: sectioned key-value text with exhaustive validation.

The format is INI-style, one section per module area::

    [equation]
    gamma = 1e-05
    q = 7.0

    [grid]
    length = 60.0
    n = 1024

Every key has a documented default, so the minimal useful config is a
single section with a single override.  Parsing validates all keys and
reports *every* problem at once: a single offending key raises the
matching concrete error (``UnknownKey``, ``TypeError``, ``RangeError``),
several raise ``ConfigError`` carrying one ``(kind, key, message)``
triple each.  Serialization uses shortest round-trip float text, so
``parse_config(serialize_config(cfg))`` reproduces ``cfg`` bit-exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .errors import ConfigError, RangeError, UnknownKey

__all__ = ["RunConfig", "parse_config", "serialize_config", "config_docs"]

_KINDS = ("evolve", "blowup", "sweep", "uext", "residual", "classify",
          "decompose", "profiles")


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one run; see module docstring for format."""

    gamma: float = 0.0
    q: float = 7.0
    length: float = 60.0
    n: int = 1024
    dt: float = 2e-3
    cfl_safety: float = 0.8
    sponge_frac: float = 0.1
    b_max: float = 0.2
    newton_tol: float = 1e-10
    kind: str = "evolve"
    gamma_list: tuple = ()
    grad_threshold: float = 2.0
    exit_fraction: float = 0.3
    cadence: float = 0.05
    t_end: float = 1.0
    seed: int = 0


def _power_of_two(v):
    return v >= 32 and v <= (1 << 20) and (v & (v - 1)) == 0


def _float_list(text):
    items = [tok.strip() for tok in text.split(",") if tok.strip()]
    return tuple(float(tok) for tok in items)


# section -> key -> (attribute, converter, range check, range message, doc)
_SCHEMA = {
    "equation": {
        "gamma": ("gamma", float, lambda v: v >= 0.0,
                  "must be >= 0", "saturation strength; 0 = critical gKdV"),
        "q": ("q", float, lambda v: 5.0 < v <= 9.0,
              "q must exceed 5 (and stay <= 9)",
              "saturation exponent of u|u|^(q-1)"),
    },
    "grid": {
        "length": ("length", float, lambda v: 0.0 < v <= 1e4,
                   "must be in (0, 1e4]", "periodic box length"),
        "n": ("n", int, _power_of_two,
              "power of two required (32..2^20)", "number of grid points"),
    },
    "integrator": {
        "dt": ("dt", float, lambda v: v > 0.0,
               "must be > 0", "initial time step before CFL adaptation"),
        "cfl_safety": ("cfl_safety", float, lambda v: 0.0 < v <= 1.0,
                       "must be in (0, 1]", "CFL safety factor"),
        "sponge_frac": ("sponge_frac", float, lambda v: 0.0 <= v <= 0.4,
                        "must be in [0, 0.4]",
                        "left-edge absorbing fraction of the box"),
    },
    "decomposition": {
        "b_max": ("b_max", float, lambda v: 0.0 < v <= 0.2,
                  "must be in (0, 0.2]", "largest admissible profile b"),
        "newton_tol": ("newton_tol", float, lambda v: 0.0 < v <= 1e-4,
                       "must be in (0, 1e-4]",
                       "orthogonality solve tolerance"),
    },
    "experiment": {
        "kind": ("kind", str, lambda v: v in _KINDS,
                 "must be one of " + ", ".join(_KINDS), "experiment type"),
        "gamma_list": ("gamma_list", _float_list,
                       lambda v: all(g > 0.0 for g in v),
                       "every entry must be > 0",
                       "comma-separated sweep gammas"),
        "grad_threshold": ("grad_threshold", float, lambda v: v > 0.0,
                           "must be > 0",
                           "gradient norm that triggers window rescaling"),
        "exit_fraction": ("exit_fraction", float, lambda v: 0.0 < v < 1.0,
                          "must be in (0, 1)",
                          "tube-exit threshold as a fraction of the ground-"
                          "state mass"),
        "cadence": ("cadence", float, lambda v: v > 0.0,
                    "must be > 0", "output snapshot spacing in lab time"),
        "t_end": ("t_end", float, lambda v: v > 0.0,
                  "must be > 0", "lab-time horizon"),
        "seed": ("seed", int, lambda v: v >= 0,
                 "must be >= 0", "seed for randomized test data"),
    },
}

_TYPE_NAMES = {float: "float", int: "integer", str: "string",
               _float_list: "float list"}


def parse_config(text):
    """Parse and validate config text; returns a RunConfig.

    All problems are collected before raising: one problem raises its
    concrete error, several raise ConfigError with the full list.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("TypeError", "<file>", str(exc))])

    issues = []
    values = {}
    for section in parser.sections():
        keys = _SCHEMA.get(section)
        if keys is None:
            issues.append(("UnknownKey", section, "unknown section"))
            continue
        for key, raw in parser[section].items():
            spec = keys.get(key)
            full = "%s.%s" % (section, key)
            if spec is None:
                issues.append(("UnknownKey", full, "unknown key"))
                continue
            attr, conv, check, range_msg, _doc = spec
            try:
                value = conv(raw)
            except ValueError:
                issues.append(("TypeError", full, "expected %s, got %r"
                               % (_TYPE_NAMES[conv], raw)))
                continue
            if not check(value):
                issues.append(("RangeError", full, range_msg))
                continue
            values[attr] = value

    if issues:
        if len(issues) == 1:
            kind, key, msg = issues[0]
            detail = "%s: %s" % (key, msg)
            if kind == "UnknownKey":
                raise UnknownKey(detail)
            if kind == "RangeError":
                raise RangeError(detail)
            raise TypeError(detail)
        raise ConfigError(issues)
    return replace(RunConfig(), **values)


def serialize_config(cfg):
    """Render a RunConfig back to text; floats keep full precision."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append("[%s]" % section)
        for key, (attr, conv, _check, _msg, _doc) in keys.items():
            value = getattr(cfg, attr)
            if conv is _float_list:
                rendered = ", ".join(repr(g) for g in value)
            elif conv is float:
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append("%s = %s" % (key, rendered))
        lines.append("")
    return "\n".join(lines)


def config_docs():
    """One line per key: name, type, default, and meaning."""
    defaults = RunConfig()
    rows = []
    for section, keys in _SCHEMA.items():
        for key, (attr, conv, _check, _msg, doc) in keys.items():
            rows.append("%-26s %-10s default=%-12r %s"
                        % ("%s.%s" % (section, key), _TYPE_NAMES[conv],
                           getattr(defaults, attr), doc))
    return "\n".join(rows)
