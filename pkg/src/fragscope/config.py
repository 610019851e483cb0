"""Experiment configuration: a flat ``key = value`` file with dotted keys.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Values are parsed as JSON when possible (numbers, lists, ``true``) and kept
as bare strings otherwise.  Unknown keys are rejected.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError

KEYS = {
    "command": "subcommand name (the CLI positional wins)",
    "model.kind": "binary-uniform | ternary | binary-powerlaw | custom-finite",
    "model.a": "power-law exponent in (1, 2)",
    "model.atoms": "[[rate, [s1, s2, ...]], ...] for custom-finite",
    "truncation.epsilon": "drop dislocations with 1 - |u*| <= epsilon",
    "seed": "master seed, unsigned 64-bit",
    "output_dir": "where manifest, summary and CSVs go",
    "workers": "process count",
    "t": "single time",
    "horizon": "simulation horizon",
    "grid": "list of times",
    "replicas": "number of engine replicas",
    "n": "sample count",
    "n_lhs": "engine runs for the particle-sum side",
    "n_rhs": "tagged paths for the tilted side",
    "prune_margin": "prune below exp(-(c + margin) horizon)",
    "ceiling": "active population ceiling",
    "delta": "near-maximal slack: c' = c + delta",
    "F": "const | terminal | runmin",
    "level": "level a or k of the indicator functional",
    "rhs_method": "auto | tilted | counting",
    "beta": "list of decay rates for the spectrum",
    "measure": "P | Q",
    "cov_time": "time of the direct covariance estimate",
    "n_cov": "pairs for the direct covariance estimate",
    "check": "smallball | mintail | corridor | liminf | sum",
    "levy": "poisson[:rate] | exponential[:rate,theta]",
    "r": "small-ball window start",
    "h": "small-ball window width",
    "u": "min-tail level",
    "f": "corridor lower barrier",
    "g": "corridor upper end level",
    "alpha": "lim-inf shift, or the summability exponent",
    "l": "lim-inf level coefficient",
    "C": "lim-inf window width",
    "k": "summability log power",
    "N": "summability partial-sum length",
    "calibration": "grid indices used to calibrate the corridor constant",
}


def parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def load(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_text(text, str(p))


def merge(base: dict, overrides: dict) -> dict:
    """Flags override file values; ``None`` means the flag was not given."""
    out = dict(base)
    for key, value in overrides.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            out[key] = value
    return out


def dump(cfg: dict) -> str:
    """Inverse of :func:`parse_text` for JSON-representable values."""
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in sorted(cfg.items()))
