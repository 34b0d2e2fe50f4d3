"""Run configuration: typed key=value sections, flag overrides, config hash.

The config file (`run.cfg` by convention) uses ini-style sections.  Every
key is declared in _SCHEMA with a type and a default; unknown sections or
keys are hard errors so a misspelling can never silently fall back to a
default.  The effective configuration (file, then flag overrides, then
defaults) is hashed and the hash is stamped into every artifact.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Optional


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in s.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"not an integer list: {s!r}") from exc


def _parse_float_list(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in s.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"not a float list: {s!r}") from exc


def _opt(caster: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(s: str):
        return None if s.strip().lower() in ("", "none") else caster(s)

    return parse


# section -> key -> (parser, default)
_SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
        "workers": (_opt(int), None),
    },
    "lattice": {
        "n": (int, 200),
        "kappa": (float, 1.0),
        "tau_fin": (float, 0.05),
        "dt": (_opt(float), None),
        "eta": (float, 0.4),
        "bc": (str, "neumann"),
        "pad": (_opt(int), None),
        "snapshot_stride": (int, 50),
        "init": (str, "front_pinning"),
    },
    "kernel": {
        "tolerance": (float, 1e-10),
    },
    "sweep": {
        "n_list": (_parse_int_list, (100, 200, 400)),
    },
    "stefan": {
        "n_cells": (int, 800),
        "cfl": (float, 0.25),
        "snapshot_count": (int, 201),
    },
    "toy": {
        "kappa": (float, 1.0),
        "f_const": (float, 0.0),
        "t_fin": (float, 40.0),
        "dt": (float, 0.05),
        "window": (_opt(int), None),
        "z0": (_parse_float_list, (0.05,)),
    },
}


# keys that steer execution but not the computed result; they stay out of
# the canonical form so the hash identifies the science, not the machine
_NON_SEMANTIC = {("run", "workers"), ("run", "out")}


@dataclass
class RunConfig:
    """Effective configuration: every schema key, resolved."""

    values: dict[tuple[str, str], Any] = field(default_factory=dict)

    def __getitem__(self, section_key: tuple[str, str]) -> Any:
        return self.values[section_key]

    def get(self, section: str, key: str) -> Any:
        return self.values[(section, key)]

    def canonical(self) -> str:
        lines = []
        for (sec, key), val in sorted(self.values.items()):
            if (sec, key) in _NON_SEMANTIC:
                continue
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            lines.append(f"{sec}.{key}={val!r}")
        return "\n".join(lines)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @property
    def workers(self) -> int:
        w = self.get("run", "workers")
        if w is not None:
            return int(w)
        env = os.environ.get("SPLX_WORKERS", "").strip()
        if env:
            try:
                w = int(env)
            except ValueError as exc:
                raise ConfigError(f"SPLX_WORKERS is not an integer: {env!r}") from exc
            if w < 1:
                raise ConfigError(f"SPLX_WORKERS must be >= 1, got {w}")
            return w
        return os.cpu_count() or 1


def load_config(path: Optional[str] = None,
                overrides: Optional[dict[tuple[str, str], str]] = None) -> RunConfig:
    """Resolve defaults <- config file <- overrides, all schema-checked.

    `overrides` maps (section, key) to the raw string form (as from a
    CLI flag); values pass through the same parser as file entries.
    """
    values: dict[tuple[str, str], Any] = {
        (sec, key): default
        for sec, keys in _SCHEMA.items()
        for key, (_, default) in keys.items()
    }

    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case-sensitive
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for sec in parser.sections():
            if sec not in _SCHEMA:
                raise ConfigError(
                    f"unknown section [{sec}] in {path}; "
                    f"known: {sorted(_SCHEMA)}")
            for key, raw in parser.items(sec):
                if key not in _SCHEMA[sec]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{sec}] of {path}; "
                        f"known: {sorted(_SCHEMA[sec])}")
                caster = _SCHEMA[sec][key][0]
                try:
                    values[(sec, key)] = caster(raw)
                except (ValueError, ConfigError) as exc:
                    raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc

    for (sec, key), raw in (overrides or {}).items():
        if sec not in _SCHEMA or key not in _SCHEMA[sec]:
            raise ConfigError(f"unknown config key {sec}.{key}")
        if raw is None:
            continue
        caster = _SCHEMA[sec][key][0]
        try:
            values[(sec, key)] = caster(str(raw))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"flag for {sec}.{key} = {raw!r}: {exc}") from exc

    return RunConfig(values=values)


def lattice_config_kwargs(cfg: RunConfig) -> dict:
    """The [lattice] section translated to LatticeConfig arguments."""
    kw = dict(
        n_particles=cfg.get("lattice", "n"),
        kappa=cfg.get("lattice", "kappa"),
        tau_fin=cfg.get("lattice", "tau_fin"),
        eta=cfg.get("lattice", "eta"),
        bc=cfg.get("lattice", "bc"),
        snapshot_stride=cfg.get("lattice", "snapshot_stride"),
    )
    if cfg.get("lattice", "dt") is not None:
        kw["dt"] = cfg.get("lattice", "dt")
    if cfg.get("lattice", "pad") is not None:
        kw["pad"] = cfg.get("lattice", "pad")
    return kw
