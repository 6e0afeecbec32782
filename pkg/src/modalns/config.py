"""Strict INI run configuration.

Sections and keys are fixed; unknown or missing keys are errors.  Only
``save_every`` (10) and ``scheme`` (IMEX2) have defaults.
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .experiments import Experiment, ExperimentConfig
from .grid import make_grid
from .solvers import Scheme, SolverConfig

SCHEMA = {
    "grid": ("nr", "nz", "rmax", "lz", "kmodes"),
    "solver": ("dt", "tfinal", "save_every", "scheme"),
    "experiment": ("which", "eps_list", "output_dir"),
    "data": ("seed",),
}
DEFAULTS = {"save_every": "10", "scheme": "IMEX2"}


class ConfigError(ValueError):
    pass


def _number(kind, key: str, raw: str):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict[str, str] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = raw.strip()
    for section, keys in SCHEMA.items():
        for key in keys:
            if key not in values and key not in DEFAULTS:
                raise ConfigError(f"missing key {key!r} in [{section}]")
    v = {**DEFAULTS, **values}

    try:
        grid = make_grid(_number(int, "nr", v["nr"]), _number(int, "nz", v["nz"]),
                         _number(float, "rmax", v["rmax"]), _number(float, "lz", v["lz"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}") from None
    try:
        scheme = Scheme(v["scheme"].upper())
    except ValueError:
        raise ConfigError(f"key 'scheme': expected IMEX1 or IMEX2, got {v['scheme']!r}") from None
    try:
        which = Experiment(v["which"])
    except ValueError:
        choices = ", ".join(e.value for e in Experiment)
        raise ConfigError(f"key 'which': expected one of {choices}, got {v['which']!r}") from None
    eps = tuple(_number(float, "eps_list", x) for x in v["eps_list"].split(",") if x.strip())
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"key 'eps_list': values {list(eps)} are not strictly decreasing")
    try:
        solver = SolverConfig(grid, K=_number(int, "kmodes", v["kmodes"]),
                              dt=_number(float, "dt", v["dt"]),
                              T=_number(float, "tfinal", v["tfinal"]),
                              save_every=_number(int, "save_every", v["save_every"]),
                              scheme=scheme)
        return ExperimentConfig(which, solver, eps_list=eps, output_dir=Path(v["output_dir"]),
                                seed=_number(int, "seed", v["seed"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
