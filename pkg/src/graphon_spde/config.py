"""Experiment configuration files: INI-style sections with typed keys.

A config file looks like

    [problem]
    kernel = band:r=0.25
    interaction = kuramoto
    drift = zero
    initial = parabola
    T = 1.0

    [noise]
    family = periodic
    s = 2.0
    M = 128

    [experiment]
    mode = vary_dt
    n = 256
    dt_list = 4e-3,2e-3,1e-3,5e-4
    dt_star = 1e-5
    trials = 100
    seed = 1234

    [output]
    directory = out
    formats = csv,svg

Command-line flags override file values, which override defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Problem, drift_from_name, interaction_from_name
from .errors import ConfigError
from .experiments import ExperimentConfig
from .kernels import graphon_from_name
from .noise import QWienerSpec, qwiener_from_name

_REQUIRED = object()


def initial_from_name(name: str):
    """Registered initial conditions: parabola, zero, constant:c=, sine:k=,amp=."""
    kind, _, rest = name.partition(":")
    kind = kind.strip()
    opts = {}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            opts[key.strip()] = float(value)
    if kind == "parabola":
        return lambda x: np.asarray(x, dtype=float) * (1.0 - np.asarray(x, dtype=float))
    if kind == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if kind == "constant":
        c = opts.get("c", 1.0)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if kind == "sine":
        k = opts.get("k", 1.0)
        amp = opts.get("amp", 1.0)
        return lambda x: amp * np.sin(2.0 * math.pi * k * np.asarray(x, dtype=float))
    raise ConfigError(f"unknown initial condition {name!r}")


@dataclass
class RunConfig:
    """Parsed and validated experiment file plus the raw text for provenance."""

    problem: Problem
    noise_label: str
    kernel_label: str
    s: float
    mode: Optional[str]
    trials: int
    seed: int
    threads: int
    n: Optional[int]
    dt: Optional[float]
    n_list: tuple
    n_star: Optional[int]
    dt_list: tuple
    dt_star: Optional[float]
    record: str
    stride: int
    out_dir: str
    formats: tuple
    raw_text: str
    resolved: dict = field(default_factory=dict)


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, path: str):
        self.parser = parser
        self.lines = text.splitlines()
        self.path = path

    def _line_of(self, section: str, key: str) -> str:
        in_section = False
        for i, line in enumerate(self.lines, start=1):
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                in_section = stripped[1:-1].strip() == section
            elif in_section and stripped.split("=")[0].split(":")[0].strip() == key:
                return f"{self.path}:{i}"
        return f"{self.path}:[{section}]"

    def get(self, section: str, key: str, cast, default=_REQUIRED):
        if not self.parser.has_option(section, key):
            if default is _REQUIRED:
                raise ConfigError(
                    f"missing required key '{key}' in [{section}] "
                    f"({self.path}:[{section}])"
                )
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return cast(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(
                f"bad value {raw!r} for '{key}' ({self._line_of(section, key)}): {exc}"
            ) from exc


def _int_list(raw: str):
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def _float_list(raw: str):
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


def _str_list(raw: str):
    return tuple(v.strip() for v in raw.split(",") if v.strip())


def parse_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    """Read, validate, and resolve a config file; overrides win over the file."""
    overrides = dict(overrides or {})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in ("problem",):
        if not parser.has_section(section):
            raise ConfigError(f"missing required section [{section}] in {path}")
    rd = _Reader(parser, text, path)

    kernel = rd.get("problem", "kernel", graphon_from_name, graphon_from_name("band:r=0.25"))
    interaction = rd.get("problem", "interaction", interaction_from_name,
                         interaction_from_name("kuramoto"))
    drift = rd.get("problem", "drift", drift_from_name, drift_from_name("zero"))
    initial = rd.get("problem", "initial", initial_from_name,
                     initial_from_name("parabola"))
    horizon = rd.get("problem", "T", float, 1.0)

    if parser.has_section("noise") and parser.has_option("noise", "spec"):
        spec = rd.get("noise", "spec", qwiener_from_name)
    elif parser.has_section("noise"):
        family = rd.get("noise", "family", str, "periodic")
        s = rd.get("noise", "s", float, 2.0)
        M = rd.get("noise", "M", int, 4096)
        spec = qwiener_from_name(f"{family}:s={s!r},M={M}")
    else:
        spec = qwiener_from_name("periodic:s=2.0,M=4096")

    try:
        problem = Problem(drift=drift, interaction=interaction, kernel=kernel,
                          noise=spec, initial=initial, horizon=horizon)
    except ValueError as exc:
        raise ConfigError(f"invalid problem block: {exc}") from exc

    has_exp = parser.has_section("experiment")
    get_exp = lambda key, cast, default: (
        rd.get("experiment", key, cast, default) if has_exp else default
    )
    cfg = RunConfig(
        problem=problem,
        noise_label=spec.label,
        kernel_label=kernel.label,
        s=spec.s,
        mode=get_exp("mode", str, None),
        trials=int(overrides.get("trials") or get_exp("trials", int, 100)),
        seed=int(overrides["seed"]) if overrides.get("seed") is not None
        else get_exp("seed", int, 0),
        threads=int(overrides.get("threads") or get_exp("threads", int, 1)),
        n=get_exp("n", int, None),
        dt=get_exp("dt", float, None),
        n_list=get_exp("n_list", _int_list, ()),
        n_star=get_exp("n_star", int, None),
        dt_list=get_exp("dt_list", _float_list, ()),
        dt_star=get_exp("dt_star", float, None),
        record=get_exp("record", str, "final"),
        stride=get_exp("stride", int, 1),
        out_dir=str(overrides.get("out") or (
            rd.get("output", "directory", str, "out")
            if parser.has_section("output") else "out"
        )),
        formats=(rd.get("output", "formats", _str_list, ("csv", "svg"))
                 if parser.has_section("output") else ("csv", "svg")),
        raw_text=text,
    )
    if cfg.record not in ("final", "trajectory"):
        raise ConfigError(
            f"record must be 'final' or 'trajectory' "
            f"({rd._line_of('experiment', 'record')})"
        )
    if cfg.trials < 1:
        raise ConfigError("trials must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads must be positive")
    cfg.resolved = {
        "kernel": cfg.kernel_label,
        "interaction": interaction.kind,
        "drift": drift.kind,
        "noise": cfg.noise_label,
        "T": horizon,
        "mode": cfg.mode,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "n": cfg.n,
        "dt": cfg.dt,
        "n_list": list(cfg.n_list),
        "n_star": cfg.n_star,
        "dt_list": list(cfg.dt_list),
        "dt_star": cfg.dt_star,
        "record": cfg.record,
        "stride": cfg.stride,
        "out_dir": cfg.out_dir,
        "formats": list(cfg.formats),
    }
    return cfg


def experiment_config(cfg: RunConfig, mode: str, error_mode: str = "final") -> ExperimentConfig:
    """Build the experiments-module config for converge-n / converge-dt runs."""
    if cfg.mode is not None and cfg.mode != mode:
        raise ConfigError(
            f"config declares mode={cfg.mode!r} but the command needs {mode!r}"
        )
    if mode == "vary_n":
        if cfg.dt is None or not cfg.n_list or cfg.n_star is None:
            raise ConfigError("converge-n needs dt, n_list, and n_star in [experiment]")
        return ExperimentConfig(
            problem=cfg.problem, mode="vary_n", trials=cfg.trials, seed=cfg.seed,
            s=cfg.s, dt=cfg.dt, n_list=cfg.n_list, n_star=cfg.n_star,
            threads=cfg.threads, error_mode=error_mode,
        )
    if cfg.n is None or not cfg.dt_list or cfg.dt_star is None:
        raise ConfigError("converge-dt needs n, dt_list, and dt_star in [experiment]")
    return ExperimentConfig(
        problem=cfg.problem, mode="vary_dt", trials=cfg.trials, seed=cfg.seed,
        s=cfg.s, n=cfg.n, dt_list=cfg.dt_list, dt_star=cfg.dt_star,
        threads=cfg.threads, error_mode=error_mode,
    )
