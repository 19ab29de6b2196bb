"""Flat ``section.key = value`` run configuration with typed defaults."""

import os

__all__ = ["ConfigError", "DEFAULTS", "parse_config_text", "load_config", "resolve", "format_manifest"]


class ConfigError(ValueError):
    """Bad or unknown configuration; the CLI maps it to exit code 2."""


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text):
    text = text.strip()
    return None if text.lower() in ("", "auto", "none") else int(text)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _str(text):
    return text.strip()


# key -> (default, parser); the default is stored already parsed
DEFAULTS = {
    "run.seed": (0, int),
    "run.threads": (None, _optional_int),
    "grid.shape": ("square", _str),
    "grid.side": (8, int),
    "grid.width": (8, int),
    "grid.height": (8, int),
    "grid.radius": (4, int),
    "grid.sectors": (4, int),
    "grid.file": ("", _str),
    "covariance.model": ("exponential", _str),
    "covariance.rho": (0.7, float),
    "covariance.csv": ("", _str),
    "design.n": (1, int),
    "design.m_max": (None, _optional_int),
    "design.clustering": ("", _str),
    "design.include_individual": (True, _bool),
    "design.eigen_tolerance": (1e-9, float),
    "design.zero_eigen_threshold": (1e-8, float),
    "design.kmeans_restarts": (10, int),
    "design.kmeans_max_iters": (100, int),
    "env.signal": (0.025, float),
    "env.covariate_law": ("uniform:0.5:1.5", _str),
    "cgc.batch_size": (20, int),
    "cgc.total_repetitions": (100, int),
    "cgc.shrinkage": (0.1, float),
    "cgc.covariance_mode": ("cumulative", _str),
    "cgc.regression": ("ridge", _str),
    "cgc.ridge_penalty": (1.0, float),
    "cgc.folds": (0, int),
    "cgc.initial_design": ("bisection", _str),
    "cgc.write_clusterings": (False, _bool),
    "estimate.batch": ("", _str),
    "estimate.folds": (2, int),
    "simulate.repetitions": (100, int),
    "simulate.mc_repetitions": (1000, int),
    "benchmark.methods": (["CGC", "OCGC", "GD", "ID"], _words),
    "benchmark.rhos": ([0.3, 0.7], _floats),
    "benchmark.ns": ([100], _ints),
    "benchmark.replications": (50, int),
    "benchmark.svg": (False, _bool),
    "benchmark.wall_time": (True, _bool),
}


def _format(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_format(v) for v in value)
    return str(value)


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns raw strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def load_config(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        return parse_config_text(fh.read(), source=path)


def resolve(*layers):
    """Merge raw string layers (later wins) over the defaults and parse every value."""
    merged = {}
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = value
    out = {}
    for key, (default, parse) in DEFAULTS.items():
        if key not in merged:
            out[key] = default
            continue
        try:
            out[key] = parse(merged[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return out


def format_manifest(config, subcommand, version):
    """Every resolved key, so the file can be fed back with ``--config``."""
    lines = [f"# cgcut {version}", f"# subcommand: {subcommand}"]
    lines += [f"{key} = {_format(config[key])}" for key in DEFAULTS]
    return "\n".join(lines) + "\n"
