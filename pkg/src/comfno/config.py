"""Experiment config files: INI-style sections of key=value lines.

Every hyperparameter has a named key; keys outside the schema are
rejected so a typo cannot silently fall back to a default. Missing keys
take the ExperimentConfig/FnoSettings/ComfnoSettings defaults.
"""

import configparser
import os

from .errors import FormatError
from .experiments import ComfnoSettings, ExperimentConfig, FnoSettings


def _int_tuple(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(int(p) for p in parts)


SCHEMA = {
    "experiment": {"id": str, "output": str},
    "dataset": {"train_count": int, "test_count": int, "resolution": int,
                "eps": float, "seed": int, "lengthscale": float,
                "fine_n": int, "fine_steps": int,
                "f_count": int, "eps_count": int,
                "eps_min": float, "eps_max": float},
    "fno": {"width": int, "modes": int, "depth": int,
            "lr": float, "epochs": int, "batch_size": int},
    "comfno": {"block_num": int, "width": int, "modes": int, "depth": int,
               "extra_width": int, "extra_modes": int, "extra_depth": int,
               "dense_hidden": _int_tuple,
               "lr": float, "epochs": int, "batch_size": int},
    "training": {"seed": int},
}

REQUIRED = (("experiment", "id"), ("experiment", "output"))


def parse_config_text(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise FormatError(f"malformed config {source}: {exc}") from exc

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise FormatError(f"unknown config section [{section}] in {source}")
        allowed = SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise FormatError(f"unknown key {key!r} in [{section}] of {source}")
            try:
                values[(section, key)] = allowed[key](raw)
            except ValueError as exc:
                raise FormatError(
                    f"bad value for {key!r} in [{section}] of {source}: {raw!r}"
                ) from exc
    for need in REQUIRED:
        if need not in values:
            raise FormatError(f"config {source} is missing [{need[0]}] {need[1]}")
    return values


def build_experiment(values, seed_override=None, output_override=None):
    fno_kwargs = {k: v for (s, k), v in values.items() if s == "fno"}
    comfno_kwargs = {k: v for (s, k), v in values.items() if s == "comfno"}
    kwargs = {k: v for (s, k), v in values.items() if s == "dataset"}
    kwargs["experiment"] = values[("experiment", "id")]
    kwargs["output"] = values[("experiment", "output")]
    if ("training", "seed") in values:
        kwargs["train_seed"] = values[("training", "seed")]
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
        kwargs["train_seed"] = int(seed_override)
    if output_override is not None:
        kwargs["output"] = output_override
    return ExperimentConfig(fno=FnoSettings(**fno_kwargs),
                            comfno=ComfnoSettings(**comfno_kwargs),
                            **kwargs)


def load_config(path, seed_override=None, output_override=None):
    """Parse a config file into an ExperimentConfig."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    values = parse_config_text(text, source=os.path.basename(path))
    return build_experiment(values, seed_override, output_override)
