"""Configuration files for hardware, hyperparameters and graph specs.

A config file is a list of ``key = value`` lines grouped in sections::

    [hardware]
    t_cz_ns = 10
    t2_ns = 4400

    [hyperparameters]
    episodes = 300
    seed = 7

    [graph small-path]
    kind = path
    n = 10

A file without any section header is read as a hardware section.
"""
from collections import namedtuple
import configparser
import logging
import os

import voluptuous as vol

from .agent import Hyperparams
from .common import PhotonSeqError
from .compiler import HardwareParams
from .const import (
    CONF_ALPHA,
    CONF_BATCH_SIZE,
    CONF_CAPACITY,
    CONF_COLS,
    CONF_DEGREE,
    CONF_EDGES,
    CONF_EPISODES,
    CONF_EPSILON0,
    CONF_EPSILON_DECAY,
    CONF_EPSILON_FLOOR,
    CONF_FILE,
    CONF_GAMMA,
    CONF_HIDDEN,
    CONF_KIND,
    CONF_LOSS,
    CONF_MAX_GRAD_NORM,
    CONF_N,
    CONF_P,
    CONF_RECEPTIVE_FRACTION,
    CONF_ROWS,
    CONF_SEED,
    CONF_SIGMA_CZ,
    CONF_STEP_SIZE,
    CONF_T2,
    CONF_T_1Q,
    CONF_T_CZ,
    CONF_T_EMIT,
    CONF_T_MEAS,
    CONF_TARGET_SYNC,
    DEFAULT_ALPHA,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CAPACITY,
    DEFAULT_EPISODES,
    DEFAULT_EPSILON0,
    DEFAULT_EPSILON_DECAY,
    DEFAULT_EPSILON_FLOOR,
    DEFAULT_GAMMA,
    DEFAULT_HIDDEN,
    DEFAULT_LOSS,
    DEFAULT_RECEPTIVE_FRACTION,
    DEFAULT_SEED,
    DEFAULT_SIGMA_CZ,
    DEFAULT_STEP_SIZE,
    DEFAULT_T2,
    DEFAULT_T_1Q,
    DEFAULT_T_CZ,
    DEFAULT_T_EMIT,
    DEFAULT_T_MEAS,
    DEFAULT_TARGET_SYNC,
    GRAPH_KINDS,
    SECTION_GRAPH,
    SECTION_HARDWARE,
    SECTION_HYPERPARAMETERS,
)

_LOGGER = logging.getLogger(__name__)

NON_NEGATIVE = vol.All(vol.Coerce(float), vol.Range(min=0))
POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
PROBABILITY = vol.All(vol.Coerce(float), vol.Range(min=0, max=1))
POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))

HARDWARE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_T_EMIT, default=DEFAULT_T_EMIT): NON_NEGATIVE,
        vol.Optional(CONF_T_1Q, default=DEFAULT_T_1Q): NON_NEGATIVE,
        vol.Optional(CONF_T_CZ, default=DEFAULT_T_CZ): NON_NEGATIVE,
        vol.Optional(CONF_T_MEAS, default=DEFAULT_T_MEAS): NON_NEGATIVE,
        vol.Optional(CONF_T2, default=DEFAULT_T2): POSITIVE,
        vol.Optional(CONF_SIGMA_CZ, default=DEFAULT_SIGMA_CZ): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)
        ),
        vol.Optional(CONF_LOSS, default=DEFAULT_LOSS): NON_NEGATIVE,
    }
)


def _batch_fits_buffer(conf):
    if conf[CONF_BATCH_SIZE] > conf[CONF_CAPACITY]:
        raise vol.Invalid(
            f"{CONF_BATCH_SIZE} ({conf[CONF_BATCH_SIZE]}) exceeds "
            f"{CONF_CAPACITY} ({conf[CONF_CAPACITY]})"
        )
    return conf


HYPERPARAMS_SCHEMA = vol.All(
    vol.Schema(
        {
            vol.Optional(CONF_EPISODES, default=DEFAULT_EPISODES): NON_NEGATIVE_INT,
            vol.Optional(CONF_CAPACITY, default=DEFAULT_CAPACITY): POSITIVE_INT,
            vol.Optional(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): POSITIVE_INT,
            vol.Optional(CONF_TARGET_SYNC, default=DEFAULT_TARGET_SYNC): POSITIVE_INT,
            vol.Optional(CONF_EPSILON0, default=DEFAULT_EPSILON0): PROBABILITY,
            vol.Optional(CONF_EPSILON_DECAY, default=DEFAULT_EPSILON_DECAY): vol.All(
                vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)
            ),
            vol.Optional(
                CONF_EPSILON_FLOOR, default=DEFAULT_EPSILON_FLOOR
            ): PROBABILITY,
            vol.Optional(CONF_GAMMA, default=DEFAULT_GAMMA): PROBABILITY,
            vol.Optional(CONF_ALPHA, default=DEFAULT_ALPHA): NON_NEGATIVE,
            vol.Optional(CONF_STEP_SIZE, default=DEFAULT_STEP_SIZE): POSITIVE,
            vol.Optional(
                CONF_RECEPTIVE_FRACTION, default=DEFAULT_RECEPTIVE_FRACTION
            ): vol.All(vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)),
            vol.Optional(CONF_SEED, default=DEFAULT_SEED): NON_NEGATIVE_INT,
            vol.Optional(CONF_HIDDEN, default=DEFAULT_HIDDEN): POSITIVE_INT,
            vol.Optional(CONF_MAX_GRAD_NORM, default=0.0): NON_NEGATIVE,
        }
    ),
    _batch_fits_buffer,
)


def _kind_or_file(conf):
    if (CONF_KIND in conf) == (CONF_FILE in conf):
        raise vol.Invalid(f"give exactly one of '{CONF_KIND}' or '{CONF_FILE}'")
    if CONF_KIND in conf and CONF_N not in conf:
        raise vol.Invalid(f"'{CONF_N}' is required with '{CONF_KIND}'")
    return conf


GRAPH_SCHEMA = vol.All(
    vol.Schema(
        {
            vol.Optional(CONF_KIND): vol.In(GRAPH_KINDS),
            vol.Optional(CONF_N): POSITIVE_INT,
            vol.Optional(CONF_SEED, default=0): NON_NEGATIVE_INT,
            vol.Optional(CONF_ROWS): POSITIVE_INT,
            vol.Optional(CONF_COLS): POSITIVE_INT,
            vol.Optional(CONF_DEGREE): NON_NEGATIVE_INT,
            vol.Optional(CONF_P): PROBABILITY,
            vol.Optional(CONF_EDGES): NON_NEGATIVE_INT,
            vol.Optional(CONF_FILE): str,
        }
    ),
    _kind_or_file,
)

RunConfig = namedtuple("RunConfig", "hardware hyperparams graphs")


def _validate(schema, data, section):
    try:
        return schema(data)
    except vol.Invalid as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def hardware_from_config(conf):
    """Validate a hardware mapping and return HardwareParams."""
    conf = _validate(HARDWARE_SCHEMA, dict(conf), SECTION_HARDWARE)
    return HardwareParams(
        t_emit=conf[CONF_T_EMIT],
        t_1q=conf[CONF_T_1Q],
        t_cz=conf[CONF_T_CZ],
        t_meas=conf[CONF_T_MEAS],
        t2=conf[CONF_T2],
        sigma_cz=conf[CONF_SIGMA_CZ],
        loss_db_per_km=conf[CONF_LOSS],
    )


def hyperparams_from_config(conf):
    """Validate a hyperparameter mapping and return Hyperparams."""
    conf = _validate(HYPERPARAMS_SCHEMA, dict(conf), SECTION_HYPERPARAMETERS)
    return Hyperparams(**conf)


def graph_from_config(name, conf, base_dir="."):
    """Validate one graph section; file paths are resolved against base_dir."""
    conf = _validate(GRAPH_SCHEMA, dict(conf), f"{SECTION_GRAPH} {name}")
    if CONF_FILE in conf:
        path = conf[CONF_FILE]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.isfile(path):
            raise ConfigError(f"[{SECTION_GRAPH} {name}] missing graph file {path}")
        conf[CONF_FILE] = path
    return conf


def parse_sections(text):
    """Return {section name: {key: value}} for a config document."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), strict=True
    )
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = f"[{SECTION_HARDWARE}]\n{text}"
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _read(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_hardware(path=None):
    """Return HardwareParams from a config file, or the defaults."""
    if path is None:
        return hardware_from_config({})
    sections = parse_sections(_read(path))
    return hardware_from_config(sections.get(SECTION_HARDWARE, {}))


def load_run_config(path):
    """Read a training config file into a RunConfig.

    Every graph section is validated, and graph files checked for existence,
    before anything runs.
    """
    sections = parse_sections(_read(path))
    base_dir = os.path.dirname(os.path.abspath(path))
    graphs = []
    for section, values in sections.items():
        if section in (SECTION_HARDWARE, SECTION_HYPERPARAMETERS):
            continue
        prefix, _, name = section.partition(" ")
        if prefix != SECTION_GRAPH or not name.strip():
            raise ConfigError(f"unknown section [{section}]")
        graphs.append((name.strip(), graph_from_config(name.strip(), values, base_dir)))
    if not graphs:
        raise ConfigError("config names no [graph ...] sections")
    run = RunConfig(
        hardware=hardware_from_config(sections.get(SECTION_HARDWARE, {})),
        hyperparams=hyperparams_from_config(sections.get(SECTION_HYPERPARAMETERS, {})),
        graphs=graphs,
    )
    _LOGGER.debug("Loaded run config %s with %d graphs", path, len(graphs))
    return run


class ConfigError(PhotonSeqError):
    """Error to indicate an invalid configuration."""
