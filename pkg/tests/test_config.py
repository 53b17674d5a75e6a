"""Tests for config files."""
import os

import pytest

from photonseq.compiler import HardwareParams
from photonseq.config import (
    ConfigError,
    graph_from_config,
    hardware_from_config,
    hyperparams_from_config,
    load_hardware,
    load_run_config,
    parse_sections,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

RUN_CONFIG = """
[hardware]
t_cz_ns = 5   # faster gate

[hyperparameters]
episodes = 2
capacity = 32
batch_size = 4
hidden = 8

[graph line]
kind = path
n = 5

[graph tiny]
file = tiny.txt
"""


def test_headerless_file_is_hardware():
    sections = parse_sections("t_cz_ns = 3\nt2_ns = 100\n")
    assert sections == {"hardware": {"t_cz_ns": "3", "t2_ns": "100"}}


def test_hardware_defaults():
    assert load_hardware() == HardwareParams()
    assert hardware_from_config({}) == HardwareParams()


def test_shipped_hardware_file():
    hw = load_hardware(os.path.join(CONFIG_DIR, "hardware.conf"))
    assert hw == HardwareParams()


def test_shipped_training_file():
    run = load_run_config(os.path.join(CONFIG_DIR, "train.conf"))
    assert [name for name, _ in run.graphs] == ["path-10", "star-10", "cycle-10"]
    assert run.hyperparams.batch_size == 256


def test_hardware_values_are_coerced():
    hw = hardware_from_config({"t_cz_ns": "2.5", "sigma_cz": "0.9"})
    assert hw.t_cz == 2.5
    assert hw.sigma_cz == 0.9


@pytest.mark.parametrize(
    "conf",
    [{"t_cz": "1"}, {"t_cz_ns": "-1"}, {"t2_ns": "0"}, {"sigma_cz": "1.5"}],
)
def test_bad_hardware(conf):
    with pytest.raises(ConfigError, match=r"\[hardware\]"):
        hardware_from_config(conf)


def test_batch_must_fit_buffer():
    with pytest.raises(ConfigError, match="batch_size"):
        hyperparams_from_config({"capacity": "8", "batch_size": "16"})


def test_hyperparams_defaults():
    hp = hyperparams_from_config({"seed": "7"})
    assert hp.seed == 7
    assert hp.episodes == 300
    assert hp.receptive_fraction == 0.5


def test_zero_receptive_fraction_rejected():
    with pytest.raises(ConfigError):
        hyperparams_from_config({"receptive_fraction": "0"})


@pytest.mark.parametrize(
    "conf",
    [
        {},
        {"kind": "path"},
        {"kind": "path", "n": "4", "file": "x.txt"},
        {"kind": "hypercube", "n": "4"},
    ],
)
def test_bad_graph_sections(conf):
    with pytest.raises(ConfigError, match="graph g"):
        graph_from_config("g", conf)


def test_missing_graph_file(tmp_path):
    with pytest.raises(ConfigError, match="missing graph file"):
        graph_from_config("g", {"file": "nowhere.txt"}, str(tmp_path))


def test_load_run_config(tmp_path):
    (tmp_path / "tiny.txt").write_text("2 1\n0 1\n")
    path = tmp_path / "run.conf"
    path.write_text(RUN_CONFIG)
    run = load_run_config(str(path))
    assert run.hardware.t_cz == 5.0
    assert run.hyperparams.hidden == 8
    assert run.hyperparams.episodes == 2
    (line, line_conf), (tiny, tiny_conf) = run.graphs
    assert (line, line_conf["kind"], line_conf["n"]) == ("line", "path", 5)
    assert tiny == "tiny"
    assert tiny_conf["file"] == os.path.join(str(tmp_path), "tiny.txt")


def test_run_config_needs_graphs(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("[hyperparameters]\nepisodes = 1\n")
    with pytest.raises(ConfigError, match="no \\[graph"):
        load_run_config(str(path))


def test_unknown_section(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("[graph a]\nkind = path\nn = 3\n\n[extras]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_run_config(str(path))


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(str(tmp_path / "absent.conf"))
    path = tmp_path / "dup.conf"
    path.write_text("[hardware]\nt2_ns = 1\nt2_ns = 2\n")
    with pytest.raises(ConfigError, match="unreadable"):
        load_hardware(str(path))
