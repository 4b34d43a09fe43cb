import math
import os

import pytest

import chunkflow

TINY = """
env = fractal
side = 9
iterations = 12
batch = 8
hidden = 8
embedding = 8
chunk_every = 4
chunker = increment
corpus_size = 16
logz_init = 0
elbo_samples = 50
"""


def test_parse_config_applies_defaults_and_overrides():
    cfg = chunkflow.parse_config("env = fractal\nside = 65\nsampler = gfn\n", {"seed": "7"})
    assert float(cfg["lr"]) == pytest.approx(1e-4)
    assert float(cfg["logz_lr"]) == pytest.approx(1e-3)
    assert cfg["seed"] == "7"


def test_config_errors_raise_value_error():
    with pytest.raises(ValueError):
        chunkflow.parse_config("env = graph\nbackward_policy = shortparse\n")


def test_echo_round_trips():
    echo = chunkflow.echo_config("env = rna\nlength = 20\n")
    assert chunkflow.echo_config(echo) == echo


def test_metrics():
    assert chunkflow.l1_distance([0.5, 0.5], [1.0, 0.0]) == pytest.approx(1.0)
    assert chunkflow.jsd([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert chunkflow.spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert chunkflow.shortest_parse([0, 1, 0, 1], [[0], [1], [0, 1]]) == 2
    assert chunkflow.bitseq_max_word_tiling("0000000011111111") == 2


def test_train_transfer_and_report(tmp_path):
    a = chunkflow.train(TINY, {"out_dir": str(tmp_path / "a"), "seed": "1"})
    b = chunkflow.train(TINY, {"out_dir": str(tmp_path / "b"), "seed": "1"})
    assert a["iterations"] == 12
    assert a["visited_states"] == 12 * 8
    assert a["chunk_events"] == [4, 8]
    assert a["loss"] == b["loss"]
    assert all(math.isfinite(v) for v in a["loss"])
    snapshot = os.path.join(a["dir"], "library", "final.json")
    assert "atomic actions" in chunkflow.inspect_library(snapshot)
    moved = chunkflow.transfer(snapshot, TINY, {"out_dir": str(tmp_path / "t")})
    assert moved["library_size"] == a["library_size"]
    chunkflow.report([a["dir"], b["dir"]], str(tmp_path / "report"))
    assert (tmp_path / "report" / "mode_curve.csv").exists()
