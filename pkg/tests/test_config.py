import json

import pytest

from edgeflow.config import ConfigError, RunConfig, load_config, parse_config


def test_fixture_config(data_dir):
    cfg = load_config(data_dir / "config.json")
    assert cfg.seed == 7 and cfg.train.seed == 7
    assert cfg.paths["graph"] == data_dir / "graph.tsv"
    assert cfg.edgeformer.num_layers == 2
    assert cfg.edgeformer.hidden_dim == cfg.seq2seq.hidden_dim == 16
    assert cfg.train.lr == 0.001 and cfg.train.batch_size == 10


def test_defaults():
    cfg = parse_config({})
    assert cfg.train.lr == 1e-4 and cfg.train.batch_size == 30 and cfg.train.grad_clip_norm == 5
    assert cfg.enhancement.node_percentile == 0.2 and cfg.enhancement.alignment_top_k == 5
    assert cfg.retrieval.two_hop_cap == 100
    assert cfg.edgeformer.num_layers == 3
    assert cfg.seq2seq.encoder_layers == cfg.seq2seq.decoder_layers == 2


@pytest.mark.parametrize("raw, match", [
    ({"bogus": 1}, "top-level"),
    ({"train": {"learning_rate": 1}}, "unknown key"),
    ({"train": {"seed": 3}}, "unknown key"),
    ({"paths": {"nope": "x"}}, "paths"),
    ({"paths": {"graph": 3}}, "string"),
    ({"seed": -1}, "seed"),
    ({"seed": True}, "seed"),
    ({"train": {"batch_size": 0}}, "train"),
    ({"vocab": {"max_size": 3}}, "vocab"),
    ({"decode": {"beam_width": 0}}, "decode"),
    ({"edgeformer": []}, "object"),
    ([], "object"),
])
def test_rejections(raw, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(raw)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n "x": }')
    with pytest.raises(ConfigError, match=":2:"):
        load_config(bad)


def test_relative_and_absolute_paths(tmp_path):
    cfg = parse_config({"paths": {"graph": "g.tsv", "corpus": "/abs/c.jsonl"}}, tmp_path)
    assert cfg.paths["graph"] == tmp_path / "g.tsv"
    assert str(cfg.paths["corpus"]) == "/abs/c.jsonl"


def test_overrides_and_seed_sync():
    cfg = RunConfig().with_overrides(train={"lr": 0.5, "max_steps": None}, seq2seq={"hidden_dim": 8})
    assert cfg.train.lr == 0.5 and cfg.train.max_steps is None
    assert cfg.edgeformer.hidden_dim == 8
    assert cfg.with_seed(11).train.seed == 11
    assert cfg.with_seed(None) is cfg
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(train={"batch_size": -2})


def test_to_dict_round_trips():
    cfg = parse_config({"seed": 3, "train": {"lr": 0.01}, "seq2seq": {"hidden_dim": 12}})
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
