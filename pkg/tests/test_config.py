import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from tapa.config import (ExperimentConfig, dumps, load_config, loads, save_config,
                         shipped_text)
from tapa.errors import ConfigError


@pytest.mark.parametrize("name", ["quora", "paws", "semeval", "synthetic"])
def test_shipped_configs_round_trip(name, tmp_path):
    cfg = load_config(name)
    save_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg
    assert loads(dumps(cfg)) == cfg


def test_bare_name_with_suffix_resolves():
    assert load_config("quora.cfg") == load_config("quora")


def test_semeval_row():
    cfg = load_config("semeval")
    assert cfg.filters == (0, 0) and cfg.batch_size == 10
    assert cfg.learning_rate == 0.1 and cfg.num_topics == 90 and cfg.alpha_total == 0.1


def test_paws_matches_quora_except_format():
    diff = {k: v for k, v in dataclasses.asdict(load_config("paws")).items()
            if dataclasses.asdict(load_config("quora"))[k] != v}
    assert diff == {"data_format": "paws_tsv"}


def test_comments_and_blank_lines():
    cfg = loads("# header\n\nnum_topics = 12   # trailing\nfusion = late\n")
    assert cfg.num_topics == 12 and cfg.fusion == "late"


@pytest.mark.parametrize("text", [
    "bogus_key = 3\n", "num_topics 3\n", "topic_update = yes\n", "num_topics = many\n",
    "fusion = middle\n", "hidden_widths = 50, 100\n", "num_hidden_layers = 3\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/dir/x.cfg")


def test_fingerprint_tracks_content():
    a = ExperimentConfig()
    assert a.fingerprint() == ExperimentConfig().fingerprint()
    assert a.fingerprint() != a.replace(num_topics=71).fingerprint()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.floats(0.01, 100, allow_nan=False), st.booleans(),
       st.sampled_from(["early", "late"]), st.sampled_from(["word", "word+doc"]),
       st.floats(1e-4, 10), st.integers(1, 8), st.integers(1, 8))
def test_any_valid_config_round_trips(k, alpha, update, fusion, setting, lr, f1, f2):
    cfg = ExperimentConfig(num_topics=k, alpha_total=alpha, topic_update=update, fusion=fusion,
                           topic_setting=setting, learning_rate=lr, filters=(f1, f2)).validate()
    assert loads(dumps(cfg)) == cfg


def test_shipped_text_is_commented():
    assert shipped_text("quora").startswith("#")
