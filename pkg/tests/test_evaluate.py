import json

import numpy as np
import pytest

from tapa.config import load_config
from tapa.errors import ContractError
from tapa.evaluate import (ablation_configs, config_diff, f1_score,
                           run_ablation)
from tapa.synthetic import make_splits


def brute_force(pred, gold):
    counts = {(1, 1): 0, (1, 0): 0, (0, 1): 0, (0, 0): 0}
    for p, g in zip(pred, gold):
        counts[(int(p), int(g))] += 1
    tp, fp, fn = counts[(1, 1)], counts[(1, 0)], counts[(0, 1)]
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return f, p, r, counts


def test_perfect():
    assert f1_score([1, 0, 1, 0], [1, 0, 1, 0]).f1 == 1.0


def test_arithmetic():
    r = f1_score([1, 1, 0, 0], [1, 0, 1, 0])
    assert (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5)
    assert (r.tp, r.fp, r.fn, r.tn) == (1, 1, 1, 1)


def test_all_negative_predictions():
    r = f1_score([0, 0, 0], [1, 0, 1])
    assert r.f1 == 0.0 and r.precision == 0.0 and r.recall == 0.0


def test_no_positives_anywhere():
    assert f1_score([0, 0], [0, 0]).f1 == 0.0


def test_length_mismatch():
    with pytest.raises(ContractError):
        f1_score([1, 0], [1])


def test_empty():
    with pytest.raises(ContractError):
        f1_score([], [])


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = int(rng.integers(1, 30))
        # skewed rates so zero-denominator cases show up often
        pred = (rng.random(n) < rng.choice([0.0, 0.1, 0.5, 1.0])).astype(int)
        gold = (rng.random(n) < rng.choice([0.0, 0.1, 0.5, 1.0])).astype(int)
        r = f1_score(pred, gold)
        f, p, rec, c = brute_force(pred, gold)
        assert (r.f1, r.precision, r.recall) == (f, p, rec)
        assert (r.tp, r.fp, r.fn, r.tn) == (c[(1, 1)], c[(1, 0)], c[(0, 1)], c[(0, 0)])
        assert r.size == n


def test_ablation_variants_differ_only_in_component():
    base = load_config("quora")
    diffs = [config_diff(base, cfg) for _, cfg in ablation_configs(base)]
    assert diffs == [{}, {"use_topics": False}, {"contextual": False}, {"fusion": "late"}]


def test_ablation_uses_supplied_late_config():
    base = load_config("quora")
    late = base.replace(fusion="late", num_topics=40)
    assert ablation_configs(base, late)[3][1] is late


def test_ablation_table_keeps_going_after_failed_row():
    splits = make_splits("lexical", (60, 20, 20), seed=1)
    # contextual vectors are absent, so every row with the channel on fails
    cfg = load_config("synthetic").replace(epochs=1, contextual=True, contextual_dim=2,
                                           lda_iterations=10)
    table = run_ablation(cfg, splits["train"], splits["dev"], splits["test"])
    names = [r.name for r in table.rows]
    assert names == ["full", "-topics", "-contextual", "late fusion"]
    assert table.rows[0].report is None and "contextual" in table.rows[0].error
    assert table.rows[2].report is not None
    assert len(table.to_tsv().strip().splitlines()) == 5
    assert len(json.loads(table.to_json())) == 4
    assert "failed" in table.to_text()
