from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest

from modeseek import (
    IncompleteSequence,
    PrefixComplete,
    Sequence,
    SynthSpec,
    TableModel,
    Vocabulary,
    gen_synthetic,
    load_model,
    logprob_sequence,
    save_model,
    synth_dataset,
    validate_model,
)
from modeseek.models import ROW_SUM_TOL


def test_uniform_model_scores_each_token_equally(uniform_model):
    row = uniform_model.score_step("x", Sequence())
    third = math.log(1.0 / 3.0)
    assert np.allclose(row, [third, third, third], atol=1e-12)


def test_forced_eos_row_at_max_len(uniform_model):
    eos = uniform_model.vocab.eos_index
    row = uniform_model.score_step("x", Sequence((0, 1)))
    assert row[eos] == 0.0
    assert all(math.isinf(row[i]) for i in range(len(row)) if i != eos)
    # beyond max_len the row stays forced
    assert uniform_model.row_for("x", (0, 1, 0))[eos] == 0.0


def test_score_step_rejects_complete_prefix(uniform_model):
    eos = uniform_model.vocab.eos_index
    with pytest.raises(PrefixComplete):
        uniform_model.score_step("x", Sequence((0, eos)))


def test_score_step_is_pure(sevenseq_model):
    a = sevenseq_model.score_step("x", Sequence((0,)))
    b = sevenseq_model.score_step("x", Sequence((0,)))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        a[0] = 0.0  # rows are read-only


def test_table_rows_match_declared_probabilities(sevenseq_model):
    row = sevenseq_model.score_step("x", Sequence())
    assert abs(row[0] - math.log(0.5)) <= 1e-12
    assert abs(row[1] - math.log(0.3)) <= 1e-12
    assert abs(row[2] - math.log(0.2)) <= 1e-12


def test_context_backoff_prefers_longest_stored_suffix():
    vocab = Vocabulary.build(["a", "b"])
    model = TableModel(
        vocab,
        4,
        2,
        {
            "s": {
                "": {"a": 0.5, "b": 0.5},
                "b": {"a": 0.25, "b": 0.25, "</s>": 0.5},
                "a b": {"</s>": 1.0},
            }
        },
        {"a": 1.0},
    )
    # longest suffix "a b" wins over "b"
    row = model.row_for("s", (0, 1))
    assert row[vocab.eos_index] == 0.0
    # suffix "b" when the two-token context is not stored
    row = model.row_for("s", (1, 1))
    assert abs(row[vocab.eos_index] - math.log(0.5)) <= 1e-12
    # root context for the empty prefix
    row = model.row_for("s", ())
    assert abs(row[0] - math.log(0.5)) <= 1e-12
    # unknown source falls back entirely
    row = model.row_for("missing", (0,))
    assert row[0] == 0.0


def test_logprob_sequence_fixtures(sevenseq_model):
    # "a a </s>" crosses the forced-eos step: 0.5 * 0.5 * 1
    assert abs(logprob_sequence(sevenseq_model, "x", Sequence((0, 0, 2))) - math.log(0.25)) <= 1e-12
    assert abs(logprob_sequence(sevenseq_model, "x", Sequence((2,))) - math.log(0.2)) <= 1e-12


def test_logprob_sequence_rejects_incomplete(sevenseq_model):
    with pytest.raises(IncompleteSequence):
        logprob_sequence(sevenseq_model, "x", Sequence((0, 1)))
    with pytest.raises(IncompleteSequence):
        logprob_sequence(sevenseq_model, "x", Sequence())


def test_validate_model_accepts_tolerant_rows():
    vocab = Vocabulary.build(["a"])
    model = TableModel(vocab, 2, 0, {}, {"a": 0.5, "</s>": 0.5000004})
    assert validate_model(model) == []


def test_validate_model_reports_bad_rows_as_data():
    vocab = Vocabulary.build(["a"])
    model = TableModel(
        vocab,
        2,
        1,
        {"s": {"": {"a": 0.6, "</s>": 0.3}, "a": {"zzz": 1.0}}},
        {"a": 0.5, "</s>": 0.5},
    )
    violations = validate_model(model)
    assert any("''" in v and "sums to" in v for v in violations)
    assert any("'zzz'" in v for v in violations)


def test_validate_model_reports_negative_probabilities():
    vocab = Vocabulary.build(["a"])
    model = TableModel(vocab, 2, 0, {}, {"a": 1.5, "</s>": -0.5})
    assert any("negative" in v for v in violations_of(model))


def violations_of(model):
    return validate_model(model)


MODEL_DOC = {
    "vocab": ["a", "b", "</s>"],
    "eos": "</s>",
    "context_order": 1,
    "max_len": 2,
    "fallback": {"a": 0.5, "b": 0.3, "</s>": 0.2},
    "sources": {"s": {"": {"a": 0.9, "</s>": 0.1}}},
}


def test_load_model_roundtrips_byte_identically(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(MODEL_DOC) + "\n")
    model = load_model(path)
    second = tmp_path / "m2.json"
    save_model(model, second)
    model2 = load_model(second)
    third = tmp_path / "m3.json"
    save_model(model2, third)
    assert second.read_bytes() == third.read_bytes()
    assert model.source_probs == model2.source_probs
    assert model.fallback_probs == model2.fallback_probs


def test_load_model_aborts_on_validation_failure(tmp_path):
    doc = dict(MODEL_DOC, fallback={"a": 0.5, "</s>": 0.4})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="sums to"):
        load_model(path)


def test_load_model_renormalize_rescales_sum_violations(tmp_path):
    doc = dict(MODEL_DOC, fallback={"a": 1.0, "</s>": 1.0})
    path = tmp_path / "fix.json"
    path.write_text(json.dumps(doc))
    model = load_model(path, renormalize=True)
    assert model.fallback_probs == {"a": 0.5, "</s>": 0.5}
    assert validate_model(model) == []


def test_load_model_renormalize_never_repairs_unknown_tokens(tmp_path):
    doc = dict(MODEL_DOC, sources={"s": {"": {"zzz": 1.0}}})
    path = tmp_path / "unk.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="zzz"):
        load_model(path, renormalize=True)


def test_load_model_requires_declared_eos(tmp_path):
    doc = dict(MODEL_DOC, eos="<eos>")
    path = tmp_path / "eos.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="eos"):
        load_model(path)


def test_synth_spec_validates_ranges():
    good = dict(vocab_size=3, max_len=4, context_order=1, alpha=0.5, seed=0, num_sources=1)
    SynthSpec(**good)
    for bad in (
        dict(good, vocab_size=1),
        dict(good, max_len=0),
        dict(good, context_order=-1),
        dict(good, alpha=0.0),
        dict(good, num_sources=0),
    ):
        with pytest.raises(ValueError):
            SynthSpec(**bad)


def test_gen_synthetic_is_deterministic_and_file_stable(tmp_path):
    spec = SynthSpec(vocab_size=3, max_len=4, context_order=1, alpha=0.5, seed=99, num_sources=3)
    m1, m2 = gen_synthetic(spec), gen_synthetic(spec)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_model(m1, p1)
    save_model(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    other = gen_synthetic(SynthSpec(vocab_size=3, max_len=4, context_order=1, alpha=0.5, seed=100, num_sources=3))
    assert other.source_probs != m1.source_probs


def test_gen_synthetic_rows_cover_reachable_contexts():
    spec = SynthSpec(vocab_size=2, max_len=3, context_order=2, alpha=1.0, seed=5, num_sources=2)
    model = gen_synthetic(spec)
    assert set(model.source_probs) == {"src0", "src1"}
    table = model.source_probs["src0"]
    # context lengths 0..min(context_order, max_len - 1) over ordinary tokens
    assert set(table) == {"", "w0", "w1", "w0 w0", "w0 w1", "w1 w0", "w1 w1"}
    assert validate_model(model) == []


def test_gen_synthetic_context_cap_at_short_max_len():
    spec = SynthSpec(vocab_size=2, max_len=1, context_order=3, alpha=1.0, seed=5)
    model = gen_synthetic(spec)
    assert set(model.source_probs["src0"]) == {""}


def test_gen_synthetic_peaked_rows_concentrate_mass():
    # alpha near zero: rows put almost everything on one outcome
    spec = SynthSpec(vocab_size=5, max_len=8, context_order=2, alpha=0.01, seed=7, num_sources=40)
    model = gen_synthetic(spec)
    rows = [row for table in model.source_probs.values() for row in table.values()]
    assert len(rows) >= 1000
    mean_max = sum(max(row.values()) for row in rows) / len(rows)
    assert mean_max > 0.9


def test_gen_synthetic_flat_rows_approach_uniform_entropy():
    scipy_special = pytest.importorskip("scipy.special")
    spec = SynthSpec(vocab_size=5, max_len=8, context_order=2, alpha=5.0, seed=8, num_sources=40)
    model = gen_synthetic(spec)
    rows = [row for table in model.source_probs.values() for row in table.values()]
    assert len(rows) >= 1000
    entropies = [-sum(p * math.log(p) for p in row.values() if p > 0) for row in rows]
    mean_entropy = sum(entropies) / len(entropies)
    uniform = math.log(6)
    assert abs(mean_entropy - uniform) / uniform <= 0.10
    # analytic mean entropy of a symmetric Dirichlet draw
    k, alpha = 6, 5.0
    expected = scipy_special.digamma(k * alpha + 1) - scipy_special.digamma(alpha + 1)
    assert abs(mean_entropy - expected) / expected <= 0.02


def test_gen_synthetic_rows_normalize_on_random_probes():
    spec = SynthSpec(vocab_size=4, max_len=6, context_order=2, alpha=0.3, seed=21, num_sources=5)
    model = gen_synthetic(spec)
    rnd = random.Random(0)
    for _ in range(1000):
        src = f"src{rnd.randrange(5)}"
        length = rnd.randrange(0, model.max_len + 2)
        prefix = tuple(rnd.randrange(spec.vocab_size) for _ in range(length))
        total = float(np.exp(model.row_for(src, prefix)).sum())
        assert abs(total - 1.0) <= ROW_SUM_TOL


def test_extension_never_raises_logprob():
    # each appended token multiplies by a probability at most one
    spec = SynthSpec(vocab_size=4, max_len=6, context_order=1, alpha=0.5, seed=13, num_sources=3)
    model = gen_synthetic(spec)
    rnd = random.Random(1)
    for _ in range(300):
        src = f"src{rnd.randrange(3)}"
        ids: tuple[int, ...] = ()
        lp = 0.0
        while True:
            row = model.row_for(src, ids)
            w = rnd.randrange(len(model.vocab))
            step = float(row[w])
            new_lp = lp + step
            assert new_lp <= lp
            if step < 0.0:
                assert new_lp < lp
            if w == model.vocab.eos_index or math.isinf(new_lp):
                break
            ids, lp = ids + (w,), new_lp


def test_synth_dataset_samples_deterministic_references():
    spec = SynthSpec(vocab_size=3, max_len=4, context_order=1, alpha=1.0, seed=17, num_sources=4)
    model = gen_synthetic(spec)
    d1 = synth_dataset(model, spec, 3)
    d2 = synth_dataset(model, spec, 3)
    assert d1 == d2
    assert [it.item_id for it in d1] == ["src0", "src1", "src2", "src3"]
    assert all(len(it.references) == 3 for it in d1)
    assert all(it.source == (it.item_id,) for it in d1)
    eos = model.vocab.eos_token
    for it in d1:
        for ref in it.references:
            assert eos not in ref
            assert len(ref) <= model.max_len


def test_synth_dataset_reference_diversity_tracks_alpha():
    flat_spec = SynthSpec(vocab_size=4, max_len=5, context_order=1, alpha=5.0, seed=3, num_sources=30)
    peaked_spec = SynthSpec(vocab_size=4, max_len=5, context_order=1, alpha=0.05, seed=3, num_sources=30)
    from modeseek import uncertainty_records

    flat_records, _ = uncertainty_records(synth_dataset(gen_synthetic(flat_spec), flat_spec, 4))
    peaked_records, _ = uncertainty_records(synth_dataset(gen_synthetic(peaked_spec), peaked_spec, 4))
    flat_u = sum(r.u for r in flat_records) / len(flat_records)
    peaked_u = sum(r.u for r in peaked_records) / len(peaked_records)
    assert flat_u > peaked_u
