from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from modeseek import Sequence, UnknownToken, Vocabulary, tokenize
from modeseek.core import DatasetItem, load_dataset, write_dataset


def test_tokenize_splits_on_whitespace_runs():
    assert tokenize("the  cat\tsat ") == ["the", "cat", "sat"]
    assert tokenize("") == []
    assert tokenize("  \n ") == []


def test_vocabulary_assigns_stable_positional_ids():
    vocab = Vocabulary(("a", "b", "</s>"), 2)
    assert len(vocab) == 3
    assert vocab.index_of("a") == 0
    assert vocab.index_of("b") == 1
    assert vocab.eos_token == "</s>"
    assert vocab.index_of("missing") is None
    assert "a" in vocab and "z" not in vocab


def test_vocabulary_build_appends_missing_eos():
    vocab = Vocabulary.build(["a", "b"])
    assert vocab.tokens == ("a", "b", "</s>")
    assert vocab.eos_index == 2
    again = Vocabulary.build(["a", "</s>", "b"])
    assert again.eos_index == 1


def test_vocabulary_rejects_bad_construction():
    with pytest.raises(ValueError):
        Vocabulary((), 0)
    with pytest.raises(ValueError):
        Vocabulary(("a", "a"), 0)
    with pytest.raises(ValueError):
        Vocabulary(("a", ""), 0)
    with pytest.raises(ValueError):
        Vocabulary(("a", "b"), 5)


def test_encode_fixture_and_unknown_token_position():
    vocab = Vocabulary(("a", "b", "</s>"), 2)
    assert vocab.encode(["a", "b"]).token_ids == (0, 1)
    assert vocab.encode([]).token_ids == ()
    with pytest.raises(UnknownToken) as err:
        vocab.encode(["c"])
    assert err.value.token == "c"
    assert err.value.position == 0
    with pytest.raises(UnknownToken) as err:
        vocab.encode(["a", "q", "b"])
    assert err.value.position == 1


@given(st.lists(st.sampled_from(["a", "b", "</s>", "xyz"]), max_size=12))
def test_decode_inverts_encode(tokens):
    vocab = Vocabulary.build(["a", "b", "xyz"])
    assert vocab.decode(vocab.encode(tokens)) == tokens


def test_sequence_completeness_rules():
    eos = 2
    assert not Sequence().is_complete(eos)
    assert not Sequence((0, 1)).is_complete(eos)
    assert Sequence((2,)).is_complete(eos)
    assert Sequence((0, 1, 2)).is_complete(eos)
    assert not Sequence((2, 0)).is_complete(eos)
    assert not Sequence((0, 2, 2)).is_complete(eos)


def test_sequence_extension_completes_on_eos():
    seq = Sequence((0,)).extended(1)
    assert seq.token_ids == (0, 1)
    assert not seq.is_complete(2)
    assert seq.extended(2).is_complete(2)
    assert len(seq) == 2
    assert list(seq) == [0, 1]


def test_load_dataset_tokenizes_sources_and_references(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text(
        json.dumps({"id": "x1", "source": "the  cat", "references": ["a b", ""]})
        + "\n"
        + json.dumps({"id": "x2", "source": "dog", "references": []})
        + "\n"
    )
    items = load_dataset(path)
    assert items[0].item_id == "x1"
    assert items[0].source == ("the", "cat")
    assert items[0].references == (("a", "b"), ())
    assert items[0].source_text == "the cat"
    assert items[1].references == ()


def test_load_dataset_reports_malformed_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "source": "a"}\nnot json\n')
    with pytest.raises(ValueError, match=":2"):
        load_dataset(path)


def test_load_dataset_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "dup.jsonl"
    row = json.dumps({"id": "x", "source": "a", "references": []})
    path.write_text(row + "\n" + row + "\n")
    with pytest.raises(ValueError, match="duplicate id"):
        load_dataset(path)


def test_load_dataset_requires_id_and_source(tmp_path):
    path = tmp_path / "missing.jsonl"
    path.write_text(json.dumps({"source": "a"}) + "\n")
    with pytest.raises(ValueError, match=":1"):
        load_dataset(path)


def test_dataset_roundtrip(tmp_path):
    items = [
        DatasetItem("i1", ("hello", "world"), (("x", "y"), ("z",))),
        DatasetItem("i2", ("s",), ()),
    ]
    path = tmp_path / "out.jsonl"
    write_dataset(path, items)
    assert load_dataset(path) == items
