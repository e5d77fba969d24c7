from __future__ import annotations

import pytest

from modeseek import TableModel, Vocabulary


@pytest.fixture
def ab_vocab() -> Vocabulary:
    return Vocabulary.build(["a", "b"])


@pytest.fixture
def sevenseq_model(ab_vocab: Vocabulary) -> TableModel:
    # prefix-independent rows, max_len 2: exactly 7 complete sequences
    return TableModel(ab_vocab, 2, 0, {}, {"a": 0.5, "b": 0.3, "</s>": 0.2})


@pytest.fixture
def garden_vocab() -> Vocabulary:
    return Vocabulary.build(["a", "b", "c", "d"])


@pytest.fixture
def garden_model(garden_vocab: Vocabulary) -> TableModel:
    # locally attractive first step that the globally best sequence avoids
    return TableModel(
        garden_vocab,
        2,
        1,
        {"g": {"": {"a": 0.6, "b": 0.4}, "a": {"c": 0.5, "d": 0.5}, "b": {"</s>": 1.0}}},
        {"</s>": 1.0},
    )


@pytest.fixture
def uniform_model() -> TableModel:
    vocab = Vocabulary.build(["a", "b"])
    third = 1.0 / 3.0
    return TableModel(vocab, 2, 0, {}, {"a": third, "b": third, "</s>": third})


@pytest.fixture
def chain_model() -> TableModel:
    # deterministic chain: "a b </s>" carries all probability
    vocab = Vocabulary.build(["a", "b"])
    return TableModel(
        vocab,
        3,
        1,
        {"c": {"": {"a": 1.0}, "a": {"b": 1.0}, "b": {"</s>": 1.0}}},
        {"</s>": 1.0},
    )
