"""Token, vocabulary, and scored-hypothesis primitives shared across the toolkit."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class UnknownToken(Exception):
    """A token that is not in the vocabulary was encountered while encoding."""

    def __init__(self, token: str, position: int):
        super().__init__(f"unknown token {token!r} at position {position}")
        self.token = token
        self.position = position


def tokenize(text: str) -> list[str]:
    """Split on runs of whitespace; never yields empty tokens."""
    return text.split()


@dataclass(frozen=True)
class Sequence:
    """Immutable tuple of token ids forming a (possibly empty) target prefix."""

    token_ids: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.token_ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.token_ids)

    def is_complete(self, eos_index: int) -> bool:
        """True iff the last id is `eos_index` and it occurs nowhere else."""
        ids = self.token_ids
        return bool(ids) and ids[-1] == eos_index and eos_index not in ids[:-1]

    def extended(self, token_id: int) -> "Sequence":
        return Sequence(self.token_ids + (token_id,))


@dataclass(frozen=True)
class Vocabulary:
    """Fixed ordered token inventory with a designated end-of-sentence token.

    Token ids are positions in `tokens` and never change after construction.
    """

    tokens: tuple[str, ...]
    eos_index: int
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("vocabulary must contain at least one token")
        ids: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if not tok:
                raise ValueError(f"empty token at position {i}")
            if tok in ids:
                raise ValueError(f"duplicate token {tok!r}")
            ids[tok] = i
        if not 0 <= self.eos_index < len(self.tokens):
            raise ValueError(f"eos_index {self.eos_index} outside [0, {len(self.tokens)})")
        object.__setattr__(self, "_ids", ids)

    @classmethod
    def build(cls, tokens: Iterable[str], eos_token: str = "</s>") -> "Vocabulary":
        """Vocabulary over `tokens`, appending `eos_token` if it is missing."""
        toks = tuple(tokens)
        if eos_token not in toks:
            toks = toks + (eos_token,)
        return cls(toks, toks.index(eos_token))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def eos_token(self) -> str:
        return self.tokens[self.eos_index]

    def index_of(self, token: str) -> int | None:
        """Id of `token`, or None when it is not in the vocabulary."""
        return self._ids.get(token)

    def encode(self, tokens: Iterable[str]) -> Sequence:
        ids = []
        for position, tok in enumerate(tokens):
            idx = self._ids.get(tok)
            if idx is None:
                raise UnknownToken(tok, position)
            ids.append(idx)
        return Sequence(tuple(ids))

    def decode(self, sequence: Sequence) -> list[str]:
        return [self.tokens[i] for i in sequence.token_ids]


@dataclass(frozen=True)
class Hypothesis:
    """A target sequence together with its total natural-log probability."""

    sequence: Sequence
    logprob: float


@dataclass(frozen=True)
class DatasetItem:
    """One evaluation item: a source sentence and its reference translations."""

    item_id: str
    source: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    @property
    def source_text(self) -> str:
        return " ".join(self.source)


def load_dataset(path: str | Path) -> list[DatasetItem]:
    """Read a JSONL dataset of {"id", "source", "references"} objects.

    Sources and references are whitespace-tokenized on load. Raises ValueError
    naming the offending line on malformed JSON, missing fields, or ids that
    repeat within the file.
    """
    items: list[DatasetItem] = []
    seen: set[str] = set()
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "source" not in obj:
                raise ValueError(f"{path}:{lineno}: expected an object with 'id' and 'source'")
            item_id = str(obj["id"])
            if item_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {item_id!r}")
            seen.add(item_id)
            refs = obj.get("references", [])
            if not isinstance(refs, list):
                raise ValueError(f"{path}:{lineno}: 'references' must be a list")
            items.append(
                DatasetItem(
                    item_id=item_id,
                    source=tuple(tokenize(str(obj["source"]))),
                    references=tuple(tuple(tokenize(str(r))) for r in refs),
                )
            )
    return items


def write_dataset(path: str | Path, items: Iterable[DatasetItem]) -> None:
    """Write items as JSONL, joining token tuples back with single spaces."""
    with open(path, "w", encoding="utf-8") as handle:
        for item in items:
            obj = {
                "id": item.item_id,
                "source": " ".join(item.source),
                "references": [" ".join(r) for r in item.references],
            }
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")
