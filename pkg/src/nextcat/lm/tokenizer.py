"""Word-level tokenizer built from the instruction corpus.

Text splits into runs of letters, single punctuation marks, and numbers; a
number keeps its internal ``.`` and ``-`` (``39.82``, ``2015-03-28``) so
dates and amounts cost one token each. Rare tokens map to UNK.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

TOKEN_RE = re.compile(r"\d+(?:[.\-]\d+)*|[A-Za-z]+|[^\sA-Za-z\d]")
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


def normalize(text: str) -> str:
    return " ".join(tokenize(text))


class Tokenizer:
    def __init__(self, vocab: Sequence[str], max_len: int = 256):
        if tuple(vocab[:len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        self.vocab = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.max_len = max_len

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 3, max_len: int = 256,
              required: Iterable[str] = (), max_size: int | None = None) -> "Tokenizer":
        """Vocabulary of tokens seen ``min_freq`` times, most frequent first.

        Tokens of ``required`` strings are always included, even past ``max_size``.
        """
        counts = Counter(tok for t in texts for tok in tokenize(t))
        forced = {tok for t in required for tok in tokenize(t)}
        keep = [tok for tok, n in counts.items() if n >= min_freq or tok in forced]
        keep += sorted(forced - set(keep))
        keep.sort(key=lambda tok: (-counts[tok], tok))
        if max_size is not None:
            budget = max(max_size - len(SPECIALS), 0)
            head = keep[:budget]
            keep = head + [tok for tok in keep[budget:] if tok in forced]
        return cls(list(SPECIALS) + keep, max_len)

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> list[int]:
        return [self.index.get(tok, UNK_ID) for tok in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.vocab[i] for i in ids if i >= len(SPECIALS) or i == UNK_ID)

    def to_json(self) -> str:
        return json.dumps({"max_len": self.max_len, "vocab": self.vocab}, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Tokenizer":
        obj = json.loads(text)
        return cls(obj["vocab"], obj["max_len"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
