"""Word overlap and IDF-weighted word overlap between question and answer."""
from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError, ParseError

_STRIP = string.punctuation


@dataclass(frozen=True)
class IdfTable:
    idf: dict[str, float]
    n_docs: int

    @property
    def default_idf(self) -> float:
        return math.log(self.n_docs + 1) + 1.0

    def __getitem__(self, word: str) -> float:
        return self.idf.get(word, self.default_idf)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"#n_docs\t{self.n_docs}\n")
            for word in sorted(self.idf):
                f.write(f"{word}\t{self.idf[word]!r}\n")

    @classmethod
    def load(cls, path) -> "IdfTable":
        with open(path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        head = lines[0].split("\t")
        if len(head) != 2 or head[0] != "#n_docs":
            raise ParseError("expected '#n_docs<TAB>N' header", 1, path)
        idf = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            word, _, value = line.rpartition("\t")
            try:
                idf[word] = float(value)
            except ValueError:
                raise ParseError(f"bad idf value {value!r}", lineno, path) from None
        return cls(idf=idf, n_docs=int(head[1]))

    def to_dict(self) -> dict:
        return {"n_docs": self.n_docs, "idf": self.idf}

    @classmethod
    def from_dict(cls, d: dict) -> "IdfTable":
        return cls(idf=dict(d["idf"]), n_docs=int(d["n_docs"]))


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation, drop empties."""
    tokens = (tok.strip(_STRIP) for tok in text.lower().split())
    return [t for t in tokens if t]


def word_overlap(q_tokens: Iterable[str], a_tokens: Iterable[str]) -> float:
    """|Q & A| / (|Q| + |A|) over token sets, in [0, 0.5]."""
    q, a = set(q_tokens), set(a_tokens)
    denom = len(q) + len(a)
    return len(q & a) / denom if denom else 0.0


def build_idf(corpus) -> IdfTable:
    """Document frequencies with one document per training pair (its answer sentence).

    idf(w) = ln((n_docs + 1) / (df(w) + 1)) + 1
    """
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot build an IDF table from an empty corpus")
    df: Counter[str] = Counter()
    for pair in corpus:
        df.update(set(tokenize(pair.answer)))
    n = len(corpus)
    idf = {w: math.log((n + 1) / (c + 1)) + 1.0 for w, c in df.items()}
    return IdfTable(idf=idf, n_docs=n)


def idf_overlap(q_tokens: Iterable[str], a_tokens: Iterable[str], table: IdfTable) -> float:
    """IDF mass of shared words over IDF mass of all words, in [0, 1]."""
    q, a = set(q_tokens), set(a_tokens)
    union = q | a
    if not union:
        return 0.0
    # sorted so the float sums do not depend on set iteration order
    shared = sum(table[w] for w in sorted(q & a))
    total = sum(table[w] for w in sorted(union))
    return shared / total


def pair_features(question: str, answer: str, table: IdfTable) -> np.ndarray:
    q, a = tokenize(question), tokenize(answer)
    return np.array([word_overlap(q, a), idf_overlap(q, a, table)])
