"""Fixed 71-symbol character alphabet and sentence encoding."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

LETTERS = "abcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"
PUNCTUATION = ",;.!?:'\"/\\|_@#$%^&*~`+-=<>()[]{}"
PAD_SYMBOL = "<pad>"
UNK_SYMBOL = "<unk>"
NEWLINE = "\n"
WHITESPACE = frozenset(" \t")

ALPHABET_SIZE = 71


@dataclass(frozen=True)
class CharAlphabet:
    symbols: tuple[str, ...]
    pad_index: int
    unk_index: int
    index_of: dict[str, int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.symbols)

    def digest(self) -> str:
        """sha256 over the symbol ordering; stored in checkpoints."""
        h = hashlib.sha256()
        for s in self.symbols:
            h.update(s.encode("utf-8") + b"\x00")
        return h.hexdigest()

    def printable(self, index: int) -> str:
        """Symbol text for an index, with pad rendered as a space."""
        if index == self.pad_index:
            return " "
        return self.symbols[index]

    def dump_lines(self) -> list[str]:
        """One printable line per symbol; newline is written as ``\\n``."""
        return ["\\n" if s == NEWLINE else s for s in self.symbols]


def build_alphabet() -> CharAlphabet:
    symbols = (PAD_SYMBOL, *LETTERS, *DIGITS, *PUNCTUATION, NEWLINE, UNK_SYMBOL)
    assert len(symbols) == ALPHABET_SIZE, len(symbols)
    index_of = {s: i for i, s in enumerate(symbols)}
    return CharAlphabet(symbols=symbols, pad_index=0, unk_index=ALPHABET_SIZE - 1, index_of=index_of)


@dataclass(frozen=True)
class EncodedSentence:
    indices: np.ndarray
    true_len: int

    def __len__(self) -> int:
        return len(self.indices)


def encode(text: str, max_len: int, alphabet: CharAlphabet | None = None) -> EncodedSentence:
    """Map text to a fixed-length index vector.

    Lowercases, maps spaces/tabs to padding and anything outside the
    alphabet to the unknown index, then truncates or right-pads.
    """
    if max_len <= 0:
        raise ValueError(f"max_len must be positive, got {max_len}")
    if alphabet is None:
        alphabet = _DEFAULT
    out = np.full(max_len, alphabet.pad_index, dtype=np.int64)
    # str.lower() can change length for some code points; those map to unk anyway
    chars = text.lower()[:max_len]
    for j, ch in enumerate(chars):
        if ch in WHITESPACE:
            out[j] = alphabet.pad_index
        else:
            out[j] = alphabet.index_of.get(ch, alphabet.unk_index)
    out.setflags(write=False)
    return EncodedSentence(indices=out, true_len=len(chars))


def decode_printable(sentence: EncodedSentence, alphabet: CharAlphabet | None = None) -> str:
    if alphabet is None:
        alphabet = _DEFAULT
    return "".join(alphabet.printable(int(i)) for i in sentence.indices[: sentence.true_len])


def encode_many(texts, max_len: int, alphabet: CharAlphabet | None = None) -> np.ndarray:
    """Stack encodings of several texts into an (N, max_len) int array."""
    rows = [encode(t, max_len, alphabet).indices for t in texts]
    if not rows:
        return np.zeros((0, max_len), dtype=np.int64)
    return np.stack(rows)


_DEFAULT = build_alphabet()
