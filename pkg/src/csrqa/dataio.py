"""Dataset ingestion into canonical QA pairs, and split statistics."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

from .errors import FormatError, ParseError

WIKIQA_HEADER = (
    "QuestionID",
    "Question",
    "DocumentID",
    "DocumentTitle",
    "SentenceID",
    "Sentence",
    "Label",
)

# Published split statistics: (questions, pairs, percent correct, printed decimals)
PUBLISHED_STATS = {
    ("trecqa", "train"): (94, 4718, 7.4, 1),
    ("trecqa", "dev"): (65, 1117, 18.4, 1),
    ("trecqa", "test"): (68, 1442, 17.2, 1),
    ("wikiqa", "train"): (2118, 20360, 5.11, 2),
    ("wikiqa", "dev"): (296, 2733, 5.12, 2),
    ("wikiqa", "test"): (633, 6165, 4.75, 2),
}


@dataclass(frozen=True)
class QAPair:
    qid: str
    aid: str
    question: str
    answer: str
    label: int


@dataclass(frozen=True)
class SplitStats:
    n_questions: int
    n_pairs: int
    pct_correct: float

    def format(self, decimals: int = 2) -> str:
        return f"{self.n_questions} {self.n_pairs} {100 * self.pct_correct:.{decimals}f}%"

    def matches(self, questions: int, pairs: int, pct: float, decimals: int) -> bool:
        """True when counts are equal and the percentage rounds to the printed value."""
        return (
            self.n_questions == questions
            and self.n_pairs == pairs
            and abs(round(100 * self.pct_correct, decimals) - pct) < 1e-9
        )


def _parse_label(raw: str, lineno: int, path) -> int:
    raw = raw.strip()
    if raw not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got {raw!r}", lineno, path)
    return int(raw)


def _check_pairs(pairs: list[QAPair], linenos: list[int], path) -> None:
    seen = set()
    questions: dict[str, str] = {}
    for pair, lineno in zip(pairs, linenos):
        key = (pair.qid, pair.aid)
        if key in seen:
            raise ParseError(f"duplicate (qid, aid) {key}", lineno, path)
        seen.add(key)
        first = questions.setdefault(pair.qid, pair.question)
        if first != pair.question:
            raise ParseError(f"question text differs from first row of {pair.qid!r}", lineno, path)


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as f:
        text = f.read()
    return text.split("\n")


def load_canonical_tsv(path) -> list[QAPair]:
    """Read a headerless 5-column TSV: qid, question, aid, answer, label."""
    pairs, linenos = [], []
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}", lineno, path)
        qid, question, aid, answer, label = fields
        pairs.append(QAPair(qid, aid, question, answer, _parse_label(label, lineno, path)))
        linenos.append(lineno)
    _check_pairs(pairs, linenos, path)
    return pairs


def load_wikiqa_tsv(path) -> list[QAPair]:
    """Read a WikiQA release file (header row, 7 columns)."""
    lines = _read_lines(path)
    header = tuple(lines[0].rstrip("\r").split("\t")) if lines else ()
    if header != WIKIQA_HEADER:
        missing = [c for c in WIKIQA_HEADER if c not in header]
        detail = f"missing columns {missing}" if missing else f"unexpected header {header}"
        raise FormatError(f"{path}: not a WikiQA TSV ({detail})")
    pairs, linenos = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 7:
            raise ParseError(f"expected 7 tab-separated fields, got {len(fields)}", lineno, path)
        row = dict(zip(WIKIQA_HEADER, fields))
        pairs.append(
            QAPair(
                qid=row["QuestionID"],
                aid=row["SentenceID"],
                question=row["Question"],
                answer=row["Sentence"],
                label=_parse_label(row["Label"], lineno, path),
            )
        )
        linenos.append(lineno)
    _check_pairs(pairs, linenos, path)
    return pairs


def load_pairs(path, dataset: str = "canonical") -> list[QAPair]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if dataset == "wikiqa":
        return load_wikiqa_tsv(path)
    if dataset in ("canonical", "trecqa"):
        return load_canonical_tsv(path)
    raise ValueError(f"unknown dataset kind {dataset!r}")


def write_canonical_tsv(pairs: Iterable[QAPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in pairs:
            for value in (p.qid, p.question, p.aid, p.answer):
                if "\t" in value or "\n" in value:
                    raise ValueError(f"field contains tab or newline: {value!r}")
            f.write(f"{p.qid}\t{p.question}\t{p.aid}\t{p.answer}\t{p.label}\n")


def compute_stats(pairs: Iterable[QAPair]) -> SplitStats:
    pairs = list(pairs)
    n_pairs = len(pairs)
    n_questions = len({p.qid for p in pairs})
    pct = sum(p.label for p in pairs) / n_pairs if n_pairs else 0.0
    return SplitStats(n_questions=n_questions, n_pairs=n_pairs, pct_correct=pct)


def group_by_question(pairs: Iterable[QAPair]) -> dict[str, list[QAPair]]:
    groups: dict[str, list[QAPair]] = {}
    for p in pairs:
        groups.setdefault(p.qid, []).append(p)
    return groups
