"""MAP / MRR with question filtering, plus trec_eval run and qrel files."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import ContractError, EvaluationError


class Scored(NamedTuple):
    qid: str
    aid: str
    score: float
    label: int


@dataclass
class RankedQuery:
    qid: str
    entries: list[tuple[str, float, int]]

    @classmethod
    def from_unsorted(cls, qid: str, entries) -> "RankedQuery":
        # sorted() is stable: equal scores keep input order
        return cls(qid, sorted(entries, key=lambda e: -e[1]))

    @property
    def labels(self) -> list[int]:
        return [e[2] for e in self.entries]


@dataclass
class EvalReport:
    map: float
    mrr: float
    per_query: dict[str, tuple[float, float]] = field(default_factory=dict)
    n_evaluated: int = 0
    n_skipped: int = 0


def is_evaluable(query: RankedQuery) -> bool:
    labels = query.labels
    return any(l == 1 for l in labels) and any(l == 0 for l in labels)


def filter_questions(queries: Iterable[RankedQuery]):
    """Split into (evaluable, skipped); evaluable queries have both a correct and a wrong answer."""
    evaluable, skipped = [], []
    for q in queries:
        (evaluable if is_evaluable(q) else skipped).append(q)
    return evaluable, skipped


def average_precision(query: RankedQuery) -> float:
    if not is_evaluable(query):
        raise ContractError(f"query {query.qid!r} needs both relevant and non-relevant entries")
    hits = 0
    total = 0.0
    for rank, label in enumerate(query.labels, start=1):
        if label == 1:
            hits += 1
            total += hits / rank
    return total / hits


def reciprocal_rank(query: RankedQuery) -> float:
    if not is_evaluable(query):
        raise ContractError(f"query {query.qid!r} needs both relevant and non-relevant entries")
    return 1.0 / (query.labels.index(1) + 1)


def rank_queries(scored) -> list[RankedQuery]:
    """Group (qid, aid, score, label) rows by qid in order of first appearance and sort each group."""
    groups: dict[str, list] = {}
    for qid, aid, s, label in scored:
        groups.setdefault(qid, []).append((aid, float(s), int(label)))
    return [RankedQuery.from_unsorted(qid, entries) for qid, entries in groups.items()]


def evaluate(scored) -> EvalReport:
    queries = rank_queries(scored)
    evaluable, skipped = filter_questions(queries)
    if not evaluable:
        raise EvaluationError("no question has both correct and incorrect answers")
    per_query = {q.qid: (average_precision(q), reciprocal_rank(q)) for q in evaluable}
    n = len(per_query)
    return EvalReport(
        map=sum(ap for ap, _ in per_query.values()) / n,
        mrr=sum(rr for _, rr in per_query.values()) / n,
        per_query=per_query,
        n_evaluated=n,
        n_skipped=len(skipped),
    )


def write_trec_run(scored, tag: str, path) -> None:
    """``qid Q0 aid rank score tag`` per line, ranks 1-based within each query."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for query in rank_queries(scored):
            for rank, (aid, s, _) in enumerate(query.entries, start=1):
                f.write(f"{query.qid} Q0 {aid} {rank} {s:.6f} {tag}\n")


def write_qrels(pairs, path) -> None:
    """``qid 0 aid label`` per line; accepts QAPair objects or scored rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in pairs:
            if isinstance(p, tuple):
                qid, aid, label = p[0], p[1], p[-1]
            else:
                qid, aid, label = p.qid, p.aid, p.label
            f.write(f"{qid} 0 {aid} {int(label)}\n")


def read_trec_run(path) -> list[tuple[str, str, int, float, str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            qid, _, aid, rank, s, tag = line.split()
            rows.append((qid, aid, int(rank), float(s), tag))
    return rows
