"""Deterministic toy QA corpora for smoke runs and tests.

Each question is built from random pseudo-words; its correct answer reuses
the question's content words, while distractors come from other questions.
"""
from __future__ import annotations

import numpy as np

from .dataio import QAPair

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"
_WH = ("who", "what", "when", "where", "which", "how many")
_FILLER = ("the", "a", "of", "in", "was", "is", "and", "to", "by", "for", "on", "its")


def _word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(str(rng.choice(list(_CONSONANTS))) + str(rng.choice(list(_VOWELS))) for _ in range(n))


def make_pairs(
    n_questions: int,
    answers_per_question: int = 5,
    seed: int = 0,
    prefix: str = "q",
    positives: int = 1,
) -> list[QAPair]:
    """``n_questions`` groups of ``answers_per_question`` candidates, ``positives`` of them correct."""
    rng = np.random.default_rng(seed)
    vocab = sorted({_word(rng) for _ in range(400)})
    topics = []
    for _ in range(n_questions):
        topics.append([str(w) for w in rng.choice(vocab, size=3, replace=False)])
    pairs = []
    for qi, topic in enumerate(topics):
        qid = f"{prefix}{qi}"
        question = f"{rng.choice(_WH)} {topic[0]} {rng.choice(_FILLER)} {topic[1]} {topic[2]}?"
        for ai in range(answers_per_question):
            if ai < positives:
                words = topic + [str(w) for w in rng.choice(vocab, size=3)]
                label = 1
            else:
                j = int(rng.integers(len(topics) - 1)) if len(topics) > 1 else 0
                other = topics[j + 1 if j >= qi else j] if len(topics) > 1 else []
                words = other[:2] + [str(w) for w in rng.choice(vocab, size=6 - len(other[:2]))]
                label = 0
            order = rng.permutation(len(words))
            body = []
            for k in order:
                body.append(words[k])
                body.append(str(rng.choice(_FILLER)))
            answer = " ".join(body).capitalize() + "."
            pairs.append(QAPair(qid, f"{qid}-a{ai}", question, answer, label))
    # candidate order within a question should not leak the label
    out = []
    for qi in range(n_questions):
        group = pairs[qi * answers_per_question : (qi + 1) * answers_per_question]
        out.extend(group[i] for i in rng.permutation(len(group)))
    return out
