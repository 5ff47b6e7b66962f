"""Surface-form relation names: the most frequent between-entity n-gram per
cluster.

The between-text of a sentence is every token strictly inside the two inner
markers, i.e. after the end marker of the entity that appears first and
before the start marker of the entity that appears second. Counting is
case-folded and keeps stop words, so names like "son of" survive.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, E1_END, E2_END, MarkedSentence
from .errors import DataError

SENTINEL_NAME: tuple[str, ...] = ()


@dataclass(frozen=True)
class RelationName:
    cluster: int
    ngram: tuple[str, ...]
    support: int

    @property
    def text(self) -> str:
        return " ".join(self.ngram)


def between_text(s: MarkedSentence) -> list[str]:
    """Tokens strictly between the two entities, case-folded."""
    first = min(s.e1_start_pos, s.e2_start_pos)
    second = max(s.e1_start_pos, s.e2_start_pos)
    # The end marker of the first entity sits somewhere after its start
    # marker and before the second start marker; scan for it.
    end_pos = None
    want = E1_END if first == s.e1_start_pos else E2_END
    for idx in range(first + 1, second):
        if s.tokens[idx] == want:
            end_pos = idx
            break
    if end_pos is None:
        raise DataError(f"{s.origin_id}: inner end marker missing")
    return [t.lower() for t in s.tokens[end_pos + 1:second]]


def extract_names(corpus: Corpus, labels: np.ndarray, n_min: int = 1,
                  n_max: int = 4) -> dict[int, RelationName]:
    """Most frequent between-entity n-gram per cluster.

    Ties prefer higher count, then longer n-grams ("born in" beats "born"),
    then the lexicographically smallest. Clusters whose members have no
    between-text at all get an empty name with support 0.
    """
    if not 1 <= n_min <= n_max:
        raise DataError(f"need 1 <= n_min <= n_max, got [{n_min},{n_max}]")
    labels = np.asarray(labels)
    if labels.shape != (len(corpus.sentences),):
        raise DataError(f"{labels.shape[0] if labels.ndim else 0} labels for "
                        f"{len(corpus.sentences)} sentences")
    names: dict[int, RelationName] = {}
    for cluster in np.unique(labels):
        counts: Counter[tuple[str, ...]] = Counter()
        for idx in np.where(labels == cluster)[0]:
            tokens = between_text(corpus.sentences[idx])
            for n in range(n_min, n_max + 1):
                for start in range(0, len(tokens) - n + 1):
                    counts[tuple(tokens[start:start + n])] += 1
        cid = int(cluster)
        if not counts:
            names[cid] = RelationName(cid, SENTINEL_NAME, 0)
            continue
        best = min(counts.items(), key=lambda kv: (-kv[1], -len(kv[0]), kv[0]))
        names[cid] = RelationName(cid, best[0], best[1])
    return names


def format_names(names: dict[int, RelationName]) -> str:
    """One line per cluster: id, name, support (tab-separated)."""
    lines = [f"{cid}\t{names[cid].text}\t{names[cid].support}"
             for cid in sorted(names)]
    return "\n".join(lines) + "\n"
