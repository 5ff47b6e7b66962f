"""Sentence records with two tagged entities, marker injection, and ingest.

A raw sentence carries token-level half-open entity spans. Marking inserts
the four reserved tokens around the spans; downstream encoders read features
at the two start-marker positions. Either entity may come first in the text;
positions are recorded faithfully.

Corpus files are JSON-lines: one object per line with fields `id`, `tokens`,
`e1` ([i,j]), `e2` ([k,l]), and optional `relation`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .numerics import rng_for

log = logging.getLogger(__name__)

E1_START = "[E1_start]"
E1_END = "[E1_end]"
E2_START = "[E2_start]"
E2_END = "[E2_end]"
MARKERS = (E1_START, E1_END, E2_START, E2_END)
_MARKER_SET = frozenset(MARKERS)

_SPLIT_TAG = 101


@dataclass(frozen=True)
class RawSentence:
    """Tokenized sentence with two non-overlapping entity spans."""

    id: str
    tokens: tuple[str, ...]
    e1_span: tuple[int, int]
    e2_span: tuple[int, int]
    gold_relation: str | None = None

    def __post_init__(self):
        t = len(self.tokens)
        if t == 0:
            raise DataError(f"{self.id}: empty token sequence")
        if any(not isinstance(tok, str) or tok == "" for tok in self.tokens):
            raise DataError(f"{self.id}: tokens must be non-empty strings")
        used = _MARKER_SET.intersection(self.tokens)
        if used:
            raise DataError(f"{self.id}: reserved marker token {sorted(used)[0]!r} in text")
        for name, (a, b) in (("e1", self.e1_span), ("e2", self.e2_span)):
            if not (0 <= a < b <= t):
                raise DataError(f"{self.id}: {name} span [{a},{b}) invalid for length {t}")
        i, j = self.e1_span
        k, l = self.e2_span
        if not (j <= k or l <= i):
            raise DataError(f"{self.id}: overlapping spans e1=[{i},{j}) e2=[{k},{l})")


@dataclass(frozen=True)
class MarkedSentence:
    """Sentence with the four reserved markers injected."""

    tokens: tuple[str, ...]
    e1_start_pos: int
    e2_start_pos: int
    origin_id: str
    gold_relation: str | None = None


def inject_markers(s: RawSentence) -> MarkedSentence:
    """Wrap each entity span with its start/end marker pair.

    Output length is the original length + 4. Works for either entity order;
    the two recorded positions always point at [E1_start] and [E2_start].
    """
    i, j = s.e1_span
    k, l = s.e2_span
    t = list(s.tokens)
    if j <= k:
        out = t[:i] + [E1_START] + t[i:j] + [E1_END] + t[j:k] \
            + [E2_START] + t[k:l] + [E2_END] + t[l:]
        e1_pos, e2_pos = i, k + 2
    else:
        out = t[:k] + [E2_START] + t[k:l] + [E2_END] + t[l:i] \
            + [E1_START] + t[i:j] + [E1_END] + t[j:]
        e2_pos, e1_pos = k, i + 2
    return MarkedSentence(tuple(out), e1_pos, e2_pos, s.id, s.gold_relation)


def strip_markers(m: MarkedSentence) -> RawSentence:
    """Inverse of inject_markers: drop the markers and recover the spans."""
    pos: dict[str, int] = {}
    for marker in MARKERS:
        hits = [idx for idx, tok in enumerate(m.tokens) if tok == marker]
        if len(hits) != 1:
            raise DataError(f"{m.origin_id}: marker {marker!r} appears {len(hits)} times")
        pos[marker] = hits[0]
    if pos[E1_START] != m.e1_start_pos or pos[E2_START] != m.e2_start_pos:
        raise DataError(f"{m.origin_id}: recorded marker positions disagree with tokens")
    kept: list[str] = []
    # Span ends are measured after removing the markers that precede them.
    orig_index: dict[str, int] = {}
    for idx, tok in enumerate(m.tokens):
        if tok in _MARKER_SET:
            orig_index[tok] = len(kept)
        else:
            kept.append(tok)
    return RawSentence(
        id=m.origin_id,
        tokens=tuple(kept),
        e1_span=(orig_index[E1_START], orig_index[E1_END]),
        e2_span=(orig_index[E2_START], orig_index[E2_END]),
        gold_relation=m.gold_relation,
    )


def truncate_around_entities(s: RawSentence, max_length: int) -> RawSentence:
    """Shrink a sentence so that its marked form fits max_length tokens.

    Keeps the window covering both entity spans and splits the remaining
    budget symmetrically between left and right context, spilling leftover
    budget to the other side. Raises when the spans themselves (plus the four
    markers) cannot fit.
    """
    t = len(s.tokens)
    if t + 4 <= max_length:
        return s
    lo = min(s.e1_span[0], s.e2_span[0])
    hi = max(s.e1_span[1], s.e2_span[1])
    budget = max_length - 4 - (hi - lo)
    if budget < 0:
        raise DataError(
            f"{s.id}: entity window of {hi - lo} tokens cannot fit in max_length {max_length}"
        )
    left_want, right_want = lo, t - hi
    left = min(left_want, budget // 2)
    right = min(right_want, budget - left)
    left = min(left_want, budget - right)
    start = lo - left
    shift = -start
    return RawSentence(
        id=s.id,
        tokens=s.tokens[start:hi + right],
        e1_span=(s.e1_span[0] + shift, s.e1_span[1] + shift),
        e2_span=(s.e2_span[0] + shift, s.e2_span[1] + shift),
        gold_relation=s.gold_relation,
    )


@dataclass(frozen=True)
class Corpus:
    """Immutable marked-sentence collection with a train/validation split."""

    sentences: tuple[MarkedSentence, ...]
    train_fraction: float = 0.8
    label_vocabulary: frozenset[str] | None = None
    rejected: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train fraction must be in (0,1), got {self.train_fraction}")

    def __len__(self) -> int:
        return len(self.sentences)

    def split_indices(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic (train, validation) index arrays for a seed."""
        n = len(self.sentences)
        perm = rng_for(seed, _SPLIT_TAG).permutation(n)
        n_train = int(round(self.train_fraction * n))
        n_train = min(max(n_train, 0), n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])

    def gold_labels(self) -> list[str | None]:
        return [s.gold_relation for s in self.sentences]


def parse_record(obj, line_no: int) -> RawSentence:
    """Validate one decoded JSON object into a RawSentence."""
    if not isinstance(obj, dict):
        raise DataError(f"line {line_no}: record must be a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise DataError(f"line {line_no}: missing or empty 'id'")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list):
        raise DataError(f"line {line_no} ({rid}): 'tokens' must be an array")
    spans = []
    for key in ("e1", "e2"):
        span = obj.get(key)
        if (not isinstance(span, list) or len(span) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in span)):
            raise DataError(f"line {line_no} ({rid}): {key!r} must be a pair of integers")
        spans.append((span[0], span[1]))
    relation = obj.get("relation")
    if relation is not None and not isinstance(relation, str):
        raise DataError(f"line {line_no} ({rid}): 'relation' must be a string")
    try:
        return RawSentence(rid, tuple(tokens), spans[0], spans[1], relation)
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from exc


def ingest(path: str, max_length: int, *, strict: bool = False,
           train_fraction: float = 0.8) -> Corpus:
    """Read a JSON-lines corpus file into a marked Corpus.

    Records that fail validation, or that cannot be truncated to max_length
    with both marker pairs intact, are skipped with a diagnostic (collected
    on the Corpus and logged). strict mode turns the first such problem into
    an error.
    """
    if max_length < 5:
        raise DataError(f"max_length {max_length} leaves no room for markers")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    sentences: list[MarkedSentence] = []
    rejected: list[str] = []
    seen_ids: set[str] = set()
    labels: set[str] = set()

    def reject(msg: str) -> None:
        if strict:
            raise DataError(f"{path}: {msg}")
        log.warning("%s: skipping %s", path, msg)
        rejected.append(msg)

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            reject(f"line {line_no}: invalid JSON ({exc.msg})")
            continue
        try:
            raw = parse_record(obj, line_no)
            if raw.id in seen_ids:
                raise DataError(f"line {line_no}: duplicate id {raw.id!r}")
            raw = truncate_around_entities(raw, max_length)
        except DataError as exc:
            reject(str(exc))
            continue
        seen_ids.add(raw.id)
        if raw.gold_relation is not None:
            labels.add(raw.gold_relation)
        sentences.append(inject_markers(raw))
    if not sentences:
        raise DataError(f"{path}: no valid records")
    return Corpus(
        sentences=tuple(sentences),
        train_fraction=train_fraction,
        label_vocabulary=frozenset(labels) if labels else None,
        rejected=tuple(rejected),
    )


def write_corpus(path: str, records: list[dict]) -> None:
    """Write records as JSON lines with a stable key order and newline end."""
    out = []
    for obj in records:
        out.append(json.dumps(obj, ensure_ascii=False, separators=(", ", ": ")))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + ("\n" if out else ""))
