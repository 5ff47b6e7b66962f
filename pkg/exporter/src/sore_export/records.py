"""Corpus records: JSON-lines sentences with two entity spans, marker injection.

The file format is shared with the clustering pipeline: one JSON object per
line with fields `id`, `tokens`, `e1` ([i,j]), `e2` ([k,l]), and an optional
`relation` that this tool ignores. The four marker strings are reserved and
rejected as ordinary text tokens; injection wraps each span with its pair
and records where the two start markers landed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError

E1_START = "[E1_start]"
E1_END = "[E1_end]"
E2_START = "[E2_start]"
E2_END = "[E2_end]"
MARKERS = (E1_START, E1_END, E2_START, E2_END)
_MARKER_SET = frozenset(MARKERS)


@dataclass(frozen=True)
class MarkedSentence:
    """Sentence tokens with markers injected around both entity spans."""

    id: str
    tokens: tuple[str, ...]
    e1_start_pos: int
    e2_start_pos: int


def _validate(rid: str, tokens: tuple[str, ...], e1: tuple[int, int],
              e2: tuple[int, int]) -> None:
    t = len(tokens)
    if t == 0:
        raise DataError(f"{rid}: empty token sequence")
    if any(not isinstance(tok, str) or tok == "" for tok in tokens):
        raise DataError(f"{rid}: tokens must be non-empty strings")
    used = _MARKER_SET.intersection(tokens)
    if used:
        raise DataError(f"{rid}: reserved marker token {sorted(used)[0]!r} in text")
    for name, (a, b) in (("e1", e1), ("e2", e2)):
        if not (0 <= a < b <= t):
            raise DataError(f"{rid}: {name} span [{a},{b}) invalid for length {t}")
    i, j = e1
    k, l = e2
    if not (j <= k or l <= i):
        raise DataError(f"{rid}: overlapping spans e1=[{i},{j}) e2=[{k},{l})")


def mark(rid: str, tokens: tuple[str, ...], e1: tuple[int, int],
         e2: tuple[int, int]) -> MarkedSentence:
    """Validate the spans and wrap them with marker pairs, either order."""
    _validate(rid, tokens, e1, e2)
    i, j = e1
    k, l = e2
    t = list(tokens)
    if j <= k:
        out = t[:i] + [E1_START] + t[i:j] + [E1_END] + t[j:k] \
            + [E2_START] + t[k:l] + [E2_END] + t[l:]
        e1_pos, e2_pos = i, k + 2
    else:
        out = t[:k] + [E2_START] + t[k:l] + [E2_END] + t[l:i] \
            + [E1_START] + t[i:j] + [E1_END] + t[j:]
        e2_pos, e1_pos = k, i + 2
    return MarkedSentence(rid, tuple(out), e1_pos, e2_pos)


def parse_record(obj, line_no: int) -> MarkedSentence:
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
    try:
        return mark(rid, tuple(tokens), spans[0], spans[1])
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from exc


def read_corpus(path: str) -> list[MarkedSentence]:
    """Read and mark every record; any invalid line is an error.

    The exporter is strict where the consuming pipeline is lenient: a feature
    file is a one-shot artifact, so a bad record should fail the export
    rather than silently shrink the output.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    sentences: list[MarkedSentence] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
        sent = parse_record(obj, line_no)
        if sent.id in seen:
            raise DataError(f"{path}:{line_no}: duplicate id {sent.id!r}")
        seen.add(sent.id)
        sentences.append(sent)
    if not sentences:
        raise DataError(f"{path}: no records")
    return sentences
