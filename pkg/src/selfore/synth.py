"""Deterministic templated corpus generator for tests and experiments.

Each relation owns a disjoint vocabulary for the tokens between the two
entities, while entity names, openers, and closers are drawn from shared
pools. The relation signal therefore lives only in the between-entity
context, which is exactly what the pipeline is supposed to pick up.
"""
from __future__ import annotations

from .corpus import write_corpus
from .errors import ConfigError
from .numerics import rng_for

_SYNTH_TAG = 201

# Between-entity templates. Vocabularies are pairwise disjoint across
# relations; see tests for the enforced check. Within a relation the two
# phrasings share most of their words, so a cluster is held together by a
# consistent vocabulary rather than by one exact token sequence.
_NAMED_TEMPLATES: list[tuple[str, list[list[str]]]] = [
    ("born_in", [["was", "born", "and", "spent", "early", "childhood", "in"],
                 ["was", "born", "and", "spent", "early", "childhood", "near"]]),
    ("capital_of", [["serves", "proudly", "as", "the", "capital", "city", "of"],
                    ["proudly", "serves", "as", "the", "historic", "capital", "of"]]),
    ("works_for", [["works", "full", "time", "salaried", "staff", "for"],
                   ["works", "full", "time", "paid", "staff", "for"]]),
    ("member_of", [["belongs", "since", "long", "standing", "days", "to"],
                   ["belongs", "since", "founding", "days", "long", "to"]]),
    ("married_to", [["married", "beloved", "devoted", "spouse"],
                    ["married", "devoted", "beloved", "partner"]]),
    ("located_in", [["lies", "nestled", "deep", "within"],
                    ["sits", "nestled", "deep", "within"]]),
    ("founded", [["founded", "fledgling", "startup", "venture"],
                 ["established", "fledgling", "startup", "venture"]]),
    ("studied_at", [["studied", "under", "visiting", "professors", "from"],
                    ["attended", "under", "visiting", "professors", "from"]]),
]

# Shared across all relations: carry no relation signal.
_ENTITIES: list[tuple[str, ...]] = [
    ("Mara", "Quinn"), ("Odell",), ("Tobias", "Vance"), ("Imka",),
    ("Ravel",), ("Lund", "Petrie"), ("Sana", "Oduya"), ("Brockton",),
    ("Avalor",), ("Kessa", "Thorn"), ("Nerida",), ("Jovan", "Ilic"),
    ("Castile",), ("Ferrin",), ("Ysolde",), ("Halloran",),
    ("Pell", "Madsen"), ("Tirsa",), ("Quoss",), ("Ebenholt",),
]
_OPENERS: list[list[str]] = [[], ["reportedly"], ["yesterday"], ["meanwhile"],
                             ["sources", "say"]]
_CLOSERS: list[list[str]] = [[], ["again"], ["this", "week"], ["according",
                             "to", "records"]]


def relation_bank(index: int) -> tuple[str, list[list[str]]]:
    """Relation name and its between-entity templates.

    The first eight relations use hand-written templates; beyond that the
    vocabulary is generated procedurally, still disjoint per relation.
    """
    if index < 0:
        raise ConfigError(f"relation index must be non-negative, got {index}")
    if index < len(_NAMED_TEMPLATES):
        return _NAMED_TEMPLATES[index]
    name = f"relation_{index:02d}"
    a, b, link, noun = (f"verb{index}a", f"verb{index}b",
                        f"link{index}", f"noun{index}")
    return name, [[a, link], [b, noun, link]]


def generate(relations: int, per_relation: int, seed: int) -> list[dict]:
    """Produce corpus records (dicts ready for JSON-lines serialization)."""
    if relations < 2:
        raise ConfigError(f"need at least 2 relations, got {relations}")
    if per_relation < 1:
        raise ConfigError(f"per_relation must be positive, got {per_relation}")
    rng = rng_for(seed, _SYNTH_TAG)
    records: list[dict] = []
    for r in range(relations):
        name, templates = relation_bank(r)
        for n in range(per_relation):
            opener = _OPENERS[rng.integers(len(_OPENERS))]
            closer = _CLOSERS[rng.integers(len(_CLOSERS))]
            e1_idx = int(rng.integers(len(_ENTITIES)))
            e2_idx = int(rng.integers(len(_ENTITIES) - 1))
            if e2_idx >= e1_idx:
                e2_idx += 1
            e1 = _ENTITIES[e1_idx]
            e2 = _ENTITIES[e2_idx]
            between = templates[rng.integers(len(templates))]
            tokens = list(opener) + list(e1) + between + list(e2) + list(closer)
            i = len(opener)
            j = i + len(e1)
            k = j + len(between)
            l = k + len(e2)
            records.append({
                "id": f"syn-{name}-{n:04d}",
                "tokens": tokens,
                "e1": [i, j],
                "e2": [k, l],
                "relation": name,
            })
    return records


def generate_file(path: str, relations: int, per_relation: int, seed: int) -> int:
    """Write a generated corpus to disk; returns the record count."""
    records = generate(relations, per_relation, seed)
    write_corpus(path, records)
    return len(records)
