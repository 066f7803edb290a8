"""Genealogy labels: finite sequences of (m, k, i) triples.

The empty sequence is the progenitor (Eve).  At a branching event the
closest child keeps the parent's label; every other child gets the parent's
label extended by one triple (truncation level of the child, index of the
qualifying branch event, sibling index within the level, positions
nonincreasing in the sibling index).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotAlive


@dataclass(frozen=True)
class Label:
    triples: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        for t in self.triples:
            if len(t) != 3 or any((not isinstance(c, int)) or c < 1 for c in t):
                raise ValueError(f"label components must be positive integers, got {t}")

    def child(self, m: int, k: int, i: int) -> "Label":
        if min(m, k, i) < 1:
            raise ValueError("child triple components must be >= 1")
        return Label(self.triples + ((m, k, i),))

    @property
    def generation(self) -> int:
        return len(self.triples)

    @property
    def max_level(self) -> int:
        """Largest first component over the triples; 0 for Eve."""
        return max((t[0] for t in self.triples), default=0)

    def parent(self) -> "Label":
        if not self.triples:
            raise ValueError("Eve has no parent")
        return Label(self.triples[:-1])

    def prefixes(self):
        """All prefixes from Eve up to the label itself."""
        for j in range(len(self.triples) + 1):
            yield Label(self.triples[:j])

    def __str__(self) -> str:
        if not self.triples:
            return "∅"
        return "".join(f"({m},{k},{i})" for m, k, i in self.triples)

    @staticmethod
    def parse(text: str) -> "Label":
        text = text.strip()
        if text in ("∅", ""):
            return EVE
        if not (text.startswith("(") and text.endswith(")")):
            raise ValueError(f"malformed label {text!r}")
        triples = []
        for part in text[1:-1].split(")("):
            comps = part.split(",")
            if len(comps) != 3:
                raise ValueError(f"malformed label {text!r}")
            triples.append(tuple(int(c) for c in comps))
        return Label(tuple(triples))


EVE = Label(())


def is_prefix(u: Label, v: Label) -> bool:
    """u precedes v in the ancestry order (u is an ancestor of, or equal to, v)."""
    return v.triples[: len(u.triples)] == u.triples


def label_sort_key(u: Label):
    """Lexicographic key: by generation-wise triples, Eve first."""
    return u.triples


def ancestor_at(birth_times, s: float, v: Label) -> Label:
    """Longest prefix of v with birth time <= s.

    ``birth_times`` maps each prefix of v (including Eve and v itself) to its
    birth time; Eve defaults to 0 when missing.
    """
    best = None
    for u in v.prefixes():
        b = birth_times.get(u, 0.0 if u == EVE else None)
        if b is None:
            raise KeyError(f"no birth time recorded for prefix {u}")
        if b <= s:
            best = u
        else:
            break
    if best is None:
        raise NotAlive(f"no ancestor of {v} alive at time {s}")
    return best
