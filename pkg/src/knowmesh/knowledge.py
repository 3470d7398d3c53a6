"""Per-Smart-Object knowledge store.

Triples live in exactly one of three partitions according to their
knowledge level: ontology (primary), parameters (secondary) and
hypotheses (invented).  Observations are name-value samples kept in the
parameters partition alongside its triples.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

from .errors import (
    EmptyTerm,
    LevelConflict,
    NonCanonicalTerm,
    ParseError,
    UnknownPredicate,
)

STORE_HEADER = "knowmesh-store v1"

ELEMENT_OF = "element_of"
MEASURED_BY = "measured_by"
CLASSIFIES = "classifies"
IS_A = "is_a"
SYNONYMOUS_TO = "synonymous_to"

DEFAULT_PREDICATES = frozenset(
    {
        "element_of",
        "unit_of",
        "measured_by",
        "carried_by",
        "attached_to",
        "has",
        "is_a",
        "synonymous_to",
        "classifies",
    }
)
# one object per subject; disagreeing primary peers get flagged
DEFAULT_FUNCTIONAL = frozenset({"measured_by", "unit_of"})

_CANONICAL = re.compile(r"[a-z0-9]+(?:_[a-z0-9]+)*")
_TOKEN = re.compile(r"[^\s]+")

Term = str
TripleKey = tuple[str, str, str]


def canonicalize_term(raw: str) -> Term:
    """Normalize free text into a canonical term.

    >>> canonicalize_term("Swaps/hour")
    'swaps_per_hour'
    """
    text = raw.strip().lower().replace("/", "_per_")
    text = re.sub(r"[\s\-]+", "_", text)
    text = re.sub(r"[^a-z0-9_]", "", text)
    text = re.sub(r"_+", "_", text).strip("_")
    if not text:
        raise EmptyTerm(f"nothing left of {raw!r} after normalization")
    return text


def is_canonical(text: str) -> bool:
    return bool(_CANONICAL.fullmatch(text))


def require_term(text: str, what: str = "term") -> Term:
    if not isinstance(text, str) or not is_canonical(text):
        raise NonCanonicalTerm(f"{what} {text!r} is not a canonical term")
    return text


def _require_token(text: str, what: str) -> str:
    if not isinstance(text, str) or not _TOKEN.fullmatch(text):
        raise ValueError(f"{what} must be a non-empty token without whitespace, got {text!r}")
    return text


class KnowledgeLevel(Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"
    INVENTED = "invented"

    @property
    def rank(self) -> int:
        """Display rank; primary sorts first."""
        return _LEVEL_RANK[self]

    @classmethod
    def parse(cls, text: str) -> "KnowledgeLevel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown knowledge level {text!r}") from None

    def __str__(self) -> str:
        return self.value


_LEVEL_RANK = {
    KnowledgeLevel.PRIMARY: 2,
    KnowledgeLevel.SECONDARY: 1,
    KnowledgeLevel.INVENTED: 0,
}


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Term
    object: Term
    level: KnowledgeLevel = KnowledgeLevel.PRIMARY
    source: str = "local"
    asserted_at: int = 0

    def __post_init__(self) -> None:
        require_term(self.subject, "subject")
        require_term(self.predicate, "predicate")
        require_term(self.object, "object")
        if not isinstance(self.level, KnowledgeLevel):
            raise TypeError(f"level must be a KnowledgeLevel, got {self.level!r}")
        _require_token(self.source, "source")
        if not isinstance(self.asserted_at, int) or self.asserted_at < 0:
            raise ValueError(f"asserted_at must be a non-negative tick, got {self.asserted_at!r}")

    @property
    def key(self) -> TripleKey:
        return (self.subject, self.predicate, self.object)

    def __str__(self) -> str:
        return f"({self.subject}, {self.predicate}, {self.object})@{self.level.value}"


def sort_key(t: Triple) -> tuple:
    return (t.subject, t.predicate, t.object, t.level.value, t.source, t.asserted_at)


@dataclass(frozen=True)
class Observation:
    """A timestamped sample: ``attribute`` = ``value`` [``unit``], optionally labeled."""

    attribute: Term
    value: Union[float, Term]
    unit: Optional[Term] = None
    label: Optional[Term] = None
    timestamp: int = 0
    source: str = "local"
    quarantined: bool = False

    def __post_init__(self) -> None:
        require_term(self.attribute, "attribute")
        if isinstance(self.value, bool):
            raise TypeError("observation value cannot be a boolean")
        if isinstance(self.value, (int, float)):
            value = float(self.value)
            if not math.isfinite(value):
                raise ValueError(f"observation value must be finite, got {self.value!r}")
            object.__setattr__(self, "value", value)
        else:
            require_term(self.value, "value")
        if self.unit is not None:
            require_term(self.unit, "unit")
        if self.label is not None:
            require_term(self.label, "label")
        if not isinstance(self.timestamp, int) or self.timestamp < 0:
            raise ValueError(f"timestamp must be a non-negative tick, got {self.timestamp!r}")
        _require_token(self.source, "source")

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, float)


class HypothesisState(Enum):
    PENDING = "pending"
    ASSERTED = "asserted"
    REFUTED = "refuted"


@dataclass(frozen=True)
class Hypothesis:
    triple: Triple
    activations: int = 0
    consistent: int = 0
    state: HypothesisState = HypothesisState.PENDING

    def __post_init__(self) -> None:
        if self.triple.level is not KnowledgeLevel.INVENTED:
            raise ValueError("hypothesis triples must be at the invented level")
        if not 0 <= self.consistent <= self.activations:
            raise ValueError("need 0 <= consistent <= activations")

    @property
    def key(self) -> TripleKey:
        return self.triple.key


Path = tuple[Triple, ...]


class KnowledgeStore:
    """Three-partition triple store plus the observation list.

    Mutating methods work in place; use :meth:`copy` for value semantics.
    ``owner`` is the node the store belongs to: observations from any other
    source are forced into quarantine on arrival.
    """

    def __init__(
        self,
        owner: Optional[str] = None,
        predicates: Iterable[str] = DEFAULT_PREDICATES,
        functional: Iterable[str] = DEFAULT_FUNCTIONAL,
    ):
        self.owner = owner
        self.predicates = frozenset(predicates)
        self.functional = frozenset(functional)
        self._partitions: dict[KnowledgeLevel, dict[TripleKey, Triple]] = {
            level: {} for level in KnowledgeLevel
        }
        self._provenance: dict[TripleKey, set[tuple[int, str]]] = {}
        self._hypotheses: dict[TripleKey, Hypothesis] = {}
        self.observations: list[Observation] = []

    # -- triples -------------------------------------------------------

    @property
    def ontology(self) -> list[Triple]:
        return self.triples(KnowledgeLevel.PRIMARY)

    @property
    def parameters(self) -> list[Triple]:
        return self.triples(KnowledgeLevel.SECONDARY)

    def triples(self, level: Optional[KnowledgeLevel] = None) -> list[Triple]:
        levels = [level] if level is not None else list(KnowledgeLevel)
        found = [t for lv in levels for t in self._partitions[lv].values()]
        return sorted(found, key=sort_key)

    def __len__(self) -> int:
        return sum(len(p) for p in self._partitions.values())

    def level_of(self, key: TripleKey) -> Optional[KnowledgeLevel]:
        for level, part in self._partitions.items():
            if key in part:
                return level
        return None

    def get(self, key: TripleKey) -> Optional[Triple]:
        level = self.level_of(key)
        return None if level is None else self._partitions[level][key]

    def __contains__(self, key: TripleKey) -> bool:
        return self.level_of(key) is not None

    def provenance(self, key: TripleKey) -> list[tuple[str, int]]:
        """Every (source, tick) that asserted ``key``, earliest first."""
        return [(src, tick) for tick, src in sorted(self._provenance.get(key, ()))]

    def assert_triple(self, t: Triple) -> bool:
        """Store ``t`` in its level's partition; returns False for a pure duplicate."""
        if t.predicate not in self.predicates:
            raise UnknownPredicate(f"predicate {t.predicate!r} is not in the vocabulary")
        current = self.level_of(t.key)
        if current is not None and current is not t.level:
            raise LevelConflict(
                f"{t.key} already held at {current.value}, refusing {t.level.value}"
            )
        prov = self._provenance.setdefault(t.key, set())
        entry = (t.asserted_at, t.source)
        if current is not None and entry in prov:
            return False
        prov.add(entry)
        self._install(t.key, t.level)
        return True

    def _install(self, key: TripleKey, level: KnowledgeLevel) -> Triple:
        tick, source = min(self._provenance[key])
        triple = Triple(*key, level=level, source=source, asserted_at=tick)
        self._partitions[level][key] = triple
        if level is KnowledgeLevel.INVENTED:
            old = self._hypotheses.get(key)
            if old is None:
                self._hypotheses[key] = Hypothesis(triple)
            else:
                self._hypotheses[key] = replace(old, triple=triple)
        return triple

    def move_triple(self, key: TripleKey, level: KnowledgeLevel) -> Triple:
        """Explicit lifecycle move between partitions; provenance travels along."""
        current = self.level_of(key)
        if current is None:
            raise KeyError(key)
        if current is level:
            return self._partitions[level][key]
        del self._partitions[current][key]
        if current is KnowledgeLevel.INVENTED:
            del self._hypotheses[key]
        return self._install(key, level)

    def remove_triple(self, key: TripleKey) -> Optional[Triple]:
        level = self.level_of(key)
        if level is None:
            return None
        removed = self._partitions[level].pop(key)
        self._provenance.pop(key, None)
        self._hypotheses.pop(key, None)
        return removed

    # -- hypotheses ----------------------------------------------------

    def hypotheses(self) -> list[Hypothesis]:
        return [self._hypotheses[k] for k in sorted(self._hypotheses)]

    def hypothesis(self, key: TripleKey) -> Optional[Hypothesis]:
        return self._hypotheses.get(key)

    def update_hypothesis(self, h: Hypothesis) -> None:
        """Write back activation counters of a pending hypothesis."""
        if h.key not in self._hypotheses:
            raise KeyError(h.key)
        self._hypotheses[h.key] = replace(
            h, triple=self._partitions[KnowledgeLevel.INVENTED][h.key]
        )

    # -- queries -------------------------------------------------------

    def query_triples(
        self,
        subject: Optional[str] = None,
        predicate: Optional[str] = None,
        object: Optional[str] = None,
        level: Optional[KnowledgeLevel] = None,
    ) -> list[Triple]:
        """Wildcard match; ``None`` slots match anything.

        ``synonymous_to`` triples match in either orientation.
        """
        if subject is None and predicate is None and object is None and level is None:
            raise ValueError("bind at least one pattern slot or give a level filter")
        out = []
        for t in self.triples(level):
            if predicate is not None and t.predicate != predicate:
                continue
            if _ends_match(t.subject, t.object, subject, object):
                out.append(t)
            elif t.predicate == SYNONYMOUS_TO and _ends_match(t.object, t.subject, subject, object):
                out.append(t)
        return out

    def find_paths(
        self,
        start: str,
        end: str,
        max_len: int,
        level: Optional[KnowledgeLevel] = None,
        exclude: Iterable[str] = (),
    ) -> list[Path]:
        """All simple directed paths ``start`` -> ``end`` with at most ``max_len`` edges.

        Shortest first, then lexicographic on the edge keys.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if start == end:
            return [()]
        adjacency = self.adjacency(level, exclude)
        found: list[Path] = []
        stack: list[Triple] = []
        visited = {start}

        def walk(node: str) -> None:
            for edge in adjacency.get(node, ()):
                nxt = edge.object
                if nxt in visited:
                    continue
                stack.append(edge)
                if nxt == end:
                    found.append(tuple(stack))
                elif len(stack) < max_len:
                    visited.add(nxt)
                    walk(nxt)
                    visited.discard(nxt)
                stack.pop()

        walk(start)
        found.sort(key=lambda p: (len(p), [e.key for e in p]))
        return found

    def adjacency(
        self, level: Optional[KnowledgeLevel] = None, exclude: Iterable[str] = ()
    ) -> dict[str, list[Triple]]:
        skip = set(exclude)
        adj: dict[str, list[Triple]] = defaultdict(list)
        for t in self.triples(level):
            if t.predicate not in skip:
                adj[t.subject].append(t)
        return dict(adj)

    def terms(self) -> set[str]:
        words = set()
        for t in self.triples():
            words.update(t.key)
        for o in self.observations:
            words.add(o.attribute)
            words.update(w for w in (o.unit, o.label) if w is not None)
            if not o.is_numeric:
                words.add(o.value)
        return words

    def conflicts(self) -> list[tuple[Triple, Triple]]:
        """Primary pairs from different sources disagreeing on a functional relation."""
        by_head: dict[tuple[str, str], list[Triple]] = defaultdict(list)
        for t in self.triples(KnowledgeLevel.PRIMARY):
            if t.predicate in self.functional:
                by_head[(t.subject, t.predicate)].append(t)
        pairs = []
        for group in by_head.values():
            for i, a in enumerate(group):
                for b in group[i + 1 :]:
                    if a.object != b.object and a.source != b.source:
                        pairs.append((a, b))
        return pairs

    def check_partitions(self) -> list[str]:
        """Return a description of every partition-discipline violation."""
        problems = []
        seen: dict[TripleKey, KnowledgeLevel] = {}
        for level, part in self._partitions.items():
            for key, t in part.items():
                if t.level is not level:
                    problems.append(f"{t} stored in {level.value} partition")
                if key in seen:
                    problems.append(f"{key} in both {seen[key].value} and {level.value}")
                seen[key] = level
        if set(self._hypotheses) != set(self._partitions[KnowledgeLevel.INVENTED]):
            problems.append("hypothesis counters out of sync with the hypotheses partition")
        return problems

    # -- observations --------------------------------------------------

    def record_observation(self, obs: Observation) -> Observation:
        if self.owner is not None and obs.source != self.owner and not obs.quarantined:
            obs = replace(obs, quarantined=True)
        self.observations.append(obs)
        return obs

    def release(self, predicate) -> int:
        """Lift quarantine on observations satisfying ``predicate``; returns count."""
        released = 0
        for i, o in enumerate(self.observations):
            if o.quarantined and predicate(o):
                self.observations[i] = replace(o, quarantined=False)
                released += 1
        return released

    # -- value semantics ----------------------------------------------

    def copy(self) -> "KnowledgeStore":
        other = KnowledgeStore(self.owner, self.predicates, self.functional)
        other._partitions = {lv: dict(p) for lv, p in self._partitions.items()}
        other._provenance = {k: set(v) for k, v in self._provenance.items()}
        other._hypotheses = dict(self._hypotheses)
        other.observations = list(self.observations)
        return other

    def __eq__(self, other: object) -> bool:
        # observation order is not part of identity: files store them sorted
        if not isinstance(other, KnowledgeStore):
            return NotImplemented
        return (
            self._partitions == other._partitions
            and self._provenance == other._provenance
            and self._hypotheses == other._hypotheses
            and sorted(map(_observation_line, self.observations))
            == sorted(map(_observation_line, other.observations))
        )

    def __repr__(self) -> str:
        sizes = ", ".join(f"{lv.value}={len(p)}" for lv, p in self._partitions.items())
        return f"KnowledgeStore(owner={self.owner!r}, {sizes}, observations={len(self.observations)})"


def _ends_match(s: str, o: str, want_s: Optional[str], want_o: Optional[str]) -> bool:
    return (want_s is None or s == want_s) and (want_o is None or o == want_o)


def path_nodes(path: Sequence[Triple]) -> list[str]:
    if not path:
        return []
    return [path[0].subject] + [e.object for e in path]


# -- serialization -----------------------------------------------------


def format_value(value: Union[float, str]) -> str:
    return repr(value) if isinstance(value, float) else value


def parse_value(text: str) -> Union[float, str]:
    # float reprs always carry '.', '+' or '-'; canonical terms never do
    if any(c in text for c in ".+-"):
        return float(text)
    return require_term(text, "value")


def triple_line(t: Triple, source: Optional[str] = None, tick: Optional[int] = None) -> str:
    return "\t".join(
        [
            "T",
            t.level.value,
            t.subject,
            t.predicate,
            t.object,
            t.source if source is None else source,
            str(t.asserted_at if tick is None else tick),
        ]
    )


def _observation_line(o: Observation) -> str:
    return "\t".join(
        [
            "O",
            o.attribute,
            format_value(o.value),
            o.unit or "-",
            o.label or "-",
            str(o.timestamp),
            o.source,
            "q" if o.quarantined else "l",
        ]
    )


observation_line = _observation_line


def parse_triple_fields(fields: Sequence[str]) -> Triple:
    if len(fields) != 7 or fields[0] != "T":
        raise ValueError(f"triple record needs 7 fields, got {len(fields)}")
    _, level, s, p, o, source, tick = fields
    return Triple(s, p, o, KnowledgeLevel.parse(level), source, _parse_tick(tick))


def parse_observation_fields(fields: Sequence[str]) -> Observation:
    if len(fields) != 8 or fields[0] != "O":
        raise ValueError(f"observation record needs 8 fields, got {len(fields)}")
    _, attribute, value, unit, label, tick, source, flag = fields
    if flag not in ("q", "l"):
        raise ValueError(f"quarantine flag must be q or l, got {flag!r}")
    return Observation(
        attribute,
        parse_value(value),
        None if unit == "-" else unit,
        None if label == "-" else label,
        _parse_tick(tick),
        source,
        flag == "q",
    )


def _parse_tick(text: str) -> int:
    if not text.isdigit():
        raise ValueError(f"tick must be a non-negative integer, got {text!r}")
    return int(text)


def store_lines(store: KnowledgeStore) -> list[str]:
    lines = []
    for t in store.triples():
        for source, tick in store.provenance(t.key):
            lines.append(triple_line(t, source, tick))
    for h in store.hypotheses():
        if h.activations:
            lines.append("\t".join(["H", *h.key, str(h.activations), str(h.consistent)]))
    lines.extend(_observation_line(o) for o in store.observations)
    return sorted(lines)


def serialize_store(store: KnowledgeStore) -> str:
    return "\n".join([STORE_HEADER, *store_lines(store)]) + "\n"


def deserialize_store(
    text: str,
    predicates: Optional[Iterable[str]] = None,
    owner: Optional[str] = None,
) -> KnowledgeStore:
    """Parse a store document.

    With ``predicates=None`` the vocabulary is the default set widened by
    whatever predicates the file itself uses.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != STORE_HEADER:
        raise ParseError(f"missing header {STORE_HEADER!r}", 1)
    triples: list[tuple[int, Triple]] = []
    counters: list[tuple[int, list[str]]] = []
    observations: list[Observation] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        try:
            if fields[0] == "T":
                triples.append((number, parse_triple_fields(fields)))
            elif fields[0] == "O":
                observations.append(parse_observation_fields(fields))
            elif fields[0] == "H" and len(fields) == 6:
                counters.append((number, fields))
            else:
                raise ValueError(f"unknown record {fields[0]!r}")
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), number) from None
    vocab = set(DEFAULT_PREDICATES if predicates is None else predicates)
    if predicates is None:
        vocab.update(t.predicate for _, t in triples)
    store = KnowledgeStore(owner, vocab)
    for number, t in triples:
        try:
            store.assert_triple(t)
        except (LevelConflict, UnknownPredicate) as exc:
            raise ParseError(str(exc), number) from None
    for number, (_, s, p, o, act, cons) in counters:
        h = store.hypothesis((s, p, o))
        if h is None:
            raise ParseError(f"counters for unknown hypothesis {(s, p, o)}", number)
        try:
            store.update_hypothesis(replace(h, activations=_parse_tick(act), consistent=_parse_tick(cons)))
        except ValueError as exc:
            raise ParseError(str(exc), number) from None
    store.observations = observations
    return store
