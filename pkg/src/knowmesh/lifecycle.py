"""Knowledge-level transitions.

* induction: labeled secondary observations -> interval classifier; a
  good enough classifier promotes its attribute into the ontology.
* abduction: a rejected attribute triggers speculative hypotheses built
  from synonyms, peer ``is_a`` chains and part-of-speech templates.
* verification: hypotheses collect activations and are asserted or
  refuted on the Wilson score interval of their consistency rate.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter, deque
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    InsufficientData,
    MixedAttributes,
    NonNumericValues,
    StateViolation,
    ValidationError,
)
from .knowledge import (
    CLASSIFIES,
    ELEMENT_OF,
    IS_A,
    MEASURED_BY,
    SYNONYMOUS_TO,
    Hypothesis,
    HypothesisState,
    KnowledgeLevel,
    KnowledgeStore,
    Observation,
    Triple,
    TripleKey,
    path_nodes,
)
from .lexicon import Lexicon

SENSOR = "sensor"
EVENT = "event"
ABDUCTION_DEPTH = 5
# taxonomic links relate names, not entities; abduction walks the rest
TAXONOMIC = frozenset({IS_A, SYNONYMOUS_TO})


@dataclass(frozen=True)
class Thresholds:
    theta_induction: float = 0.8
    p_min: float = 0.8
    z: float = 1.96
    n_min: int = 10
    cv_max: float = 0.25
    window: int = 20

    def __post_init__(self) -> None:
        for name in ("theta_induction", "p_min", "cv_max"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {value}")
        if not self.z > 0:
            raise ValidationError(f"z must be positive, got {self.z}")
        if self.n_min < 1:
            raise ValidationError(f"n_min must be >= 1, got {self.n_min}")
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")

    @classmethod
    def from_mapping(cls, overrides: Mapping[str, str]) -> "Thresholds":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in overrides.items():
            if key not in types:
                raise ValidationError(f"unknown threshold {key!r}")
            try:
                values[key] = int(raw) if types[key] in (int, "int") else float(raw)
            except ValueError:
                raise ValidationError(f"threshold {key} has bad value {raw!r}") from None
        return cls(**values)


DEFAULT_THRESHOLDS = Thresholds()


# -- induction ---------------------------------------------------------


@dataclass(frozen=True)
class IntervalRule:
    attribute: str
    intervals: tuple[tuple[str, float, float], ...]
    training_accuracy: float

    def __post_init__(self) -> None:
        if not self.intervals:
            raise ValueError("a rule needs at least one interval")
        ordered = sorted(self.intervals, key=lambda iv: iv[1])
        for _, low, high in ordered:
            if low > high:
                raise ValueError(f"interval low {low} exceeds high {high}")
        for (_, _, high), (_, low, _) in zip(ordered, ordered[1:]):
            if low <= high:
                raise ValueError("intervals overlap")
        if not 0.0 <= self.training_accuracy <= 1.0:
            raise ValueError("training accuracy must lie in [0, 1]")

    @property
    def events(self) -> list[str]:
        return sorted({event for event, _, _ in self.intervals})


def classify(rule: IntervalRule, value: float) -> Optional[str]:
    """Event whose interval contains ``value``; ``None`` means unclassified."""
    for event, low, high in rule.intervals:
        if low <= value <= high:
            return event
    return None


def _winner(counts: Mapping[str, int]) -> Optional[str]:
    best = None
    for label in sorted(counts):
        if counts[label] > 0 and (best is None or counts[label] > counts[best]):
            best = label
    return best


def _loo_correct(counts: Mapping[str, int]) -> int:
    """Points of a segment whose label wins the segment vote without them."""
    correct = 0
    for label, n in counts.items():
        if n == 0:
            continue
        held = dict(counts)
        held[label] = n - 1
        if _winner(held) == label:
            correct += n
    return correct


def _check_sample(observations: Sequence[Observation]) -> None:
    if len(observations) < 2:
        raise InsufficientData(f"need at least 2 observations, got {len(observations)}")
    attributes = {o.attribute for o in observations}
    if len(attributes) > 1:
        raise MixedAttributes(f"observations span {sorted(attributes)}")
    if not all(o.is_numeric for o in observations):
        raise NonNumericValues("interval rules need numeric values")
    if any(o.label is None for o in observations):
        raise InsufficientData("every observation must carry a label")
    if len({o.label for o in observations}) < 2:
        raise InsufficientData("need at least 2 distinct labels")


def value_groups(observations: Sequence[Observation]) -> list[tuple[float, Counter]]:
    groups: dict[float, Counter] = {}
    for o in observations:
        groups.setdefault(o.value, Counter())[o.label] += 1
    return sorted(groups.items())


def candidate_cuts(groups: Sequence[tuple[float, Counter]]) -> list[int]:
    """Cut positions ``j`` (between group j-1 and j) separating differing labels."""
    cuts = []
    for j in range(1, len(groups)):
        left, right = groups[j - 1][1], groups[j][1]
        if len(left) == 1 and len(right) == 1 and set(left) == set(right):
            continue
        cuts.append(j)
    return cuts


def induce_interval_rules(
    observations: Iterable[Observation], thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> IntervalRule:
    """Fit a one-attribute interval classifier maximizing leave-one-out accuracy.

    Boundaries may only sit at midpoints between adjacent distinct values
    whose labels differ.  Each segment predicts its majority label (ties go
    to the lexicographically smallest).  Among placements with equal LOO
    accuracy the one with fewer intervals wins, then lower boundaries.

    ``thresholds`` is accepted for interface symmetry; induction itself has
    no tunable knobs.
    """
    obs = list(observations)
    _check_sample(obs)
    groups = value_groups(obs)
    cuts = candidate_cuts(groups)
    g = len(groups)

    def seg_counts(a: int, b: int) -> Counter:
        total: Counter = Counter()
        for _, c in groups[a:b]:
            total.update(c)
        return total

    def midpoint(j: int) -> float:
        return (groups[j - 1][0] + groups[j][0]) / 2

    # best[a] for the suffix starting at group a: (-score, segments, boundaries, ends)
    ends = [c for c in cuts] + [g]
    best: dict[int, tuple] = {g: (0, 0, (), ())}
    for a in reversed([0] + cuts):
        choice = None
        for b in ends:
            if b <= a:
                continue
            tail = best[b]
            score = _loo_correct(seg_counts(a, b))
            bounds = tail[2] if b == g else (midpoint(b),) + tail[2]
            cand = (tail[0] - score, tail[1] + 1, bounds, (b,) + tail[3])
            if choice is None or cand[:3] < choice[:3]:
                choice = cand
        best[a] = choice

    neg_score, _, _, seg_ends = best[0]
    intervals = []
    start = 0
    for end in seg_ends:
        label = _winner(seg_counts(start, end))
        intervals.append((label, groups[start][0], groups[end - 1][0]))
        start = end
    return IntervalRule(obs[0].attribute, tuple(intervals), -neg_score / len(obs))


# -- promotion ---------------------------------------------------------


class Outcome(Enum):
    PROMOTED = "promoted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Promotion:
    outcome: Outcome
    attribute: str
    accuracy: float
    changed: tuple[TripleKey, ...] = ()

    @property
    def abduction_triggered(self) -> bool:
        return self.outcome is Outcome.REJECTED


def candidate_keys(attribute: str) -> tuple[TripleKey, TripleKey]:
    return ((attribute, ELEMENT_OF, SENSOR), (attribute, CLASSIFIES, EVENT))


def note_measurement(store: KnowledgeStore, attribute: str, source: str, tick: int) -> list[Triple]:
    """Record that ``attribute`` is sensed and labeled, as secondary knowledge."""
    added = []
    for key in ((attribute, MEASURED_BY, SENSOR), (attribute, CLASSIFIES, EVENT)):
        if key not in store:
            t = Triple(*key, level=KnowledgeLevel.SECONDARY, source=source, asserted_at=tick)
            store.assert_triple(t)
            added.append(t)
    return added


def evaluate_promotion(
    store: KnowledgeStore,
    rule: IntervalRule,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    now: int = 0,
) -> Promotion:
    """Accept the attribute into the ontology or reject it from there."""
    keys = candidate_keys(rule.attribute)
    if rule.training_accuracy >= thresholds.theta_induction:
        for key in keys:
            if key in store:
                store.move_triple(key, KnowledgeLevel.PRIMARY)
            else:
                store.assert_triple(
                    Triple(*key, source=store.owner or "local", asserted_at=now)
                )
        return Promotion(Outcome.PROMOTED, rule.attribute, rule.training_accuracy, keys)
    removed = []
    for key in keys:
        if store.level_of(key) is KnowledgeLevel.PRIMARY:
            store.remove_triple(key)
            removed.append(key)
    return Promotion(Outcome.REJECTED, rule.attribute, rule.training_accuracy, tuple(removed))


def release_quarantine(store: KnowledgeStore, rule: IntervalRule) -> int:
    """Let foreign samples in once the local rule agrees with their labels."""
    return store.release(
        lambda o: o.attribute == rule.attribute
        and o.is_numeric
        and o.label is not None
        and classify(rule, o.value) == o.label
    )


# -- abduction ---------------------------------------------------------


def terminals(store: KnowledgeStore, start: str, max_len: int = ABDUCTION_DEPTH) -> list[str]:
    """Entities without outgoing relational edges reachable from ``start``."""
    adjacency = store.adjacency(exclude=TAXONOMIC)
    depth = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if depth[node] == max_len:
            continue
        for edge in adjacency.get(node, ()):
            if edge.object not in depth:
                depth[edge.object] = depth[node] + 1
                queue.append(edge.object)
    return sorted(n for n in depth if n != start and n not in adjacency)


def _supers(is_a: Mapping[str, set[str]], roots: Iterable[str]) -> set[str]:
    seen: set[str] = set()
    todo = list(roots)
    while todo:
        for parent in is_a.get(todo.pop(), ()):
            if parent not in seen:
                seen.add(parent)
                todo.append(parent)
    return seen


def abduce(
    store: KnowledgeStore,
    failing: str,
    lex: Lexicon,
    peer_knowledge: Iterable[Triple],
    now: int = 0,
    max_len: int = ABDUCTION_DEPTH,
) -> set[Hypothesis]:
    """Speculate explanations for an attribute that failed to classify."""
    if failing not in store.terms():
        raise ValueError(f"{failing!r} does not occur in the store")
    peers = list(peer_knowledge)
    source = store.owner or "local"
    known = {w for t in peers for w in t.key}
    known.update(w for t in store.ontology for w in t.key)

    parents: dict[str, set[str]] = {}
    children: dict[str, set[str]] = {}
    for t in peers:
        if t.predicate == IS_A:
            parents.setdefault(t.subject, set()).add(t.object)
            children.setdefault(t.object, set()).add(t.subject)

    emitted: dict[TripleKey, Hypothesis] = {}

    def emit(s: str, p: str, o: str) -> None:
        if s == o or p not in store.predicates:
            return
        key = (s, p, o)
        mirror = (o, p, s) if p == SYNONYMOUS_TO else None
        for k in filter(None, (key, mirror)):
            if k in store or k in emitted:
                return
        t = Triple(s, p, o, KnowledgeLevel.INVENTED, source, now)
        emitted[key] = Hypothesis(t)

    for t in terminals(store, failing, max_len):
        for s in sorted(lex.lookup_synonyms(t)):
            if s not in known:
                continue
            emit(t, SYNONYMOUS_TO, s)
            # s and every sibling kind under s point at broader kinds
            roots = {s} | children.get(s, set())
            for x in sorted(_supers(parents, roots) - {s, t}):
                emit(t, IS_A, x)

    # "[noun] are red": generalize categorized rules over same-pos words
    for rule in store.ontology:
        tag = lex.lookup_pos(rule.subject)
        if tag is None or lex.lookup_category(rule.object) is None:
            continue
        for word in lex.words_with_pos(tag):
            if word != rule.subject:
                emit(word, rule.predicate, rule.object)

    return set(emitted.values())


# -- verification ------------------------------------------------------


def record_activation(
    h: Hypothesis, sample_path: Sequence[Union[Triple, str]], consistent: bool
) -> Hypothesis:
    if h.state is not HypothesisState.PENDING:
        raise StateViolation(f"hypothesis {h.triple} is already {h.state.value}")
    if sample_path and isinstance(sample_path[0], Triple):
        nodes = path_nodes(sample_path)
    else:
        nodes = list(sample_path)
    if h.triple.subject not in nodes and h.triple.object not in nodes:
        return h
    return replace(
        h,
        activations=h.activations + 1,
        consistent=h.consistent + (1 if consistent else 0),
    )


def wilson_interval(successes: int, trials: int, z: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    margin = z / denom * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials))
    low = 0.0 if successes == 0 else max(0.0, center - margin)
    high = 1.0 if successes == trials else min(1.0, center + margin)
    # keep the point estimate inside despite rounding
    return (min(low, p), max(high, p))


def verify_hypothesis(h: Hypothesis, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> HypothesisState:
    if h.state is not HypothesisState.PENDING:
        return h.state
    if h.activations < thresholds.n_min:
        return HypothesisState.PENDING
    low, high = wilson_interval(h.consistent, h.activations, thresholds.z)
    if low >= thresholds.p_min:
        return HypothesisState.ASSERTED
    if high < thresholds.p_min:
        return HypothesisState.REFUTED
    return HypothesisState.PENDING


def settle_hypothesis(
    store: KnowledgeStore, key: TripleKey, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> HypothesisState:
    """Apply the verification verdict to the store partitions."""
    h = store.hypothesis(key)
    if h is None:
        raise KeyError(key)
    state = verify_hypothesis(h, thresholds)
    if state is HypothesisState.ASSERTED:
        store.move_triple(key, KnowledgeLevel.SECONDARY)
    elif state is HypothesisState.REFUTED:
        store.remove_triple(key)
    return state


def distribution_converged(values: Sequence[float], thresholds: Thresholds = DEFAULT_THRESHOLDS) -> bool:
    w = thresholds.window
    if len(values) < 2 * w:
        return False
    last, prev = values[-w:], values[-2 * w : -w]
    mean_last = statistics.fmean(last)
    spread = statistics.pstdev(last)
    if spread == 0:
        cv = 0.0
    elif mean_last == 0:
        cv = math.inf
    else:
        cv = spread / abs(mean_last)
    if cv > thresholds.cv_max:
        return False
    drift = abs(mean_last - statistics.fmean(prev))
    return drift <= thresholds.cv_max * abs(statistics.fmean(values))
