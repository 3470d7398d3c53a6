"""Scenario files, synthetic sensor streams and the simulation driver.

A scenario is a sectioned key-value text file::

    [scenario]      name, seed, until, model, predicates, functional, vocabulary
    [lexicon]       path = <lexicon file, relative to the scenario>
    [profiles]      coap.frame_payload_bytes = 512
    [nodes]         SO1 = device coap
    [links]         SO1 -> GW = latency:5 bandwidth:1000 loss:0 mode:duplex
    [triples]       SO1 = device carried_by user [level:primary] [at:500] [source:x]
    [streams]       name = SO1 lying_time unit:h count:30 start:1000 period:10 active:0.4..1.2 ...
    [schedule]      100 = broadcast_query SO1 event sensor
    [thresholds]    theta_induction = 0.8

``[triples]`` and ``[schedule]`` may repeat keys; every other section
takes each key once.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

from .errors import (
    InsufficientData,
    KnowmeshError,
    MessageTooLarge,
    MixedAttributes,
    NonNumericValues,
    ParseError,
    SimplexViolation,
    ValidationError,
)
from .exchange import (
    DEFAULT_PROFILES,
    Message,
    MessageKind,
    ProtocolProfile,
    SmartObject,
    bridge_frames,
    decode_frames,
    encode_message,
    handle_message,
    override_profiles,
)
from .knowledge import (
    DEFAULT_FUNCTIONAL,
    DEFAULT_PREDICATES,
    KnowledgeLevel,
    KnowledgeStore,
    Observation,
    Triple,
    is_canonical,
    serialize_store,
)
from .lexicon import Lexicon, load_lexicon, unknown_words
from .lifecycle import (
    DEFAULT_THRESHOLDS,
    IntervalRule,
    Outcome,
    Thresholds,
    abduce,
    candidate_keys,
    classify,
    distribution_converged,
    evaluate_promotion,
    induce_interval_rules,
    note_measurement,
    record_activation,
    release_quarantine,
    settle_hypothesis,
)
from .netsim import (
    MODEL_DEFAULTS,
    DEFAULT_BANDWIDTH,
    Link,
    LinkMode,
    Node,
    Role,
    Simulation,
    TraceRecord,
    check_topology,
)

SECTIONS = (
    "scenario", "lexicon", "profiles", "nodes", "links",
    "triples", "streams", "schedule", "thresholds",
)
REPEATABLE = frozenset({"triples", "schedule"})
SCENARIO_KEYS = frozenset({"name", "seed", "until", "model", "predicates", "functional", "vocabulary"})
ACTIONS = frozenset({"broadcast_query", "run_induction", "run_verification", "extract_events", "advertise"})
LEXICON_ENV = "KNOWMESH_LEXICON"
BUILTIN = {"case-study": "case_study.scn", "model1-simplex": "model1_simplex.scn",
           "model2-cloud": "model2_cloud.scn"}


class ScenarioRuntimeError(KnowmeshError):
    """A submodule failed while a scenario was running; message names the tick."""


# -- scenario model ----------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    id: str
    role: Role
    profile: str


@dataclass(frozen=True)
class TripleSpec:
    node: str
    triple: Triple
    at: int = 0


@dataclass(frozen=True)
class StreamSpec:
    name: str
    node: str
    attribute: str
    ranges: tuple[tuple[str, float, float], ...]
    count: int
    unit: Optional[str] = None
    start: int = 0
    period: int = 1
    target: Optional[str] = None
    decimals: int = 3


@dataclass(frozen=True)
class Action:
    tick: int
    verb: str
    node: str
    args: tuple[str, ...] = ()


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    until: int = 0
    model: int = 3
    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)
    profiles: dict[str, ProtocolProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    triples: list[TripleSpec] = field(default_factory=list)
    streams: list[StreamSpec] = field(default_factory=list)
    schedule: list[Action] = field(default_factory=list)
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    lexicon: Lexicon = field(default_factory=Lexicon)
    lexicon_path: Optional[Path] = None
    predicates: frozenset[str] = DEFAULT_PREDICATES
    functional: frozenset[str] = DEFAULT_FUNCTIONAL
    vocabulary: frozenset[str] = frozenset()

    def smart_objects(self) -> list[str]:
        return [n for n, spec in self.nodes.items() if spec.role is not Role.GATEWAY]

    def unrecognized_words(self) -> dict[str, set[str]]:
        """Per node, initial terms that are not human words."""
        flagged: dict[str, set[str]] = {}
        for spec in self.triples:
            bad = unknown_words(spec.triple.key, self.lexicon, self.vocabulary)
            if bad:
                flagged.setdefault(spec.node, set()).update(bad)
        for s in self.streams:
            bad = unknown_words([s.attribute, *(lab for lab, _, _ in s.ranges)], self.lexicon, self.vocabulary)
            if bad:
                flagged.setdefault(s.node, set()).update(bad)
        return flagged


# -- parsing -----------------------------------------------------------


def _sections(document: str) -> dict[str, list[tuple[int, str, str]]]:
    sections: dict[str, list[tuple[int, str, str]]] = {}
    current = None
    for number, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise ValidationError(f"line {number}: unknown section [{current}]")
            if current in sections:
                raise ValidationError(f"line {number}: section [{current}] appears twice")
            sections[current] = []
            continue
        if current is None:
            raise ParseError("entry outside any section", number)
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError("expected 'key = value'", number)
        entries = sections[current]
        key = key.strip()
        if current not in REPEATABLE and any(k == key for _, k, _ in entries):
            raise ValidationError(f"line {number}: duplicate key {key!r} in [{current}]")
        entries.append((number, key, value.strip()))
    return sections


def _int(text: str, where: str, minimum: int = 0) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ValidationError(f"{where}: expected an integer, got {text!r}") from None
    if value < minimum:
        raise ValidationError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"{where}: expected a number, got {text!r}") from None


def _term(text: str, where: str) -> str:
    if not is_canonical(text):
        raise ValidationError(f"{where}: {text!r} is not a canonical term")
    return text


def _options(tokens: Sequence[str], where: str) -> dict[str, str]:
    opts = {}
    for tok in tokens:
        key, sep, value = tok.partition(":")
        if not sep or not key or not value:
            raise ValidationError(f"{where}: expected key:value, got {tok!r}")
        if key in opts:
            raise ValidationError(f"{where}: option {key!r} given twice")
        opts[key] = value
    return opts


def _word_list(text: str) -> list[str]:
    return [w for w in text.replace(",", " ").split() if w]


def load_scenario(document: str, base_dir: Union[str, Path, None] = None) -> Scenario:
    """Parse and fully validate a scenario document."""
    sections = _sections(document)
    sc = Scenario()
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    for number, key, value in sections.get("scenario", []):
        where = f"line {number} [scenario] {key}"
        if key not in SCENARIO_KEYS:
            raise ValidationError(f"{where}: unknown key")
        if key == "name":
            sc.name = value
        elif key in ("seed", "until"):
            setattr(sc, key, _int(value, where))
        elif key == "model":
            sc.model = _int(value, where)
            if sc.model not in MODEL_DEFAULTS:
                raise ValidationError(f"{where}: deployment model must be 1, 2 or 3")
        else:
            words = frozenset(_term(w, where) for w in _word_list(value))
            if key == "predicates":
                sc.predicates = DEFAULT_PREDICATES | words
            elif key == "functional":
                sc.functional = words
            else:
                sc.vocabulary = words

    for number, key, value in sections.get("lexicon", []):
        if key != "path":
            raise ValidationError(f"line {number} [lexicon]: unknown key {key!r}")
        sc.lexicon_path = base / value
    override = os.environ.get(LEXICON_ENV)
    if override:
        sc.lexicon_path = Path(override)
    if sc.lexicon_path is not None:
        try:
            sc.lexicon = load_lexicon(sc.lexicon_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValidationError(f"cannot read lexicon {sc.lexicon_path}: {exc}") from None

    overrides: dict[str, dict[str, str]] = {}
    for number, key, value in sections.get("profiles", []):
        name, sep, fld = key.partition(".")
        if not sep:
            raise ValidationError(f"line {number} [profiles]: expected profile.field, got {key!r}")
        overrides.setdefault(name, {})[fld] = value
    try:
        sc.profiles = override_profiles(overrides)
    except ValueError as exc:
        raise ValidationError(f"[profiles]: {exc}") from None

    for number, key, value in sections.get("nodes", []):
        where = f"line {number} [nodes] {key}"
        parts = value.split()
        if len(parts) != 2:
            raise ValidationError(f"{where}: expected '<role> <profile>'")
        try:
            role = Role(parts[0])
        except ValueError:
            raise ValidationError(f"{where}: unknown role {parts[0]!r}") from None
        if parts[1] not in sc.profiles:
            raise ValidationError(f"{where}: unknown profile {parts[1]!r}")
        if not key or any(c.isspace() or c in "/." for c in key):
            raise ValidationError(f"{where}: node ids may not contain spaces, '/' or '.'")
        sc.nodes[key] = NodeSpec(key, role, parts[1])

    def need_node(node: str, where: str) -> str:
        if node not in sc.nodes:
            raise ValidationError(f"{where}: undeclared node {node!r}")
        return node

    def need_smart_object(node: str, where: str) -> str:
        need_node(node, where)
        if sc.nodes[node].role is Role.GATEWAY:
            raise ValidationError(f"{where}: gateway {node!r} holds no knowledge store")
        return node

    seen_pairs = set()
    for number, key, value in sections.get("links", []):
        where = f"line {number} [links] {key}"
        src, arrow, dst = key.partition("->")
        src, dst = src.strip(), dst.strip()
        if not arrow:
            raise ValidationError(f"{where}: expected 'A -> B'")
        need_node(src, where)
        need_node(dst, where)
        if frozenset((src, dst)) in seen_pairs:
            raise ValidationError(f"{where}: nodes linked twice")
        seen_pairs.add(frozenset((src, dst)))
        opts = _options(value.split(), where)
        unknown = set(opts) - {"latency", "bandwidth", "loss", "mode"}
        if unknown:
            raise ValidationError(f"{where}: unknown link options {sorted(unknown)}")
        mode, latency = MODEL_DEFAULTS[sc.model]
        if sc.model != 1 and not sc.profiles[sc.nodes[src].profile].duplex:
            mode = LinkMode.SIMPLEX
        if "mode" in opts:
            try:
                mode = LinkMode(opts["mode"])
            except ValueError:
                raise ValidationError(f"{where}: unknown mode {opts['mode']!r}") from None
        try:
            link = Link(
                src, dst,
                _int(opts.get("latency", str(latency)), where),
                _int(opts.get("bandwidth", str(DEFAULT_BANDWIDTH)), where, 1),
                _float(opts.get("loss", "0"), where),
                mode,
            )
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        roles = {sc.nodes[src].role, sc.nodes[dst].role}
        if Role.GATEWAY not in roles and sc.nodes[src].profile != sc.nodes[dst].profile:
            raise ValidationError(f"{where}: different profiles need a gateway in between")
        sc.links.append(link)
    check_topology(sc.model, {n: s.role for n, s in sc.nodes.items()}, sc.links)

    for number, key, value in sections.get("triples", []):
        where = f"line {number} [triples] {key}"
        need_smart_object(key, where)
        tokens = value.split()
        if len(tokens) < 3:
            raise ValidationError(f"{where}: expected 'subject predicate object [options]'")
        s, p, o = (_term(t, where) for t in tokens[:3])
        if p not in sc.predicates:
            raise ValidationError(f"{where}: predicate {p!r} is not in the vocabulary")
        opts = _options(tokens[3:], where)
        unknown = set(opts) - {"level", "at", "source"}
        if unknown:
            raise ValidationError(f"{where}: unknown triple options {sorted(unknown)}")
        try:
            level = KnowledgeLevel.parse(opts.get("level", "primary"))
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        at = _int(opts.get("at", "0"), where)
        source = opts.get("source", key)
        sc.triples.append(TripleSpec(key, Triple(s, p, o, level, source, at), at))

    for number, key, value in sections.get("streams", []):
        where = f"line {number} [streams] {key}"
        tokens = value.split()
        if len(tokens) < 2:
            raise ValidationError(f"{where}: expected '<node> <attribute> options'")
        node = need_smart_object(tokens[0], where)
        attribute = _term(tokens[1], where)
        opts = _options(tokens[2:], where)
        ranges = []
        for label in list(opts):
            if ".." not in opts[label]:
                continue
            lo, _, hi = opts.pop(label).partition("..")
            low, high = _float(lo, where), _float(hi, where)
            if low > high:
                raise ValidationError(f"{where}: range for {label!r} has negative spread")
            ranges.append((_term(label, where), low, high))
        unknown = set(opts) - {"unit", "count", "start", "period", "target", "decimals"}
        if unknown:
            raise ValidationError(f"{where}: unknown stream options {sorted(unknown)}")
        if not ranges:
            raise ValidationError(f"{where}: stream declares no label ranges")
        sc.streams.append(
            StreamSpec(
                key, node, attribute, tuple(ranges),
                _int(opts.get("count", "0"), where),
                _term(opts["unit"], where) if "unit" in opts else None,
                _int(opts.get("start", "0"), where),
                _int(opts.get("period", "1"), where, 1),
                _term(opts["target"], where) if "target" in opts else None,
                _int(opts.get("decimals", "3"), where),
            )
        )

    attributes = {(s.node, s.attribute) for s in sc.streams}
    last_tick = 0
    for number, key, value in sections.get("schedule", []):
        where = f"line {number} [schedule] {key}"
        tick = _int(key, where)
        if tick < last_tick:
            raise ValidationError(f"{where}: schedule ticks must be non-decreasing")
        last_tick = tick
        tokens = value.split()
        if len(tokens) < 2 or tokens[0] not in ACTIONS:
            raise ValidationError(f"{where}: expected '<action> <node> ...' with action in {sorted(ACTIONS)}")
        verb, node, args = tokens[0], need_smart_object(tokens[1], where), tokens[2:]
        if verb == "extract_events":
            if not args:
                raise ValidationError(f"{where}: extract_events needs an attribute")
            opts = _options(args[1:], where)
            if set(opts) - {"periodic"}:
                raise ValidationError(f"{where}: unknown options {sorted(set(opts) - {'periodic'})}")
            if "periodic" in opts:
                _int(opts["periodic"], where, 1)
            names = args[:1]
        elif verb in ("run_verification", "advertise"):
            if args:
                raise ValidationError(f"{where}: {verb} takes no arguments")
            names = []
        else:
            names = args
            if verb == "broadcast_query" and not args:
                raise ValidationError(f"{where}: broadcast_query needs at least one kind")
        for name in names:
            _term(name, where)
            if verb in ("run_induction", "extract_events") and (node, name) not in attributes:
                raise ValidationError(f"{where}: attribute {name!r} has no stream on {node}")
        sc.schedule.append(Action(tick, verb, node, tuple(args)))

    sc.thresholds = Thresholds.from_mapping({k: v for _, k, v in sections.get("thresholds", [])})
    return sc


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    return load_scenario(path.read_text(encoding="utf-8"), path.parent)


def builtin_scenario_path(name: str) -> Path:
    return Path(str(resources.files("knowmesh") / "data" / BUILTIN[name]))


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario by file path or built-in name."""
    if ref in BUILTIN and not Path(ref).exists():
        return load_scenario_file(builtin_scenario_path(ref))
    return load_scenario_file(ref)


# -- streams and events --------------------------------------------------


def generate_stream(spec: StreamSpec, seed: int) -> list[Observation]:
    """``count`` labeled samples drawn uniformly, labels in round-robin order.

    Values are rounded to ``spec.decimals`` places and clamped to the range.
    """
    rng = random.Random(seed)
    out = []
    for i in range(spec.count):
        label, low, high = spec.ranges[i % len(spec.ranges)]
        value = min(max(round(rng.uniform(low, high), spec.decimals), low), high)
        out.append(
            Observation(spec.attribute, value, spec.unit, label,
                        spec.start + i * spec.period, spec.node)
        )
    return out


class StateEvent(NamedTuple):
    tick: int
    previous: Optional[float]
    current: float


def extract_events(samples: Sequence[tuple[int, float]], periodic: Optional[int] = None) -> list[StateEvent]:
    """Change-of-state events, or with ``periodic=k`` one event every k ticks."""
    events = []
    if periodic is not None:
        if periodic < 1:
            raise ValueError("periodic interval must be >= 1")
        last_tick = None
        last_value = None
        for tick, value in samples:
            if last_tick is None or tick >= last_tick + periodic:
                events.append(StateEvent(tick, last_value, value))
                last_tick, last_value = tick, value
        return events
    for (_, before), (tick, value) in zip(samples, samples[1:]):
        if value != before:
            events.append(StateEvent(tick, before, value))
    return events


# -- running -----------------------------------------------------------


def _key_text(key: tuple[str, str, str]) -> str:
    return " ".join(key)


@dataclass
class RunResult:
    stores: dict[str, KnowledgeStore]
    trace: list[TraceRecord]
    summary: dict[str, int]
    rules: dict[str, dict[str, IntervalRule]]
    smart_objects: dict[str, SmartObject]
    trace_text: str

    def dumps(self) -> dict[str, str]:
        return {node: serialize_store(store) for node, store in sorted(self.stores.items())}


class Runner:
    """Wires smart objects and gateways onto a :class:`Simulation`."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        self.sc = scenario
        self.sim = Simulation(scenario.seed if seed is None else seed)
        self.sos: dict[str, SmartObject] = {}
        self.rules: dict[str, dict[str, IntervalRule]] = {}
        self.targets: dict[tuple[str, str], str] = {}
        self.cursor: dict[str, int] = {}
        self.flagged: dict[str, set[str]] = {}
        self._buffers: dict[str, dict[str, list]] = {}
        self._seen: dict[str, set[str]] = {}
        self._serial: dict[str, int] = {}

        for spec in scenario.nodes.values():
            self.sim.add_node(Node(spec.id, spec.role, spec.profile,
                                  lambda sim, f, s, n=spec.id: self._on_frame(n, f, s)))
            self._buffers[spec.id] = {}
            self._seen[spec.id] = set()
            if spec.role is not Role.GATEWAY:
                store = KnowledgeStore(spec.id, scenario.predicates, scenario.functional)
                self.sos[spec.id] = SmartObject(spec.id, store)
                self.rules[spec.id] = {}
                self.cursor[spec.id] = 0
        for link in scenario.links:
            self.sim.add_link(link)

        for ts in scenario.triples:
            if ts.at == 0:
                self.sos[ts.node].store.assert_triple(ts.triple)
            else:
                self.sim.schedule(ts.at, lambda ts=ts: self._inject(ts))
        for spec in scenario.streams:
            if spec.target is not None:
                self.targets[(spec.node, spec.attribute)] = spec.target
            for obs in generate_stream(spec, self.sim.rng.getrandbits(32)):
                self.sim.schedule(obs.timestamp, lambda o=obs: self._observe(o))
        for action in scenario.schedule:
            self.sim.schedule(action.tick, lambda a=action: self._act(a))
        for node in sorted(self.sos):
            self._check_words(node)

    # -- helpers -------------------------------------------------------

    def _lifecycle(self, node: str, detail: str) -> None:
        self.sim.record("lifecycle", node, detail)

    def _check_words(self, node: str) -> None:
        store = self.sos[node].store
        bad = unknown_words(store.terms(), self.sc.lexicon, self.sc.vocabulary)
        fresh = bad - self.flagged.setdefault(node, set())
        if fresh:
            self.flagged[node] |= fresh
            self.sim.record("store", node, "unrecognized_words " + ",".join(sorted(fresh)))

    def _message_id(self, node: str) -> str:
        self._serial[node] = self._serial.get(node, 0) + 1
        return f"{node}.m{self._serial[node]}"

    def _frames(self, node: str, m: Message):
        profile = self.sc.profiles[self.sc.nodes[node].profile]
        return encode_message(m, profile, self._message_id(node))

    def _emit(self, node: str, m: Message, reply_to: Optional[str] = None) -> None:
        try:
            frames = self._frames(node, m)
        except MessageTooLarge as exc:
            self.sim.record("drop", node, f"too_large {m.kind.value}: {exc}")
            return
        self._seen[node].add(frames[0].message_id)
        self.sim.record("send", node, f"message {m.kind.value} corr={m.correlation} frames={len(frames)}")
        if reply_to is None:
            self.sim.broadcast(frames, node)
            return
        for frame in frames:
            try:
                self.sim.send(frame, node, reply_to)
            except SimplexViolation:
                break  # recorded by the simulator

    def _drain_notes(self, node: str) -> None:
        for note in self.sos[node].take_notes():
            self.sim.record("store", node, note)

    # -- network pipeline ----------------------------------------------

    def _on_frame(self, node: str, frame, sender: str) -> None:
        buffer = self._buffers[node]
        mid = frame.message_id
        if mid in self._seen[node]:
            return
        parts = buffer.setdefault(mid, {})
        parts[frame.index] = frame
        if len(parts) < frame.count:
            return
        frames = [parts[i] for i in sorted(parts)]
        del buffer[mid]
        self._seen[node].add(mid)
        if self.sc.nodes[node].role is Role.GATEWAY:
            self._forward(node, frames, sender)
            return
        try:
            m = decode_frames(frames)
        except KnowmeshError as exc:
            self.sim.record("drop", node, f"undecodable {mid}: {exc}")
            return
        self.sim.record("deliver", node, f"message {m.kind.value} from={m.sender} corr={m.correlation}")
        so = self.sos[node]
        _, replies = handle_message(so, m, self.sim.now)
        self._drain_notes(node)
        self._check_words(node)
        for reply in replies:
            is_reply = reply.kind in (MessageKind.REPLY_PRIMARY, MessageKind.REPLY_SECONDARY)
            self._emit(node, reply, reply_to=sender if is_reply else None)

    def _forward(self, node: str, frames, sender: str) -> None:
        source = self.sc.profiles[frames[0].profile]
        for link in self.sim.outgoing(node):
            neighbor = link.other(node)
            if neighbor == sender:
                continue
            target = self.sc.profiles[self.sc.nodes[neighbor].profile]
            try:
                out = bridge_frames(frames, source, target) if target.name != source.name else list(frames)
            except KnowmeshError as exc:
                self.sim.record("drop", node, f"bridge_failed {frames[0].message_id} to={neighbor}: {exc}")
                continue
            self.sim.record(
                "send", node,
                f"bridge {frames[0].message_id} {source.name}->{target.name} to={neighbor} frames={len(out)}",
            )
            for frame in out:
                self.sim.schedule_send(frame, link, node)

    # -- scheduled work ------------------------------------------------

    def _inject(self, ts: TripleSpec) -> None:
        store = self.sos[ts.node].store
        try:
            if store.assert_triple(ts.triple):
                self.sim.record("store", ts.node, f"inject {_key_text(ts.triple.key)} {ts.triple.level.value} source={ts.triple.source}")
        except KnowmeshError as exc:
            raise ScenarioRuntimeError(f"tick {self.sim.now}: injecting into {ts.node}: {exc}") from exc
        self._check_words(ts.node)

    def _observe(self, obs: Observation) -> None:
        store = self.sos[obs.source].store
        store.record_observation(obs)
        for t in note_measurement(store, obs.attribute, obs.source, self.sim.now):
            self.sim.record("store", obs.source, f"add {_key_text(t.key)} {t.level.value}")
        self.sim.record("store", obs.source, f"observe {obs.attribute}={obs.value!r} label={obs.label or '-'}")
        rule = self.rules[obs.source].get(obs.attribute)
        if rule is not None and obs.is_numeric and classify(rule, obs.value) is None:
            # a value no interval covers: the rule cannot conclude a class
            self._lifecycle(obs.source, f"abduction_trigger {obs.attribute} unclassified={obs.value!r}")
            self._abduce(obs.source, obs.attribute)
            self._check_words(obs.source)

    def _act(self, action: Action) -> None:
        try:
            getattr(self, f"_do_{action.verb}")(action)
        except ScenarioRuntimeError:
            raise
        except KnowmeshError as exc:
            raise ScenarioRuntimeError(f"tick {self.sim.now}: {action.verb} on {action.node}: {exc}") from exc
        self._check_words(action.node)

    def _do_broadcast_query(self, action: Action) -> None:
        so = self.sos[action.node]
        self._emit(action.node, so.query_primary(action.args))

    def _do_advertise(self, action: Action) -> None:
        m = self.sos[action.node].advertise()
        if m is None:
            self._lifecycle(action.node, "advertise nothing_to_offer")
            return
        services = ",".join(f"{s}:{lv.value}" for s, lv in m.body)
        self._lifecycle(action.node, f"advertise {services}")
        self._emit(action.node, m)

    def _local_samples(self, node: str, attribute: str) -> list[Observation]:
        return [
            o for o in self.sos[node].store.observations
            if o.attribute == attribute and not o.quarantined and o.label is not None and o.is_numeric
        ]

    def _do_run_induction(self, action: Action) -> None:
        node = action.node
        store = self.sos[node].store
        attributes = action.args or sorted(
            {o.attribute for o in store.observations if not o.quarantined}
        )
        for attribute in attributes:
            try:
                rule = induce_interval_rules(self._local_samples(node, attribute), self.sc.thresholds)
            except (InsufficientData, MixedAttributes, NonNumericValues) as exc:
                self._lifecycle(node, f"induction_skipped {attribute}: {exc}")
                continue
            spans = " ".join(f"{e}:{lo!r}..{hi!r}" for e, lo, hi in rule.intervals)
            self._lifecycle(node, f"induced {attribute} loo_accuracy={rule.training_accuracy:.4f} {spans}")
            before = {k: store.level_of(k) for k in candidate_keys(attribute)}
            result = evaluate_promotion(store, rule, self.sc.thresholds, self.sim.now)
            if result.outcome is Outcome.PROMOTED:
                self.rules[node][attribute] = rule
                self._lifecycle(node, f"promoted {attribute}")
                for key in result.changed:
                    old = before[key]
                    if old is None:
                        self._lifecycle(node, f"add {_key_text(key)} primary")
                    elif old is not KnowledgeLevel.PRIMARY:
                        self._lifecycle(node, f"move {_key_text(key)} {old.value}->primary")
                released = release_quarantine(store, rule)
                if released:
                    self._lifecycle(node, f"released {released} quarantined {attribute} samples")
            else:
                self.rules[node].pop(attribute, None)
                self._lifecycle(node, f"rejected {attribute} loo_accuracy={rule.training_accuracy:.4f}")
                for key in result.changed:
                    self._lifecycle(node, f"remove {_key_text(key)} primary")
                self._lifecycle(node, f"abduction_trigger {attribute}")
                self._abduce(node, attribute)

    def _abduce(self, node: str, failing: str) -> None:
        store = self.sos[node].store
        peers = [t for t in store.ontology if t.source != node]
        found = abduce(store, failing, self.sc.lexicon, peers, self.sim.now)
        for h in sorted(found, key=lambda h: h.key):
            store.assert_triple(h.triple)
            self._lifecycle(node, f"add {_key_text(h.key)} invented")
        if not found:
            self._lifecycle(node, f"abduction_empty {failing}")

    def _do_run_verification(self, action: Action) -> None:
        node = action.node
        store = self.sos[node].store
        fresh = store.observations[self.cursor[node]:]
        self.cursor[node] = len(store.observations)
        paths: dict[str, tuple] = {}
        for obs in fresh:
            target = self.targets.get((node, obs.attribute))
            if target is None or obs.quarantined or obs.label is None or not obs.is_numeric:
                continue
            if obs.attribute not in paths:
                found = store.find_paths(obs.attribute, target, 5)
                paths[obs.attribute] = found[0] if found else None
            path = paths[obs.attribute]
            if path is None:
                continue
            rule = self.rules[node].get(obs.attribute)
            consistent = rule is not None and classify(rule, obs.value) == obs.label
            for h in store.hypotheses():
                updated = record_activation(h, path, consistent)
                if updated is not h:
                    store.update_hypothesis(updated)
        for attribute, path in sorted(paths.items()):
            values = [o.value for o in self._local_samples(node, attribute)]
            converged = distribution_converged(values, self.sc.thresholds)
            self._lifecycle(node, f"convergence {attribute} n={len(values)} converged={'yes' if converged else 'no'}")
        for h in store.hypotheses():
            state = settle_hypothesis(store, h.key, self.sc.thresholds)
            self._lifecycle(node, f"verify {_key_text(h.key)} {h.consistent}/{h.activations} {state.value}")
            if state.value == "asserted":
                self._lifecycle(node, f"move {_key_text(h.key)} invented->secondary")
            elif state.value == "refuted":
                self._lifecycle(node, f"remove {_key_text(h.key)} invented")

    def _do_extract_events(self, action: Action) -> None:
        attribute = action.args[0]
        opts = _options(action.args[1:], "extract_events")
        periodic = int(opts["periodic"]) if "periodic" in opts else None
        samples = sorted(
            (o.timestamp, o.value) for o in self.sos[action.node].store.observations
            if o.attribute == attribute and o.is_numeric and not o.quarantined
        )
        events = extract_events(samples, periodic)
        for ev in events:
            prev = "-" if ev.previous is None else repr(ev.previous)
            self._lifecycle(action.node, f"event {attribute} at={ev.tick} {prev}->{ev.current!r}")
        self._lifecycle(action.node, f"extracted {len(events)} {attribute} events")

    def run(self, until: Optional[int] = None) -> RunResult:
        end = self.sc.until if until is None else until
        try:
            self.sim.run_until(end)
        except ScenarioRuntimeError:
            raise
        except KnowmeshError as exc:
            raise ScenarioRuntimeError(f"tick {self.sim.now}: {exc}") from exc
        return RunResult(
            stores={n: so.store for n, so in self.sos.items()},
            trace=list(self.sim.trace),
            summary=self.sim.summary(),
            rules={n: dict(r) for n, r in self.rules.items()},
            smart_objects=dict(self.sos),
            trace_text=self.sim.trace_text(),
        )


def run_scenario(scenario: Scenario, seed: Optional[int] = None, until: Optional[int] = None) -> RunResult:
    return Runner(scenario, seed).run(until)


def dump_store(store: KnowledgeStore, destination: Union[str, Path, None] = None) -> str:
    text = serialize_store(store)
    if destination is not None:
        Path(destination).write_text(text, encoding="utf-8")
    return text
