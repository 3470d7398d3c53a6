"""Machine-to-machine knowledge exchange.

Messages carry a knowledge-level tag and a body of record lines using
the same grammar as store files.  On the wire a message is a
length-prefixed UTF-8 document cut into frames sized for an IoT
application protocol profile; a frame is ``header_bytes`` of zero
padding, an ASCII ``id:<msg-id> frag:<i>/<n>\\n`` line, then payload.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    IncompleteMessage,
    LevelConflict,
    MessageTooLarge,
    ParseError,
    ProfileMismatch,
    UnknownKind,
    UnknownPredicate,
)
from .knowledge import (
    CLASSIFIES,
    ELEMENT_OF,
    KnowledgeLevel,
    KnowledgeStore,
    Observation,
    Triple,
    observation_line,
    parse_observation_fields,
    parse_triple_fields,
    require_term,
    triple_line,
)
from .lifecycle import SENSOR, note_measurement

# -- protocol profiles -------------------------------------------------


@dataclass(frozen=True)
class ProtocolProfile:
    name: str
    header_bytes: int
    max_message_bytes: Optional[int]  # None: unbounded
    frame_payload_bytes: int
    duplex: bool
    weight_class: int

    def __post_init__(self) -> None:
        if self.header_bytes < 0 or self.frame_payload_bytes < 1:
            raise ValueError(f"{self.name}: bad header or frame payload size")
        if self.max_message_bytes is not None and self.frame_payload_bytes > self.max_message_bytes:
            raise ValueError(f"{self.name}: frame payload exceeds max message size")


MiB = 1024 * 1024

DEFAULT_PROFILES: dict[str, ProtocolProfile] = {
    "coap": ProtocolProfile("coap", 2, 256 * MiB, 1024, False, 0),
    "mqtt": ProtocolProfile("mqtt", 16, 256 * MiB - 1, 65536, True, 1),
    "amqp": ProtocolProfile("amqp", 32, 2**32 - 1, 65536, True, 2),
    "http": ProtocolProfile("http", 256, None, MiB, True, 3),
}


def override_profiles(
    overrides: Mapping[str, Mapping[str, str]],
    base: Mapping[str, ProtocolProfile] = DEFAULT_PROFILES,
) -> dict[str, ProtocolProfile]:
    """Apply ``{profile: {field: raw value}}`` overrides, validating the result."""
    profiles = dict(base)
    for name, changes in overrides.items():
        if name not in profiles:
            raise ValueError(f"unknown protocol profile {name!r}")
        kwargs: dict = {}
        for key, raw in changes.items():
            if key == "duplex":
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes")
            elif key == "max_message_bytes" and raw.strip().lower() in ("none", "unbounded"):
                kwargs[key] = None
            elif key in ("header_bytes", "max_message_bytes", "frame_payload_bytes", "weight_class"):
                kwargs[key] = int(raw)
            else:
                raise ValueError(f"unknown profile field {key!r}")
        profiles[name] = replace(profiles[name], **kwargs)
    ordered = sorted(profiles.values(), key=lambda p: p.weight_class)
    w = {p.name: p.weight_class for p in ordered}
    if not (w["coap"] < w["mqtt"] <= w["amqp"] < w["http"]):
        raise ValueError("profile weights must keep coap < mqtt <= amqp < http")
    return profiles


# -- messages ----------------------------------------------------------


class MessageKind(Enum):
    QUERY_PRIMARY = "QueryPrimary"
    REPLY_PRIMARY = "ReplyPrimary"
    QUERY_SECONDARY = "QuerySecondary"
    REPLY_SECONDARY = "ReplySecondary"
    ADVERTISE = "Advertise"


_EXPECTED_LEVEL = {
    MessageKind.QUERY_PRIMARY: KnowledgeLevel.PRIMARY,
    MessageKind.REPLY_PRIMARY: KnowledgeLevel.PRIMARY,
    MessageKind.QUERY_SECONDARY: KnowledgeLevel.SECONDARY,
    MessageKind.REPLY_SECONDARY: KnowledgeLevel.SECONDARY,
}

_TOKEN = re.compile(r"[^\s/]+")

Body = Union[frozenset, tuple]


@dataclass(frozen=True)
class Message:
    """Knowledge-exchange message.

    Body by kind: QueryPrimary/QuerySecondary a frozenset of terms,
    ReplyPrimary a sorted tuple of triples, ReplySecondary a tuple of
    observations (order kept), Advertise a tuple of (service, level).
    """

    kind: MessageKind
    sender: str
    correlation: str
    level_tag: KnowledgeLevel
    body: Body = ()

    def __post_init__(self) -> None:
        for name in ("sender", "correlation"):
            if not _TOKEN.fullmatch(getattr(self, name)):
                raise ValueError(f"{name} must be a token, got {getattr(self, name)!r}")
        expected = _EXPECTED_LEVEL.get(self.kind)
        if expected is not None and self.level_tag is not expected:
            raise ValueError(f"{self.kind.value} must be tagged {expected.value}")
        kind, body = self.kind, self.body
        if kind in (MessageKind.QUERY_PRIMARY, MessageKind.QUERY_SECONDARY):
            body = frozenset(require_term(t) for t in body)
        elif kind is MessageKind.REPLY_PRIMARY:
            body = tuple(sorted(body, key=triple_line))
            if any(t.level is not KnowledgeLevel.PRIMARY for t in body):
                raise ValueError("ReplyPrimary may only carry primary triples")
        elif kind is MessageKind.REPLY_SECONDARY:
            body = tuple(body)
            if not all(isinstance(o, Observation) for o in body):
                raise ValueError("ReplySecondary carries observations")
        else:
            body = tuple((require_term(s), lv) for s, lv in body)
        object.__setattr__(self, "body", body)


def body_text(m: Message) -> str:
    lines = [f"{m.kind.value} {m.sender} {m.correlation} {m.level_tag.value}"]
    if m.kind in (MessageKind.QUERY_PRIMARY, MessageKind.QUERY_SECONDARY):
        lines += [f"K\t{t}" for t in sorted(m.body)]
    elif m.kind is MessageKind.REPLY_PRIMARY:
        lines += [triple_line(t) for t in m.body]
    elif m.kind is MessageKind.REPLY_SECONDARY:
        lines += [observation_line(o) for o in m.body]
    else:
        lines += [f"S\t{s}\t{lv.value}" for s, lv in m.body]
    return "\n".join(lines) + "\n"


def parse_body(text: str) -> Message:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty message body", 1)
    head = lines[0].split(" ")
    if len(head) != 4:
        raise ParseError("message head needs 'kind sender correlation level'", 1)
    try:
        kind = MessageKind(head[0])
    except ValueError:
        raise UnknownKind(f"unknown message kind {head[0]!r}") from None
    records: list = []
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        try:
            if fields[0] == "K" and len(fields) == 2:
                records.append(fields[1])
            elif fields[0] == "T":
                records.append(parse_triple_fields(fields))
            elif fields[0] == "O":
                records.append(parse_observation_fields(fields))
            elif fields[0] == "S" and len(fields) == 3:
                records.append((fields[1], KnowledgeLevel.parse(fields[2])))
            else:
                raise ValueError(f"unexpected record {line!r}")
        except ValueError as exc:
            raise ParseError(str(exc), number) from None
    try:
        return Message(kind, head[1], head[2], KnowledgeLevel.parse(head[3]), records)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc), 1) from None


def encode_payload(m: Message) -> bytes:
    body = body_text(m).encode("utf-8")
    return f"{len(body)}\n".encode("ascii") + body


def decode_payload(data: bytes) -> Message:
    prefix, sep, body = data.partition(b"\n")
    if not sep or not prefix.isdigit():
        raise ParseError("missing length prefix", 1)
    if int(prefix) != len(body):
        raise ParseError(f"length prefix {int(prefix)} but {len(body)} body bytes", 1)
    try:
        return parse_body(body.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"body is not UTF-8: {exc}", 1) from None


# -- framing -----------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    profile: str
    message_id: str
    index: int
    count: int
    payload: bytes
    header_bytes: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.index < self.count:
            raise ValueError(f"fragment index {self.index} outside 0..{self.count - 1}")
        if not _TOKEN.fullmatch(self.message_id):
            raise ValueError(f"message id must be a token, got {self.message_id!r}")

    def to_bytes(self) -> bytes:
        line = f"id:{self.message_id} frag:{self.index}/{self.count}\n".encode("ascii")
        return bytes(self.header_bytes) + line + self.payload

    @property
    def size(self) -> int:
        return len(self.to_bytes())


_FRAME_LINE = re.compile(rb"id:([^\s/]+) frag:(\d+)/(\d+)\n")


def parse_frame(data: bytes, profile: ProtocolProfile) -> Frame:
    header, rest = data[: profile.header_bytes], data[profile.header_bytes :]
    if len(header) != profile.header_bytes or any(header):
        raise ParseError(f"expected {profile.header_bytes} zero header bytes")
    match = _FRAME_LINE.match(rest)
    if match is None:
        raise ParseError("missing frame id line")
    mid, index, count = match.groups()
    return Frame(
        profile.name,
        mid.decode("ascii"),
        int(index),
        int(count),
        rest[match.end() :],
        profile.header_bytes,
    )


def fragment_count(length: int, profile: ProtocolProfile) -> int:
    # an empty payload still travels as one header-only frame
    return max(1, math.ceil(length / profile.frame_payload_bytes))


def fragment(data: bytes, profile: ProtocolProfile, message_id: str) -> list[Frame]:
    if profile.max_message_bytes is not None and len(data) > profile.max_message_bytes:
        raise MessageTooLarge(
            f"{len(data)} bytes exceed {profile.name} limit of {profile.max_message_bytes}"
        )
    step = profile.frame_payload_bytes
    n = fragment_count(len(data), profile)
    return [
        Frame(profile.name, message_id, i, n, data[i * step : (i + 1) * step], profile.header_bytes)
        for i in range(n)
    ]


def reassemble(frames: Sequence[Frame]) -> bytes:
    if not frames:
        raise IncompleteMessage("no frames")
    profiles = {f.profile for f in frames}
    if len(profiles) > 1:
        raise ProfileMismatch(f"frames mix profiles {sorted(profiles)}")
    if len({f.message_id for f in frames}) > 1:
        raise ParseError("frames belong to different messages")
    counts = {f.count for f in frames}
    if len(counts) > 1:
        raise ParseError(f"frames disagree on fragment count: {sorted(counts)}")
    count = counts.pop()
    by_index: dict[int, bytes] = {}
    for f in frames:
        if by_index.setdefault(f.index, f.payload) != f.payload:
            raise ParseError(f"conflicting duplicates of fragment {f.index}")
    missing = sorted(set(range(count)) - set(by_index))
    if missing:
        raise IncompleteMessage(f"message {frames[0].message_id} missing fragments {missing}")
    return b"".join(by_index[i] for i in range(count))


def default_message_id(m: Message) -> str:
    return f"{m.sender}.{m.kind.value}.{m.correlation}"


def encode_message(m: Message, profile: ProtocolProfile, message_id: Optional[str] = None) -> list[Frame]:
    return fragment(encode_payload(m), profile, message_id or default_message_id(m))


def decode_frames(frames: Sequence[Frame]) -> Message:
    return decode_payload(reassemble(frames))


def bridge_frames(
    frames: Sequence[Frame], source: ProtocolProfile, target: ProtocolProfile
) -> list[Frame]:
    """Gateway adaptor: reassemble under ``source`` and re-frame under ``target``."""
    if any(f.profile != source.name for f in frames):
        raise ProfileMismatch(f"frames are not all {source.name}")
    data = reassemble(frames)
    decode_payload(data)  # reject garbage before forwarding it
    return fragment(data, target, frames[0].message_id)


# -- smart object ------------------------------------------------------


def advertise_services(store: KnowledgeStore, sender: str, correlation: str) -> Optional[Message]:
    """Advertise every classifier and hypothesis the store offers; None if nothing."""
    services: dict[str, KnowledgeLevel] = {}

    def offer(name: str, level: KnowledgeLevel) -> None:
        current = services.get(name)
        if current is None or level.rank > current.rank:
            services[name] = level

    for t in store.triples():
        if t.predicate == CLASSIFIES:
            offer(f"classify_{t.object}", t.level)
    for h in store.hypotheses():
        offer("_".join(h.key), KnowledgeLevel.INVENTED)
    if not services:
        return None
    top = max(services.values(), key=lambda lv: lv.rank)
    return Message(
        MessageKind.ADVERTISE, sender, correlation, top, tuple(sorted(services.items()))
    )


@dataclass
class SmartObject:
    """Message-handling state of one node: its store plus open requests."""

    node_id: str
    store: KnowledgeStore
    pending: dict[str, MessageKind] = field(default_factory=dict)
    peer_services: dict[str, dict[str, KnowledgeLevel]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    _serial: int = 0

    def next_correlation(self) -> str:
        self._serial += 1
        return f"{self.node_id}-{self._serial}"

    def query_primary(self, kinds: Iterable[str]) -> Message:
        m = Message(MessageKind.QUERY_PRIMARY, self.node_id, self.next_correlation(),
                    KnowledgeLevel.PRIMARY, frozenset(kinds))
        self.pending[m.correlation] = m.kind
        return m

    def query_secondary(self, attributes: Iterable[str]) -> Message:
        m = Message(MessageKind.QUERY_SECONDARY, self.node_id, self.next_correlation(),
                    KnowledgeLevel.SECONDARY, frozenset(attributes))
        self.pending[m.correlation] = m.kind
        return m

    def advertise(self) -> Optional[Message]:
        m = advertise_services(self.store, self.node_id, f"{self.node_id}-adv{self._serial + 1}")
        if m is not None:
            self._serial += 1
        return m

    def take_notes(self) -> list[str]:
        notes, self.notes = self.notes, []
        return notes


_ANSWERS = {
    MessageKind.REPLY_PRIMARY: MessageKind.QUERY_PRIMARY,
    MessageKind.REPLY_SECONDARY: MessageKind.QUERY_SECONDARY,
}


def handle_message(so: SmartObject, m: Message, now: int = 0) -> tuple[SmartObject, list[Message]]:
    """Apply one incoming message to ``so`` and return the replies it provokes."""
    store = so.store
    if m.kind in _ANSWERS and so.pending.get(m.correlation) is not _ANSWERS[m.kind]:
        so.notes.append(f"dropped {m.kind.value} from {m.sender}: unknown correlation {m.correlation}")
        return so, []

    if m.kind is MessageKind.QUERY_PRIMARY:
        found: set[Triple] = set()
        for k in sorted(m.body):
            found.update(store.query_triples(None, ELEMENT_OF, k, KnowledgeLevel.PRIMARY))
        reply = Message(MessageKind.REPLY_PRIMARY, so.node_id, m.correlation,
                        KnowledgeLevel.PRIMARY, found)
        return so, [reply]

    if m.kind is MessageKind.REPLY_PRIMARY:
        learned = []
        for t in m.body:
            fresh = t.key not in store
            try:
                store.assert_triple(
                    Triple(*t.key, level=KnowledgeLevel.PRIMARY, source=m.sender, asserted_at=now)
                )
            except (LevelConflict, UnknownPredicate) as exc:
                so.notes.append(f"skipped {t.key} from {m.sender}: {exc}")
                continue
            if fresh:
                learned.append(t)
        so.notes.append(f"merged {len(learned)} primary triples from {m.sender}")
        attributes = sorted(
            t.subject for t in learned if t.predicate == ELEMENT_OF and t.object == SENSOR
        )
        return so, ([so.query_secondary(attributes)] if attributes else [])

    if m.kind is MessageKind.QUERY_SECONDARY:
        local = [
            o for o in store.observations
            if o.attribute in m.body and o.source == so.node_id and not o.quarantined
        ]
        reply = Message(MessageKind.REPLY_SECONDARY, so.node_id, m.correlation,
                        KnowledgeLevel.SECONDARY, tuple(local))
        return so, [reply]

    if m.kind is MessageKind.REPLY_SECONDARY:
        attributes = set()
        for o in m.body:
            # foreign values stay out of induction until checked locally
            store.record_observation(replace(o, quarantined=True))
            attributes.add(o.attribute)
        for attribute in sorted(attributes):
            note_measurement(store, attribute, m.sender, now)
        so.notes.append(f"quarantined {len(m.body)} observations from {m.sender}")
        return so, []

    if m.kind is MessageKind.ADVERTISE:
        so.peer_services[m.sender] = dict(m.body)
        so.notes.append(f"registered {len(m.body)} services of {m.sender}")
        return so, []

    raise UnknownKind(f"cannot handle {m.kind!r}")
