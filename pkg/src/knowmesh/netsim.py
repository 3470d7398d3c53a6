"""Deterministic discrete-event transport.

Time is integer ticks (1 tick = 1 ms simulated).  A frame sent at ``now``
over a link arrives at ``now + latency + ceil(size / bandwidth)``, never
before an earlier frame on the same link direction.  A single seeded RNG
decides losses, drawn once per send in event order.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Union

from .errors import SimplexViolation, ValidationError
from .exchange import Frame

CATEGORIES = ("send", "deliver", "drop", "lifecycle", "store")


class Role(Enum):
    DEVICE = "device"
    GATEWAY = "gateway"
    EDGE = "edge"
    CLOUD = "cloud"


class LinkMode(Enum):
    SIMPLEX = "simplex"
    DUPLEX = "duplex"


Handler = Callable[["Simulation", Frame, str], None]


@dataclass
class Node:
    id: str
    role: Role
    profile: str
    handler: Optional[Handler] = None
    inbox: list[Frame] = field(default_factory=list)


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    latency: int
    bandwidth: int
    loss: float = 0.0
    mode: LinkMode = LinkMode.DUPLEX

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValueError("a link needs two distinct endpoints")
        if self.latency < 0:
            raise ValueError(f"latency must be >= 0, got {self.latency}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss must lie in [0, 1], got {self.loss}")

    def other(self, node: str) -> str:
        if node == self.src:
            return self.dst
        if node == self.dst:
            return self.src
        raise ValueError(f"{node} is not an endpoint of {self.src}-{self.dst}")

    def carries(self, sender: str) -> bool:
        return self.mode is LinkMode.DUPLEX or sender == self.src


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    category: str
    node: str
    detail: str

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown trace category {self.category!r}")

    def line(self) -> str:
        return f"{self.tick}\t{self.category}\t{self.node}\t{self.detail}"


@dataclass(frozen=True)
class Delivery:
    time: int
    frame: Frame
    sender: str
    receiver: str


@dataclass(frozen=True)
class Dropped:
    frame: Frame
    sender: str
    receiver: str


def _describe(frame: Frame) -> str:
    return f"{frame.profile} {frame.message_id} {frame.index + 1}/{frame.count} {frame.size}B"


class Simulation:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0
        self.rng = random.Random(seed)
        self.nodes: dict[str, Node] = {}
        self.links: list[Link] = []
        self.trace: list[TraceRecord] = []
        self.counts: Counter = Counter()
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._clear: dict[tuple[int, str], int] = {}

    # -- topology ------------------------------------------------------

    def add_node(self, node: Node) -> Node:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        return node

    def add_link(self, link: Link) -> Link:
        for end in (link.src, link.dst):
            if end not in self.nodes:
                raise ValueError(f"link endpoint {end!r} is not a node")
        if self.link_between(link.src, link.dst) is not None:
            raise ValueError(f"nodes {link.src} and {link.dst} are already linked")
        self.links.append(link)
        return link

    def link_between(self, a: str, b: str) -> Optional[Link]:
        for link in self.links:
            if {link.src, link.dst} == {a, b}:
                return link
        return None

    def outgoing(self, node: str) -> list[Link]:
        return [l for l in self.links if node in (l.src, l.dst) and l.carries(node)]

    # -- events --------------------------------------------------------

    def record(self, category: str, node: str, detail: str) -> TraceRecord:
        rec = TraceRecord(self.now, category, node, detail)
        self.trace.append(rec)
        return rec

    def schedule(self, time: int, action: Callable[[], None]) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time}, clock is at {self.now}")
        heapq.heappush(self._queue, (time, next(self._seq), action))

    def schedule_send(self, frame: Frame, link: Link, sender: Optional[str] = None) -> Union[Delivery, Dropped]:
        sender = link.src if sender is None else sender
        receiver = link.other(sender)
        if not link.carries(sender):
            self.counts["blocked"] += 1
            self.record("drop", sender, f"simplex_violation to={receiver} {_describe(frame)}")
            raise SimplexViolation(f"{link.src}->{link.dst} is simplex; {sender} cannot send on it")
        self.counts["sent"] += 1
        self.record("send", sender, f"to={receiver} {_describe(frame)}")
        if self.rng.random() < link.loss:
            self.counts["dropped"] += 1
            self.record("drop", sender, f"lost to={receiver} {_describe(frame)}")
            return Dropped(frame, sender, receiver)
        arrival = self.now + link.latency + math.ceil(frame.size / link.bandwidth)
        lane = (self.links.index(link), sender)
        arrival = max(arrival, self._clear.get(lane, 0))
        self._clear[lane] = arrival
        self.schedule(arrival, lambda: self._deliver(frame, sender, receiver))
        return Delivery(arrival, frame, sender, receiver)

    def send(self, frame: Frame, sender: str, receiver: str) -> Union[Delivery, Dropped]:
        link = self.link_between(sender, receiver)
        if link is None:
            raise ValueError(f"no link between {sender} and {receiver}")
        return self.schedule_send(frame, link, sender)

    def broadcast(self, frames: Iterable[Frame], sender: str, exclude: Iterable[str] = ()) -> list[Union[Delivery, Dropped]]:
        if sender not in self.nodes:
            raise ValueError(f"unknown sender {sender!r}")
        frames = list(frames)
        skip = set(exclude)
        results = []
        for link in self.outgoing(sender):
            if link.other(sender) in skip:
                continue
            for frame in frames:
                results.append(self.schedule_send(frame, link, sender))
        return results

    def _deliver(self, frame: Frame, sender: str, receiver: str) -> None:
        self.counts["delivered"] += 1
        self.record("deliver", receiver, f"from={sender} {_describe(frame)}")
        node = self.nodes[receiver]
        if node.handler is None:
            node.inbox.append(frame)
        else:
            node.handler(self, frame, sender)

    def run_until(self, t_end: int) -> list[TraceRecord]:
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} lies before now={self.now}")
        start = len(self.trace)
        while self._queue and self._queue[0][0] <= t_end:
            time, _, action = heapq.heappop(self._queue)
            self.now = time
            action()
        self.now = t_end
        return self.trace[start:]

    @property
    def pending(self) -> int:
        return len(self._queue)

    def summary(self) -> dict[str, int]:
        keys = ("sent", "delivered", "dropped", "blocked")
        out = {k: self.counts[k] for k in keys}
        out["in_flight"] = out["sent"] - out["delivered"] - out["dropped"]
        return out

    def trace_text(self) -> str:
        lines = [r.line() for r in self.trace]
        lines.append("#summary\t" + "\t".join(f"{k}={v}" for k, v in self.summary().items()))
        return "\n".join(lines) + "\n"


# -- deployment models -------------------------------------------------

# model -> (mode, latency ticks): 1 simplex to cloud, 2 duplex cloud, 3 edge
MODEL_DEFAULTS = {
    1: (LinkMode.SIMPLEX, 100),
    2: (LinkMode.DUPLEX, 200),
    3: (LinkMode.DUPLEX, 5),
}
DEFAULT_BANDWIDTH = 1000


def deployment_links(
    model: int, devices: Iterable[str], hub: str, bandwidth: int = DEFAULT_BANDWIDTH, loss: float = 0.0
) -> list[Link]:
    """Star topology template: every device linked to ``hub``."""
    mode, latency = MODEL_DEFAULTS[model]
    return [Link(d, hub, latency, bandwidth, loss, mode) for d in devices]


def check_topology(model: int, roles: dict[str, Role], links: Iterable[Link]) -> None:
    if model not in MODEL_DEFAULTS:
        raise ValidationError(f"deployment model must be 1, 2 or 3, got {model}")
    for link in links:
        ends = (roles[link.src], roles[link.dst])
        if Role.DEVICE not in ends:
            continue
        name = f"{link.src}-{link.dst}"
        if model == 1:
            if link.mode is not LinkMode.SIMPLEX or roles[link.src] is not Role.DEVICE:
                raise ValidationError(f"model 1 link {name} must be simplex from the device")
            if roles[link.dst] is Role.DEVICE:
                raise ValidationError(f"model 1 link {name} may not end at a device")
        elif model == 3:
            other = ends[1] if ends[0] is Role.DEVICE else ends[0]
            if other not in (Role.GATEWAY, Role.EDGE):
                raise ValidationError(f"model 3 device link {name} must reach a gateway or edge node")
