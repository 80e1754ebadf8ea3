"""Trust-gated flooding of help requests over a friendship graph.

Each member runs ``propagate`` on incoming messages and ``flood`` to forward
them. Both are pure with respect to the transport: they mutate the local
:class:`ProtocolNode` and return the messages to hand to the network plus
the notification (if any) for the lifecycle layer.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Optional

from .trust import RatingLedger, Task

logger = logging.getLogger(__name__)

MAX_ENUMERATION_NODES = 12

TrustFn = Callable[[str, str, Task], Optional[float]]


class ProtocolError(ValueError):
    pass


class MessageType(Enum):
    HELP = "HELP"
    NOTNEEDED = "NOTNEEDED"
    CANCELLED = "CANCELLED"


NOTIFICATION_FOR = {
    MessageType.HELP: "Msg_Help",
    MessageType.NOTNEEDED: "Msg_NotNeeded",
    MessageType.CANCELLED: "Msg_Cancelled",
}


class TNorm(Enum):
    MIN = "min"
    PRODUCT = "product"

    def __call__(self, x: float, y: float) -> float:
        if self is TNorm.MIN:
            return min(x, y)
        return x * y


@dataclass(frozen=True)
class FloodParams:
    sigma: float = 0.1
    tnorm: TNorm = TNorm.MIN
    # None: a quarter of the time between request creation and task deadline
    response_offset: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma!r}")
        if self.response_offset is not None and self.response_offset < 0:
            raise ValueError(f"response_offset must be non-negative, got {self.response_offset!r}")
        if not isinstance(self.tnorm, TNorm):
            object.__setattr__(self, "tnorm", TNorm(self.tnorm))

    def respond_by(self, now: float, task_deadline: float) -> float:
        offset = 0.25 * (task_deadline - now) if self.response_offset is None else self.response_offset
        return task_deadline - offset


@dataclass(frozen=True)
class FloodMessage:
    task_id: str
    task: Task
    messagetype: MessageType
    tau: float
    pathtrust: float
    path: tuple[str, ...]
    deadline: float
    hops: int
    # members a NOTNEEDED broadcast does not concern (the chosen volunteer)
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.path)) != len(self.path):
            raise ProtocolError(f"path has repeated members: {self.path!r}")
        if not self.path:
            raise ProtocolError("path must contain at least the originator")
        for name in ("tau", "pathtrust"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ProtocolError(f"{name} must lie in [0, 1], got {getattr(self, name)!r}")
        if self.hops < 1:
            raise ProtocolError(f"hops must be positive, got {self.hops!r}")

    @property
    def origin(self) -> str:
        return self.path[0]

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "task": {
                "activity": self.task.activity,
                "object": self.task.obj,
                "description": self.task.description,
                "end_date": self.task.end_date,
            },
            "type": self.messagetype.value,
            "tau": self.tau,
            "pathtrust": self.pathtrust,
            "path": list(self.path),
            "deadline": self.deadline,
            "hops": self.hops,
            "excluded": list(self.excluded),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FloodMessage":
        t = d["task"]
        return cls(
            task_id=d["task_id"],
            task=Task(t["activity"], t["object"], t.get("description", ""), t.get("end_date")),
            messagetype=MessageType(d["type"]),
            tau=d["tau"],
            pathtrust=d["pathtrust"],
            path=tuple(d["path"]),
            deadline=d["deadline"],
            hops=d["hops"],
            excluded=tuple(d.get("excluded", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FloodMessage":
        return cls.from_dict(json.loads(text))


@dataclass
class ProtocolNode:
    id: str
    friends: set[str] = field(default_factory=set)
    ledger: Optional[RatingLedger] = None
    received_requests: set[str] = field(default_factory=set)
    old_path_trust: dict[str, float] = field(default_factory=dict)
    asked: dict[str, bool] = field(default_factory=dict)
    # requests this node originated, kept for later NOTNEEDED/CANCELLED floods
    originated: dict[str, FloodMessage] = field(default_factory=dict)

    def __post_init__(self):
        self.friends = set(self.friends)
        if self.id in self.friends:
            raise ProtocolError(f"{self.id!r} cannot be its own friend")
        if self.ledger is None:
            self.ledger = RatingLedger(self.id)


@dataclass
class Send:
    to: str
    msg: FloodMessage


@dataclass
class Effects:
    """What one protocol step asks of the outside world."""

    sends: list[Send] = field(default_factory=list)
    notification: Optional[str] = None
    reflooded: bool = False
    dropped: Optional[str] = None


def flood(node: ProtocolNode, msg: FloodMessage, asked: bool, fp: FloodParams, trust_fn: TrustFn) -> Effects:
    """Notify the local user if needed and forward ``msg`` to qualifying friends.

    ``msg.path`` already ends with ``node.id``. Friends already on the path
    are skipped here; they would discard the message on arrival anyway.
    """
    effects = Effects()
    if not asked:
        effects.notification = NOTIFICATION_FOR[msg.messagetype]
    if len(msg.path) - 1 >= msg.hops:
        return effects
    on_path = set(msg.path)
    for n in sorted(node.friends):
        if n in on_path:
            continue
        t = trust_fn(node.id, n, msg.task)
        if t is None:
            continue
        new_trust = fp.tnorm(t, msg.pathtrust)
        if new_trust >= msg.tau:
            effects.sends.append(Send(n, replace(msg, pathtrust=new_trust)))
    return effects


def propagate(node: ProtocolNode, msg: FloodMessage, fp: FloodParams, now: float, trust_fn: TrustFn) -> Effects:
    if node.id in msg.path:
        return Effects(dropped="loop")
    if not now < msg.deadline:
        return Effects(dropped="deadline")
    forwarded = replace(msg, path=msg.path + (node.id,))

    if msg.messagetype is MessageType.HELP:
        if msg.task_id not in node.received_requests:
            node.received_requests.add(msg.task_id)
            node.old_path_trust[msg.task_id] = msg.pathtrust
            node.asked[msg.task_id] = True
            return flood(node, forwarded, False, fp, trust_fn)
        if msg.pathtrust - node.old_path_trust[msg.task_id] > fp.sigma:
            node.old_path_trust[msg.task_id] = msg.pathtrust
            effects = flood(node, forwarded, True, fp, trust_fn)
            effects.reflooded = True
            return effects
        return Effects(dropped="duplicate")
    return flood(node, forwarded, False, fp, trust_fn)


def initiate_request(
    node: ProtocolNode,
    task_id: str,
    task: Task,
    tau: float,
    hops: int,
    task_deadline: float,
    fp: FloodParams,
    now: float,
    trust_fn: TrustFn,
) -> Effects:
    """Start a HELP flood from the requester; the requester is never prompted."""
    if not 0.0 <= tau <= 1.0:
        raise ProtocolError(f"tau must lie in [0, 1], got {tau!r}")
    if isinstance(hops, bool) or not isinstance(hops, int) or hops < 1:
        raise ProtocolError(f"hops must be a positive integer, got {hops!r}")
    if not task_deadline > now:
        raise ProtocolError(f"task deadline {task_deadline!r} is not after the current time {now!r}")
    if task_id in node.originated:
        raise ProtocolError(f"request {task_id!r} already exists")
    respond_by = fp.respond_by(now, task_deadline)
    if not respond_by > now:
        raise ProtocolError(f"response deadline {respond_by!r} is already past at {now!r}")
    msg = FloodMessage(
        task_id=task_id,
        task=task,
        messagetype=MessageType.HELP,
        tau=tau,
        pathtrust=1.0,
        path=(node.id,),
        deadline=respond_by,
        hops=hops,
    )
    node.originated[task_id] = msg
    node.asked[task_id] = True
    return flood(node, msg, True, fp, trust_fn)


def initiate_broadcast(
    node: ProtocolNode,
    task_id: str,
    messagetype: MessageType,
    fp: FloodParams,
    trust_fn: TrustFn,
    excluded: tuple[str, ...] = (),
) -> Effects:
    """Flood a NOTNEEDED or CANCELLED notice with the original request's reach."""
    if messagetype is MessageType.HELP:
        raise ProtocolError("use initiate_request for HELP")
    original = node.originated.get(task_id)
    if original is None:
        raise ProtocolError(f"{node.id!r} did not originate request {task_id!r}")
    msg = replace(original, messagetype=messagetype, pathtrust=1.0, path=(node.id,), excluded=tuple(excluded))
    return flood(node, msg, True, fp, trust_fn)


def loop_free_paths(adjacency: Mapping[str, set[str] | list[str]], start: str) -> list[tuple[str, ...]]:
    """All simple paths with at least one edge that begin at ``start``."""
    paths = []

    def extend(path: tuple[str, ...]) -> None:
        for n in sorted(adjacency.get(path[-1], ())):
            if n not in path:
                longer = path + (n,)
                paths.append(longer)
                extend(longer)

    extend((start,))
    return paths


def count_worst_case_messages(adjacency: Mapping[str, set[str] | list[str]], start: str) -> int:
    """Sum of edge lengths over every loop-free path from ``start``.

    Upper bound on HELP traffic for sigma = 0. Enumeration is exponential,
    so graphs larger than ``MAX_ENUMERATION_NODES`` are refused.
    """
    nodes = set(adjacency) | {n for ns in adjacency.values() for n in ns}
    if len(nodes) > MAX_ENUMERATION_NODES:
        raise ProtocolError(f"graph has {len(nodes)} nodes; enumeration is limited to {MAX_ENUMERATION_NODES}")
    if start not in nodes:
        if adjacency:
            raise ProtocolError(f"unknown start node {start!r}")
        return 0
    return sum(len(p) - 1 for p in loop_free_paths(adjacency, start))
