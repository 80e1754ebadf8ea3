"""Deterministic discrete-event simulation of a uHelp community.

Everything runs on a virtual clock. Queue entries are ordered by
``(time, sequence number)`` and the only randomness is the message-delay
sampler, seeded from :class:`SimConfig`.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional

from . import lifecycle as lc
from .lifecycle import EventKind, IllegalEvent, LifecycleEvent, RequestRecord, Role
from .ontology import Hierarchy, SimilarityParams
from .protocol import (
    FloodMessage,
    FloodParams,
    MessageType,
    ProtocolError,
    ProtocolNode,
    TNorm,
    initiate_broadcast,
    initiate_request,
    propagate,
)
from .trust import (
    Rating,
    RatingLedger,
    ShareConfig,
    SharingPolicy,
    Task,
    TrustError,
    TrustParams,
    record_rating,
    share_ratings,
    trust,
    trust_shared,
)

logger = logging.getLogger(__name__)


class SimError(ValueError):
    pass


class GraphError(SimError):
    pass


# -- world -------------------------------------------------------------------


@dataclass
class SocialGraph:
    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]]
    trust_seeds: dict[tuple[str, str], float] = field(default_factory=dict)
    rating_seeds: list[Rating] = field(default_factory=list)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for edge in self.edges:
            a, b = sorted(edge)
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def hop_distances(self, source: str) -> dict[str, int]:
        adj = self.adjacency()
        dist, frontier = {source: 0}, [source]
        while frontier:
            nxt = []
            for n in frontier:
                for m in sorted(adj[n]):
                    if m not in dist:
                        dist[m] = dist[n] + 1
                        nxt.append(m)
            frontier = nxt
        return dist


@dataclass
class World:
    graph: SocialGraph
    taxonomy: Hierarchy
    meronomy: Hierarchy
    nodes: dict[str, ProtocolNode]
    records: dict[str, dict[str, RequestRecord]] = field(default_factory=dict)

    @property
    def ledgers(self) -> dict[str, RatingLedger]:
        return {n: self.nodes[n].ledger for n in sorted(self.nodes)}


def parse_graph(spec: str | bytes | Mapping) -> SocialGraph:
    if isinstance(spec, (str, bytes)):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise GraphError(f"cannot parse graph spec: {exc}") from exc
    if not isinstance(spec, Mapping) or "nodes" not in spec:
        raise GraphError("graph spec must be a mapping with a 'nodes' list")

    nodes = list(spec["nodes"])
    seen = set()
    for n in nodes:
        if not isinstance(n, str) or not n:
            raise GraphError(f"node ids must be non-empty strings, got {n!r}")
        if n in seen:
            raise GraphError(f"duplicate node {n!r}")
        seen.add(n)

    edges = set()
    for edge in spec.get("edges", []):
        if not (isinstance(edge, (list, tuple)) and len(edge) == 2):
            raise GraphError(f"malformed edge {edge!r}")
        a, b = edge
        for end in (a, b):
            if end not in seen:
                raise GraphError(f"dangling edge ({a!r}, {b!r}): {end!r} is not a declared node")
        if a == b:
            raise GraphError(f"self-edge on {a!r}")
        edges.add(frozenset((a, b)))

    seeds: dict[tuple[str, str], float] = {}
    for entry in spec.get("trust", []):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
            raise GraphError(f"malformed trust seed {entry!r}; expected [from, to, value]")
        a, b, v = entry
        for end in (a, b):
            if end not in seen:
                raise GraphError(f"trust seed ({a!r}, {b!r}) names undeclared node {end!r}")
        if a == b:
            raise GraphError(f"self trust seed on {a!r}")
        if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            raise GraphError(f"trust seed ({a!r}, {b!r}) must lie in [0, 1], got {v!r}")
        seeds[(a, b)] = float(v)

    ratings = []
    for entry in spec.get("ratings", []):
        try:
            ratings.append(Rating(
                entry["requester"], entry["volunteer"], entry["activity"], entry["object"],
                entry["value"], entry.get("time", 0), entry.get("task_id"),
            ))
        except (KeyError, TypeError, TrustError) as exc:
            raise GraphError(f"bad rating seed {entry!r}: {exc}") from exc
        for end in (entry["requester"], entry["volunteer"]):
            if end not in seen:
                raise GraphError(f"rating seed names undeclared node {end!r}")
    return SocialGraph(tuple(nodes), frozenset(edges), seeds, ratings)


def build_graph(
    spec: str | bytes | Mapping | SocialGraph,
    taxonomy: Hierarchy,
    meronomy: Hierarchy,
    ledgers: Optional[Mapping[str, RatingLedger]] = None,
) -> World:
    """Instantiate protocol nodes with seeded ledgers.

    Trust seeds become per-friend manual overrides (keyed on the meronomy
    root). ``ledgers`` replaces the seeded ledgers of the named members,
    e.g. ones persisted by an earlier run.
    """
    graph = spec if isinstance(spec, SocialGraph) else parse_graph(spec)
    adj = graph.adjacency()
    nodes = {n: ProtocolNode(n, adj[n], RatingLedger(n)) for n in graph.nodes}
    for (a, b), v in sorted(graph.trust_seeds.items()):
        nodes[a].ledger.set_override(b, v, meronomy.root)
    for r in graph.rating_seeds:
        try:
            taxonomy.require(r.obj)
            meronomy.require(r.activity)
        except ValueError as exc:
            raise GraphError(f"rating seed {r}: {exc}") from exc
        nodes[r.requester].ledger.insert(r)
    for name, ledger in (ledgers or {}).items():
        if name not in nodes:
            raise GraphError(f"ledger for unknown member {name!r}")
        nodes[name].ledger = ledger
    return World(graph, taxonomy, meronomy, nodes, {n: {} for n in graph.nodes})


# -- configuration -----------------------------------------------------------


class DelayModel(Enum):
    ZERO = "zero"
    FIXED = "fixed"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Delay:
    model: DelayModel = DelayModel.FIXED
    d: float = 1.0
    low: float = 0.5
    high: float = 1.5

    def __post_init__(self):
        if not isinstance(self.model, DelayModel):
            object.__setattr__(self, "model", DelayModel(self.model))
        if self.d < 0 or self.low < 0 or self.high < self.low:
            raise SimError(f"invalid delay parameters {self}")

    def sample(self, rng: random.Random) -> float:
        if self.model is DelayModel.ZERO:
            return 0.0
        if self.model is DelayModel.FIXED:
            return self.d
        return rng.uniform(self.low, self.high)


ACTIONS = {
    "help": EventKind.CLICK_HELP,
    "accept": EventKind.CLICK_ACCEPT,
    "decline": EventKind.CLICK_DECLINE,
    "assign": EventKind.CLICK_ASSIGN,
    "done": EventKind.CLICK_DONE,
    "rate": EventKind.CLICK_RATE,
    "cancel": EventKind.CLICK_CANCEL,
    "chat": EventKind.CLICK_CHAT,
    "call": EventKind.CLICK_CALL,
}


@dataclass(frozen=True)
class ScriptAction:
    time: float
    node: str
    action: str
    args: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise SimError(f"unknown script action {self.action!r}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScriptAction":
        try:
            rest = {k: v for k, v in d.items() if k not in ("time", "node", "action")}
            return cls(d["time"], d["node"], d["action"], rest)
        except KeyError as exc:
            raise SimError(f"script action {d!r} lacks {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    delay: Delay = Delay()
    clock_start: float = 0.0
    script: tuple[ScriptAction, ...] = ()
    horizon: Optional[float] = None
    flood: FloodParams = FloodParams()
    trust: TrustParams = TrustParams()
    similarity: SimilarityParams = SimilarityParams()
    share: ShareConfig = field(default_factory=ShareConfig)
    # when set, override every help action's own tau / hops
    tau: Optional[float] = None
    hops: Optional[int] = None


def load_scenario(doc: str | bytes | Mapping, base: SimConfig = SimConfig()) -> SimConfig:
    """Read a scenario document (script plus run settings) onto ``base``."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SimError(f"cannot parse scenario: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise SimError("scenario must be a mapping")
    script = tuple(ScriptAction.from_dict(a) for a in doc.get("actions", []))
    changes: dict[str, Any] = {"script": script}
    if "seed" in doc:
        changes["seed"] = int(doc["seed"])
    if "horizon" in doc:
        changes["horizon"] = doc["horizon"]
    if "clock_start" in doc:
        changes["clock_start"] = doc["clock_start"]
    if "delay" in doc:
        changes["delay"] = Delay(**doc["delay"])
    return replace(base, **changes)


# -- results -----------------------------------------------------------------


@dataclass
class Metrics:
    messages_by_type: dict[str, int] = field(default_factory=lambda: {t.value: 0 for t in MessageType})
    direct_messages: int = 0
    nodes_reached: int = 0
    volunteers_count: int = 0
    re_flood_events: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    rejected_events: int = 0
    terminal_state_census: dict[str, int] = field(default_factory=dict)
    latency_to_first_volunteer: dict[str, float] = field(default_factory=dict)
    events_processed: int = 0
    horizon_exceeded: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def flat(self) -> dict[str, Any]:
        """Single-level view for delimited tables."""
        row: dict[str, Any] = {}
        for key, value in self.to_dict().items():
            if isinstance(value, dict):
                for sub, v in sorted(value.items()):
                    row[f"{key}.{sub}"] = v
            else:
                row[key] = value
        return row


@dataclass
class SimResult:
    metrics: Metrics
    trace: list[dict]

    def trace_lines(self) -> list[str]:
        return [json.dumps(line, sort_keys=True) for line in self.trace]


# -- engine ------------------------------------------------------------------


class _Run:
    def __init__(self, config: SimConfig, world: World):
        self.cfg = config
        self.world = world
        self.rng = random.Random(config.seed)
        self.now = config.clock_start
        self.queue: list = []
        self.seq = itertools.count()
        self.trace: list[dict] = []
        self.metrics = Metrics()
        self.reached: set[str] = set()
        self.volunteers: set[tuple[str, str]] = set()
        self.created_at: dict[str, float] = {}

    # infrastructure

    def push(self, time: float, kind: str, payload: Any) -> None:
        heapq.heappush(self.queue, (time, next(self.seq), kind, payload))

    def log(self, kind: str, **fields_) -> None:
        self.trace.append({"t": self.now, "n": len(self.trace), "kind": kind, **fields_})

    def trust_fn(self, me: str, friend: str, task: Task) -> float:
        w = self.world
        fn = trust if self.cfg.trust.sharing_policy is SharingPolicy.NONE else trust_shared
        return fn(w.nodes[me].ledger, me, friend, task, self.now, w.taxonomy, w.meronomy,
                  self.cfg.trust, self.cfg.similarity)

    def send_flood(self, sender: str, sends) -> None:
        for s in sends:
            self.metrics.messages_by_type[s.msg.messagetype.value] += 1
            self.log("send", src=sender, dst=s.to, msg=s.msg.to_dict())
            self.push(self.now + self.cfg.delay.sample(self.rng), "deliver", (s.to, s.msg, sender))

    def send_direct(self, sender: str, to: str, kind: str, task_id: str) -> None:
        self.metrics.direct_messages += 1
        self.log("direct", src=sender, dst=to, event=kind, task_id=task_id)
        self.push(self.now + self.cfg.delay.sample(self.rng), "direct", (to, EventKind(kind), task_id, sender))

    def schedule_deadlines(self, node: str, rec: RequestRecord) -> None:
        for kind in lc.DEADLINE_ORDER:
            self.push(max(self.now, lc.deadline_of(rec, kind)), "deadline", node)

    # lifecycle glue

    def apply(self, node: str, rec: RequestRecord, ev: LifecycleEvent) -> None:
        try:
            new, effects = lc.transition(rec, ev, self.now)
        except IllegalEvent as exc:
            self.metrics.rejected_events += 1
            self.log("reject", node=node, task_id=rec.task_id, event=ev.kind.value, state=rec.state.value,
                     reason=str(exc))
            return
        self.world.records[node][rec.task_id] = new
        self.log("transition", node=node, task_id=rec.task_id, event=ev.kind.value, actor=ev.actor,
                 old=rec.state.value, new=new.state.value, effects=[e.label() for e in effects])
        if (rec.role is Role.REQUESTER and ev.kind is EventKind.MSG_VOLUNTEER
                and rec.task_id not in self.metrics.latency_to_first_volunteer):
            self.metrics.latency_to_first_volunteer[rec.task_id] = self.now - self.created_at[rec.task_id]
        if rec.role is Role.REQUESTER:
            for v in new.volunteers:
                self.volunteers.add((rec.task_id, v))
        for eff in effects:
            self.perform(node, new, eff)

    def perform(self, node: str, rec: RequestRecord, eff: lc.Effect) -> None:
        pnode = self.world.nodes[node]
        if eff.kind == "flood":
            effects = initiate_broadcast(pnode, rec.task_id, MessageType(eff.message), self.cfg.flood,
                                         self.trust_fn, eff.excluded)
            self.send_flood(node, effects.sends)
        elif eff.kind == "send":
            self.send_direct(node, eff.to, eff.message, rec.task_id)
        elif eff.kind == "record_rating":
            task = rec.task
            rating = Rating(node, eff.to, task.activity, task.obj, eff.value, self.now, rec.task_id)
            try:
                record_rating(pnode.ledger, rating)
            except TrustError as exc:
                self.log("rating_rejected", node=node, task_id=rec.task_id, reason=str(exc))
                return
            self.log("rating", node=node, task_id=rec.task_id, volunteer=eff.to, value=eff.value)
            self.reshare()
        else:  # pragma: no cover - effects are a closed set
            raise SimError(f"unknown effect {eff!r}")

    def reshare(self) -> None:
        policy = self.cfg.trust.sharing_policy
        if policy is SharingPolicy.NONE:
            return
        w = self.world
        shared = share_ratings(w.ledgers, policy, self.cfg.share, tax=w.taxonomy, m=w.meronomy,
                               tp=self.cfg.trust, sp=self.cfg.similarity)
        for name, ledger in shared.items():
            w.nodes[name].ledger = ledger

    # event handlers

    def on_script(self, act: ScriptAction) -> None:
        records = self.world.records[act.node]
        if act.action == "help":
            self.click_help(act)
            return
        task_id = act.args.get("task_id")
        rec = records.get(task_id)
        if rec is None:
            self.metrics.rejected_events += 1
            self.log("reject", node=act.node, task_id=task_id, event=ACTIONS[act.action].value,
                     state=None, reason="no such request at this member")
            return
        kind = ACTIONS[act.action]
        volunteer = act.args.get("volunteer")
        if kind is EventKind.CLICK_ASSIGN and volunteer in (None, "first"):
            volunteer = rec.volunteers[0] if rec.volunteers else None
        ev = LifecycleEvent(kind, act.node, task_id, volunteer=volunteer, value=act.args.get("value"))
        self.apply(act.node, rec, ev)
        if kind in (EventKind.CLICK_CHAT, EventKind.CLICK_CALL) and self.world.records[act.node][task_id] is rec:
            peer = act.args.get("to") or (rec.requester if rec.role is Role.REQUESTEE
                                          else rec.chosen or (rec.volunteers[0] if rec.volunteers else None))
            if kind is EventKind.CLICK_CHAT and peer is not None and peer != act.node:
                self.send_direct(act.node, peer, EventKind.MSG_CHAT.value, task_id)

    def click_help(self, act: ScriptAction) -> None:
        a = act.args
        node = act.node
        try:
            task_id = a["task_id"]
            end_date = a["end_date"] if "end_date" in a else self.now + a["within"]
            task = Task(a["activity"], a["object"], a.get("description", ""), end_date)
            tau = self.cfg.tau if self.cfg.tau is not None else a.get("tau", 0.5)
            hops = self.cfg.hops if self.cfg.hops is not None else a.get("hops", 1)
            self.world.taxonomy.require(task.obj)
            self.world.meronomy.require(task.activity)
            if task_id in self.world.records[node]:
                raise ProtocolError(f"request {task_id!r} already exists")
            effects = initiate_request(self.world.nodes[node], task_id, task, tau, hops, end_date,
                                       self.cfg.flood, self.now, self.trust_fn)
        except (KeyError, ValueError) as exc:
            self.metrics.rejected_events += 1
            self.log("reject", node=node, task_id=a.get("task_id"), event=EventKind.CLICK_HELP.value,
                     state=None, reason=str(exc))
            return
        volunteer_by = self.world.nodes[node].originated[task_id].deadline
        rec = lc.new_requester_record(node, task_id, volunteer_by, end_date, task)
        self.world.records[node][task_id] = rec
        self.created_at[task_id] = self.now
        self.log("transition", node=node, task_id=task_id, event=EventKind.CLICK_HELP.value, actor=node,
                 old=None, new=rec.state.value, effects=["flood:HELP"], tau=tau, hops=hops)
        self.schedule_deadlines(node, rec)
        self.send_flood(node, effects.sends)

    def on_deliver(self, to: str, msg: FloodMessage, sender: str) -> None:
        effects = propagate(self.world.nodes[to], msg, self.cfg.flood, self.now, self.trust_fn)
        if effects.dropped:
            self.metrics.dropped[effects.dropped] = self.metrics.dropped.get(effects.dropped, 0) + 1
            self.log("drop", node=to, src=sender, task_id=msg.task_id, type=msg.messagetype.value,
                     reason=effects.dropped)
            return
        self.log("deliver", node=to, src=sender, task_id=msg.task_id, type=msg.messagetype.value,
                 pathtrust=msg.pathtrust, hop=len(msg.path), reflood=effects.reflooded)
        if effects.reflooded:
            self.metrics.re_flood_events += 1
        if effects.notification:
            self.notify(to, effects.notification, msg)
        self.send_flood(to, effects.sends)

    def notify(self, node: str, notification: str, msg: FloodMessage) -> None:
        self.log("notify", node=node, task_id=msg.task_id, event=notification)
        records = self.world.records[node]
        if notification == EventKind.MSG_HELP.value:
            self.reached.add(node)
            if msg.task_id in records:
                return
            end_date = msg.task.end_date if msg.task.end_date is not None else msg.deadline
            rec = lc.new_requestee_record(node, msg.origin, msg.task_id, msg.deadline, max(end_date, msg.deadline),
                                          msg.task)
            records[msg.task_id] = rec
            self.log("transition", node=node, task_id=msg.task_id, event=notification, actor=msg.origin,
                     old=None, new=rec.state.value, effects=[])
            self.schedule_deadlines(node, rec)
            return
        rec = records.get(msg.task_id)
        if rec is None:
            self.log("orphan", node=node, task_id=msg.task_id, event=notification)
            return
        self.apply(node, rec, LifecycleEvent(EventKind(notification), msg.origin, msg.task_id,
                                             excluded=msg.excluded))

    def on_direct(self, to: str, kind: EventKind, task_id: str, sender: str) -> None:
        rec = self.world.records[to].get(task_id)
        if rec is None:
            self.log("orphan", node=to, task_id=task_id, event=kind.value)
            return
        self.apply(to, rec, LifecycleEvent(kind, sender, task_id))

    def on_deadline(self, node: str) -> None:
        records = [self.world.records[node][k] for k in sorted(self.world.records[node])]
        for rec, ev in lc.fire_deadlines(records, self.now):
            current = self.world.records[node][rec.task_id]
            current.fired = current.fired | rec.fired
            self.apply(node, current, ev)

    def run(self) -> SimResult:
        nodes = set(self.world.nodes)
        for act in self.cfg.script:
            if act.node not in nodes:
                raise SimError(f"script references unknown member {act.node!r}")
            self.push(act.time, "script", act)
        self.reshare()

        handlers: dict[str, Callable] = {
            "script": lambda p: self.on_script(p),
            "deliver": lambda p: self.on_deliver(*p),
            "direct": lambda p: self.on_direct(*p),
            "deadline": lambda p: self.on_deadline(p),
        }
        while self.queue:
            time = self.queue[0][0]
            if self.cfg.horizon is not None and time > self.cfg.horizon:
                self.metrics.horizon_exceeded = True
                logger.warning("horizon %s passed with %d queued events", self.cfg.horizon, len(self.queue))
                break
            _, _, kind, payload = heapq.heappop(self.queue)
            self.now = max(self.now, time)
            self.metrics.events_processed += 1
            handlers[kind](payload)

        m = self.metrics
        m.nodes_reached = len(self.reached)
        m.volunteers_count = len(self.volunteers)
        census: Counter = Counter()
        for node in sorted(self.world.records):
            for rec in self.world.records[node].values():
                census[f"{rec.role.value}:{rec.state.value}"] += 1
        m.terminal_state_census = dict(sorted(census.items()))
        m.dropped = dict(sorted(m.dropped.items()))
        return SimResult(m, self.trace)


def run(config: SimConfig, world: World) -> SimResult:
    """Execute ``config.script`` on ``world`` (mutated in place) until the queue drains."""
    return _Run(config, world).run()


SWEEP_KEYS = ("tau", "hops", "sigma", "tnorm")


def apply_point(base: SimConfig, point: Mapping[str, Any]) -> SimConfig:
    cfg = base
    for key, value in point.items():
        if key == "tau":
            cfg = replace(cfg, tau=float(value))
        elif key == "hops":
            cfg = replace(cfg, hops=int(value))
        elif key == "sigma":
            cfg = replace(cfg, flood=replace(cfg.flood, sigma=float(value)))
        elif key == "tnorm":
            cfg = replace(cfg, flood=replace(cfg.flood, tnorm=TNorm(str(value).lower())))
        else:
            raise SimError(f"cannot sweep over {key!r}; choose from {SWEEP_KEYS}")
    return cfg


def grid_points(grid: Mapping[str, Iterable]) -> list[dict[str, Any]]:
    if not grid:
        raise SimError("sweep grid is empty")
    keys = list(grid)
    axes = []
    for key in keys:
        values, unique = list(grid[key]), []
        for v in values:
            if v in unique:
                logger.warning("duplicate value %r for %s dropped from the sweep grid", v, key)
            else:
                unique.append(v)
        if not unique:
            raise SimError(f"sweep axis {key!r} is empty")
        axes.append(unique)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def sweep(base: SimConfig, world_factory: Callable[[], World], grid: Mapping[str, Iterable]):
    """Run once per grid point on a fresh world; returns ``[(point, Metrics), ...]``."""
    rows = []
    for point in grid_points(grid):
        result = run(apply_point(base, point), world_factory())
        rows.append((point, result.metrics))
    return rows
