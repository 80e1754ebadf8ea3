"""Task-dependent trust learnt from rated past experiences.

Ratings use the 1..7 scale and are mapped onto [0, 1] before any
arithmetic. A component that has no usable evidence is reported as ``None``
(unknown) and the combination rule falls back on the other component, then
on ``TrustParams.default_trust``.
"""

from __future__ import annotations

import bisect
import copy
import csv
import heapq
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .ontology import Hierarchy, Kind, SimilarityParams, sim_obj

logger = logging.getLogger(__name__)

NEUTRAL_RATER_WEIGHT = 0.5


class TrustError(ValueError):
    pass


class SharingPolicy(Enum):
    MANUAL_LIST = "manual_list"
    RATING_SIMILARITY = "rating_similarity"
    TRUST_THRESHOLD = "trust_threshold"
    NONE = "none"


def normalize_value(v: int) -> float:
    if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 7:
        raise TrustError(f"rating value must be an integer in [1, 7], got {v!r}")
    return (v - 1) / 6


@dataclass(frozen=True)
class Rating:
    requester: str
    volunteer: str
    activity: str
    obj: str
    value: int
    time: float
    task_id: Optional[str] = None

    def __post_init__(self):
        normalize_value(self.value)
        if self.requester == self.volunteer:
            raise TrustError(f"{self.requester!r} cannot rate themselves")

    @property
    def normalized(self) -> float:
        return (self.value - 1) / 6


@dataclass(frozen=True)
class Task:
    activity: str
    obj: str
    description: str = ""
    end_date: Optional[float] = None

    @property
    def key(self) -> str:
        return f"{self.activity}|{self.obj}"


@dataclass(frozen=True)
class TrustParams:
    trust_weight_alpha: float = 0.5
    eta: float = 0.75
    default_trust: float = 0.5
    sharing_policy: SharingPolicy = SharingPolicy.NONE

    def __post_init__(self):
        for name in ("trust_weight_alpha", "eta", "default_trust"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if not isinstance(self.sharing_policy, SharingPolicy):
            object.__setattr__(self, "sharing_policy", SharingPolicy(self.sharing_policy))


@dataclass
class RatingLedger:
    """Ratings visible to one member: their own plus those shared with them."""

    owner: str
    entries: list[Rating] = field(default_factory=list)
    manual_overrides: dict[tuple[str, str], float] = field(default_factory=dict)

    def visible(self, t: Optional[float] = None) -> list[Rating]:
        if t is None:
            return list(self.entries)
        return [e for e in self.entries if e.time <= t]

    def ratings(self, requester: str, volunteer: Optional[str] = None, t: Optional[float] = None) -> list[Rating]:
        return [
            e for e in self.visible(t)
            if e.requester == requester and (volunteer is None or e.volunteer == volunteer)
        ]

    def own(self) -> list[Rating]:
        return [e for e in self.entries if e.requester == self.owner]

    def insert(self, rating: Rating) -> bool:
        """Add a rating in time order; returns False if already present."""
        if rating in self.entries:
            return False
        times = [e.time for e in self.entries]
        self.entries.insert(bisect.bisect_right(times, rating.time), rating)
        return True

    def set_override(self, counterpart: str, value: float, key: str) -> None:
        if not 0.0 <= value <= 1.0:
            raise TrustError(f"manual trust must lie in [0, 1], got {value!r}")
        self.manual_overrides[(counterpart, key)] = float(value)

    def override_for(self, counterpart: str, task: Task, m: Hierarchy) -> Optional[float]:
        # an exact per-task dial wins over the per-friend dial
        for key in (task.key, m.root):
            if (counterpart, key) in self.manual_overrides:
                return self.manual_overrides[(counterpart, key)]
        return None


def check_task(task: Task, tax: Hierarchy, m: Hierarchy) -> None:
    tax.require(task.obj)
    m.require(task.activity)


def record_rating(ledger: RatingLedger, rating: Rating) -> RatingLedger:
    if rating.requester != ledger.owner:
        raise TrustError(f"ledger of {ledger.owner!r} cannot record a rating made by {rating.requester!r}")
    if rating.task_id is not None and any(
        e.task_id == rating.task_id and e.requester == rating.requester for e in ledger.entries
    ):
        raise TrustError(f"request {rating.task_id!r} has already been rated")
    ledger.insert(rating)
    return ledger


def trust_obj(
    ledger: RatingLedger,
    R: str,
    V: str,
    O: str,
    t: Optional[float],
    tax: Hierarchy,
    p: SimilarityParams = SimilarityParams(),
) -> Optional[float]:
    """Similarity-weighted mean of R's ratings of V, weighted by object similarity to ``O``."""
    tax.require(O)
    num = den = 0.0
    for e in ledger.ratings(R, V, t):
        w = sim_obj(tax, O, e.obj, p)
        num += w * e.normalized
        den += w
    if den == 0.0:
        return None
    return num / den


def propagate_meronomy(m: Hierarchy, direct: Mapping[str, float]) -> dict[str, float]:
    """Spread direct activity values over the whole meronomy.

    A directly valued node keeps its value. Otherwise a node whose subtree
    holds direct values takes the mean of its intrinsically valued children;
    remaining nodes inherit the value of their parent.
    """
    for node, value in direct.items():
        m.require(node)
        if not 0.0 <= value <= 1.0:
            raise TrustError(f"value for {node!r} out of range: {value!r}")
    if not direct:
        return {}

    intrinsic: dict[str, float] = {}
    for node in reversed(m.preorder()):
        if node in direct:
            intrinsic[node] = float(direct[node])
            continue
        vals = [intrinsic[c] for c in m.children[node] if c in intrinsic]
        if vals:
            intrinsic[node] = sum(vals) / len(vals)

    resolved: dict[str, float] = {}
    for node in m.preorder():
        if node in intrinsic:
            resolved[node] = intrinsic[node]
        elif node in m.parent_of and m.parent_of[node] in resolved:
            resolved[node] = resolved[m.parent_of[node]]
    return resolved


def activity_values(ratings: Iterable[Rating]) -> dict[str, float]:
    buckets: dict[str, list[float]] = defaultdict(list)
    for e in ratings:
        buckets[e.activity].append(e.normalized)
    return {a: sum(v) / len(v) for a, v in buckets.items()}


def trust_act(ledger: RatingLedger, R: str, V: str, A: str, t: Optional[float], m: Hierarchy) -> Optional[float]:
    m.require(A)
    return propagate_meronomy(m, activity_values(ledger.ratings(R, V, t))).get(A)


def _combine(o: Optional[float], a: Optional[float], tp: TrustParams) -> float:
    if o is None and a is None:
        return tp.default_trust
    if o is None:
        return a
    if a is None:
        return o
    return tp.trust_weight_alpha * o + (1 - tp.trust_weight_alpha) * a


def trust(
    ledger: RatingLedger,
    R: str,
    V: str,
    task: Task,
    t: Optional[float],
    tax: Hierarchy,
    m: Hierarchy,
    tp: TrustParams = TrustParams(),
    sp: SimilarityParams = SimilarityParams(),
) -> float:
    check_task(task, tax, m)
    manual = ledger.override_for(V, task, m)
    if manual is not None:
        return manual
    o = trust_obj(ledger, R, V, task.obj, t, tax, sp)
    a = trust_act(ledger, R, V, task.activity, t, m)
    return _combine(o, a, tp)


def _profile(ratings: Iterable[Rating], attr: str) -> dict[tuple[str, str], float]:
    buckets: dict[tuple[str, str], list[float]] = defaultdict(list)
    for e in ratings:
        buckets[(e.volunteer, getattr(e, attr))].append(e.normalized)
    return {k: sum(v) / len(v) for k, v in buckets.items()}


def _concept_attr(h: Hierarchy) -> str:
    return "obj" if h.kind is Kind.TAXONOMY else "activity"


def direct_rater_weight(
    ratings_r: Iterable[Rating],
    ratings_u: Iterable[Rating],
    X: Optional[str],
    h: Hierarchy,
    sp: SimilarityParams = SimilarityParams(),
) -> Optional[float]:
    """Agreement between two raters on commonly rated (volunteer, concept) pairs.

    Only concepts equal or similar to ``X`` count; ``X=None`` takes every
    concept. Returns None when the raters share no relevant pair.
    """
    attr = _concept_attr(h)
    pr, pu = _profile(ratings_r, attr), _profile(ratings_u, attr)
    diffs = []
    for key in sorted(pr.keys() & pu.keys()):
        concept = key[1]
        if X is None or concept == X or sim_obj(h, concept, X, sp) > 0:
            diffs.append(abs(pr[key] - pu[key]))
    if not diffs:
        return None
    return 1.0 - sum(diffs) / len(diffs)


def rater_weight(
    ledger: RatingLedger,
    R: str,
    U: str,
    X: Optional[str],
    h: Hierarchy,
    sp: SimilarityParams = SimilarityParams(),
    t: Optional[float] = None,
) -> float:
    """How far R trusts U as a rater on concept ``X`` of hierarchy ``h``.

    Direct agreement when R and U rated common pairs; otherwise the best
    bottleneck (max over paths of the min direct weight) through other
    raters in the ledger; 0.5 when they are not connected at all.
    """
    if R == U:
        return 1.0
    if X is not None:
        h.require(X)
    visible = ledger.visible(t)
    by_rater: dict[str, list[Rating]] = defaultdict(list)
    for e in visible:
        by_rater[e.requester].append(e)

    w = direct_rater_weight(by_rater.get(R, []), by_rater.get(U, []), X, h, sp)
    if w is not None:
        return w

    raters = sorted(set(by_rater) | {R, U})
    edges: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for i, a in enumerate(raters):
        for b in raters[i + 1:]:
            wab = direct_rater_weight(by_rater.get(a, []), by_rater.get(b, []), X, h, sp)
            if wab is not None:
                edges[a].append((b, wab))
                edges[b].append((a, wab))

    best = {R: 1.0}
    heap = [(-1.0, R)]
    while heap:
        neg, node = heapq.heappop(heap)
        width = -neg
        if width < best.get(node, -1.0):
            continue
        if node == U:
            return width
        for nxt, wn in edges[node]:
            cand = min(width, wn)
            if cand > best.get(nxt, -1.0):
                best[nxt] = cand
                heapq.heappush(heap, (-cand, nxt))
    return NEUTRAL_RATER_WEIGHT


def raters_of(ledger: RatingLedger, V: str, t: Optional[float]) -> list[str]:
    return sorted({e.requester for e in ledger.visible(t) if e.volunteer == V})


def trust_shared(
    ledger: RatingLedger,
    R: str,
    V: str,
    task: Task,
    t: Optional[float],
    tax: Hierarchy,
    m: Hierarchy,
    tp: TrustParams = TrustParams(),
    sp: SimilarityParams = SimilarityParams(),
) -> float:
    """Trust of R in V pooled over every rater whose ratings R can see."""
    check_task(task, tax, m)
    manual = ledger.override_for(V, task, m)
    if manual is not None:
        return manual

    o_num = o_den = a_num = a_den = 0.0
    for U in raters_of(ledger, V, t):
        o = trust_obj(ledger, U, V, task.obj, t, tax, sp)
        if o is not None:
            w = rater_weight(ledger, R, U, task.obj, tax, sp, t)
            o_num += w * o
            o_den += w
        a = trust_act(ledger, U, V, task.activity, t, m)
        if a is not None:
            w = rater_weight(ledger, R, U, task.activity, m, sp, t)
            a_num += w * a
            a_den += w
    o_all = o_num / o_den if o_den > 0 else None
    a_all = a_num / a_den if a_den > 0 else None
    return _combine(o_all, a_all, tp)


@dataclass
class ShareConfig:
    pairs: list[tuple[str, str]] = field(default_factory=list)
    hops: int = 1
    similarity_floor: float = 0.5
    t: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.hops, int) or self.hops < 1:
            raise TrustError(f"sharing hops must be a positive integer, got {self.hops!r}")
        if not 0.0 <= self.similarity_floor <= 1.0:
            raise TrustError(f"similarity_floor must lie in [0, 1], got {self.similarity_floor!r}")
        self.pairs = [tuple(p) for p in self.pairs]
        for p in self.pairs:
            if len(p) != 2:
                raise TrustError(f"malformed sharing pair {p!r}")


def share_ratings(
    ledgers: Mapping[str, RatingLedger],
    policy: SharingPolicy,
    config: ShareConfig = ShareConfig(),
    *,
    tax: Optional[Hierarchy] = None,
    m: Optional[Hierarchy] = None,
    tp: TrustParams = TrustParams(),
    sp: SimilarityParams = SimilarityParams(),
) -> dict[str, RatingLedger]:
    """Return copies of ``ledgers`` with own ratings copied per ``policy``.

    Decisions are taken on the ledgers as passed in, so the outcome does not
    depend on iteration order.
    """
    out = {k: copy.deepcopy(v) for k, v in ledgers.items()}
    if policy is SharingPolicy.NONE:
        return out
    own = {k: [e for e in v.ratings(k, t=config.t)] for k, v in ledgers.items()}

    def give(dst: str, ratings: Iterable[Rating]) -> None:
        for e in ratings:
            out[dst].insert(e)

    if policy is SharingPolicy.MANUAL_LIST:
        succ: dict[str, list[str]] = defaultdict(list)
        for a, b in config.pairs:
            for n in (a, b):
                if n not in ledgers:
                    raise TrustError(f"unknown member {n!r} in sharing pair ({a!r}, {b!r})")
            if a != b:
                succ[a].append(b)
        for src in sorted(ledgers):
            frontier, seen = [src], {src}
            for _ in range(config.hops):
                nxt = []
                for n in frontier:
                    for d in sorted(succ[n]):
                        if d not in seen:
                            seen.add(d)
                            nxt.append(d)
                frontier = nxt
            for dst in sorted(seen - {src}):
                give(dst, own[src])

    elif policy is SharingPolicy.RATING_SIMILARITY:
        if tax is None:
            raise TrustError("rating-similarity sharing needs the object taxonomy")
        names = sorted(ledgers)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                w = direct_rater_weight(own[a], own[b], None, tax, sp)
                if w is not None and w > config.similarity_floor:
                    give(b, own[a])
                    give(a, own[b])

    elif policy is SharingPolicy.TRUST_THRESHOLD:
        if tax is None or m is None:
            raise TrustError("trust-threshold sharing needs both hierarchies")
        for src in sorted(ledgers):
            tasks = sorted({(e.activity, e.obj) for e in own[src]})
            for dst in sorted(ledgers):
                if dst == src:
                    continue
                for act, obj in tasks:
                    value = trust(ledgers[src], src, dst, Task(act, obj), config.t, tax, m, tp, sp)
                    if value > tp.eta:
                        give(dst, [e for e in own[src] if (e.activity, e.obj) == (act, obj)])
    else:
        raise TrustError(f"unsupported sharing policy {policy!r}")
    return out


# -- persistence -------------------------------------------------------------

LEDGER_FIELDS = ("requester", "volunteer", "activity", "object", "value", "time", "task_id")


def save_ledger(ledger: RatingLedger, path: str | Path) -> None:
    """Write ratings as tab-separated rows and overrides to ``<path>.overrides.json``."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(LEDGER_FIELDS)
        for e in ledger.entries:
            writer.writerow([
                e.requester, e.volunteer, e.activity, e.obj, e.value,
                json.dumps(e.time), "" if e.task_id is None else e.task_id,
            ])
    overrides = [[c, k, v] for (c, k), v in sorted(ledger.manual_overrides.items())]
    overrides_path(path).write_text(
        json.dumps({"owner": ledger.owner, "overrides": overrides}, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def overrides_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".overrides.json")


def load_ledger(path: str | Path, owner: str) -> RatingLedger:
    path = Path(path)
    ledger = RatingLedger(owner)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != LEDGER_FIELDS:
            raise TrustError(f"{path}: unexpected ledger header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(LEDGER_FIELDS):
                raise TrustError(f"{path}:{lineno}: expected {len(LEDGER_FIELDS)} fields, got {len(row)}")
            requester, volunteer, activity, obj, value, time, task_id = row
            try:
                rating = Rating(requester, volunteer, activity, obj, int(value), json.loads(time), task_id or None)
            except (ValueError, json.JSONDecodeError) as exc:
                raise TrustError(f"{path}:{lineno}: {exc}") from exc
            ledger.insert(rating)
    opath = overrides_path(path)
    if opath.exists():
        doc = json.loads(opath.read_text(encoding="utf-8"))
        for counterpart, key, value in doc.get("overrides", []):
            ledger.set_override(counterpart, value, key)
    return ledger
