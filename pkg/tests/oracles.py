"""Brute-force reference implementations used as test oracles.

Everything here works on plain ``parent`` dicts and tuples and shares no code
with the package under test, so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict


# -- trees -------------------------------------------------------------------


def chain(parent: dict, n: str) -> list[str]:
    """``n`` followed by its ancestors up to the root."""
    out = [n]
    while out[-1] in parent:
        out.append(parent[out[-1]])
    return out


def all_nodes(parent: dict, root: str) -> set[str]:
    return {root} | set(parent) | set(parent.values())


def subsumer(parent: dict, a: str, b: str) -> str:
    common = set(chain(parent, a)) & set(chain(parent, b))
    return max(common, key=lambda n: len(chain(parent, n)))


def depth(parent: dict, n: str) -> int:
    return len(chain(parent, n)) - 1


def distance(parent: dict, a: str, b: str) -> int:
    s = subsumer(parent, a, b)
    return chain(parent, a).index(s) + chain(parent, b).index(s)


def leaves(parent: dict, root: str) -> set[str]:
    nodes = all_nodes(parent, root)
    return nodes - set(parent.values())


def ic(parent: dict, root: str, n: str) -> float:
    ls = leaves(parent, root)
    below = [x for x in ls if n in chain(parent, x)]
    p = len(below) / len(ls)
    return -math.log(p) if p < 1 else 0.0


def sim(parent, root, a, b, alpha=0.2, beta=0.6, lam=0.5) -> float:
    s = subsumer(parent, a, b)
    l, h, d = distance(parent, a, b), depth(parent, s), ic(parent, root, s)
    return math.exp(-alpha * l) * math.tanh(beta * h) * math.tanh(lam * d)


def sim_filtered(parent, root, a, b, zeta=0.25, **kw) -> float:
    v = sim(parent, root, a, b, **kw)
    return v if v > zeta else 0.0


# -- trust -------------------------------------------------------------------
# a rating is a tuple (requester, volunteer, activity, object, value, time)


def norm(v: int) -> float:
    return (v - 1) / 6


def object_trust(ratings, R, V, O, t, tax_parent, tax_root, zeta=0.25):
    num = den = 0.0
    for r, v, _a, o, val, time in ratings:
        if r == R and v == V and time <= t:
            w = sim_filtered(tax_parent, tax_root, O, o, zeta)
            num += w * norm(val)
            den += w
    return num / den if den > 0 else None


def propagate(parent: dict, root: str, direct: dict) -> dict:
    """Recursive restatement: own value, else mean of informative children, else parent's."""
    nodes = all_nodes(parent, root)
    kids = defaultdict(list)
    for c, p in parent.items():
        kids[p].append(c)

    def has_info(n):
        return n in direct or any(has_info(c) for c in kids[n])

    def intrinsic(n):
        if n in direct:
            return direct[n]
        vals = [intrinsic(c) for c in kids[n] if has_info(c)]
        return sum(vals) / len(vals)

    def resolved(n):
        if has_info(n):
            return intrinsic(n)
        if n in parent:
            return resolved(parent[n])
        return None

    if not direct:
        return {}
    out = {n: resolved(n) for n in nodes}
    return {n: v for n, v in out.items() if v is not None}


def activity_trust(ratings, R, V, A, t, mer_parent, mer_root):
    buckets = defaultdict(list)
    for r, v, a, _o, val, time in ratings:
        if r == R and v == V and time <= t:
            buckets[a].append(norm(val))
    direct = {a: sum(xs) / len(xs) for a, xs in buckets.items()}
    return propagate(mer_parent, mer_root, direct).get(A)


def combined_trust(o, a, alpha=0.5, default=0.5):
    if o is None and a is None:
        return default
    if o is None:
        return a
    if a is None:
        return o
    return alpha * o + (1 - alpha) * a


def direct_weight(ratings, R, U, X, field, parent, root, t, zeta=0.25):
    """1 - mean |diff| over common (volunteer, concept) pairs relevant to X; None if no overlap."""
    idx = 2 if field == "activity" else 3

    def profile(who):
        b = defaultdict(list)
        for rt in ratings:
            if rt[0] == who and rt[5] <= t:
                b[(rt[1], rt[idx])].append(norm(rt[4]))
        return {k: sum(v) / len(v) for k, v in b.items()}

    pr, pu = profile(R), profile(U)
    diffs = [
        abs(pr[k] - pu[k]) for k in pr if k in pu
        if k[1] == X or sim_filtered(parent, root, k[1], X, zeta) > 0
    ]
    return 1 - sum(diffs) / len(diffs) if diffs else None


def rater_weight(ratings, R, U, X, field, parent, root, t, zeta=0.25):
    """Self 1, direct if overlapping, else best bottleneck over every simple rater path, else 0.5."""
    if R == U:
        return 1.0
    w = direct_weight(ratings, R, U, X, field, parent, root, t, zeta)
    if w is not None:
        return w
    raters = sorted({rt[0] for rt in ratings if rt[5] <= t} | {R, U})
    middle = [x for x in raters if x not in (R, U)]
    best = None
    for k in range(1, len(middle) + 1):
        for perm in itertools.permutations(middle, k):
            path = (R,) + perm + (U,)
            ws = [direct_weight(ratings, a, b, X, field, parent, root, t, zeta) for a, b in zip(path, path[1:])]
            if all(x is not None for x in ws):
                best = min(ws) if best is None else max(best, min(ws))
    return 0.5 if best is None else best


def shared_trust(ratings, R, V, A, O, t, tax, mer, alpha=0.5, default=0.5, zeta=0.25):
    tax_parent, tax_root = tax
    mer_parent, mer_root = mer
    raters = sorted({rt[0] for rt in ratings if rt[1] == V and rt[5] <= t})
    on = od = an = ad = 0.0
    for U in raters:
        o = object_trust(ratings, U, V, O, t, tax_parent, tax_root, zeta)
        if o is not None:
            w = rater_weight(ratings, R, U, O, "object", tax_parent, tax_root, t, zeta)
            on, od = on + w * o, od + w
        a = activity_trust(ratings, U, V, A, t, mer_parent, mer_root)
        if a is not None:
            w = rater_weight(ratings, R, U, A, "activity", mer_parent, mer_root, t, zeta)
            an, ad = an + w * a, ad + w
    return combined_trust(on / od if od else None, an / ad if ad else None, alpha, default)


# -- graphs ------------------------------------------------------------------


def worst_case_closed_form(n: int) -> int:
    """Sum of lengths of simple paths from one vertex of K_n: sum_k k * (n-1)!/(n-1-k)!."""
    return sum(k * math.perm(n - 1, k) for k in range(1, n))
