"""Activity meronomies, object taxonomies and the semantic similarity between concepts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class HierarchyError(ValueError):
    """Raised for malformed hierarchy documents or unknown concepts."""


class Kind(Enum):
    TAXONOMY = "taxonomy"
    MERONOMY = "meronomy"


@dataclass(frozen=True)
class SimilarityParams:
    sim_alpha: float = 0.2
    sim_beta: float = 0.6
    sim_lambda: float = 0.5
    zeta: float = 0.25

    def __post_init__(self):
        for name in ("sim_alpha", "sim_beta", "sim_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta must lie in [0, 1], got {self.zeta!r}")


class Hierarchy:
    """A rooted tree of uniquely labelled concepts.

    Concepts are identified by their labels. Instances are treated as
    immutable once built; derived tables (depth, ancestors, leaf counts) are
    computed eagerly.
    """

    def __init__(self, kind: Kind, root: str, parent_of: Mapping[str, str]):
        self.kind = kind
        self.root = root
        self.parent_of = dict(parent_of)
        self.nodes = frozenset([root, *self.parent_of, *self.parent_of.values()])
        self._check_tree()

        self.children: dict[str, tuple[str, ...]] = {n: () for n in self.nodes}
        for child, parent in sorted(self.parent_of.items()):
            self.children[parent] = self.children[parent] + (child,)

        self._depth: dict[str, int] = {}
        self._leaves: dict[str, int] = {}
        for node in self.preorder():
            parent = self.parent_of.get(node)
            self._depth[node] = 0 if parent is None else self._depth[parent] + 1
        for node in reversed(self.preorder()):
            kids = self.children[node]
            self._leaves[node] = 1 if not kids else sum(self._leaves[k] for k in kids)

    def _check_tree(self) -> None:
        if self.root in self.parent_of:
            raise HierarchyError(f"root {self.root!r} has a parent ({self.parent_of[self.root]!r})")
        for child, parent in self.parent_of.items():
            if child == parent:
                raise HierarchyError(f"cycle detected: {child!r} is its own parent")
        orphans = sorted(n for n in self.nodes if n != self.root and n not in self.parent_of)
        if orphans:
            raise HierarchyError(f"multiple roots: {self.root!r} and {orphans[0]!r}")
        for node in self.nodes:
            seen = {node}
            cur = node
            while cur in self.parent_of:
                cur = self.parent_of[cur]
                if cur in seen:
                    raise HierarchyError(f"cycle detected through {node!r}")
                seen.add(cur)

    def __contains__(self, node: object) -> bool:
        return node in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Hierarchy({self.kind.value}, root={self.root!r}, nodes={len(self.nodes)})"

    def require(self, *nodes: str) -> None:
        for node in nodes:
            if node not in self.nodes:
                raise HierarchyError(f"unknown concept {node!r} in {self.kind.value} rooted at {self.root!r}")

    def preorder(self) -> list[str]:
        order, stack = [], [self.root]
        children = getattr(self, "children", None)
        if children is None:
            children = {}
            for child, parent in sorted(self.parent_of.items()):
                children.setdefault(parent, []).append(child)
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(children.get(node, ())))
        return order

    def ancestors(self, node: str) -> list[str]:
        """``node`` followed by its ancestors up to the root."""
        self.require(node)
        chain = [node]
        while chain[-1] in self.parent_of:
            chain.append(self.parent_of[chain[-1]])
        return chain

    def is_leaf(self, node: str) -> bool:
        return not self.children[node]

    @property
    def leaves(self) -> list[str]:
        return [n for n in self.preorder() if not self.children[n]]

    def leaf_count(self, node: str) -> int:
        self.require(node)
        return self._leaves[node]

    def edges(self) -> list[tuple[str, str]]:
        return [(self.parent_of[n], n) for n in self.preorder() if n != self.root]

    def to_document(self) -> dict:
        return {"kind": self.kind.value, "root": self.root, "edges": [list(e) for e in self.edges()]}


def load_hierarchy(document: str | bytes | Mapping) -> Hierarchy:
    """Parse a hierarchy document.

    The document is JSON (or an already-decoded mapping) with ``kind``,
    ``root`` and ``edges`` (a list of ``[parent, child]`` pairs). An optional
    ``nodes`` list declares labels explicitly, which allows a single-node
    hierarchy to name nothing but its root.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise HierarchyError(f"cannot parse hierarchy document: {exc}") from exc
    if not isinstance(document, Mapping):
        raise HierarchyError("hierarchy document must be a mapping")
    try:
        kind = Kind(document["kind"])
        root = document["root"]
    except KeyError as exc:
        raise HierarchyError(f"hierarchy document lacks field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise HierarchyError(f"unknown hierarchy kind {document.get('kind')!r}") from exc
    if not isinstance(root, str) or not root:
        raise HierarchyError("root must be a non-empty label")

    declared = list(document.get("nodes", []))
    dupes = sorted({n for n in declared if declared.count(n) > 1})
    if dupes:
        raise HierarchyError(f"duplicate label {dupes[0]!r}")

    parent_of: dict[str, str] = {}
    for edge in document.get("edges", []):
        if not (isinstance(edge, (list, tuple)) and len(edge) == 2 and all(isinstance(x, str) for x in edge)):
            raise HierarchyError(f"malformed edge {edge!r}; expected [parent, child]")
        parent, child = edge
        if child in parent_of and parent_of[child] != parent:
            raise HierarchyError(
                f"duplicate label {child!r}: declared under both {parent_of[child]!r} and {parent!r}"
            )
        parent_of[child] = parent

    hierarchy = Hierarchy(kind, root, parent_of)
    stray = sorted(set(declared) - hierarchy.nodes)
    if stray:
        raise HierarchyError(f"multiple roots: {root!r} and {stray[0]!r}")
    return hierarchy


def load_hierarchy_file(path: str | Path) -> Hierarchy:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise HierarchyError(f"cannot read {path}: {exc}") from exc
    try:
        return load_hierarchy(text)
    except HierarchyError as exc:
        raise HierarchyError(f"{path}: {exc}") from exc


def most_specific_subsumer(h: Hierarchy, a: str, b: str) -> str:
    h.require(a, b)
    above_a = set(h.ancestors(a))
    for node in h.ancestors(b):
        if node in above_a:
            return node
    raise AssertionError("tree without common root")  # unreachable for validated trees


def path_distance(h: Hierarchy, a: str, b: str) -> int:
    """Number of edges between ``a`` and ``b`` through their subsumer."""
    sub = most_specific_subsumer(h, a, b)
    return h._depth[a] + h._depth[b] - 2 * h._depth[sub]


def depth(h: Hierarchy, n: str) -> int:
    h.require(n)
    return h._depth[n]


def information_content(h: Hierarchy, n: str) -> float:
    # p(n) is the share of all leaves that sit under n
    h.require(n)
    p = h._leaves[n] / h._leaves[h.root]
    return -math.log(p) if p < 1.0 else 0.0


def semantic_similarity(h: Hierarchy, a: str, b: str, p: SimilarityParams = SimilarityParams()) -> float:
    sub = most_specific_subsumer(h, a, b)
    l = path_distance(h, a, b)
    return (
        math.exp(-p.sim_alpha * l)
        * math.tanh(p.sim_beta * depth(h, sub))
        * math.tanh(p.sim_lambda * information_content(h, sub))
    )


def sim_obj(h: Hierarchy, a: str, b: str, p: SimilarityParams = SimilarityParams()) -> float:
    """Similarity with everything at or below ``p.zeta`` cut to zero."""
    s = semantic_similarity(h, a, b, p)
    return s if s > p.zeta else 0.0


def similarity_table(h: Hierarchy, p: SimilarityParams = SimilarityParams(), nodes: Iterable[str] | None = None):
    nodes = sorted(h.nodes) if nodes is None else list(nodes)
    return {(a, b): semantic_similarity(h, a, b, p) for a in nodes for b in nodes}
