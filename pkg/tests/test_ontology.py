import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uhelp.ontology import (
    Hierarchy,
    HierarchyError,
    Kind,
    SimilarityParams,
    depth,
    information_content,
    load_hierarchy,
    most_specific_subsumer,
    path_distance,
    semantic_similarity,
    sim_obj,
    similarity_table,
)

from conftest import random_parent_map
from oracles import sim as sim_oracle
from oracles import subsumer as subsumer_oracle


def doc(edges, root="r", kind="taxonomy", **extra):
    return json.dumps({"kind": kind, "root": root, "edges": edges, **extra})


class TestLoading:
    def test_fixtures_load(self, tax, mer):
        assert tax.kind is Kind.TAXONOMY and tax.root == "kid"
        assert mer.kind is Kind.MERONOMY and mer.root == "care for"
        assert len(tax.leaves) == 6

    def test_round_trip(self, tax):
        again = load_hierarchy(tax.to_document())
        assert again.parent_of == tax.parent_of and again.root == tax.root

    def test_single_node(self):
        h = load_hierarchy(doc([], nodes=["r"]))
        assert len(h) == 1 and information_content(h, "r") == 0.0

    @pytest.mark.parametrize(
        "document, fragment",
        [
            (doc([["r", "a"], ["x", "b"]]), "multiple roots"),
            (doc([["r", "a"]], nodes=["r", "a", "z"]), "multiple roots"),
            (doc([["r", "a"], ["a", "b"], ["r", "b"]]), "duplicate label"),
            (doc([["r", "a"]], nodes=["r", "a", "a"]), "duplicate label"),
            (doc([["r", "a"], ["b", "c"], ["c", "b"]]), "cycle"),
            (doc([["a", "r"]]), "has a parent"),
            (doc([["r"]]), "malformed edge"),
            (json.dumps({"kind": "graph", "root": "r", "edges": []}), "unknown hierarchy kind"),
            ("{not json", "cannot parse"),
        ],
    )
    def test_rejects(self, document, fragment):
        with pytest.raises(HierarchyError, match=fragment):
            load_hierarchy(document)

    def test_unknown_concept(self, tax):
        with pytest.raises(HierarchyError):
            depth(tax, "grandparent")
        with pytest.raises(HierarchyError):
            semantic_similarity(tax, "baby", "grandparent")

    def test_bad_params(self):
        with pytest.raises(ValueError):
            SimilarityParams(sim_alpha=0)
        with pytest.raises(ValueError):
            SimilarityParams(zeta=1.5)


class TestMeasures:
    def test_subsumer(self, tax):
        assert most_specific_subsumer(tax, "baby", "baby") == "baby"
        assert most_specific_subsumer(tax, "kid", "adolescent") == "kid"
        assert most_specific_subsumer(tax, "newborn", "baby") == "infant"

    def test_distance(self, tax):
        assert path_distance(tax, "baby", "baby") == 0
        assert path_distance(tax, "baby", "infant") == 1
        assert path_distance(tax, "newborn", "baby") == 2
        assert path_distance(tax, "newborn", "adolescent") == 4

    def test_depth(self, tax):
        assert depth(tax, "kid") == 0
        assert depth(tax, "toddler") == 1
        assert depth(tax, "infant") == 1

    def test_information_content(self, tax):
        assert information_content(tax, "kid") == 0.0
        # 2 of 6 leaves sit under infant
        assert information_content(tax, "infant") == pytest.approx(1.0986122886681098, abs=1e-15)
        assert information_content(tax, "toddler") == pytest.approx(math.log(6))

    def test_four_leaf_tree(self):
        h = Hierarchy(Kind.TAXONOMY, "r", {"a": "r", "b": "r", "c": "r", "d": "r"})
        assert information_content(h, "a") == pytest.approx(-math.log(1 / 4))

    def test_similarity_fixture_value(self, tax):
        assert semantic_similarity(tax, "newborn", "baby") == pytest.approx(0.1799975452367716, abs=1e-15)

    def test_root_root_is_zero(self, tax, mer):
        assert semantic_similarity(tax, "kid", "kid") == 0.0
        assert semantic_similarity(mer, "care for", "care for") == 0.0

    def test_disjoint_subtrees_below_self(self, tax):
        assert semantic_similarity(tax, "newborn", "adolescent") < semantic_similarity(tax, "newborn", "newborn")

    def test_sim_obj_cut(self, tax):
        s = semantic_similarity(tax, "newborn", "baby")
        assert sim_obj(tax, "newborn", "baby", SimilarityParams(zeta=0.0)) == s
        assert sim_obj(tax, "newborn", "baby", SimilarityParams(zeta=1.0)) == 0.0
        assert sim_obj(tax, "newborn", "baby", SimilarityParams(zeta=s)) == 0.0
        assert sim_obj(tax, "newborn", "baby", SimilarityParams(zeta=s - 1e-9)) == s

    def test_table_matches_oracle(self, tax, mer):
        for h in (tax, mer):
            for (a, b), v in similarity_table(h).items():
                assert v == pytest.approx(sim_oracle(h.parent_of, h.root, a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 14), data=st.data())
def test_subsumer_matches_ancestor_intersection(seed, n, data):
    import random

    parent = random_parent_map(random.Random(seed), n)
    h = Hierarchy(Kind.TAXONOMY, "n0", parent)
    nodes = sorted(h.nodes)
    a = data.draw(st.sampled_from(nodes))
    b = data.draw(st.sampled_from(nodes))
    assert most_specific_subsumer(h, a, b) == subsumer_oracle(parent, a, b)
    assert semantic_similarity(h, a, b) == pytest.approx(sim_oracle(parent, "n0", a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    zeta=st.floats(0, 1),
    alpha=st.floats(0.01, 3),
    beta=st.floats(0.01, 3),
    lam=st.floats(0.01, 3),
)
def test_sim_obj_range(tax, zeta, alpha, beta, lam):
    p = SimilarityParams(alpha, beta, lam, zeta)
    for a in sorted(tax.nodes):
        for b in sorted(tax.nodes):
            v = sim_obj(tax, a, b, p)
            assert v == 0.0 or zeta < v < 1.0
