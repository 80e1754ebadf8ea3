import random
from pathlib import Path

import pytest

from uhelp.ontology import Hierarchy, Kind, load_hierarchy_file

DATA = Path(__file__).resolve().parents[1] / "src" / "uhelp" / "data"

# criterion number -> (passed, detail); filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def tax() -> Hierarchy:
    return load_hierarchy_file(DATA / "kids_taxonomy.json")


@pytest.fixture(scope="session")
def mer() -> Hierarchy:
    return load_hierarchy_file(DATA / "care_meronomy.json")


@pytest.fixture(scope="session")
def demo_dir() -> Path:
    return DATA / "demo"


def random_parent_map(rng: random.Random, n: int, prefix: str = "n") -> dict[str, str]:
    """Random rooted tree on ``n`` nodes as a child -> parent map (root is ``<prefix>0``)."""
    return {f"{prefix}{i}": f"{prefix}{rng.randrange(i)}" for i in range(1, n)}


def random_hierarchy(rng: random.Random, n: int, kind: Kind = Kind.TAXONOMY) -> Hierarchy:
    return Hierarchy(kind, "n0", random_parent_map(rng, n))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
