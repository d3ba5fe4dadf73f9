from __future__ import annotations

import random

import pytest

from aspecteval.core import AspectSet, GoldAssignment

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_instance(rng: random.Random, max_gold: int = 8, max_aspects: int = 4, min_gold: int = 1):
    """Random (aspects, gold) pair with Likert weights and unique aspect per gold doc."""
    m = rng.randint(1, max_aspects)
    aspects = AspectSet.from_likert("q", [(f"a{j}", rng.randint(1, 5)) for j in range(1, m + 1)])
    n = rng.randint(min_gold, max_gold)
    gold = GoldAssignment("q", tuple((f"g{i:02d}", f"a{rng.randint(1, m)}") for i in range(n)))
    return aspects, gold


@pytest.fixture
def rng():
    return random.Random(20240611)
