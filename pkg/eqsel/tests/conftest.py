"""
Global pytest fixtures
"""

# Use this file if you need to share any fixtures
# across multiple modules
# More information at
# https://docs.pytest.org/en/stable/how-to/fixtures.html#scope-sharing-fixtures-across-classes-modules-packages-or-session

import numpy as np
import pytest

from eqsel.game import NormalFormGame
from eqsel.games import builtin_game, random_game
from eqsel.rules import LearningRuleSpec


@pytest.fixture
def treasure():
    return builtin_game("treasure_dig")


@pytest.fixture
def stag():
    return builtin_game("stag_hunt")


@pytest.fixture
def coordination():
    """2x2 identical-interest game paying 1 at (1, 1) and 0.5 at (0, 0)"""
    return NormalFormGame.identical((2, 2), [0.5, 0.0, 0.0, 1.0])


@pytest.fixture
def small_random_game():
    return random_game(np.random.default_rng(1234), (2, 2), 2, 2)


@pytest.fixture(params=["log_linear", "marden_mood", "pradelski_young"])
def rule_spec(request):
    return LearningRuleSpec(rule=request.param)


@pytest.fixture
def outdir(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
