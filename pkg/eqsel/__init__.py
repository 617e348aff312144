"""
eqsel
Equilibrium selection in finite-horizon stochastic games: perturbed
learning rules run inside an actor-critic framework, with exact stationary
and resistance-tree analysis of the stochastically stable outcomes.
"""

from importlib.metadata import version

from .game import NormalFormGame, Policy, StochasticGame, validate_game
from .games import builtin_game


__version__ = version("eqsel")
