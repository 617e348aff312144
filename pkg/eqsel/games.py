"""Built-in benchmark games and random game generators.

The two benchmarks are two-stage, two-agent games over a single state space
that also contains filler cells (e.g. ``A`` at stage 0). Filler cells are
unreachable, carry zero reward and loop onto themselves.
"""

import logging

import numpy as np

from .game import NormalFormGame, StochasticGame
from .utils import ActionCodec

logger = logging.getLogger(__name__)

BUILTIN_GAMES = ("treasure_dig", "stag_hunt", "stag_hunt_table")

# Stag-hunt stage game used at the initial state and at state B.
# Action 0 is Stag, action 1 is Hare.
STAG_HUNT_STAGE = {
    (0, 0): (0.0, 0.0),
    (0, 1): (0.0, 2.0),
    (1, 0): (2.0, 0.0),
    (1, 1): (1.0, 1.0),
}


def _self_loops(horizon, n_states, n_joint):
    P = np.zeros((horizon, n_states, n_joint, n_states))
    for s in range(n_states):
        P[:, s, :, s] = 1.0
    return P


def treasure_dig() -> StochasticGame:
    """Two agents dig at location 0 or 1, twice.

    At stage 0 both digging at 0 pays 1 and leads to ``A``; both digging at
    1 leads to ``B``; a split leads to ``O``. At stage 1, ``A`` pays 0.5 at
    (0, 0), ``O`` pays 1 at (0, 0), and ``B`` pays 1 at (0, 0) and 2 at
    (1, 1). Rewards are shared.
    """
    states = ("init", "A", "O", "B")
    codec = ActionCodec((2, 2))
    M, S = codec.n_joint, len(states)
    init, A, O, B = range(S)
    common = np.zeros((2, S, M))
    common[0, init, codec.encode((0, 0))] = 1.0
    common[1, A, codec.encode((0, 0))] = 0.5
    common[1, O, codec.encode((0, 0))] = 1.0
    common[1, B, codec.encode((0, 0))] = 1.0
    common[1, B, codec.encode((1, 1))] = 2.0

    P = _self_loops(2, S, M)
    P[0, init] = 0.0
    for joint in range(M):
        a = codec.decode(joint)
        nxt = A if a == (0, 0) else B if a == (1, 1) else O
        P[0, init, joint, nxt] = 1.0

    rho = np.zeros(S)
    rho[init] = 1.0
    return StochasticGame(
        (2, 2),
        2,
        states,
        np.stack([common, common]),
        P,
        rho,
        allow_unnormalized=True,
        name="treasure_dig",
    )


def stag_hunt(stag_payoff: float = 3.75, name="stag_hunt") -> StochasticGame:
    """Two-stage stag hunt.

    Stage 0 plays the stag-hunt stage game; joint Stag moves to ``A`` and
    anything else to ``B``. At ``A`` joint Stag pays ``stag_payoff`` to
    each agent; ``B`` replays the stage-0 game.
    """
    states = ("init", "A", "B")
    codec = ActionCodec((2, 2))
    M, S = codec.n_joint, len(states)
    init, A, B = range(S)
    rewards = np.zeros((2, 2, S, M))
    for a, payoff in STAG_HUNT_STAGE.items():
        joint = codec.encode(a)
        for i in range(2):
            rewards[i, 0, init, joint] = payoff[i]
            rewards[i, 1, B, joint] = payoff[i]
    rewards[:, 1, A, codec.encode((0, 0))] = stag_payoff

    P = _self_loops(2, S, M)
    P[0, init] = 0.0
    for joint in range(M):
        nxt = A if codec.decode(joint) == (0, 0) else B
        P[0, init, joint, nxt] = 1.0

    rho = np.zeros(S)
    rho[init] = 1.0
    return StochasticGame(
        (2, 2),
        2,
        states,
        rewards,
        P,
        rho,
        allow_unnormalized=True,
        name=name,
    )


def builtin_game(name: str) -> StochasticGame:
    """Return a built-in benchmark game.

    ``stag_hunt`` uses a stage-1 Stag payoff of 3.75 so that Stag is
    Pareto-dominant; ``stag_hunt_table`` ships the 0.5 variant for
    comparison.

    Raises
    ------
    ValueError
        unknown name
    """
    if name == "treasure_dig":
        return treasure_dig()
    if name == "stag_hunt":
        return stag_hunt(3.75)
    if name == "stag_hunt_table":
        return stag_hunt(0.5, name="stag_hunt_table")
    raise ValueError(
        f"unknown built-in game '{name}', expected one of {BUILTIN_GAMES}"
    )


def _grid_values(rng, size, grid, low=0.0, high=1.0):
    steps = int(round((high - low) / grid))
    return low + grid * rng.integers(0, steps + 1, size=size)


def random_game(
    rng,
    action_counts=(2, 2),
    n_states=2,
    horizon=2,
) -> StochasticGame:
    """Random game with dense transitions and full-support ``rho``"""
    codec = ActionCodec(action_counts)
    n, M = codec.n_agents, codec.n_joint
    rewards = rng.random((n, horizon, n_states, M))
    P = rng.random((horizon, n_states, M, n_states)) + 0.05
    P /= P.sum(axis=3, keepdims=True)
    rho = rng.random(n_states) + 0.05
    rho /= rho.sum()
    return StochasticGame(
        action_counts,
        horizon,
        [f"s{k}" for k in range(n_states)],
        rewards,
        P,
        rho,
        name="random",
    )


def random_potential_game(
    rng, action_counts=(2, 2), grid=0.1, max_tries=1000
) -> NormalFormGame:
    """Exact potential game ``r_i = phi + b_i(a_-i)`` on a payoff grid.

    ``phi`` has a unique maximizer with a margin of at least one grid step.
    Payoffs are scaled into [0, 1].
    """
    codec = ActionCodec(action_counts)
    n, M = codec.n_agents, codec.n_joint
    for _ in range(max_tries):
        phi = _grid_values(rng, M, grid)
        top = np.sort(phi)[-2:]
        if M > 1 and top[1] - top[0] < grid - 1e-12:
            continue
        payoffs = np.empty((n, M))
        for i in range(n):
            # dummy term depends on the other agents' actions only
            others = np.delete(codec.table, i, axis=1)
            keys = [tuple(row) for row in others]
            lookup = {
                k: v
                for k, v in zip(
                    sorted(set(keys)),
                    _grid_values(rng, len(set(keys)), grid, 0.0, 0.5),
                )
            }
            payoffs[i] = phi + np.array([lookup[k] for k in keys])
        payoffs /= 1.5
        return NormalFormGame(action_counts, payoffs, codec=codec)
    raise RuntimeError("could not draw a potential game with a unique maximum")


def random_interdependent_game(
    rng, action_counts=(2, 2), grid=0.1, max_tries=10000
) -> NormalFormGame:
    """General-sum game on a grid in [0, 1] that is interdependent and has
    a unique welfare maximizer"""
    from .policy import check_interdependence

    codec = ActionCodec(action_counts)
    n, M = codec.n_agents, codec.n_joint
    for _ in range(max_tries):
        payoffs = _grid_values(rng, (n, M), grid)
        welfare = np.sort(payoffs.sum(axis=0))
        if M > 1 and welfare[-1] - welfare[-2] < grid - 1e-12:
            continue
        nfg = NormalFormGame(action_counts, payoffs, codec=codec)
        if check_interdependence(nfg).holds:
            return nfg
    raise RuntimeError("could not draw an interdependent game")


def random_identical_interest_game(
    rng, action_counts=(2, 2), n_states=2, grid=0.1, gap=0.8
) -> StochasticGame:
    """Two-stage identical-interest game with a unique optimal profile.

    Every cell pays grid values in ``[0, 1 - gap]`` except one planted
    joint action paying 1, so the optimal profile is unique and wins every
    cell by at least ``gap``. Stage-0 transitions are deterministic per
    joint action; stage 1 loops. The game starts in state 0.
    """
    codec = ActionCodec(action_counts)
    M = codec.n_joint
    common = _grid_values(rng, (2, n_states, M), grid, 0.0, 1.0 - gap)
    planted = rng.integers(0, M, size=(2, n_states))
    np.put_along_axis(common, planted[..., None], 1.0, axis=2)

    P = np.zeros((2, n_states, M, n_states))
    nxt = rng.integers(0, n_states, size=(n_states, M))
    P[0, np.arange(n_states)[:, None], np.arange(M)[None, :], nxt] = 1.0
    for s in range(n_states):
        P[1, s, :, s] = 1.0
    rho = np.zeros(n_states)
    rho[0] = 1.0
    return StochasticGame(
        action_counts,
        2,
        [f"s{k}" for k in range(n_states)],
        np.stack([common] * codec.n_agents),
        P,
        rho,
        name="random_identical",
    )
