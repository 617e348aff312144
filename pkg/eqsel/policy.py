"""
Exact policy evaluation and equilibrium classification
======================================================

Backward induction over the finite horizon gives exact ``V`` and ``Q``
tables for any Markov policy. On top of it this module tests and enumerates
Markov perfect equilibria (MPE), computes Pareto-optimal policies, and
verifies the potential and interdependence structure of stage games.

MPE here is *strict*: at every reachable cell each agent's equilibrium
action must beat every unilateral deviation by more than ``tol``. Weak
equilibria are not MPEs.

Cells that cannot be reached from ``supp(rho)`` under any joint-action
sequence are ignored by every equilibrium check; the built-in games use them
as zero-reward fillers.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import GuardExceededError, PreconditionError
from .game import NormalFormGame, Policy, StochasticGame, stage_game
from .utils import argmax_set

logger = logging.getLogger(__name__)

STRICT_TOL = 1e-12
POTENTIAL_TOL = 1e-9
MPG_TOL = 1e-8
MPE_CELL_GUARD = 10**6
MPE_POLICY_GUARD = 10**5


@dataclass(frozen=True)
class ValueTables:
    """``V[i, h, s]`` and ``Q[i, h, s, a]`` of one policy"""

    V: np.ndarray
    Q: np.ndarray


def backward_values(rewards, transitions, tables) -> ValueTables:
    """Backward induction for an arbitrary reward tensor ``(k, H, S, M)``"""
    k, H, S, M = rewards.shape
    V = np.zeros((k, H, S))
    Q = np.zeros((k, H, S, M))
    v_next = np.zeros((k, S))
    for h in range(H - 1, -1, -1):
        Q[:, h] = rewards[:, h] + np.einsum(
            "sat,kt->ksa", transitions[h], v_next
        )
        V[:, h] = np.einsum("sa,ksa->ks", tables[h], Q[:, h])
        v_next = V[:, h]
    return ValueTables(V, Q)


def evaluate_policy(game: StochasticGame, policy: Policy) -> ValueTables:
    """Exact ``V^pi`` and ``Q^pi`` for every agent, stage and state.

    ``Q[:, H-1]`` equals the last-stage rewards and ``Q[:, h]`` depends
    only on ``pi[h+1:]``.

    Raises
    ------
    ShapeError
        policy shape does not match the game
    """
    policy.check_shape(game)
    return backward_values(game.rewards, game.transitions, policy.tables)


def occupancy(game: StochasticGame, policy: Policy) -> np.ndarray:
    """State distribution ``d[h, s]`` reached by following ``policy``"""
    d = np.zeros((game.horizon, game.n_states))
    d[0] = game.rho
    for h in range(game.horizon - 1):
        step = np.einsum("sa,sat->st", policy.tables[h], game.transitions[h])
        d[h + 1] = d[h] @ step
    return d


@dataclass(frozen=True)
class MPEWitness:
    agent: int
    h: int
    state: int
    action: int
    joint: int
    gain: float

    def to_dict(self):
        return {
            "agent": self.agent,
            "h": self.h,
            "state": self.state,
            "action": self.action,
            "joint": self.joint,
            "gain": self.gain,
        }


@dataclass(frozen=True)
class MPECheck:
    is_mpe: bool
    witness: Optional[MPEWitness] = None

    def __bool__(self):
        return self.is_mpe


def _strict_violation(Q, codec, h, s, joint, tol=STRICT_TOL):
    for i in range(codec.n_agents):
        dev = codec.deviation_table[i][joint]
        own = Q[i, h, s, joint]
        for b, other in enumerate(dev):
            if other == joint:
                continue
            gain = Q[i, h, s, other] - own
            if gain >= -tol:
                return MPEWitness(i, h, s, b, int(joint), float(gain))
    return None


def is_mpe(game: StochasticGame, policy: Policy) -> MPECheck:
    """Test the strict MPE condition at every reachable cell.

    Returns
    -------
    MPECheck
        truthy iff no agent can match or beat its equilibrium Q-value by a
        unilateral deviation; otherwise carries the first violating
        ``(agent, h, state, action)``

    Raises
    ------
    TypeError
        ``policy`` is stochastic
    """
    if not policy.is_deterministic:
        raise TypeError("is_mpe requires a deterministic policy")
    tables = evaluate_policy(game, policy)
    actions = policy.actions
    reach = game.reachable()
    for h in range(game.horizon):
        for s in np.flatnonzero(reach[h]):
            witness = _strict_violation(
                tables.Q, game.codec, h, int(s), int(actions[h, s])
            )
            if witness is not None:
                return MPECheck(False, witness)
    return MPECheck(True)


def _outcome_key(game, actions):
    policy = Policy.from_actions(actions, game.n_joint)
    visited = occupancy(game, policy) > 0
    return tuple(np.where(visited, actions, -1).ravel())


def enumerate_mpe(
    game: StochasticGame,
    guard: int = MPE_CELL_GUARD,
    policy_guard: int = MPE_POLICY_GUARD,
) -> List[Policy]:
    """All strict MPEs, one per on-path outcome.

    Stages are processed from ``H-1`` down to 0. For every continuation
    selected so far, each reachable cell contributes the strict pure NEs of
    its Q stage game; the product over states extends the continuation.
    Unreachable cells play joint action 0. Policies that agree on every
    cell visited with positive probability are one outcome and only the
    lexicographically smallest representative is kept.

    Raises
    ------
    GuardExceededError
        ``H * |S| * n_joint`` exceeds ``guard`` or the number of partial
        continuations exceeds ``policy_guard``
    """
    H, S, M, n = game.horizon, game.n_states, game.n_joint, game.n_agents
    if H * S * M > guard:
        raise GuardExceededError(
            f"{H * S * M} stage-cells exceed the enumeration guard {guard}"
        )
    reach = game.reachable()
    # (actions for stages h..H-1, V at stage h)
    partial = [(np.zeros((0, S), dtype=np.int64), np.zeros((n, S)))]
    for h in range(H - 1, -1, -1):
        extended = []
        for actions, v_next in partial:
            Qh = game.rewards[:, h] + np.einsum(
                "sat,it->isa", game.transitions[h], v_next
            )
            choices = []
            for s in range(S):
                if not reach[h, s]:
                    choices.append([0])
                    continue
                nfg = NormalFormGame(
                    game.action_counts, Qh[:, s], codec=game.codec
                )
                choices.append(nfg.pure_nash(strict=True, tol=STRICT_TOL))
            for combo in itertools.product(*choices):
                combo = np.array(combo, dtype=np.int64)
                v_here = Qh[:, np.arange(S), combo]
                extended.append((np.vstack([combo[None, :], actions]), v_here))
                if len(extended) > policy_guard:
                    raise GuardExceededError(
                        f"more than {policy_guard} partial equilibria at "
                        f"stage {h}"
                    )
        partial = extended
        logger.debug(f"stage {h}: {len(partial)} partial equilibria")

    outcomes = {}
    for actions, _ in partial:
        key = _outcome_key(game, actions)
        flat = tuple(actions.ravel())
        if key not in outcomes or flat < tuple(outcomes[key].ravel()):
            outcomes[key] = actions
    ordered = sorted(outcomes.values(), key=lambda a: tuple(a.ravel()))
    return [Policy.from_actions(a, M) for a in ordered]


def pareto_optimal_policy(game: StochasticGame) -> Tuple[Policy, np.ndarray]:
    """Maximize the summed value at every stage and state.

    Returns
    -------
    policy : Policy
        deterministic; ties go to the smallest joint-action index
    social : numpy.ndarray
        ``sum_i V_{i,h}(s)`` under ``policy``, shape ``(H, |S|)``
    """
    H, S = game.horizon, game.n_states
    welfare = game.rewards.sum(axis=0)
    social = np.zeros((H, S))
    actions = np.zeros((H, S), dtype=np.int64)
    w_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q = welfare[h] + game.transitions[h] @ w_next
        for s in range(S):
            actions[h, s] = argmax_set(q[s], tol=STRICT_TOL)[0]
            social[h, s] = q[s, actions[h, s]]
        w_next = social[h]
    return Policy.from_actions(actions, game.n_joint), social


def social_maximizer_sets(
    game: StochasticGame, policy: Policy, tol=POTENTIAL_TOL
) -> Dict[Tuple[int, int], Tuple[int, ...]]:
    """Argmax sets of ``sum_i Q^pi_i`` per cell under ``policy``'s
    continuation"""
    Q = evaluate_policy(game, policy).Q.sum(axis=0)
    return {
        (h, s): argmax_set(Q[h, s], tol)
        for h in range(game.horizon)
        for s in range(game.n_states)
    }


def _social_value(game, policy):
    V = evaluate_policy(game, policy).V
    return float(game.rho @ V[:, 0].sum(axis=0))


def pareto_optimal_mpe(game: StochasticGame, **kwargs) -> Policy:
    """The MPE with the largest ``sum_i rho . V_{i,0}``.

    Ties are broken by the lexicographic order of the action tables.

    Raises
    ------
    PreconditionError
        the game has no strict MPE
    """
    candidates = enumerate_mpe(game, **kwargs)
    if not candidates:
        raise PreconditionError(f"{game.name or 'game'} has no strict MPE")
    values = np.array([_social_value(game, p) for p in candidates])
    best = argmax_set(values, tol=STRICT_TOL)[0]
    return candidates[best]


@dataclass(frozen=True)
class PotentialCertificate:
    exists: bool
    phi: Optional[np.ndarray]
    max_violation: float

    def to_dict(self):
        return {
            "exists": self.exists,
            "phi": None if self.phi is None else self.phi.tolist(),
            "max_violation": self.max_violation,
        }


def integrate_potential(
    nfg: NormalFormGame, order: Sequence[int] = None
) -> np.ndarray:
    """Candidate potential by path integration from joint action 0.

    The path switches agents on one at a time in ``order`` (default
    ``0..n-1``), summing each agent's unilateral payoff difference. The
    constant is fixed by ``phi(0) = mean_i r_i(0)``.
    """
    codec = nfg.codec
    order = list(range(nfg.n_agents)) if order is None else list(order)
    table = codec.table
    phi = np.full(nfg.n_joint, nfg.payoffs[:, 0].mean())
    switched = np.zeros(nfg.n_agents, dtype=bool)
    for i in order:
        prev = np.where(switched, table, 0)
        switched[i] = True
        cur = np.where(switched, table, 0)
        idx_prev = np.ravel_multi_index(prev.T, codec.action_counts)
        idx_cur = np.ravel_multi_index(cur.T, codec.action_counts)
        phi += nfg.payoffs[i, idx_cur] - nfg.payoffs[i, idx_prev]
    return phi


def potential_violation(nfg: NormalFormGame, phi: np.ndarray) -> float:
    worst = 0.0
    for i in range(nfg.n_agents):
        dev = nfg.codec.deviation_table[i]
        lhs = phi[dev] - phi[:, None]
        rhs = nfg.payoffs[i][dev] - nfg.payoffs[i][:, None]
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def verify_potential(nfg: NormalFormGame) -> PotentialCertificate:
    """Certify that ``nfg`` is an exact potential game.

    Builds ``phi`` by :func:`integrate_potential` and checks the defining
    identity for every agent, joint action and deviation.
    """
    phi = integrate_potential(nfg)
    worst = potential_violation(nfg, phi)
    if worst <= POTENTIAL_TOL:
        phi.setflags(write=False)
        return PotentialCertificate(True, phi, worst)
    return PotentialCertificate(False, None, worst)


@dataclass(frozen=True)
class InterdependenceCheck:
    holds: bool
    witness: Optional[Tuple[int, Tuple[int, ...]]] = None

    def __bool__(self):
        return self.holds

    def to_dict(self):
        return {
            "holds": self.holds,
            "witness": None
            if self.witness is None
            else {"joint": self.witness[0], "subset": list(self.witness[1])},
        }


def check_interdependence(nfg: NormalFormGame, tol=STRICT_TOL):
    """Check that no proper agent subset is payoff-isolated.

    For every joint action ``a`` and nonempty proper subset ``J`` some
    agent outside ``J`` must see its payoff change when ``J`` changes its
    actions. A failure returns the first violating ``(a, J)``.

    Raises
    ------
    ValueError
        fewer than two agents
    """
    n = nfg.n_agents
    if n < 2:
        raise ValueError("interdependence needs at least two agents")
    table = nfg.codec.table
    for size in range(1, n):
        for J in itertools.combinations(range(n), size):
            outside = [i for i in range(n) if i not in J]
            keys = table[:, outside]
            groups = {}
            for joint, key in enumerate(map(tuple, keys)):
                groups.setdefault(key, []).append(joint)
            for members in groups.values():
                vals = nfg.payoffs[np.ix_(outside, members)]
                spread = vals.max(axis=1) - vals.min(axis=1)
                if not np.any(spread > tol):
                    return InterdependenceCheck(False, (min(members), J))
    return InterdependenceCheck(True)


def stage_potentials(game: StochasticGame, cells=None) -> np.ndarray:
    """Stage potentials ``phi[h, s, a]`` for the given cells (default all).

    Raises
    ------
    PreconditionError
        some stage game in ``cells`` is not an exact potential game
    """
    phi = np.zeros((game.horizon, game.n_states, game.n_joint))
    if cells is None:
        cells = [
            (h, s) for h in range(game.horizon) for s in range(game.n_states)
        ]
    for h, s in cells:
        cert = verify_potential(stage_game(game, h, s))
        if not cert.exists:
            raise PreconditionError(
                f"stage game at h={h}, state={game.states[s]} is not a "
                f"potential game (violation {cert.max_violation:.3g})"
            )
        phi[h, s] = cert.phi
    return phi


def _reachable_cells(game):
    return [(int(h), int(s)) for h, s in np.argwhere(game.reachable())]


@dataclass
class MPGReport:
    passed: bool
    worst_violation: float
    worst_at: Optional[dict]
    per_policy: List[float] = field(default_factory=list)

    def to_dict(self):
        return {
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "worst_at": self.worst_at,
            "per_policy": list(self.per_policy),
        }


def check_mpg_on_policies(
    game: StochasticGame, policies: Sequence[Policy], tol=MPG_TOL
) -> MPGReport:
    """Spot-check the Markov potential identity on given policies.

    The total potential ``Phi^pi`` is the Q-function of the stage
    potentials under ``pi``. For every reachable cell, agent and unilateral
    deviation the difference in ``Phi^pi`` must equal the difference in
    ``Q^pi_i`` within ``tol``.

    Raises
    ------
    PreconditionError
        a reachable stage game has no exact potential
    """
    cells = _reachable_cells(game)
    phi = stage_potentials(game, cells)
    worst, worst_at, per_policy = 0.0, None, []
    for k, policy in enumerate(policies):
        Q = evaluate_policy(game, policy).Q
        Phi = backward_values(
            phi[None], game.transitions, policy.tables
        ).Q[0]
        local = 0.0
        for h, s in cells:
            for i in range(game.n_agents):
                dev = game.codec.deviation_table[i]
                lhs = Phi[h, s][dev] - Phi[h, s][:, None]
                rhs = Q[i, h, s][dev] - Q[i, h, s][:, None]
                err = np.abs(lhs - rhs)
                top = float(err.max())
                if top > local:
                    local = top
                if top > worst:
                    worst = top
                    a, b = np.unravel_index(err.argmax(), err.shape)
                    worst_at = {
                        "policy": k,
                        "agent": i,
                        "h": h,
                        "state": game.states[s],
                        "joint": int(a),
                        "action": int(b),
                    }
        per_policy.append(local)
    return MPGReport(worst <= tol, worst, worst_at, per_policy)


@dataclass
class PotentialMaximizer:
    policy: Policy
    maximizers: Dict[Tuple[int, int], Tuple[int, ...]]
    values: np.ndarray


def potential_maximizing_policy(game: StochasticGame) -> PotentialMaximizer:
    """Backward induction that maximizes the accumulated stage potential.

    Unreachable cells keep a zero potential. Per-cell maximizer sets are
    kept for comparison against limit supports.

    Raises
    ------
    PreconditionError
        a reachable stage game has no exact potential
    """
    H, S = game.horizon, game.n_states
    cells = _reachable_cells(game)
    phi = stage_potentials(game, cells)
    actions = np.zeros((H, S), dtype=np.int64)
    values = np.zeros((H, S))
    sets = {}
    w_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q = phi[h] + game.transitions[h] @ w_next
        for s in range(S):
            sets[(h, s)] = argmax_set(q[s], POTENTIAL_TOL)
            actions[h, s] = sets[(h, s)][0]
            values[h, s] = q[s, actions[h, s]]
        w_next = values[h]
    return PotentialMaximizer(
        Policy.from_actions(actions, game.n_joint), sets, values
    )


def deterministic_policies(game: StochasticGame, limit: int = 256):
    """Iterate over every deterministic policy (small games only)"""
    H, S, M = game.horizon, game.n_states, game.n_joint
    count = M ** (H * S)
    if count > limit:
        raise GuardExceededError(
            f"{count} deterministic policies exceed the limit {limit}"
        )
    for flat in itertools.product(range(M), repeat=H * S):
        yield Policy.from_actions(np.reshape(flat, (H, S)), M)
