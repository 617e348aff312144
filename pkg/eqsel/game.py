"""
Game model
==========

Finite-horizon stochastic games and the normal-form games every learning
rule consumes.

A :class:`StochasticGame` holds per-stage rewards ``r[i, h, s, a]`` and
transitions ``P[h, s, a, s']`` over a single state space ``S``, together
with the initial distribution ``rho``. Stages are 0-based: ``h = 0`` is the
first decision stage and ``h = horizon - 1`` the last. Joint actions are
flat indices produced by :class:`~eqsel.utils.ActionCodec`.

Construction only checks shapes. Value-level invariants (stochastic rows,
rewards in [0, 1], ``rho`` a distribution) are reported by
:func:`validate_game`, which never raises::

    from eqsel.games import builtin_game
    from eqsel.game import validate_game, stage_game

    game = builtin_game("treasure_dig")
    assert validate_game(game).ok
    nfg = stage_game(game, 1, "B")

Classes
^^^^^^^

.. autoclass:: NormalFormGame
.. autoclass:: StochasticGame
.. autoclass:: Policy
.. autofunction:: validate_game
.. autofunction:: stage_game
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from .exceptions import ShapeError
from .utils import ActionCodec

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12

StateRef = Union[int, str]


def _frozen(array, dtype=float):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class NormalFormGame:
    """Static payoff profile ``{r_i : A -> R}``.

    Parameters
    ----------
    action_counts : sequence of int
        ``|A_i|`` for every agent
    payoffs : array_like
        Shape ``(n_agents, n_joint)``; row ``i`` holds ``r_i`` indexed by
        joint action. All entries must be finite.

    Raises
    ------
    ShapeError
        payoff tensor does not have ``n_agents x prod(|A_i|)`` entries
    ValueError
        non-finite payoffs
    """

    def __init__(self, action_counts, payoffs, codec: ActionCodec = None):
        self.codec = (
            codec if codec is not None else ActionCodec(action_counts)
        )
        payoffs = np.asarray(payoffs, dtype=float)
        expected = (self.codec.n_agents, self.codec.n_joint)
        if payoffs.shape != expected:
            raise ShapeError(
                f"payoffs must have shape {expected}, got {payoffs.shape}"
            )
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoffs must all be finite")
        self.payoffs = _frozen(payoffs)

    @classmethod
    def from_tensors(cls, tensors: Sequence[np.ndarray]):
        """Build from one ``(|A_1|, ..., |A_n|)`` payoff tensor per agent"""
        tensors = [np.asarray(t, dtype=float) for t in tensors]
        counts = tensors[0].shape
        if len(counts) != len(tensors):
            raise ShapeError(
                f"{len(tensors)} agents need {len(tensors)}-dimensional "
                f"payoff tensors, got shape {counts}"
            )
        return cls(counts, np.stack([t.reshape(-1) for t in tensors]))

    @classmethod
    def identical(cls, action_counts, common):
        """Identical-interest game where every agent receives ``common``"""
        codec = ActionCodec(action_counts)
        common = np.asarray(common, dtype=float).reshape(-1)
        return cls(
            action_counts, np.tile(common, (codec.n_agents, 1)), codec=codec
        )

    @property
    def n_agents(self) -> int:
        return self.codec.n_agents

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return self.codec.action_counts

    @property
    def n_joint(self) -> int:
        return self.codec.n_joint

    def payoff(self, agent: int, joint: int) -> float:
        return float(self.payoffs[agent, joint])

    def tensor(self, agent: int) -> np.ndarray:
        return self.codec.as_tensor(self.payoffs[agent])

    def welfare(self) -> np.ndarray:
        """Social utility ``sum_i r_i(a)`` for every joint action"""
        return self.payoffs.sum(axis=0)

    def best_gain(self, agent: int) -> np.ndarray:
        """``max_b r_i(b, a_-i) - r_i(a)`` for every joint action ``a``"""
        dev = self.codec.deviation_table[agent]
        vals = self.payoffs[agent][dev]
        return vals.max(axis=1) - self.payoffs[agent]

    def pure_nash(self, strict: bool = False, tol: float = 1e-12):
        """Joint indices of pure Nash equilibria.

        With ``strict`` every unilateral deviation must lose by more than
        ``tol``; otherwise no deviation may gain more than ``tol``.
        """
        ok = np.ones(self.n_joint, dtype=bool)
        for i in range(self.n_agents):
            dev = self.codec.deviation_table[i]
            own = self.payoffs[i][:, None]
            vals = self.payoffs[i][dev]
            if strict:
                is_self = dev == np.arange(self.n_joint)[:, None]
                better = np.where(is_self, -np.inf, vals) >= own - tol
            else:
                better = vals > own + tol
            ok &= ~better.any(axis=1)
        return [int(a) for a in np.flatnonzero(ok)]

    def __eq__(self, other):
        return (
            isinstance(other, NormalFormGame)
            and self.codec == other.codec
            and np.array_equal(self.payoffs, other.payoffs)
        )

    def __repr__(self):
        return f"NormalFormGame(action_counts={self.action_counts})"


class StochasticGame:
    """Finite-horizon stochastic game ``M = {S, {A_i}, P, r, rho, H}``.

    Parameters
    ----------
    action_counts : sequence of int
        ``|A_i|`` for every agent
    horizon : int
        Number of stages ``H``
    states : sequence of str
        State names; their order fixes state indices
    rewards : array_like
        ``r[i, h, s, a]`` with shape ``(n_agents, H, |S|, n_joint)``
    transitions : array_like
        ``P[h, s, a, s']`` with shape ``(H, |S|, n_joint, |S|)``
    rho : array_like
        Initial distribution over states
    allow_unnormalized : bool (optional)
        Permit rewards outside [0, 1]
    name : str (optional)

    Raises
    ------
    ShapeError
        any tensor has the wrong shape
    ValueError
        horizon is not positive or state names repeat
    """

    def __init__(
        self,
        action_counts,
        horizon,
        states,
        rewards,
        transitions,
        rho,
        allow_unnormalized=False,
        name="",
    ):
        self.codec = ActionCodec(action_counts)
        if int(horizon) < 1:
            raise ValueError(f"horizon must be positive, got {horizon}")
        self.horizon = int(horizon)
        self.states = tuple(str(s) for s in states)
        if len(self.states) == 0:
            raise ValueError("a game needs at least one state")
        if len(set(self.states)) != len(self.states):
            raise ValueError(f"state names must be unique: {self.states}")
        self.allow_unnormalized = bool(allow_unnormalized)
        self.name = name

        n, H, S, M = self.n_agents, self.horizon, self.n_states, self.n_joint
        rewards = np.asarray(rewards, dtype=float)
        if rewards.shape != (n, H, S, M):
            raise ShapeError(
                f"rewards must have shape {(n, H, S, M)}, got {rewards.shape}"
            )
        transitions = np.asarray(transitions, dtype=float)
        if transitions.shape != (H, S, M, S):
            raise ShapeError(
                f"transitions must have shape {(H, S, M, S)}, "
                f"got {transitions.shape}"
            )
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (S,):
            raise ShapeError(f"rho must have shape {(S,)}, got {rho.shape}")
        self.rewards = _frozen(rewards)
        self.transitions = _frozen(transitions)
        self.rho = _frozen(rho)
        self._reachable = None

    @property
    def n_agents(self) -> int:
        return self.codec.n_agents

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return self.codec.action_counts

    @property
    def n_joint(self) -> int:
        return self.codec.n_joint

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, state: StateRef) -> int:
        if isinstance(state, (int, np.integer)):
            if not 0 <= int(state) < self.n_states:
                raise ValueError(
                    f"state index {state} outside [0, {self.n_states})"
                )
            return int(state)
        try:
            return self.states.index(state)
        except ValueError:
            raise ValueError(
                f"unknown state '{state}', expected one of {self.states}"
            ) from None

    def check_stage(self, h: int) -> int:
        if not 0 <= int(h) < self.horizon:
            raise ValueError(f"stage {h} outside [0, {self.horizon})")
        return int(h)

    def reachable(self) -> np.ndarray:
        """Bool mask ``(H, |S|)`` of cells reachable from ``supp(rho)``
        under some sequence of joint actions"""
        if self._reachable is None:
            mask = np.zeros((self.horizon, self.n_states), dtype=bool)
            mask[0] = self.rho > 0
            for h in range(self.horizon - 1):
                support = self.transitions[h][mask[h]] > 0
                mask[h + 1] = support.any(axis=(0, 1))
            mask.setflags(write=False)
            self._reachable = mask
        return self._reachable

    def reward_range(self) -> Tuple[float, float]:
        return float(self.rewards.min()), float(self.rewards.max())

    def is_identical_interest(self) -> bool:
        return bool(np.all(self.rewards == self.rewards[:1]))

    def __eq__(self, other):
        return (
            isinstance(other, StochasticGame)
            and self.codec == other.codec
            and self.horizon == other.horizon
            and self.states == other.states
            and self.allow_unnormalized == other.allow_unnormalized
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rho, other.rho)
        )

    def __repr__(self):
        return (
            f"StochasticGame(name={self.name!r}, "
            f"action_counts={self.action_counts}, horizon={self.horizon}, "
            f"states={self.states})"
        )


class Policy:
    """Markov policy ``pi_h(a|s)`` over joint actions.

    Parameters
    ----------
    tables : array_like
        Shape ``(H, |S|, n_joint)``; each ``tables[h, s]`` a distribution
    kind : {"deterministic", "stochastic"}
    """

    KINDS = ("deterministic", "stochastic")

    def __init__(self, tables, kind="stochastic"):
        if kind not in self.KINDS:
            raise ValueError(f"policy kind must be one of {self.KINDS}")
        tables = np.asarray(tables, dtype=float)
        if tables.ndim != 3:
            raise ShapeError(
                f"policy tables must be 3-dimensional, got {tables.shape}"
            )
        if np.any(tables < 0) or np.any(
            np.abs(tables.sum(axis=2) - 1.0) > ROW_TOL
        ):
            raise ValueError(
                "every policy row pi_h(.|s) must be a probability "
                "distribution"
            )
        if kind == "deterministic" and not np.all(
            (tables == 0.0) | (tables == 1.0)
        ):
            raise ValueError("deterministic policy rows must be point masses")
        self.tables = _frozen(tables)
        self.kind = kind

    @classmethod
    def from_actions(cls, actions, n_joint: int):
        actions = np.asarray(actions, dtype=np.int64)
        if actions.ndim != 2:
            raise ShapeError(
                f"actions must have shape (H, |S|), got {actions.shape}"
            )
        if np.any(actions < 0) or np.any(actions >= n_joint):
            raise ValueError(f"actions must lie in [0, {n_joint})")
        tables = np.zeros(actions.shape + (n_joint,))
        np.put_along_axis(tables, actions[..., None], 1.0, axis=2)
        return cls(tables, kind="deterministic")

    @classmethod
    def uniform(cls, horizon, n_states, n_joint):
        return cls(np.full((horizon, n_states, n_joint), 1.0 / n_joint))

    @property
    def is_deterministic(self) -> bool:
        return self.kind == "deterministic"

    @property
    def actions(self) -> np.ndarray:
        if not self.is_deterministic:
            raise TypeError("only deterministic policies have an action table")
        return self.tables.argmax(axis=2)

    def check_shape(self, game: StochasticGame):
        expected = (game.horizon, game.n_states, game.n_joint)
        if self.tables.shape != expected:
            raise ShapeError(
                f"policy shape {self.tables.shape} does not match game "
                f"shape {expected}"
            )

    def __eq__(self, other):
        return (
            isinstance(other, Policy)
            and self.kind == other.kind
            and np.array_equal(self.tables, other.tables)
        )

    def __repr__(self):
        return f"Policy(kind={self.kind!r}, shape={self.tables.shape})"


@dataclass(frozen=True)
class ValidationIssue:
    field: str
    coords: tuple
    message: str

    def to_dict(self):
        return {
            "field": self.field,
            "coords": list(self.coords),
            "message": self.message,
        }


@dataclass
class ValidationReport:
    issues: List[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return len(self.issues) == 0

    def add(self, field_name, coords, message):
        self.issues.append(
            ValidationIssue(field_name, tuple(int(c) for c in coords), message)
        )

    def fields(self):
        return sorted({issue.field for issue in self.issues})

    def to_dict(self):
        return {"ok": self.ok, "issues": [i.to_dict() for i in self.issues]}

    def __len__(self):
        return len(self.issues)


def validate_game(game: StochasticGame) -> ValidationReport:
    """Report every violated model invariant with tensor coordinates.

    Never raises on invalid values. An empty report means rewards are
    finite (and in [0, 1] unless ``allow_unnormalized``), every transition
    row is a distribution within 1e-12 and ``rho`` sums to 1 within 1e-12.
    """
    report = ValidationReport()

    bad = ~np.isfinite(game.rewards)
    for coords in np.argwhere(bad):
        report.add("rewards", coords, "reward is not finite")
    if not game.allow_unnormalized:
        outside = np.isfinite(game.rewards) & (
            (game.rewards < 0.0) | (game.rewards > 1.0)
        )
        for coords in np.argwhere(outside):
            value = game.rewards[tuple(coords)]
            report.add(
                "rewards",
                coords,
                f"reward {value} outside [0, 1] and allow_unnormalized "
                "is not set",
            )

    for coords in np.argwhere(game.transitions < 0):
        report.add("transitions", coords, "negative transition probability")
    sums = game.transitions.sum(axis=3)
    for coords in np.argwhere(np.abs(sums - 1.0) > ROW_TOL):
        report.add(
            "transitions",
            coords,
            f"row sums to {sums[tuple(coords)]!r}, expected 1",
        )

    for coords in np.argwhere(game.rho < 0):
        report.add("rho", coords, "negative initial probability")
    total = game.rho.sum()
    if abs(total - 1.0) > ROW_TOL:
        report.add("rho", (), f"initial distribution sums to {total!r}")

    if not report.ok:
        logger.debug(f"{game!r}: {len(report)} validation issue(s)")
    return report


def stage_game(game: StochasticGame, h: int, s: StateRef) -> NormalFormGame:
    """Normal-form game ``{r_{i,h}(s, .)}`` at stage ``h`` and state ``s``"""
    h = game.check_stage(h)
    s = game.state_index(s)
    return NormalFormGame(
        game.action_counts, game.rewards[:, h, s, :], codec=game.codec
    )


def q_stage_game(Q: np.ndarray, codec: ActionCodec, h: int, s: int):
    """Normal-form game whose payoffs are the Q-slice ``Q[:, h, s, :]``"""
    return NormalFormGame(codec.action_counts, Q[:, h, s, :], codec=codec)
