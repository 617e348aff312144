"""
Actor-critic learning framework
===============================

Every ``(h, s)`` cell of a finite-horizon stochastic game runs its own
copy of a perturbed learning rule (the actor) against the Q-values of the
cell, while a critic maintains value estimates.

:func:`run_algorithm1`
    critic with known transitions: ``V`` is the running average of the
    Q-value at the chosen action and ``Q_h = r_h + P_h V_{h+1}``
:func:`run_algorithm2`
    sample-based critic: one trajectory per iteration, ``Q`` updated only
    at visited ``(s, a)`` with step ``1 / N_h(s, a)``
:func:`exact_pi_eps`
    the stationary policy the framework converges to, by backward
    recursion over stationary distributions of the cell kernels
:func:`sweep_limit_policy` and :func:`validate_sg_corollary`
    follow the stationary policy as ``eps`` shrinks and compare its limit
    support with potential-maximizing, Pareto-optimal and Pareto-MPE
    targets

Stages are processed from ``H-1`` down to 0. Each cell has its own random
stream, spawned from the run seed in ``(h, s)`` row order, so results do
not depend on the order cells are visited within a stage. Mood-based rules
see Q-slices mapped into [0, 1] by
:func:`~eqsel.rules.stage_normalization`.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .chain import OccupancyTracker, StationaryDistribution, stationary_linear
from .exceptions import PreconditionError
from .game import Policy, StochasticGame, q_stage_game, validate_game
from .policy import (
    check_interdependence,
    check_mpg_on_policies,
    evaluate_policy,
    pareto_optimal_mpe,
    pareto_optimal_policy,
    potential_maximizing_policy,
    social_maximizer_sets,
)
from .record import RunRecord, Snapshot
from .resistance import compare_sets, sse_set
from .rules import (
    LearningRule,
    LearningRuleSpec,
    kernel_matrix,
    normalize_payoffs,
    stage_normalization,
    step,
    validate_epsilon,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("exact", "sampled")
START_DISTRIBUTIONS = ("uniform", "rho")
SUPPORT_TOL = 0.05
TREND_TOL = 1e-12


def as_rule(rule, n_agents) -> LearningRule:
    if isinstance(rule, LearningRule):
        if rule.n_agents != n_agents:
            raise ValueError(
                f"rule built for {rule.n_agents} agents, game has {n_agents}"
            )
        return rule
    if isinstance(rule, str):
        rule = LearningRuleSpec(rule=rule)
    return rule.build(n_agents)


def cell_payoffs(game, rule, Q, h, s, bounds=None):
    """Normal-form game the actor at ``(h, s)`` plays against"""
    nfg = q_stage_game(Q, game.codec, h, s)
    if rule.needs_normalized_payoffs:
        lo, hi = bounds if bounds is not None else stage_normalization(game, h)
        nfg = normalize_payoffs(nfg, lo, hi)
    return nfg


def cell_streams(seed, horizon, n_states):
    """One generator per ``(h, s)`` cell in row order plus a trajectory
    stream"""
    seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(horizon * n_states + 1)]


def _check_game(game):
    report = validate_game(game)
    if not report.ok:
        first = report.issues[0]
        raise ValueError(
            f"invalid game: {len(report)} issue(s), first at {first.field}"
            f"{list(first.coords)}: {first.message}"
        )


class _Run:
    """Mutable state shared by both algorithms"""

    def __init__(self, game, rule, eps, iterations, seed, stride, window,
                 algorithm):
        _check_game(game)
        self.game = game
        self.rule = as_rule(rule, game.n_agents)
        self.eps = validate_epsilon(eps)
        self.T = int(iterations)
        if self.T < 0:
            raise ValueError(f"iterations must be nonnegative, got {self.T}")
        self.stride = int(stride)
        if self.stride < 1:
            raise ValueError(f"stride must be at least 1, got {self.stride}")
        if not 0.0 < float(window) <= 1.0:
            raise ValueError(f"window must lie in (0, 1], got {window}")
        H, S, M = game.horizon, game.n_states, game.n_joint
        self.bounds = [stage_normalization(game, h) for h in range(H)]
        self.streams = cell_streams(seed, H, S)
        self.Q = np.array(game.rewards, dtype=float)
        self.V = np.zeros((game.n_agents, H + 1, S))
        self.counts = np.zeros((H, S, M), dtype=np.int64)
        self.window_start = int(np.floor(self.T * (1.0 - float(window))))
        self.cells = [[None] * S for _ in range(H)]
        for h in range(H):
            for s in range(S):
                a0 = int(self.streams[h * S + s].integers(M))
                self.cells[h][s] = self.rule.initial_cell(
                    self.payoffs(h, s), a0
                )
        self.record = RunRecord(
            {
                "game": game.name,
                "states": tuple(game.states),
                "action_counts": tuple(game.action_counts),
                "horizon": H,
                "rule": self.rule.name,
                "eps": self.eps,
                "algorithm": algorithm,
                "seed": None if seed is None else int(seed),
                "iterations": self.T,
                "stride": self.stride,
                "window": float(window),
            },
            trackers={
                (h, s): OccupancyTracker(M) for h in range(H) for s in range(S)
            },
        )

    def payoffs(self, h, s):
        return cell_payoffs(self.game, self.rule, self.Q, h, s, self.bounds[h])

    def actor(self, h, s):
        old = self.cells[h][s].action
        self.cells[h][s] = step(
            self.rule,
            self.cells[h][s],
            self.payoffs(h, s),
            self.eps,
            self.streams[h * self.game.n_states + s],
        )
        return old

    def critic_value(self, t, h, s, old):
        self.V[:, h, s] = (t * self.V[:, h, s] + self.Q[:, h, s, old]) / (t + 1)

    def observe(self, t):
        """Book-keeping after iteration ``t`` produced ``a^{t+1}``"""
        for h, row in enumerate(self.cells):
            for s, cell in enumerate(row):
                self.counts[h, s, cell.action] += 1
                if t >= self.window_start:
                    self.record.trackers[(h, s)].track(cell.action)

    def snapshot(self, t, visits=None):
        H, S = self.game.horizon, self.game.n_states
        actions = np.array(
            [[self.cells[h][s].action for s in range(S)] for h in range(H)]
        )
        hidden = np.empty((H, S), dtype=object)
        for h in range(H):
            for s in range(S):
                hidden[h, s] = self.rule.describe_hidden(
                    self.cells[h][s].hidden
                )
        self.record.snapshots.append(
            Snapshot(
                t,
                actions,
                hidden,
                self.Q.copy(),
                self.V.copy(),
                self.counts.copy(),
                None if visits is None else visits.copy(),
            )
        )

    def due(self, t):
        return t % self.stride == 0 or t == self.T


def run_algorithm1(
    game: StochasticGame,
    rule,
    eps: float,
    iterations: int,
    seed=None,
    stride: int = 1,
    window: float = 0.5,
) -> RunRecord:
    """Actor-critic run with the exact critic.

    Per iteration and stage ``h = H-1, ..., 0``: every cell's actor steps
    against ``Q_h(s, .)``; ``V_h(s)`` absorbs ``Q_h(s, a^t_h(s))`` into its
    running average; then ``Q_h = r_h + P_h V_{h+1}``.

    Parameters
    ----------
    rule : LearningRule, LearningRuleSpec or str
    eps : float
        mistake rate in (0, 1)
    iterations : int
    seed : int (optional)
    stride : int
        snapshot every ``stride`` iterations (and at the end)
    window : float
        fraction of final iterations feeding the occupancy trackers

    Raises
    ------
    ValueError
        invalid game or arguments
    NonErgodicError
        ``eps`` outside (0, 1)
    """
    run = _Run(game, rule, eps, iterations, seed, stride, window, "exact")
    H, S = game.horizon, game.n_states
    P = game.transitions
    run.snapshot(0)
    logger.info(
        f"algorithm 1 on {game.name or 'game'} with {run.rule.name}, "
        f"eps={run.eps:g}, T={run.T}"
    )
    for t in range(run.T):
        for h in range(H - 1, -1, -1):
            for s in range(S):
                old = run.actor(h, s)
                run.critic_value(t, h, s, old)
            run.Q[:, h] = game.rewards[:, h] + np.einsum(
                "sat,it->isa", P[h], run.V[:, h + 1]
            )
        run.observe(t)
        if run.due(t + 1):
            run.snapshot(t + 1)
    logger.info(f"algorithm 1 finished after {run.T} iterations")
    return run.record


def run_algorithm2(
    game: StochasticGame,
    rule,
    eps: float,
    iterations: int,
    seed=None,
    stride: int = 1,
    window: float = 0.5,
    start_distribution: str = "uniform",
) -> RunRecord:
    """Actor-critic run with a sample-based critic.

    Per iteration all actors step first. The critic value update is the
    same as in :func:`run_algorithm1`. One trajectory is then drawn, the
    start state uniformly over ``S`` (or from ``rho``), following the new
    actions; at each visited ``(h, s, a)`` the count ``N`` increases and
    ``Q_h(s, a)`` moves by ``1/N`` towards ``r_h(s, a) + V_{h+1}(s')``.
    Transitions are used only to draw trajectories.

    A RuntimeWarning lists cells that no trajectory can reach.
    """
    if start_distribution not in START_DISTRIBUTIONS:
        raise ValueError(
            f"start_distribution must be one of {START_DISTRIBUTIONS}"
        )
    run = _Run(game, rule, eps, iterations, seed, stride, window, "sampled")
    run.record.metadata["start_distribution"] = start_distribution
    H, S, M = game.horizon, game.n_states, game.n_joint
    P, r = game.transitions, game.rewards
    start = np.full(S, 1.0 / S) if start_distribution == "uniform" else game.rho
    unreachable = _unreachable_cells(game, start)
    if unreachable:
        warnings.warn(
            f"{len(unreachable)} cell(s) can never be sampled, their "
            f"Q-values stay at the rewards: {unreachable}",
            RuntimeWarning,
        )
    N = np.zeros((H, S, M), dtype=np.int64)
    traj = run.streams[-1]
    run.snapshot(0, N)
    logger.info(
        f"algorithm 2 on {game.name or 'game'} with {run.rule.name}, "
        f"eps={run.eps:g}, T={run.T}"
    )
    for t in range(run.T):
        for h in range(H - 1, -1, -1):
            for s in range(S):
                old = run.actor(h, s)
                run.critic_value(t, h, s, old)
        s = int(traj.choice(S, p=start))
        for h in range(H):
            a = run.cells[h][s].action
            N[h, s, a] += 1
            if h < H - 1:
                nxt = int(traj.choice(S, p=P[h, s, a]))
                target = r[:, h, s, a] + run.V[:, h + 1, nxt]
            else:
                nxt = None
                target = r[:, h, s, a]
            run.Q[:, h, s, a] += (target - run.Q[:, h, s, a]) / N[h, s, a]
            s = nxt
        run.observe(t)
        if run.due(t + 1):
            run.snapshot(t + 1, N)
    logger.info(f"algorithm 2 finished after {run.T} iterations")
    return run.record


def _unreachable_cells(game, start):
    H = game.horizon
    mask = np.zeros((H, game.n_states), dtype=bool)
    mask[0] = start > 0
    for h in range(H - 1):
        mask[h + 1] = (game.transitions[h][mask[h]] > 0).any(axis=(0, 1))
    return [
        (int(h), game.states[s]) for h, s in np.argwhere(~mask)
    ]


@dataclass
class ExactSolution:
    """Stationary policy of the framework and its exact values"""

    eps: float
    policy: Policy
    Q: np.ndarray
    V: np.ndarray
    distributions: Dict[Tuple[int, int], StationaryDistribution]

    def mass(self, h, s, action) -> float:
        return float(self.policy.tables[h, s, action])


def exact_pi_eps(
    game: StochasticGame, rule, eps: float, method: str = "gth", guard=10**4
) -> ExactSolution:
    """Stationary policy ``pi^eps`` by backward recursion.

    At stage ``H-1`` each cell's policy is the joint-action marginal of the
    stationary distribution of the rule's kernel on the reward game. Going
    backwards, ``Q_h = r_h + P_h V_{h+1}`` under the later stationary
    policies and each cell's policy is the stationary marginal against its
    Q-slice, normalized for mood rules as in the simulations.

    Raises
    ------
    NonErgodicError
        a cell kernel is not ergodic, or ``eps`` is outside (0, 1)
    """
    _check_game(game)
    rule = as_rule(rule, game.n_agents)
    eps = validate_epsilon(eps)
    H, S, M, n = game.horizon, game.n_states, game.n_joint, game.n_agents
    Q = np.zeros((n, H, S, M))
    V = np.zeros((n, H + 1, S))
    tables = np.zeros((H, S, M))
    distributions = {}
    for h in range(H - 1, -1, -1):
        Q[:, h] = game.rewards[:, h] + np.einsum(
            "sat,it->isa", game.transitions[h], V[:, h + 1]
        )
        for s in range(S):
            nfg = cell_payoffs(game, rule, Q, h, s)
            kernel = kernel_matrix(rule, nfg, eps, guard)
            dist = stationary_linear(kernel, method)
            distributions[(h, s)] = dist
            marginal = dist.marginal
            tables[h, s] = marginal / marginal.sum()
        V[:, h] = np.einsum("sa,isa->is", tables[h], Q[:, h])
        logger.debug(f"stationary policy at stage {h} done")
    return ExactSolution(eps, Policy(tables), Q, V, distributions)


@dataclass
class CellSweep:
    h: int
    state: str
    masses: np.ndarray
    support: Tuple[int, ...]
    trend: Dict[int, str]
    gamma_argmin: Tuple[int, ...]
    flagged: bool

    def to_dict(self, codec):
        return {
            "h": self.h,
            "state": self.state,
            "masses": self.masses.tolist(),
            "support": [codec.format(a) for a in self.support],
            "trend": {codec.format(a): v for a, v in self.trend.items()},
            "gamma_argmin": [codec.format(a) for a in self.gamma_argmin],
            "flagged": self.flagged,
        }


@dataclass
class SweepReport:
    eps: Tuple[float, ...]
    cells: Dict[Tuple[int, int], CellSweep]
    limit_policy: Policy
    limit_Q: np.ndarray
    solutions: List[ExactSolution] = field(default_factory=list)

    @property
    def flagged(self) -> List[Tuple[int, int]]:
        return [key for key, cell in self.cells.items() if cell.flagged]

    def to_dict(self, codec):
        return {
            "eps": list(self.eps),
            "flagged": [list(k) for k in self.flagged],
            "cells": [cell.to_dict(codec) for cell in self.cells.values()],
        }


def _trend(series):
    diffs = np.diff(series)
    if np.all(diffs >= -TREND_TOL):
        return "increasing"
    if np.all(diffs <= TREND_TOL):
        return "decreasing"
    return "mixed"


def limit_estimate(solution: ExactSolution, support_tol=SUPPORT_TOL):
    """Smallest-eps policy with masses below ``support_tol`` removed"""
    tables = np.where(
        solution.policy.tables >= support_tol, solution.policy.tables, 0.0
    )
    empty = tables.sum(axis=2) == 0
    tables[empty] = solution.policy.tables[empty]
    return Policy(tables / tables.sum(axis=2, keepdims=True))


def sweep_limit_policy(
    game: StochasticGame,
    rule,
    eps_list: Sequence[float],
    support_tol: float = SUPPORT_TOL,
    method: str = "gth",
) -> SweepReport:
    """Follow ``pi^eps`` along a decreasing ``eps`` list.

    For every reachable cell the report holds the masses per ``eps``, the
    support at the smallest ``eps`` (mass at least ``support_tol``), the
    trend of each action's mass and the minimum stochastic potential set
    of the cell game built from ``Q`` of the limit estimate. A cell is
    flagged when its support is not inside that set. This is numerical
    evidence over a finite list, not a limit proof.
    """
    rule = as_rule(rule, game.n_agents)
    eps_list = tuple(sorted((float(e) for e in eps_list), reverse=True))
    if not eps_list:
        raise ValueError("eps_list must not be empty")
    solutions = [exact_pi_eps(game, rule, e, method) for e in eps_list]
    limit = limit_estimate(solutions[-1], support_tol)
    limit_Q = evaluate_policy(game, limit).Q
    cells = {}
    for h, s in np.argwhere(game.reachable()):
        h, s = int(h), int(s)
        masses = np.array([sol.policy.tables[h, s] for sol in solutions])
        support = tuple(
            int(a) for a in np.flatnonzero(masses[-1] >= support_tol)
        )
        trend = {
            a: _trend(masses[:, a]) for a in range(game.n_joint)
        }
        nfg = cell_payoffs(game, rule, limit_Q, h, s)
        argmin, _ = sse_set(rule, nfg)
        flagged = not set(support) <= set(argmin)
        cells[(h, s)] = CellSweep(
            h, game.states[s], masses, support, trend, argmin, flagged
        )
        if flagged:
            logger.warning(
                f"h={h}, state={game.states[s]}: support {support} not "
                f"inside the minimum-potential set {argmin}"
            )
    return SweepReport(eps_list, cells, limit, limit_Q, solutions)


SG_COROLLARIES = ("c3_potential_max", "c4_pareto", "c5_pareto_mpe")


@dataclass
class SGCorollaryReport:
    which: str
    basis: str
    verdict: str
    cells: Dict[Tuple[int, int], dict]
    skipped: List[Tuple[int, int]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "equal"

    def to_dict(self):
        return {
            "which": self.which,
            "basis": self.basis,
            "verdict": self.verdict,
            "cells": [
                {"h": h, "state": s, **entry}
                for (h, s), entry in self.cells.items()
            ],
            "skipped": [list(k) for k in self.skipped],
            "notes": list(self.notes),
        }


def _sg_targets(game, which, sweep):
    if which == "c3_potential_max":
        if not game.is_identical_interest():
            report = check_mpg_on_policies(
                game,
                [
                    sweep.limit_policy,
                    Policy.uniform(game.horizon, game.n_states, game.n_joint),
                ],
            )
            if not report.passed:
                raise PreconditionError(
                    "c3_potential_max requires a Markov potential game; "
                    f"worst violation {report.worst_violation:.3g} at "
                    f"{report.worst_at}"
                )
        return potential_maximizing_policy(game).maximizers
    if which == "c4_pareto":
        pareto, _ = pareto_optimal_policy(game)
        return social_maximizer_sets(game, pareto)
    mpe = pareto_optimal_mpe(game)
    actions = mpe.actions
    return {
        (h, s): (int(actions[h, s]),)
        for h in range(game.horizon)
        for s in range(game.n_states)
    }


def validate_sg_corollary(
    game: StochasticGame,
    rule,
    which: str,
    eps_list: Sequence[float],
    basis: str = "gamma",
    strict: bool = False,
    support_tol: float = SUPPORT_TOL,
    sweep: SweepReport = None,
) -> SGCorollaryReport:
    """Compare the limit support with a selection target per reachable cell.

    ``c3_potential_max`` targets the potential-maximizing policy and needs
    identical interest or a passing Markov potential check.
    ``c4_pareto`` targets the welfare maximizers under the Pareto-optimal
    continuation and ``c5_pareto_mpe`` the Pareto-optimal MPE. Both need
    interdependent Q-stage games; other cells are skipped with a
    RuntimeWarning, or raise when ``strict``.

    ``basis="gamma"`` compares the minimum stochastic potential sets,
    ``basis="support"`` the empirical support at the smallest ``eps``.

    Raises
    ------
    PreconditionError
        a precondition of ``which`` fails
    """
    if which not in SG_COROLLARIES:
        raise ValueError(
            f"unknown corollary '{which}', expected one of {SG_COROLLARIES}"
        )
    if basis not in ("gamma", "support"):
        raise ValueError(f"basis must be gamma or support, got '{basis}'")
    rule = as_rule(rule, game.n_agents)
    if sweep is None:
        sweep = sweep_limit_policy(game, rule, eps_list, support_tol)
    targets = _sg_targets(game, which, sweep)
    report = SGCorollaryReport(which, basis, "equal", {})
    codec = game.codec
    for (h, s), cell in sweep.cells.items():
        if which != "c3_potential_max":
            check = check_interdependence(
                q_stage_game(sweep.limit_Q, codec, h, s)
            )
            if not check.holds:
                note = (
                    f"{which}: Q-stage game at h={h}, "
                    f"state={game.states[s]} is not interdependent"
                )
                if strict:
                    raise PreconditionError(note)
                warnings.warn(note + "; skipped", RuntimeWarning)
                report.skipped.append((h, s))
                report.notes.append(note)
                continue
        observed = cell.gamma_argmin if basis == "gamma" else cell.support
        target = targets[(h, s)]
        verdict = compare_sets(observed, target)
        report.cells[(h, s)] = {
            "observed": [codec.format(a) for a in observed],
            "target": [codec.format(a) for a in target],
            "verdict": verdict,
        }
        if verdict != "equal":
            report.verdict = "mismatch"
    if not report.cells:
        report.verdict = "mismatch"
        report.notes.append("no cell could be compared")
    logger.info(f"{which} ({basis}) with {rule.name}: {report.verdict}")
    return report
