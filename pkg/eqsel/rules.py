"""
Perturbed learning rules
========================

A learning rule is a Markov kernel ``K^eps`` over learner cells
``(a, xi)``: a joint action plus the rule's hidden variables. Each rule
enumerates, for one cell and one payoff profile, every possible successor
together with its probability written as a product of *terms*:

* :class:`PowerTerm` ``coef * eps**e`` with resistance ``e``
* :class:`ComplementTerm` ``coef * (1 - eps**e)`` with resistance 0
* :class:`NormalizerTerm` ``1 / sum_b eps**e_b`` with resistance
  ``-min(e_b)``

The same enumeration drives :func:`step`, :func:`kernel_matrix` and
:func:`analytic_resistance`, so sampling, exact kernels and resistances
never disagree.

Three rules are provided:

:class:`LogLinearRule`
    one uniformly chosen agent revises with probabilities proportional to
    ``eps**(max_b r_i(b, a_-i) - r_i(a'))``
:class:`MardenRule`
    content/discontent moods; content agents experiment with probability
    ``eps**c``
:class:`PradelskiYoungRule`
    moods ``C, C+, C-, D`` with benchmark actions and payoffs; payoffs are
    kept as integers on ``payoff_grid`` so the hidden space is finite

Mood rules require payoffs in [0, 1]; use :func:`normalize_payoffs`.
"""

import abc
import itertools
import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.sparse.csgraph import connected_components

from .chain import is_ergodic
from .exceptions import GuardExceededError, NonErgodicError
from .game import NormalFormGame, StochasticGame
from .utils import ActionCodec

logger = logging.getLogger(__name__)

RULES = ("log_linear", "marden_mood", "pradelski_young")
PAYOFF_TOL = 1e-9
DENSE_LIMIT = 2048
NODE_GUARD = 10**4


def validate_epsilon(eps: float) -> float:
    """Return ``eps`` as a float if it is a mistake rate in (0, 1).

    Raises
    ------
    NonErgodicError
        ``eps`` outside the open interval (0, 1)
    """
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise NonErgodicError(
            f"epsilon must be a mistake rate in (0, 1) for the perturbed "
            f"dynamics to be ergodic (Assumption 1), got {eps}"
        )
    return eps


class Mood(IntEnum):
    C = 0
    C_PLUS = 1
    C_MINUS = 2
    D = 3

    @property
    def label(self):
        return {0: "C", 1: "C+", 2: "C-", 3: "D"}[int(self)]


@dataclass(frozen=True, order=True)
class LearnerCell:
    """Joint action index plus the rule's hidden variables"""

    action: int
    hidden: tuple = ()


@dataclass(frozen=True)
class PowerTerm:
    coef: float
    exponent: float

    def value(self, eps):
        return self.coef * eps**self.exponent

    @property
    def resistance(self):
        return self.exponent


@dataclass(frozen=True)
class ComplementTerm:
    coef: float
    exponent: float

    def value(self, eps):
        return self.coef * (1.0 - eps**self.exponent)

    @property
    def resistance(self):
        return 0.0


@dataclass(frozen=True)
class NormalizerTerm:
    exponents: tuple

    def value(self, eps):
        return 1.0 / sum(eps**e for e in self.exponents)

    @property
    def resistance(self):
        return -min(self.exponents)


@dataclass(frozen=True)
class Transition:
    target: LearnerCell
    terms: tuple

    def probability(self, eps):
        return math.prod(term.value(eps) for term in self.terms)

    @property
    def resistance(self):
        return float(sum(term.resistance for term in self.terms))


def _complement(coef, exponent):
    """Complement term, or None when it vanishes identically"""
    if exponent <= 0:
        return None
    return ComplementTerm(coef, exponent)


def normalize_payoffs(nfg: NormalFormGame, lo, hi) -> NormalFormGame:
    """Affine map of every payoff from ``[lo, hi]`` into ``[0, 1]``.

    Raises
    ------
    ValueError
        ``hi <= lo``
    """
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ValueError(f"normalization range needs hi > lo, got [{lo}, {hi}]")
    if lo == 0.0 and hi == 1.0:
        return nfg
    scaled = (nfg.payoffs - lo) / (hi - lo)
    outside = (scaled < -1e-12) | (scaled > 1.0 + 1e-12)
    if outside.any():
        warnings.warn(
            f"{int(outside.sum())} payoff(s) fall outside [{lo}, {hi}] and "
            "were clipped",
            RuntimeWarning,
        )
    scaled = np.clip(scaled, 0.0, 1.0)
    return NormalFormGame(nfg.action_counts, scaled, codec=nfg.codec)


def stage_normalization(game: StochasticGame, h: int) -> Tuple[float, float]:
    """Range ``(lo, hi)`` covering every stage-``h`` Q-value of ``game``"""
    h = game.check_stage(h)
    r_min, r_max = game.reward_range()
    remaining = game.horizon - h
    return remaining * min(r_min, 0.0), remaining * max(r_max, 1.0)


class LearningRule(abc.ABC):
    """Perturbed learning rule for ``n_agents`` agents.

    Subclasses implement :meth:`transitions`, which lists every successor
    of a cell with its probability terms, plus the canonical starting cell
    and a text form of the hidden variables.
    """

    name = None
    needs_normalized_payoffs = False

    def __init__(self, n_agents: int):
        self.n_agents = int(n_agents)

    @abc.abstractmethod
    def transitions(
        self, cell: LearnerCell, payoffs: NormalFormGame
    ) -> List[Transition]:
        """Every successor of ``cell`` with nonzero probability for eps in
        (0, 1)"""

    @abc.abstractmethod
    def initial_cell(self, payoffs: NormalFormGame, action: int = 0):
        """Cell playing joint ``action`` with all agents content"""

    @abc.abstractmethod
    def describe_hidden(self, hidden: tuple) -> str:
        """Text form of the hidden variables for CSV output"""

    def check_payoffs(self, payoffs: NormalFormGame):
        if payoffs.n_agents != self.n_agents:
            raise ValueError(
                f"{self.name} rule built for {self.n_agents} agents got a "
                f"game with {payoffs.n_agents}"
            )
        if self.needs_normalized_payoffs:
            p = payoffs.payoffs
            if p.min() < -PAYOFF_TOL or p.max() > 1.0 + PAYOFF_TOL:
                raise ValueError(
                    f"{self.name} rule needs payoffs in [0, 1], got range "
                    f"[{p.min()}, {p.max()}]; use normalize_payoffs"
                )

    def merged(self, cell, payoffs) -> Dict[LearnerCell, List[Transition]]:
        """Transitions grouped by target cell"""
        out = {}
        for tr in self.transitions(cell, payoffs):
            out.setdefault(tr.target, []).append(tr)
        return out

    def __repr__(self):
        return f"{type(self).__name__}(n_agents={self.n_agents})"


class LogLinearRule(LearningRule):
    """Log-linear learning.

    One agent, chosen uniformly, revises its action and picks ``b`` with
    probability ``eps**(max - r_i(b, a_-i)) / sum_b' eps**(max - r_i(b',
    a_-i))``. There are no hidden variables.
    """

    name = "log_linear"

    def transitions(self, cell, payoffs):
        codec = payoffs.codec
        out = []
        for i in range(self.n_agents):
            dev = codec.deviation_table[i][cell.action]
            r = payoffs.payoffs[i, dev]
            exps = r.max() - r
            norm = NormalizerTerm(tuple(float(e) for e in exps))
            for b, joint in enumerate(dev):
                out.append(
                    Transition(
                        LearnerCell(int(joint)),
                        (PowerTerm(1.0 / self.n_agents, float(exps[b])), norm),
                    )
                )
        return out

    def initial_cell(self, payoffs, action=0):
        return LearnerCell(int(action))

    def describe_hidden(self, hidden):
        return ""


class MardenRule(LearningRule):
    """Mood-based rule with content (C) and discontent (D) agents.

    A discontent agent picks an action uniformly. A content agent repeats
    its action with probability ``1 - eps**c`` and otherwise moves to one
    of its other actions uniformly. After the joint action is played, an
    agent that was content and saw no change stays content; every other
    agent becomes content with probability ``eps**(1 - r_i)``.
    """

    name = "marden_mood"
    needs_normalized_payoffs = True

    def __init__(self, n_agents, c: float = None):
        super().__init__(n_agents)
        self.c = float(self.n_agents if c is None else c)

    def _action_options(self, mood, own, m):
        if mood == Mood.D:
            return [(b, (PowerTerm(1.0 / m, 0.0),)) for b in range(m)]
        if m == 1:
            return [(own, ())]
        options = [(own, (ComplementTerm(1.0, self.c),))]
        for b in range(m):
            if b != own:
                options.append((b, (PowerTerm(1.0 / (m - 1), self.c),)))
        return options

    def transitions(self, cell, payoffs):
        codec = payoffs.codec
        current = codec.table[cell.action]
        per_agent = [
            self._action_options(cell.hidden[i], int(current[i]), m)
            for i, m in enumerate(codec.action_counts)
        ]
        out = []
        for combo in itertools.product(*per_agent):
            joint = int(np.ravel_multi_index([b for b, _ in combo],
                                             codec.action_counts))
            action_terms = tuple(t for _, terms in combo for t in terms)
            mood_options = []
            for i in range(self.n_agents):
                if cell.hidden[i] == Mood.C and joint == cell.action:
                    mood_options.append([(Mood.C, ())])
                    continue
                e = max(0.0, 1.0 - float(payoffs.payoffs[i, joint]))
                opts = [(Mood.C, (PowerTerm(1.0, e),))]
                comp = _complement(1.0, e)
                if comp is not None:
                    opts.append((Mood.D, (comp,)))
                mood_options.append(opts)
            for moods in itertools.product(*mood_options):
                hidden = tuple(mood for mood, _ in moods)
                terms = action_terms + tuple(
                    t for _, ts in moods for t in ts
                )
                out.append(Transition(LearnerCell(joint, hidden), terms))
        return out

    def initial_cell(self, payoffs, action=0):
        return LearnerCell(int(action), (Mood.C,) * self.n_agents)

    def describe_hidden(self, hidden):
        return ",".join(Mood(m).label for m in hidden)

    def __repr__(self):
        return f"MardenRule(n_agents={self.n_agents}, c={self.c})"


class PradelskiYoungRule(LearningRule):
    """Mood-based rule with benchmark actions and payoffs.

    Each agent carries ``(mood, benchmark_action, benchmark_units)`` where
    the benchmark payoff is ``benchmark_units * payoff_grid``.

    * ``C`` plays its benchmark with probability ``1 - eps`` and otherwise
      experiments uniformly over its other actions. An experiment that pays
      more than the benchmark is adopted with probability ``eps**G(gain)``.
      Without an experiment a payoff change turns the agent ``C+`` or
      ``C-``.
    * ``C-`` and ``C+`` replay the benchmark; a payoff drop moves ``C-`` to
      ``D`` and ``C+`` to ``C-``, a rise moves ``C-`` to ``C+`` and lets
      ``C+`` adopt the new payoff; no change returns to ``C``.
    * ``D`` plays uniformly and becomes content with the realized action
      and payoff with probability ``eps**F(r)``.

    ``F(x) = -phi1 * x + phi2`` and ``G(x) = -gamma1 * x + gamma2``.
    ``literal_case_order`` swaps the experimenting and non-experimenting
    branches of the content case.
    """

    name = "pradelski_young"
    needs_normalized_payoffs = True

    def __init__(
        self,
        n_agents,
        phi1=None,
        phi2=None,
        gamma1=0.125,
        gamma2=0.25,
        payoff_grid=1e-6,
        literal_case_order=False,
    ):
        super().__init__(n_agents)
        n = self.n_agents
        self.phi1 = n / 8 if phi1 is None else float(phi1)
        self.phi2 = n / 4 if phi2 is None else float(phi2)
        self.gamma1 = float(gamma1)
        self.gamma2 = float(gamma2)
        self.payoff_grid = float(payoff_grid)
        self.literal_case_order = bool(literal_case_order)

    def F(self, x):
        return -self.phi1 * x + self.phi2

    def G(self, x):
        return -self.gamma1 * x + self.gamma2

    def quantize(self, payoff) -> int:
        return int(round(float(payoff) / self.payoff_grid))

    def _adopt(self, units, bench, own_action, new_action):
        """Content agent that may lock in a higher payoff"""
        gain = (units - bench) * self.payoff_grid
        e = self.G(gain)
        stay = (Mood.C, own_action, bench)
        return [
            ((Mood.C, new_action, units), (PowerTerm(1.0, e),)),
            (stay, (ComplementTerm(1.0, e),)),
        ]

    def _shift(self, units, bench, own_action):
        """Content agent that notices a payoff change"""
        if units > bench:
            return [((Mood.C_PLUS, own_action, bench), ())]
        if units < bench:
            return [((Mood.C_MINUS, own_action, bench), ())]
        return [((Mood.C, own_action, bench), ())]

    def _content(self, experimenting, played, units, bench, own_action):
        adopt_branch = experimenting != self.literal_case_order
        if adopt_branch:
            if units > bench:
                return self._adopt(units, bench, own_action, played)
            return [((Mood.C, own_action, bench), ())]
        return self._shift(units, bench, own_action)

    def _mood_options(self, state, experimenting, played, units):
        mood, own, bench = state
        if mood == Mood.C:
            return self._content(experimenting, played, units, bench, own)
        if mood == Mood.C_MINUS:
            if units < bench:
                return [((Mood.D, own, bench), ())]
            if units > bench:
                return [((Mood.C_PLUS, own, bench), ())]
            return [((Mood.C, own, bench), ())]
        if mood == Mood.C_PLUS:
            if units < bench:
                return [((Mood.C_MINUS, own, bench), ())]
            if units > bench:
                return [((Mood.C, own, units), ())]
            return [((Mood.C, own, bench), ())]
        e = self.F(units * self.payoff_grid)
        options = [((Mood.C, played, units), (PowerTerm(1.0, e),))]
        comp = _complement(1.0, e)
        if comp is not None:
            options.append(((Mood.D, own, bench), (comp,)))
        return options

    def _action_options(self, state, m):
        mood, own, _ = state
        if mood == Mood.D:
            return [(b, (PowerTerm(1.0 / m, 0.0),), False) for b in range(m)]
        if mood != Mood.C or m == 1:
            return [(own, (), False)]
        options = [(own, (ComplementTerm(1.0, 1.0),), False)]
        for b in range(m):
            if b != own:
                options.append((b, (PowerTerm(1.0 / (m - 1), 1.0),), True))
        return options

    def transitions(self, cell, payoffs):
        codec = payoffs.codec
        per_agent = [
            self._action_options(cell.hidden[i], m)
            for i, m in enumerate(codec.action_counts)
        ]
        out = []
        for combo in itertools.product(*per_agent):
            played = [b for b, _, _ in combo]
            joint = int(np.ravel_multi_index(played, codec.action_counts))
            action_terms = tuple(t for _, terms, _ in combo for t in terms)
            mood_options = [
                self._mood_options(
                    cell.hidden[i],
                    combo[i][2],
                    played[i],
                    self.quantize(payoffs.payoffs[i, joint]),
                )
                for i in range(self.n_agents)
            ]
            for moods in itertools.product(*mood_options):
                hidden = tuple(
                    (Mood(s[0]), int(s[1]), int(s[2])) for s, _ in moods
                )
                terms = action_terms + tuple(
                    t for _, ts in moods for t in ts
                )
                out.append(Transition(LearnerCell(joint, hidden), terms))
        return out

    def initial_cell(self, payoffs, action=0):
        actions = payoffs.codec.decode(action)
        hidden = tuple(
            (Mood.C, actions[i], self.quantize(payoffs.payoffs[i, action]))
            for i in range(self.n_agents)
        )
        return LearnerCell(int(action), hidden)

    def describe_hidden(self, hidden):
        return ";".join(
            f"{Mood(m).label}({b},{u * self.payoff_grid:g})"
            for m, b, u in hidden
        )

    def __repr__(self):
        return (
            f"PradelskiYoungRule(n_agents={self.n_agents}, "
            f"phi=({self.phi1}, {self.phi2}), "
            f"gamma=({self.gamma1}, {self.gamma2}))"
        )


class LearningRuleSpec(BaseModel):
    """Rule name and parameters as they appear in config documents.

    Parameters left as ``None`` take their agent-count dependent defaults
    when :meth:`build` is called.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    rule: Literal["log_linear", "marden_mood", "pradelski_young"]
    c: Optional[float] = None
    phi1: Optional[float] = None
    phi2: Optional[float] = None
    gamma1: float = 0.125
    gamma2: float = 0.25
    payoff_grid: float = 1e-6
    literal_case_order: bool = False

    @model_validator(mode="after")
    def _positive(self):
        for key in ("c", "phi1", "phi2", "gamma1", "gamma2", "payoff_grid"):
            value = getattr(self, key)
            if value is not None and not value > 0:
                raise ValueError(f"{key} must be positive, got {value}")
        return self

    def build(self, n_agents: int) -> LearningRule:
        """Instantiate the rule, checking the agent-count dependent bounds.

        Raises
        ------
        ValueError
            ``c < n`` for the Marden rule, or ``F`` / ``G`` leave their
            admissible bands for the Pradelski-Young rule
        """
        n = int(n_agents)
        if self.rule == "log_linear":
            return LogLinearRule(n)
        if self.rule == "marden_mood":
            c = n if self.c is None else self.c
            if c < n:
                raise ValueError(
                    f"experimentation exponent c={c} must be at least the "
                    f"number of agents {n}"
                )
            return MardenRule(n, c)
        rule = PradelskiYoungRule(
            n,
            self.phi1,
            self.phi2,
            self.gamma1,
            self.gamma2,
            self.payoff_grid,
            self.literal_case_order,
        )
        f_ends = (rule.F(0.0), rule.F(1.0))
        if not all(0.0 < v < n / 2 for v in f_ends):
            raise ValueError(
                f"F must stay in (0, {n / 2}) on [0, 1], got endpoints "
                f"{f_ends}"
            )
        g_ends = (rule.G(-1.0), rule.G(1.0))
        if not all(0.0 < v < 0.5 for v in g_ends):
            raise ValueError(
                f"G must stay in (0, 0.5) on [-1, 1], got endpoints {g_ends}"
            )
        return rule


def step(
    rule: LearningRule,
    cell: LearnerCell,
    payoffs: NormalFormGame,
    eps: float,
    rng=None,
) -> LearnerCell:
    """Draw one successor of ``cell`` from ``K^eps``.

    ``rng`` is a seed or a :class:`numpy.random.Generator`; exactly one
    uniform is consumed per call.
    """
    eps = validate_epsilon(eps)
    rule.check_payoffs(payoffs)
    rng = np.random.default_rng(rng)
    options = rule.transitions(cell, payoffs)
    probs = np.array([tr.probability(eps) for tr in options])
    cum = np.cumsum(probs)
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return options[min(k, len(options) - 1)].target


def analytic_resistance(
    rule: LearningRule,
    payoffs: NormalFormGame,
    source: LearnerCell,
    target: LearnerCell,
) -> float:
    """Exponent ``R`` with ``K^eps(source -> target) ~ eps**R``.

    ``inf`` when the transition is impossible.
    """
    found = rule.merged(source, payoffs).get(target)
    if not found:
        return math.inf
    return min(tr.resistance for tr in found)


@dataclass(frozen=True)
class StateSpace:
    """Sorted learner cells a kernel is defined over.

    ``closed`` is False when the reachable set holds several closed classes
    and the whole reachable set is kept.
    """

    nodes: tuple
    codec: ActionCodec
    rule: LearningRule
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {cell: k for k, cell in enumerate(self.nodes)}
        )

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def index(self, cell: LearnerCell) -> int:
        try:
            return self._index[cell]
        except KeyError:
            raise ValueError(f"{cell} is not in the state space") from None

    def __contains__(self, cell):
        return cell in self._index

    def action_tuple(self, k: int) -> str:
        return self.codec.format(self.nodes[k].action)

    def hidden_desc(self, k: int) -> str:
        return self.rule.describe_hidden(self.nodes[k].hidden)

    @property
    def actions(self) -> np.ndarray:
        return np.array([cell.action for cell in self.nodes], dtype=np.int64)


def state_space(
    rule: LearningRule, payoffs: NormalFormGame, guard: int = NODE_GUARD
) -> StateSpace:
    """Cells the kernel is built over.

    Log-linear uses every joint action. Mood rules use the closed class
    reached from :meth:`LearningRule.initial_cell`.

    Raises
    ------
    GuardExceededError
        more than ``guard`` cells
    """
    rule.check_payoffs(payoffs)
    codec = payoffs.codec
    if isinstance(rule, LogLinearRule):
        if codec.n_joint > guard:
            raise GuardExceededError(
                f"{codec.n_joint} joint actions exceed the node guard {guard}"
            )
        nodes = tuple(LearnerCell(a) for a in range(codec.n_joint))
        return StateSpace(nodes, codec, rule)

    start = rule.initial_cell(payoffs)
    seen = {start: 0}
    order = [start]
    edges = []
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        src = seen[cell]
        for target in rule.merged(cell, payoffs):
            if target not in seen:
                if len(order) >= guard:
                    raise GuardExceededError(
                        f"{rule.name} state space exceeds the node guard "
                        f"{guard}"
                    )
                seen[target] = len(order)
                order.append(target)
                queue.append(target)
            edges.append((src, seen[target]))

    n = len(order)
    src, dst = np.array(edges).T
    adj = scipy.sparse.csr_matrix(
        (np.ones(len(edges)), (src, dst)), shape=(n, n)
    )
    n_comp, labels = connected_components(adj, connection="strong")
    leaves = np.ones(n_comp, dtype=bool)
    leaves[labels[src][labels[src] != labels[dst]]] = False
    sinks = np.flatnonzero(leaves)
    if len(sinks) == 1:
        members = [order[k] for k in np.flatnonzero(labels == sinks[0])]
        closed = True
    else:
        warnings.warn(
            f"{rule.name} dynamics have {len(sinks)} closed classes; "
            "keeping every reachable cell",
            RuntimeWarning,
        )
        members = order
        closed = False
    logger.debug(f"{rule.name} state space: {len(members)} of {n} cells")
    return StateSpace(tuple(sorted(members)), codec, rule, closed)


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix over ``space``; dense or scipy CSR"""

    matrix: object
    space: StateSpace

    @property
    def is_sparse(self):
        return scipy.sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def __len__(self):
        return len(self.space)


def _edges(rule, payoffs, space, weight):
    rows, cols, vals = [], [], []
    for k, cell in enumerate(space.nodes):
        for target, group in rule.merged(cell, payoffs).items():
            if target not in space:
                continue
            rows.append(k)
            cols.append(space.index(target))
            vals.append(weight(group))
    return np.array(rows), np.array(cols), np.array(vals, dtype=float)


def kernel_matrix(
    rule: LearningRule,
    payoffs: NormalFormGame,
    eps: float,
    guard: int = NODE_GUARD,
    space: StateSpace = None,
) -> TransitionKernel:
    """Exact ``K^eps`` over the rule's state space.

    Dense up to 2048 cells, CSR above.

    Raises
    ------
    GuardExceededError
        state space larger than ``guard``
    NonErgodicError
        ``eps`` outside (0, 1)
    """
    eps = validate_epsilon(eps)
    if space is None:
        space = state_space(rule, payoffs, guard)
    elif len(space) > guard:
        raise GuardExceededError(
            f"{len(space)} cells exceed the node guard {guard}"
        )
    rows, cols, vals = _edges(
        rule,
        payoffs,
        space,
        lambda group: sum(tr.probability(eps) for tr in group),
    )
    n = len(space)
    matrix = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if n <= DENSE_LIMIT:
        matrix = matrix.toarray()
    return TransitionKernel(matrix, space)


def resistance_edges(rule, payoffs, space: StateSpace = None):
    """``(src, dst, weight)`` arrays of every finite-resistance edge"""
    rule.check_payoffs(payoffs)
    if space is None:
        space = state_space(rule, payoffs)
    src, dst, weight = _edges(
        rule,
        payoffs,
        space,
        lambda group: min(tr.resistance for tr in group),
    )
    return space, src, dst, weight


def check_ergodicity(
    rule: LearningRule,
    payoffs: NormalFormGame,
    eps: float,
    guard: int = NODE_GUARD,
) -> bool:
    """Strong connectivity and aperiodicity of the kernel support.

    ``eps = 0`` checks the support that survives in the limit (zero
    resistance edges only).
    """
    eps = float(eps)
    if eps != 0.0:
        validate_epsilon(eps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        space = state_space(rule, payoffs, guard)
    if not space.closed:
        return False
    _, src, dst, weight = resistance_edges(rule, payoffs, space)
    if eps == 0.0:
        keep = weight == 0.0
        src, dst = src[keep], dst[keep]
    n = len(space)
    adj = scipy.sparse.csr_matrix(
        (np.ones(len(src)), (src, dst)), shape=(n, n)
    )
    return is_ergodic(adj)


def simulate(
    rule: LearningRule,
    payoffs: NormalFormGame,
    eps: float,
    iterations: int,
    rng=None,
    start: LearnerCell = None,
) -> List[LearnerCell]:
    """Run the bare rule on a fixed game.

    Without ``start`` the first draw from ``rng`` picks a uniform joint
    action and all agents start content. Returns ``iterations + 1`` cells.
    """
    eps = validate_epsilon(eps)
    rng = np.random.default_rng(rng)
    if start is None:
        start = rule.initial_cell(
            payoffs, int(rng.integers(payoffs.n_joint))
        )
    path = [start]
    cell = start
    for _ in range(int(iterations)):
        cell = step(rule, cell, payoffs, eps, rng)
        path.append(cell)
    return path


def rule_from_name(name: str, n_agents: int, **params) -> LearningRule:
    if name not in RULES:
        raise ValueError(f"unknown rule '{name}', expected one of {RULES}")
    return LearningRuleSpec(rule=name, **params).build(n_agents)


def best_response_mass(
    payoffs: NormalFormGame, agent: int, joint: int, eps: float
) -> float:
    """Log-linear choice probability on the revising agent's best
    responses at ``joint``"""
    dev = payoffs.codec.deviation_table[agent][joint]
    r = payoffs.payoffs[agent, dev]
    weights = eps ** (r.max() - r)
    best = r >= r.max() - PAYOFF_TOL
    return float(weights[best].sum() / weights.sum())


__all__ = [
    "Mood",
    "LearnerCell",
    "PowerTerm",
    "ComplementTerm",
    "NormalizerTerm",
    "Transition",
    "LearningRule",
    "LogLinearRule",
    "MardenRule",
    "PradelskiYoungRule",
    "LearningRuleSpec",
    "StateSpace",
    "TransitionKernel",
    "step",
    "kernel_matrix",
    "analytic_resistance",
    "normalize_payoffs",
    "stage_normalization",
    "check_ergodicity",
    "state_space",
    "resistance_edges",
    "simulate",
    "validate_epsilon",
]
