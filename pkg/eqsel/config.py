"""
Configuration documents
=======================

Games and experiments are described by YAML documents validated with
pydantic. Validation errors carry the field path of the offending entry.

A game document lists the nonzero rewards and, for every ``(stage, state,
action)``, the next-state distribution::

    name: coordination
    n_agents: 2
    horizon: 1
    states: [s]
    action_counts: [2, 2]
    rewards:
      - {agent: 0, stage: 0, state: s, action: [1, 1], value: 1.0}
    transitions:
      - {stage: 0, state: s, action: [0, 0], next: {s: 1.0}}
      ...
    rho: {s: 1.0}

Stages are 0-based. Omitted rewards are 0; omitted transition rows are an
error.
"""

import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .game import StochasticGame
from .games import BUILTIN_GAMES, builtin_game
from .rules import LearningRuleSpec
from .utils import ActionCodec

logger = logging.getLogger(__name__)


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def from_yaml(cls, path):
        with open(path, "r") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path} does not hold a YAML mapping")
        return cls.model_validate(data)

    def to_yaml(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(
                self.model_dump(mode="json", exclude_none=True),
                fh,
                default_flow_style=None,
                sort_keys=False,
            )


class RewardEntry(_Document):
    agent: int = Field(ge=0)
    stage: int = Field(ge=0)
    state: str
    action: List[int]
    value: float


class TransitionEntry(_Document):
    stage: int = Field(ge=0)
    state: str
    action: List[int]
    next: Dict[str, float]


class GameConfig(_Document):
    """Document form of a :class:`~eqsel.game.StochasticGame`"""

    name: str = ""
    description: str = ""
    tags: List[str] = Field(default_factory=list)
    n_agents: int = Field(ge=1)
    horizon: int = Field(ge=1)
    states: List[str] = Field(min_length=1)
    action_counts: List[int]
    rewards: List[RewardEntry] = Field(default_factory=list)
    transitions: List[TransitionEntry]
    rho: Dict[str, float]
    allow_unnormalized: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.action_counts) != self.n_agents:
            raise ValueError(
                f"action_counts has {len(self.action_counts)} entries for "
                f"{self.n_agents} agents"
            )
        if any(m < 1 for m in self.action_counts):
            raise ValueError("action_counts must be positive")
        if len(set(self.states)) != len(self.states):
            raise ValueError("states must be unique")
        known = set(self.states)

        def check(where, state, action, stage):
            if state not in known:
                raise ValueError(f"{where}.state: unknown state '{state}'")
            if not 0 <= stage < self.horizon:
                raise ValueError(
                    f"{where}.stage: {stage} outside [0, {self.horizon})"
                )
            if len(action) != self.n_agents or any(
                not 0 <= a < m for a, m in zip(action, self.action_counts)
            ):
                raise ValueError(
                    f"{where}.action: {action} does not fit action_counts "
                    f"{self.action_counts}"
                )

        for k, entry in enumerate(self.rewards):
            check(f"rewards[{k}]", entry.state, entry.action, entry.stage)
            if entry.agent >= self.n_agents:
                raise ValueError(
                    f"rewards[{k}].agent: {entry.agent} outside "
                    f"[0, {self.n_agents})"
                )
        seen = set()
        for k, entry in enumerate(self.transitions):
            check(f"transitions[{k}]", entry.state, entry.action, entry.stage)
            for target in entry.next:
                if target not in known:
                    raise ValueError(
                        f"transitions[{k}].next: unknown state '{target}'"
                    )
            key = (entry.stage, entry.state, tuple(entry.action))
            if key in seen:
                raise ValueError(f"transitions[{k}]: duplicate row {key}")
            seen.add(key)
        expected = (
            self.horizon * len(self.states) * int(np.prod(self.action_counts))
        )
        if len(seen) != expected:
            raise ValueError(
                f"transitions: {len(seen)} rows given, every one of the "
                f"{expected} (stage, state, action) rows is required"
            )
        for state in self.rho:
            if state not in known:
                raise ValueError(f"rho: unknown state '{state}'")
        return self

    def to_game(self) -> StochasticGame:
        codec = ActionCodec(self.action_counts)
        index = {name: k for k, name in enumerate(self.states)}
        H, S, M = self.horizon, len(self.states), codec.n_joint
        rewards = np.zeros((self.n_agents, H, S, M))
        for e in self.rewards:
            rewards[e.agent, e.stage, index[e.state], codec.encode(e.action)] = (
                e.value
            )
        P = np.zeros((H, S, M, S))
        for e in self.transitions:
            row = P[e.stage, index[e.state], codec.encode(e.action)]
            for target, prob in e.next.items():
                row[index[target]] = prob
        rho = np.zeros(S)
        for state, prob in self.rho.items():
            rho[index[state]] = prob
        return StochasticGame(
            self.action_counts,
            H,
            self.states,
            rewards,
            P,
            rho,
            allow_unnormalized=self.allow_unnormalized,
            name=self.name,
        )

    @classmethod
    def from_game(cls, game: StochasticGame, description="", tags=()):
        codec = game.codec
        states = list(game.states)
        rewards = [
            RewardEntry(
                agent=int(i),
                stage=int(h),
                state=states[s],
                action=list(codec.decode(a)),
                value=float(game.rewards[i, h, s, a]),
            )
            for i, h, s, a in np.argwhere(game.rewards != 0)
        ]
        transitions = []
        for h in range(game.horizon):
            for s in range(game.n_states):
                for a in range(game.n_joint):
                    row = game.transitions[h, s, a]
                    transitions.append(
                        TransitionEntry(
                            stage=h,
                            state=states[s],
                            action=list(codec.decode(a)),
                            next={
                                states[t]: float(row[t])
                                for t in np.flatnonzero(row)
                            },
                        )
                    )
        return cls(
            name=game.name,
            description=description,
            tags=list(tags),
            n_agents=game.n_agents,
            horizon=game.horizon,
            states=states,
            action_counts=list(game.action_counts),
            rewards=rewards,
            transitions=transitions,
            rho={
                states[s]: float(game.rho[s])
                for s in np.flatnonzero(game.rho)
            },
            allow_unnormalized=game.allow_unnormalized,
        )


def load_game(spec: str, base_dir=None) -> StochasticGame:
    """Resolve a built-in name, a bundled game document or a YAML path.

    Raises
    ------
    ValueError
        ``spec`` names nothing known
    """
    from .data import BUNDLED_GAMES, bundled_config

    if spec in BUILTIN_GAMES:
        return builtin_game(spec)
    if spec in BUNDLED_GAMES:
        return GameConfig.from_yaml(bundled_config(spec)).to_game()
    path = Path(spec)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    if not path.exists():
        raise ValueError(
            f"game '{spec}' is neither a built-in ({', '.join(BUILTIN_GAMES)})"
            " nor a readable game document"
        )
    return GameConfig.from_yaml(path).to_game()


class SeriesSpec(_Document):
    h: int = Field(ge=0)
    state: str
    action: List[int]


class FigureSpec(_Document):
    """Tracked ``(h, state, action)`` series and the band quantiles"""

    series: List[SeriesSpec] = Field(default_factory=list)
    quantiles: Tuple[float, float] = (0.2, 0.8)
    xlabel: str = "iteration"
    ylabel: str = "empirical frequency"
    title: Optional[str] = None

    @model_validator(mode="after")
    def _symmetric(self):
        lo, hi = self.quantiles
        if not 0.0 <= lo < hi <= 1.0 or abs(lo + hi - 1.0) > 1e-12:
            raise ValueError(
                f"quantiles must be a symmetric pair in [0, 1], got "
                f"{self.quantiles}"
            )
        return self


COROLLARY_NAMES = Literal["c3_potential_max", "c4_pareto", "c5_pareto_mpe"]


class RandomBatch(_Document):
    kind: Literal["potential", "interdependent"]
    count: int = Field(ge=1)
    seed: int = 0
    action_counts: List[int] = Field(default_factory=lambda: [2, 2])
    grid: float = Field(default=0.1, gt=0)


class AnalysisSpec(_Document):
    exact_pi_eps: bool = False
    sse: bool = False
    corollaries: List[COROLLARY_NAMES] = Field(default_factory=list)
    sweep: Optional[List[float]] = None
    support_tol: float = Field(default=0.05, gt=0, lt=1)
    basis: Literal["gamma", "support"] = "gamma"
    random_batch: Optional[RandomBatch] = None


class ExperimentConfig(_Document):
    """Experiment document consumed by ``eqsel run`` and ``eqsel analyze``"""

    name: str
    description: str = ""
    game: str
    rule: LearningRuleSpec
    epsilon: Union[float, List[float]]
    iterations: int = Field(default=1000, ge=0)
    algorithm: Literal["exact", "sampled"] = "exact"
    n_runs: int = Field(default=1, ge=1)
    seed: Optional[int] = 0
    seeds: Optional[List[int]] = None
    stride: int = Field(default=1, ge=1)
    window: float = Field(default=0.5, gt=0, le=1)
    start_distribution: Literal["uniform", "rho"] = "uniform"
    outputs: List[Literal["csv", "svg", "zarr", "summary"]] = Field(
        default_factory=lambda: ["csv", "summary"]
    )
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    figure: FigureSpec = Field(default_factory=FigureSpec)

    @model_validator(mode="after")
    def _seeds(self):
        if self.seeds is not None and len(self.seeds) != self.n_runs:
            raise ValueError(
                f"seeds lists {len(self.seeds)} values for n_runs="
                f"{self.n_runs}"
            )
        for eps in self.eps_list:
            if not 0.0 < eps < 1.0:
                raise ValueError(
                    f"epsilon {eps} is not a mistake rate in (0, 1); the "
                    "perturbed dynamics are ergodic only for 0 < eps < 1 "
                    "(Assumption 1)"
                )
        return self

    @property
    def eps_list(self) -> List[float]:
        if isinstance(self.epsilon, list):
            return [float(e) for e in self.epsilon]
        return [float(self.epsilon)]

    def run_seeds(self) -> List[int]:
        """Explicit ``seeds`` or ``n_runs`` seeds derived from ``seed``"""
        if self.seeds is not None:
            return list(self.seeds)
        children = np.random.SeedSequence(self.seed).spawn(self.n_runs)
        return [int(child.generate_state(1)[0]) for child in children]

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with the non-None ``overrides`` applied and re-validated"""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "rule":
                data["rule"] = {"rule": value}
            else:
                data[key] = value
        reseeded = any(
            overrides.get(key) is not None for key in ("seed", "n_runs")
        )
        if reseeded and self.seeds is not None:
            data["seeds"] = None
        return type(self).model_validate(data)
