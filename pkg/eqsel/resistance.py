"""
Resistance graphs and stochastic potentials
===========================================

The resistance of a transition is the exponent ``R`` with
``K^eps ~ eps**R``. Over the learner cells of a rule these weights form a
digraph; the *stochastic potential* of a cell is the cost of the cheapest
spanning in-tree rooted at it, and the stochastically stable actions are
those of the cells with minimum potential.

In-trees are found exactly with Edmonds' optimum branching
(:func:`networkx.minimum_spanning_arborescence`) on the reversed graph.
Impossible transitions are left out of the graph rather than given a
large finite weight, so an unreachable root reports ``gamma = inf``.

For large graphs ``mode="reduced"`` works on the recurrent classes of the
zero-resistance subgraph only; potentials of transient cells are then
reported as NaN.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd
import scipy.sparse
from scipy.sparse.csgraph import connected_components

from .exceptions import GuardExceededError, PreconditionError
from .game import NormalFormGame
from .policy import check_interdependence, verify_potential
from .rules import LearningRule, StateSpace, resistance_edges, state_space
from .utils import argmax_set, argmin_set

logger = logging.getLogger(__name__)

GAMMA_TOL = 1e-9
FULL_LIMIT = 128
BRUTE_FORCE_GUARD = 8


@dataclass(frozen=True)
class ResistanceGraph:
    """Finite-resistance edges ``src -> dst`` over ``n_nodes`` cells"""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    space: Optional[StateSpace] = None

    @classmethod
    def from_matrix(cls, weights, space=None):
        """Build from a square weight matrix; ``inf`` means no edge"""
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ValueError(
                f"weight matrix must be square, got {weights.shape}"
            )
        if np.any(weights < 0):
            raise ValueError("resistances must be nonnegative")
        src, dst = np.nonzero(np.isfinite(weights))
        return cls(weights.shape[0], src, dst, weights[src, dst], space)

    def to_networkx(self, reverse=False) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from(range(self.n_nodes))
        for u, v, w in zip(self.src, self.dst, self.weight):
            if u == v:
                continue
            if reverse:
                u, v = v, u
            G.add_edge(int(u), int(v), weight=float(w))
        return G

    def zero_subgraph(self) -> "ResistanceGraph":
        keep = self.weight == 0.0
        return ResistanceGraph(
            self.n_nodes,
            self.src[keep],
            self.dst[keep],
            self.weight[keep],
            self.space,
        )

    def matrix(self) -> np.ndarray:
        """Dense weights with ``inf`` for missing edges"""
        out = np.full((self.n_nodes, self.n_nodes), np.inf)
        out[self.src, self.dst] = self.weight
        return out

    def node_index(self, node) -> int:
        if isinstance(node, (int, np.integer)):
            if not 0 <= int(node) < self.n_nodes:
                raise ValueError(f"node {node} outside [0, {self.n_nodes})")
            return int(node)
        if self.space is None:
            raise ValueError("graph has no state space to resolve cells")
        return self.space.index(node)

    def _labels(self, k):
        if self.space is None:
            return str(k), "-"
        return (
            self.space.action_tuple(k),
            self.space.hidden_desc(k) or "-",
        )

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for u, v, w in zip(self.src, self.dst, self.weight):
            sa, sh = self._labels(u)
            da, dh = self._labels(v)
            rows.append(
                {
                    "src": int(u),
                    "dst": int(v),
                    "src_action": sa,
                    "src_hidden": sh,
                    "dst_action": da,
                    "dst_hidden": dh,
                    "weight": float(w),
                }
            )
        return pd.DataFrame(
            rows,
            columns=[
                "src",
                "dst",
                "src_action",
                "src_hidden",
                "dst_action",
                "dst_hidden",
                "weight",
            ],
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def to_edgelist(self, path):
        """Plain-text edge list, one ``src_action src_hidden dst_action
        dst_hidden weight`` line per edge"""
        frame = self.to_frame()
        with open(path, "w") as fh:
            for row in frame.itertuples(index=False):
                fh.write(
                    f"{row.src_action} {row.src_hidden} {row.dst_action} "
                    f"{row.dst_hidden} {row.weight!r}\n"
                )
        logger.info(f"wrote {len(frame)} edges to {path}")


def build_resistance_graph(
    rule: LearningRule, payoffs: NormalFormGame, guard: int = None
) -> ResistanceGraph:
    """Resistance digraph over the rule's state space.

    Raises
    ------
    GuardExceededError
        state space larger than ``guard``
    """
    kwargs = {} if guard is None else {"guard": guard}
    space = state_space(rule, payoffs, **kwargs)
    space, src, dst, weight = resistance_edges(rule, payoffs, space)
    return ResistanceGraph(len(space), src, dst, weight, space)


@dataclass(frozen=True)
class Arborescence:
    """Spanning in-tree; ``edges`` point from child to parent"""

    root: int
    edges: Tuple[Tuple[int, int], ...]
    cost: float


def min_arborescence(graph: ResistanceGraph, root) -> Arborescence:
    """Cheapest spanning in-tree rooted at ``root``.

    ``cost`` is ``inf`` and ``edges`` empty when some node cannot reach
    ``root`` through finite edges.
    """
    root = graph.node_index(root)
    if graph.n_nodes == 1:
        return Arborescence(root, (), 0.0)
    G = graph.to_networkx(reverse=True)
    G.remove_edges_from(list(G.in_edges(root)))
    try:
        tree = nx.minimum_spanning_arborescence(G, attr="weight")
    except nx.NetworkXException:
        return Arborescence(root, (), np.inf)
    edges = tuple(sorted((int(v), int(u)) for u, v in tree.edges()))
    cost = float(sum(d["weight"] for _, _, d in tree.edges(data=True)))
    return Arborescence(root, edges, cost)


def brute_force_arborescence(
    graph: ResistanceGraph, root, guard: int = BRUTE_FORCE_GUARD
) -> Arborescence:
    """Cheapest in-tree by enumerating every parent assignment.

    Raises
    ------
    GuardExceededError
        more than ``guard`` nodes
    """
    if graph.n_nodes > guard:
        raise GuardExceededError(
            f"brute-force enumeration limited to {guard} nodes, "
            f"got {graph.n_nodes}"
        )
    root = graph.node_index(root)
    W = graph.matrix()
    others = [v for v in range(graph.n_nodes) if v != root]
    parent = {}
    best = [np.inf, ()]

    def closes_cycle(v, p):
        while p in parent:
            if p == v:
                return True
            p = parent[p]
        return p == v

    def extend(k, cost):
        if cost >= best[0]:
            return
        if k == len(others):
            best[0] = cost
            best[1] = tuple(sorted(parent.items()))
            return
        v = others[k]
        for p in np.flatnonzero(np.isfinite(W[v])):
            p = int(p)
            if p == v or closes_cycle(v, p):
                continue
            parent[v] = p
            extend(k + 1, cost + W[v, p])
            del parent[v]

    extend(0, 0.0)
    if not others:
        return Arborescence(root, (), 0.0)
    return Arborescence(root, best[1], float(best[0]))


@dataclass
class StochasticPotentialTable:
    """Potentials ``gamma`` per node and the argmin set.

    ``exact[k]`` is False for transient nodes in reduced mode, whose
    ``gamma`` is NaN.
    """

    gamma: np.ndarray
    argmin: Tuple[int, ...]
    trees: Dict[int, Arborescence]
    mode: str
    classes: List[Tuple[int, ...]] = field(default_factory=list)
    exact: Optional[np.ndarray] = None
    space: Optional[StateSpace] = None

    @property
    def min_gamma(self) -> float:
        return float(np.nanmin(self.gamma))

    @property
    def argmin_actions(self) -> Tuple[int, ...]:
        if self.space is None:
            return self.argmin
        return tuple(sorted({self.space.nodes[k].action for k in self.argmin}))

    def action_gamma(self, n_joint: int) -> np.ndarray:
        """Smallest potential over hidden states for every joint action"""
        out = np.full(n_joint, np.inf)
        for k, g in enumerate(self.gamma):
            if np.isfinite(g):
                a = self.space.nodes[k].action if self.space else k
                out[a] = min(out[a], g)
        return out

    def to_frame(self) -> pd.DataFrame:
        n = len(self.gamma)
        space = self.space
        return pd.DataFrame(
            {
                "node": np.arange(n),
                "action_tuple": [
                    space.action_tuple(k) if space else str(k)
                    for k in range(n)
                ],
                "hidden_desc": [
                    space.hidden_desc(k) if space else "" for k in range(n)
                ],
                "gamma": self.gamma,
                "exact": self.exact,
                "in_argmin": np.isin(np.arange(n), self.argmin),
            }
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def recurrent_classes(graph: ResistanceGraph) -> List[Tuple[int, ...]]:
    """Closed classes of the zero-resistance subgraph"""
    zero = graph.zero_subgraph()
    n = graph.n_nodes
    adj = scipy.sparse.csr_matrix(
        (np.ones(len(zero.src)), (zero.src, zero.dst)), shape=(n, n)
    )
    n_comp, labels = connected_components(adj, connection="strong")
    leaves = np.ones(n_comp, dtype=bool)
    leaving = labels[zero.src] != labels[zero.dst]
    leaves[labels[zero.src][leaving]] = False
    return [
        tuple(int(k) for k in np.flatnonzero(labels == c))
        for c in np.flatnonzero(leaves)
    ]


def _full_potentials(graph):
    trees = {k: min_arborescence(graph, k) for k in range(graph.n_nodes)}
    gamma = np.array([trees[k].cost for k in range(graph.n_nodes)])
    return gamma, trees, np.ones(graph.n_nodes, dtype=bool)


def _reduced_potentials(graph, classes):
    G = graph.to_networkx()
    R = G.reverse(copy=True)
    n_cls = len(classes)
    costs = np.full((n_cls, n_cls), np.inf)
    for k, members in enumerate(classes):
        # distance from every node into class k
        dist = nx.multi_source_dijkstra_path_length(
            R, set(members), weight="weight"
        )
        for j, other in enumerate(classes):
            if j != k:
                costs[j, k] = min(
                    (dist[v] for v in other if v in dist), default=np.inf
                )
    class_graph = ResistanceGraph.from_matrix(
        np.where(np.eye(n_cls, dtype=bool), np.inf, costs)
    )
    gamma = np.full(graph.n_nodes, np.nan)
    exact = np.zeros(graph.n_nodes, dtype=bool)
    trees = {}
    for k, members in enumerate(classes):
        tree = min_arborescence(class_graph, k)
        trees[members[0]] = tree
        gamma[list(members)] = tree.cost
        exact[list(members)] = True
    return gamma, trees, exact


def stochastic_potentials(
    graph: ResistanceGraph, mode: str = "auto"
) -> StochasticPotentialTable:
    """Stochastic potential of every node.

    Parameters
    ----------
    mode : {"auto", "full", "reduced"}
        ``full`` runs Edmonds once per node; ``reduced`` works on the
        recurrent classes of the zero-resistance subgraph. ``auto`` picks
        ``full`` up to 128 nodes.
    """
    if mode not in ("auto", "full", "reduced"):
        raise ValueError(
            f"unknown mode '{mode}', expected auto, full or reduced"
        )
    classes = recurrent_classes(graph)
    if mode == "auto":
        mode = "full" if graph.n_nodes <= FULL_LIMIT else "reduced"
    elif mode == "full" and graph.n_nodes > FULL_LIMIT:
        warnings.warn(
            f"{graph.n_nodes} nodes exceed the full arborescence limit "
            f"{FULL_LIMIT}; using the recurrent-class graph",
            RuntimeWarning,
        )
        mode = "reduced"
    if mode == "full":
        gamma, trees, exact = _full_potentials(graph)
    else:
        gamma, trees, exact = _reduced_potentials(graph, classes)
    argmin = argmin_set(gamma, GAMMA_TOL)
    logger.debug(
        f"stochastic potentials ({mode}, {graph.n_nodes} nodes): "
        f"min {np.nanmin(gamma):.4g} at {argmin}"
    )
    return StochasticPotentialTable(
        gamma, argmin, trees, mode, classes, exact, graph.space
    )


def sse_set(
    rule: LearningRule, payoffs: NormalFormGame, mode: str = "auto"
) -> Tuple[Tuple[int, ...], StochasticPotentialTable]:
    """Stochastically stable joint actions and the potential table"""
    table = stochastic_potentials(build_resistance_graph(rule, payoffs), mode)
    return table.argmin_actions, table


@dataclass
class CorollaryReport:
    which: str
    verdict: str
    sse: Tuple[int, ...]
    target: Tuple[int, ...]
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict in ("equal", "contained")

    def to_dict(self):
        return {
            "which": self.which,
            "verdict": self.verdict,
            "sse": list(self.sse),
            "target": list(self.target),
            "notes": list(self.notes),
        }


COROLLARIES = ("potential_max", "pareto", "pareto_ne")


def corollary_target(payoffs: NormalFormGame, which: str) -> Tuple[int, ...]:
    """Independent target set for a normal-form selection result.

    Raises
    ------
    PreconditionError
        the game lacks the structure ``which`` requires
    """
    if which not in COROLLARIES:
        raise ValueError(
            f"unknown corollary '{which}', expected one of {COROLLARIES}"
        )
    if which == "potential_max":
        cert = verify_potential(payoffs)
        if not cert.exists:
            raise PreconditionError(
                "potential_max requires an exact potential game "
                f"(violation {cert.max_violation:.3g})"
            )
        return argmax_set(cert.phi, GAMMA_TOL)
    check = check_interdependence(payoffs)
    if not check.holds:
        joint, subset = check.witness
        raise PreconditionError(
            f"{which} requires an interdependent game; agents {subset} are "
            f"isolated at joint action {joint}"
        )
    welfare = payoffs.welfare()
    if which == "pareto":
        return argmax_set(welfare, GAMMA_TOL)
    ne = payoffs.pure_nash()
    if not ne:
        raise PreconditionError("pareto_ne requires a pure Nash equilibrium")
    best = argmax_set(welfare[ne], GAMMA_TOL)
    return tuple(ne[k] for k in best)


def compare_sets(sse, target, allow_contained=False) -> str:
    sse, target = set(sse), set(target)
    if sse == target:
        return "equal"
    if allow_contained and sse and sse < target:
        return "contained"
    return "mismatch"


def validate_corollary(
    rule: LearningRule, payoffs: NormalFormGame, which: str, mode="auto"
) -> CorollaryReport:
    """Compare the SSE set against the set a selection result predicts.

    ``potential_max`` targets ``argmax phi``; ``pareto`` the welfare
    maximizers; ``pareto_ne`` the welfare maximizers among pure NEs, where
    a nonempty proper subset is reported as ``contained``.
    """
    target = corollary_target(payoffs, which)
    sse, _ = sse_set(rule, payoffs, mode)
    verdict = compare_sets(sse, target, allow_contained=which == "pareto_ne")
    report = CorollaryReport(which, verdict, tuple(sse), tuple(target))
    if verdict == "mismatch":
        report.notes.append(
            f"{rule.name}: SSE {sorted(sse)} differs from target "
            f"{sorted(target)}"
        )
    logger.info(f"{which} with {rule.name}: {verdict}")
    return report
