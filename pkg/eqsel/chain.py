"""
Markov-chain analytics
======================

Stationary distributions of learning-rule kernels, computed either by a
direct linear solve (``method="solve"``), by Grassmann-Taksar-Heyman
elimination (``method="gth"``, accurate for stiff small-``eps`` chains) or
by enumerating rooted in-trees (:func:`stationary_tree_formula`, tiny
chains only). :class:`OccupancyTracker` keeps empirical visit frequencies
for simulations.

Kernels may be passed as a :class:`~eqsel.rules.TransitionKernel` or as a
bare square matrix (dense or scipy sparse).
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.sparse.csgraph import connected_components, dijkstra

from .exceptions import GuardExceededError, NonErgodicError, SingularSolveError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
TREE_GUARD = 8


def _unpack(kernel):
    space = getattr(kernel, "space", None)
    matrix = getattr(kernel, "matrix", kernel)
    if not scipy.sparse.issparse(matrix):
        matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"kernel must be square, got shape {matrix.shape}")
    return matrix, space


def _support(matrix):
    if scipy.sparse.issparse(matrix):
        adj = scipy.sparse.csr_matrix(matrix, copy=True)
        adj.data = (adj.data > 0).astype(float)
        adj.eliminate_zeros()
        return adj
    return scipy.sparse.csr_matrix((np.asarray(matrix) > 0).astype(float))


def period(matrix) -> int:
    """Period of a strongly connected support graph.

    The gcd of ``level(u) + 1 - level(v)`` over all edges, with BFS levels
    from node 0. Returns 0 for a graph without cycles.
    """
    adj = _support(matrix)
    levels = dijkstra(adj, indices=0, unweighted=True)
    coo = adj.tocoo()
    keep = np.isfinite(levels[coo.row]) & np.isfinite(levels[coo.col])
    diffs = levels[coo.row[keep]] + 1 - levels[coo.col[keep]]
    return int(np.gcd.reduce(np.abs(diffs).astype(np.int64), initial=0))


def is_ergodic(matrix) -> bool:
    """Strongly connected and aperiodic support"""
    adj = _support(matrix)
    n_comp, _ = connected_components(adj, connection="strong")
    if n_comp != 1:
        return False
    return period(adj) == 1


@dataclass(frozen=True)
class StationaryDistribution:
    """Distribution over kernel nodes and its joint-action marginal"""

    probabilities: np.ndarray
    space: Optional[object] = None

    @property
    def marginal(self) -> np.ndarray:
        if self.space is None:
            return self.probabilities
        return np.bincount(
            self.space.actions,
            weights=self.probabilities,
            minlength=self.space.codec.n_joint,
        )

    def to_frame(self) -> pd.DataFrame:
        n = len(self.probabilities)
        if self.space is None:
            actions = [str(k) for k in range(n)]
            hidden = [""] * n
        else:
            actions = [self.space.action_tuple(k) for k in range(n)]
            hidden = [self.space.hidden_desc(k) for k in range(n)]
        return pd.DataFrame(
            {
                "node": np.arange(n),
                "action_tuple": actions,
                "hidden_desc": hidden,
                "probability": self.probabilities,
            }
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)
        logger.info(f"wrote stationary distribution to {path}")


def _solve(matrix):
    n = matrix.shape[0]
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if scipy.sparse.issparse(matrix):
        A = (matrix.T - scipy.sparse.identity(n)).tolil()
        A[n - 1, :] = np.ones(n)
        return scipy.sparse.linalg.spsolve(A.tocsc(), rhs)
    A = matrix.T - np.eye(n)
    A[-1, :] = 1.0
    return scipy.linalg.solve(A, rhs)


def gth_solve(matrix) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination on the off-diagonal entries"""
    A = np.array(
        matrix.toarray() if scipy.sparse.issparse(matrix) else matrix,
        dtype=float,
    )
    n = A.shape[0]
    x = np.zeros(n)
    for i in range(n - 1):
        scale = A[i, i + 1 : n].sum()
        if scale <= 0:
            n = i + 1
            break
        A[i + 1 : n, i] /= scale
        A[i + 1 : n, i + 1 : n] += np.outer(A[i + 1 : n, i], A[i, i + 1 : n])
    x[n - 1] = 1.0
    for i in range(n - 2, -1, -1):
        x[i] = x[i + 1 : n] @ A[i + 1 : n, i]
    return x / x.sum()


def stationary_linear(kernel, method: str = "solve") -> StationaryDistribution:
    """Unique stationary distribution of an ergodic kernel.

    Parameters
    ----------
    kernel : TransitionKernel or array_like or scipy.sparse matrix
    method : {"solve", "gth"}
        ``solve`` replaces one balance equation with the normalization
        row; ``gth`` uses subtraction-free elimination

    Raises
    ------
    NonErgodicError
        the kernel support is not strongly connected and aperiodic
    SingularSolveError
        the solve fails or ``||pi K - pi||_1`` exceeds 1e-10
    """
    if method not in ("solve", "gth"):
        raise ValueError(f"unknown method '{method}', expected solve or gth")
    matrix, space = _unpack(kernel)
    if not is_ergodic(matrix):
        raise NonErgodicError(
            "kernel is not ergodic: its support must be strongly connected "
            "and aperiodic"
        )
    try:
        if method == "gth":
            pi = gth_solve(matrix)
        else:
            pi = _solve(matrix)
    except (np.linalg.LinAlgError, RuntimeError) as err:
        raise SingularSolveError(f"stationary solve failed: {err}") from err
    residual = float(np.abs(pi @ matrix - pi).sum())
    if not residual < RESIDUAL_TOL or not np.all(np.isfinite(pi)):
        raise SingularSolveError(
            f"stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}"
        )
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    pi.setflags(write=False)
    return StationaryDistribution(pi, space)


def _tree_weight_sum(K, root):
    """Sum over in-trees rooted at ``root`` of the product of edge
    probabilities"""
    n = K.shape[0]
    others = [v for v in range(n) if v != root]
    parent = {}

    def closes_cycle(v, p):
        while p in parent:
            if p == v:
                return True
            p = parent[p]
        return p == v

    def extend(k, weight):
        if k == len(others):
            return weight
        v = others[k]
        total = 0.0
        for p in np.flatnonzero(K[v] > 0):
            p = int(p)
            if p == v or closes_cycle(v, p):
                continue
            parent[v] = p
            total += extend(k + 1, weight * K[v, p])
            del parent[v]
        return total

    return extend(0, 1.0)


def stationary_tree_formula(
    kernel, guard: int = TREE_GUARD
) -> StationaryDistribution:
    """Stationary distribution from the in-tree formula.

    Each node's weight is the summed product of kernel entries over all
    spanning in-trees rooted at it; the weights are then normalized. Edges
    with zero probability are pruned while enumerating.

    Raises
    ------
    GuardExceededError
        more than ``guard`` nodes
    """
    matrix, space = _unpack(kernel)
    n = matrix.shape[0]
    if n > guard:
        raise GuardExceededError(
            f"tree enumeration limited to {guard} nodes, got {n}"
        )
    K = matrix.toarray() if scipy.sparse.issparse(matrix) else matrix
    weights = np.array([_tree_weight_sum(K, root) for root in range(n)])
    total = weights.sum()
    if not total > 0:
        raise NonErgodicError("kernel has no spanning in-tree")
    mu = weights / total
    mu.setflags(write=False)
    return StationaryDistribution(mu, space)


class OccupancyTracker:
    """Visit counts over ``n_nodes`` nodes.

    Parameters
    ----------
    n_nodes : int
    window : int (optional)
        Only the last ``window`` visits count
    """

    def __init__(self, n_nodes: int, window: int = None):
        if window is not None and int(window) < 1:
            raise ValueError(f"window must be positive, got {window}")
        self.n_nodes = int(n_nodes)
        self.window = None if window is None else int(window)
        self.counts = np.zeros(self.n_nodes, dtype=np.int64)
        self._recent = deque()

    def track(self, node: int) -> "OccupancyTracker":
        node = int(node)
        if not 0 <= node < self.n_nodes:
            raise ValueError(f"node {node} outside [0, {self.n_nodes})")
        self.counts[node] += 1
        if self.window is not None:
            self._recent.append(node)
            if len(self._recent) > self.window:
                self.counts[self._recent.popleft()] -= 1
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empirical(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise ValueError("no visits recorded")
        return self.counts / total

    def __repr__(self):
        return (
            f"OccupancyTracker(n_nodes={self.n_nodes}, window={self.window}, "
            f"total={self.total})"
        )


def l1_distance(p, q) -> float:
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum())
