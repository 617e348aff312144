import re
from typing import Sequence, Tuple

import numpy as np

EQSEL_NETWORK_PROTOCOLS = ["s3", "http", "https", "adl", "abfs", "az", "gcs"]


class ActionCodec:
    """Joint-action index codec.

    Joint actions are stored row-major with agent 0 as the slowest-varying
    index, so for ``action_counts = (2, 3)`` the joint action ``(1, 0)``
    has index 3. Every module goes through this class.

    Parameters
    ----------
    action_counts : sequence of int
        Number of actions of each agent, all positive.
    """

    def __init__(self, action_counts: Sequence[int]):
        counts = tuple(int(m) for m in action_counts)
        if len(counts) == 0:
            raise ValueError("action_counts must name at least one agent")
        if any(m < 1 for m in counts):
            raise ValueError(
                f"action counts must be positive integers, got {counts}"
            )
        self._counts = counts
        self._n_joint = int(np.prod(counts, dtype=np.int64))
        self._table = np.array(
            np.unravel_index(np.arange(self._n_joint), counts)
        ).T
        self._table.setflags(write=False)
        self._deviations = None

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return self._counts

    @property
    def n_agents(self) -> int:
        return len(self._counts)

    @property
    def n_joint(self) -> int:
        return self._n_joint

    @property
    def table(self) -> np.ndarray:
        """(M, n) array of per-agent actions for every joint index"""
        return self._table

    def encode(self, actions: Sequence[int]) -> int:
        if len(actions) != self.n_agents:
            raise ValueError(
                f"Expected {self.n_agents} actions, got {len(actions)}"
            )
        for i, (a, m) in enumerate(zip(actions, self._counts)):
            if not 0 <= int(a) < m:
                raise ValueError(
                    f"Action {a} of agent {i} outside [0, {m})"
                )
        return int(np.ravel_multi_index(tuple(actions), self._counts))

    def decode(self, index: int) -> Tuple[int, ...]:
        if not 0 <= int(index) < self._n_joint:
            raise ValueError(
                f"Joint action index {index} outside [0, {self._n_joint})"
            )
        return tuple(int(a) for a in self._table[index])

    @property
    def deviation_table(self):
        """``deviation_table[i][a, b]`` is the joint index of ``a`` with
        agent ``i``'s action replaced by ``b``"""
        if self._deviations is None:
            devs = []
            strides = np.array(
                [
                    int(np.prod(self._counts[i + 1 :], dtype=np.int64))
                    for i in range(self.n_agents)
                ]
            )
            base = np.arange(self._n_joint)
            for i, m in enumerate(self._counts):
                own = self._table[:, i]
                tab = (
                    base[:, None]
                    + (np.arange(m)[None, :] - own[:, None]) * strides[i]
                )
                tab.setflags(write=False)
                devs.append(tab)
            self._deviations = tuple(devs)
        return self._deviations

    def as_tensor(self, vector: np.ndarray) -> np.ndarray:
        """Reshape a length-M vector to shape ``action_counts``"""
        return np.asarray(vector).reshape(self._counts)

    def format(self, index: int) -> str:
        """Compact text form used in CSV and edge lists, e.g. ``0,1``"""
        return ",".join(str(a) for a in self.decode(index))

    def __eq__(self, other):
        return (
            isinstance(other, ActionCodec)
            and self._counts == other._counts
        )

    def __hash__(self):
        return hash(self._counts)

    def __repr__(self):
        return f"ActionCodec({self._counts})"


def get_protocol(url: str) -> str:
    parts = re.split(r"(\:\:|\://)", url, maxsplit=1)
    if len(parts) > 1:
        return parts[0]
    return "file"


def argmax_set(values: np.ndarray, tol: float = 1e-9) -> Tuple[int, ...]:
    """Indices within ``tol`` of the maximum, in index order"""
    values = np.asarray(values, dtype=float)
    top = values.max()
    return tuple(int(k) for k in np.flatnonzero(values >= top - tol))


def argmin_set(values: np.ndarray, tol: float = 1e-9) -> Tuple[int, ...]:
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return tuple()
    low = finite.min()
    return tuple(
        int(k)
        for k in np.flatnonzero(np.isfinite(values) & (values <= low + tol))
    )
