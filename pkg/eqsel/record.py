"""
Run records
===========

A :class:`RunRecord` holds what one framework run leaves behind: thinned
snapshots of the chosen actions, hidden variables and critic tables, the
cumulative action counts per cell, and windowed occupancy trackers from
which the final empirical policy is read.

Records can be stored in the Zarr format, locally or on any fsspec
backed store::

    record.write_zarr("run.zarr", precision=6)
    again = RunRecord.read_zarr("run.zarr")

Every snapshot field is a chunked dataset with the snapshot index as the
first axis. Chunks hold roughly 12MB, as for cloud object stores; float
datasets can be stored with a :class:`numcodecs.quantize.Quantize` filter.

Classes
^^^^^^^

.. autoclass:: Snapshot
.. autoclass:: RunRecord
   :members:
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numcodecs
import numpy as np
import pandas as pd
import zarr

from .chain import OccupancyTracker
from .utils import EQSEL_NETWORK_PROTOCOLS, ActionCodec, get_protocol

logger = logging.getLogger(__name__)

EQSEL_FORMAT_VERSION = "1"
CHUNK_BYTES = 12582912


@dataclass
class Snapshot:
    """State of a run after ``t`` iterations"""

    t: int
    actions: np.ndarray
    hidden: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    counts: np.ndarray
    visits: Optional[np.ndarray] = None


@dataclass
class RunRecord:
    """Snapshots and window trackers of one run.

    ``metadata`` carries ``game``, ``states``, ``action_counts``,
    ``horizon``, ``rule``, ``eps``, ``algorithm``, ``seed``,
    ``iterations``, ``stride`` and ``window``.
    """

    metadata: dict
    snapshots: List[Snapshot] = field(default_factory=list)
    trackers: Dict[Tuple[int, int], OccupancyTracker] = field(
        default_factory=dict
    )

    @property
    def codec(self) -> ActionCodec:
        return ActionCodec(self.metadata["action_counts"])

    @property
    def states(self) -> Tuple[str, ...]:
        return tuple(self.metadata["states"])

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def state_index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.states.index(state)

    def final_frequencies(self) -> np.ndarray:
        """Window empirical policy ``(H, |S|, n_joint)``; NaN rows for cells
        without window visits"""
        H, S = self.metadata["horizon"], len(self.states)
        out = np.full((H, S, self.codec.n_joint), np.nan)
        for (h, s), tracker in self.trackers.items():
            if tracker.total > 0:
                out[h, s] = tracker.empirical
        return out

    def frequency_frame(self, series: Sequence[Tuple[int, object, int]]):
        """Cumulative empirical frequency of each ``(h, state, action)`` at
        every snapshot with ``t > 0``"""
        rows = []
        for snap in self.snapshots:
            if snap.t == 0:
                continue
            for h, state, action in series:
                s = self.state_index(state)
                rows.append(
                    {
                        "t": snap.t,
                        "series": series_name(
                            h, self.states[s], self.codec, action
                        ),
                        "frequency": snap.counts[h, s, action] / snap.t,
                    }
                )
        return pd.DataFrame(rows, columns=["t", "series", "frequency"])

    def to_frames(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """Run frame ``t,h,state,action_tuple,hidden_desc`` and the critic
        frame ``t,agent,h,state,action_tuple,Q,V``"""
        codec = self.codec
        runs, critic = [], []
        for snap in self.snapshots:
            H, S = snap.actions.shape
            for h in range(H):
                for s in range(S):
                    runs.append(
                        (
                            snap.t,
                            h,
                            self.states[s],
                            codec.format(snap.actions[h, s]),
                            snap.hidden[h, s],
                        )
                    )
                    for i in range(snap.Q.shape[0]):
                        for a in range(codec.n_joint):
                            critic.append(
                                (
                                    snap.t,
                                    i,
                                    h,
                                    self.states[s],
                                    codec.format(a),
                                    snap.Q[i, h, s, a],
                                    snap.V[i, h, s],
                                )
                            )
        run_frame = pd.DataFrame(
            runs, columns=["t", "h", "state", "action_tuple", "hidden_desc"]
        )
        critic_frame = pd.DataFrame(
            critic,
            columns=["t", "agent", "h", "state", "action_tuple", "Q", "V"],
        )
        return run_frame, critic_frame

    def summary(self) -> dict:
        freqs = self.final_frequencies()
        codec = self.codec
        cells = {}
        for (h, s), tracker in sorted(self.trackers.items()):
            if tracker.total == 0:
                continue
            cells.setdefault(f"h{h}", {})[self.states[s]] = {
                codec.format(a): float(freqs[h, s, a])
                for a in range(codec.n_joint)
            }
        meta = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in self.metadata.items()
        }
        return {"metadata": meta, "final_frequencies": cells}

    def write_zarr(self, url, storage_options=None, precision=None):
        """Store the record in a Zarr group at ``url``.

        Parameters
        ----------
        url : str
            local path or fsspec URL
        storage_options : dict (optional)
            passed to the fsspec filesystem
        precision : int (optional)
            decimal digits kept by a quantize filter on float datasets
        """
        _check_protocol(url)
        n = len(self.snapshots)
        if n == 0:
            raise ValueError("record has no snapshots")
        so = dict() if storage_options is None else storage_options
        root = zarr.open_group(url, storage_options=so, mode="w")
        root.attrs["eqsel"] = {
            "version": EQSEL_FORMAT_VERSION,
            **{
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.metadata.items()
            },
        }
        snaps = root.require_group("snapshots")
        first = self.snapshots[0]
        fields = {
            "t": (np.array(0), np.int64),
            "actions": (first.actions, np.int64),
            "hidden": (first.hidden, object),
            "Q": (first.Q, np.float64),
            "V": (first.V, np.float64),
            "counts": (first.counts, np.int64),
        }
        if first.visits is not None:
            fields["visits"] = (first.visits, np.int64)
        buffers = {
            name: SnapshotBuffer(
                np.shape(example), dtype, n, snaps, name, precision=precision
            )
            for name, (example, dtype) in fields.items()
        }
        for snap in self.snapshots:
            for name, buf in buffers.items():
                buf.write(getattr(snap, name))
        for buf in buffers.values():
            buf.flush()

        H, S = first.actions.shape
        window = np.zeros((H, S, self.codec.n_joint), dtype=np.int64)
        for (h, s), tracker in self.trackers.items():
            window[h, s] = tracker.counts
        root.array("window_counts", window)
        logger.info(f"wrote {n} snapshots to {url}")

    @classmethod
    def read_zarr(cls, url, storage_options=None) -> "RunRecord":
        _check_protocol(url)
        so = dict() if storage_options is None else storage_options
        root = zarr.open_group(url, storage_options=so, mode="r")
        if "eqsel" not in root.attrs:
            raise ValueError(f"{url} is not an eqsel run record")
        metadata = dict(root.attrs["eqsel"])
        metadata.pop("version", None)
        metadata["action_counts"] = tuple(metadata["action_counts"])
        metadata["states"] = tuple(metadata["states"])
        snaps = root["snapshots"]
        data = {name: snaps[name][:] for name in snaps.array_keys()}
        snapshots = [
            Snapshot(
                int(data["t"][k]),
                data["actions"][k],
                data["hidden"][k],
                data["Q"][k],
                data["V"][k],
                data["counts"][k],
                data["visits"][k] if "visits" in data else None,
            )
            for k in range(len(data["t"]))
        ]
        window = root["window_counts"][:]
        trackers = {}
        for h in range(window.shape[0]):
            for s in range(window.shape[1]):
                tracker = OccupancyTracker(window.shape[2])
                tracker.counts[:] = window[h, s]
                trackers[(h, s)] = tracker
        return cls(metadata, snapshots, trackers)


def series_name(h, state, codec, action) -> str:
    return f"h{h}:{state}:{codec.format(action)}"


def _check_protocol(url):
    protocol = get_protocol(str(url))
    if protocol != "file" and protocol not in EQSEL_NETWORK_PROTOCOLS:
        raise ValueError(f"Unsupported protocol '{protocol}' for run records")


class SnapshotBuffer:
    """Buffered writer of one snapshot field.

    Snapshots are collected in memory one chunk at a time; a full chunk is
    written and the dataset grown by one chunk. :meth:`flush` writes the
    remainder and shrinks the dataset to the number of snapshots written.
    """

    def __init__(
        self,
        shape,
        dtype,
        n_snapshots,
        group,
        name,
        compressor="default",
        precision=None,
    ):
        self._idx = 0
        self._n = max(1, n_snapshots if n_snapshots is not None else 1)
        dtype = np.dtype(dtype)

        kwargs = {}
        if dtype == object:
            kwargs["object_codec"] = numcodecs.VLenUTF8()
            item_bytes = 64
        else:
            item_bytes = dtype.itemsize
            if precision is not None and dtype.kind == "f":
                kwargs["filters"] = [
                    numcodecs.quantize.Quantize(precision, dtype)
                ]
        bytes_per_snapshot = max(
            1, int(np.prod(shape, dtype=np.int64)) * item_bytes
        )
        self._per_chunk = min(
            max(1, CHUNK_BYTES // bytes_per_snapshot), self._n
        )
        self._chunks = (self._per_chunk, *shape)
        self._buf = np.empty(self._chunks, dtype=dtype)
        group.empty(
            name,
            shape=self._chunks,
            chunks=self._chunks,
            dtype=dtype,
            compressor=compressor,
            **kwargs,
        )
        self._dset = group[name]

    def write(self, data):
        if self._idx != 0 and self._idx % self._per_chunk == 0:
            self._dset[self._idx - self._per_chunk :] = self._buf[:]
            self._dset.resize(
                self._dset.shape[0] + self._per_chunk, *self._chunks[1:]
            )
        self._buf[self._idx % self._per_chunk] = data
        self._idx += 1

    def flush(self):
        pending = self._idx % self._per_chunk
        if pending == 0 and self._idx > 0:
            pending = self._per_chunk
        self._dset[self._idx - pending : self._idx] = self._buf[:pending]
        self._dset.resize(self._idx, *self._chunks[1:])
