import numpy as np
import pytest
import zarr
from numpy.testing import assert_allclose, assert_equal

from eqsel.framework import run_algorithm1, run_algorithm2
from eqsel.record import RunRecord, SnapshotBuffer, series_name


@pytest.fixture
def marden_record(treasure):
    return run_algorithm1(treasure, "marden_mood", 0.1, 12, seed=5, stride=4)


class TestFrames(object):
    def test_run_frame(self, marden_record):
        runs, critic = marden_record.to_frames()
        assert list(runs.columns) == [
            "t", "h", "state", "action_tuple", "hidden_desc",
        ]
        # 4 snapshots, 2 stages, 4 states
        assert len(runs) == 4 * 2 * 4
        assert set(runs["hidden_desc"]) <= {"C,C", "C,D", "D,C", "D,D"}
        assert len(critic) == 4 * 2 * 4 * 2 * 4

    def test_frequency_frame(self, marden_record):
        frame = marden_record.frequency_frame([(0, "init", 3), (1, "B", 0)])
        assert frame["t"].tolist() == [4, 4, 8, 8, 12, 12]
        assert frame["series"].tolist()[:2] == ["h0:init:1,1", "h1:B:0,0"]
        assert frame["frequency"].between(0.0, 1.0).all()

    def test_series_name(self, treasure):
        assert series_name(1, "B", treasure.codec, 3) == "h1:B:1,1"

    def test_summary(self, marden_record):
        summary = marden_record.summary()
        assert summary["metadata"]["rule"] == "marden_mood"
        assert summary["metadata"]["states"] == ["init", "A", "O", "B"]
        cells = summary["final_frequencies"]
        assert set(cells) == {"h0", "h1"}
        assert sum(cells["h0"]["init"].values()) == pytest.approx(1.0)


class TestZarr(object):
    def test_round_trip(self, marden_record, tmp_path):
        url = str(tmp_path / "run.zarr")
        marden_record.write_zarr(url)
        again = RunRecord.read_zarr(url)
        assert again.metadata == marden_record.metadata
        assert len(again.snapshots) == len(marden_record.snapshots)
        for x, y in zip(again.snapshots, marden_record.snapshots):
            assert x.t == y.t
            assert_equal(x.actions, y.actions)
            assert_equal(x.hidden, y.hidden)
            assert_allclose(x.Q, y.Q)
            assert x.visits is None
        assert_allclose(
            again.final_frequencies(), marden_record.final_frequencies()
        )

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_visits_stored(self, treasure, tmp_path):
        record = run_algorithm2(treasure, "log_linear", 0.1, 6, seed=2)
        url = str(tmp_path / "sampled.zarr")
        record.write_zarr(url)
        again = RunRecord.read_zarr(url)
        assert_equal(again.final.visits, record.final.visits)

    def test_precision(self, marden_record, tmp_path):
        url = str(tmp_path / "coarse.zarr")
        marden_record.write_zarr(url, precision=2)
        again = RunRecord.read_zarr(url)
        assert_allclose(again.final.Q, marden_record.final.Q, atol=1e-2)

    def test_not_a_record(self, tmp_path):
        url = str(tmp_path / "other.zarr")
        zarr.open_group(url, mode="w")
        with pytest.raises(ValueError, match="not an eqsel run record"):
            RunRecord.read_zarr(url)

    def test_empty_record(self, marden_record, tmp_path):
        empty = RunRecord(dict(marden_record.metadata))
        url = tmp_path / "empty.zarr"
        with pytest.raises(ValueError, match="record has no snapshots"):
            empty.write_zarr(str(url))
        assert not url.exists()

    def test_unsupported_protocol(self, marden_record):
        with pytest.raises(ValueError, match="Unsupported protocol 'ftp'"):
            marden_record.write_zarr("ftp://example.org/run.zarr")


class TestSnapshotBuffer(object):
    @pytest.mark.parametrize("n", [1, 5, 7])
    def test_grows_and_trims(self, tmp_path, n, monkeypatch):
        # two snapshots per chunk
        monkeypatch.setattr("eqsel.record.CHUNK_BYTES", 2 * 3 * 8)
        group = zarr.open_group(str(tmp_path / "buf.zarr"), mode="w")
        buf = SnapshotBuffer((3,), np.float64, n, group, "x")
        for k in range(n):
            buf.write(np.full(3, k, dtype=float))
        buf.flush()
        assert group["x"].shape == (n, 3)
        assert_equal(group["x"][:, 0], np.arange(n))
