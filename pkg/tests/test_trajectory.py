import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairtraj.errors import DataError, InvalidInputError
from pairtraj.trajectory import (
    Interaction,
    TimeMeasure,
    Trajectory,
    interaction_from_dict,
    interaction_to_dict,
    read_encounters_csv,
    resample,
    uniform_measure,
    write_encounters_csv,
)


def make_interaction(grid, first, second):
    return Interaction(Trajectory(first, grid), Trajectory(second, grid))


class TestTypes:
    def test_rejects_short_grid(self):
        with pytest.raises(InvalidInputError):
            Trajectory([[0.0, 0.0]], [0.0])

    def test_rejects_non_increasing_grid(self):
        with pytest.raises(InvalidInputError):
            Trajectory([[0, 0], [1, 1], [2, 2]], [0.0, 0.5, 0.5])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            Trajectory([[0, 0], [np.nan, 1]], [0.0, 1.0])

    def test_rejects_mismatched_grids(self):
        a = Trajectory([[0, 0], [1, 1]], [0.0, 1.0])
        b = Trajectory([[0, 0], [1, 1]], [0.0, 2.0])
        with pytest.raises(InvalidInputError):
            Interaction(a, b)

    def test_immutable(self):
        traj = Trajectory([[0, 0], [1, 1]], [0.0, 1.0])
        with pytest.raises(ValueError):
            traj.samples[0, 0] = 5.0

    def test_measure_must_sum_to_one(self):
        with pytest.raises(InvalidInputError):
            TimeMeasure([0.5, 0.6])
        with pytest.raises(InvalidInputError):
            TimeMeasure([1.5, -0.5])

    def test_uniform_measure(self):
        mu = uniform_measure(101)
        assert len(mu) == 101
        assert abs(mu.weights.sum() - 1.0) <= 1e-12


class TestResample:
    def test_identity_on_uniform_grid(self):
        # already on the target grid: values pass through unchanged
        T = 101
        grid = np.linspace(0, 1, T)
        rng = np.random.default_rng(0)
        inter = make_interaction(grid, rng.normal(size=(T, 2)), rng.normal(size=(T, 2)))
        out = resample(inter, T)
        assert np.max(np.abs(out.first.samples - inter.first.samples)) <= 1e-12
        assert np.max(np.abs(out.second.samples - inter.second.samples)) <= 1e-12

    def test_kink_is_preserved_at_matching_node(self):
        # piecewise-linear with a kink at t=0.5 resampled to T=3: the middle
        # output sample must be the kink value itself
        grid = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        x = np.array([0.0, 0.5, 1.0, 0.5, 0.0])  # kink at 0.5
        first = np.column_stack([x, np.zeros_like(x)])
        inter = make_interaction(grid, first, np.zeros((5, 2)))
        out = resample(inter, 3)
        assert out.first.samples[1, 0] == pytest.approx(1.0, abs=1e-15)
        assert np.allclose(out.grid, [0.0, 0.5, 1.0])

    def test_affine_time_normalization(self):
        # grid in seconds; values linear in t stay linear on [0, 1]
        grid = np.array([3.0, 5.0, 9.0, 11.0])
        vals = np.column_stack([2.0 * grid + 1.0, -grid])
        inter = make_interaction(grid, vals, vals)
        out = resample(inter, 9)
        expect_x = 2.0 * (3.0 + 8.0 * out.grid) + 1.0
        assert np.max(np.abs(out.first.samples[:, 0] - expect_x)) <= 1e-12

    def test_rejects_tiny_target(self):
        grid = np.array([0.0, 1.0])
        inter = make_interaction(grid, np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            resample(inter, 1)

    @settings(max_examples=25, deadline=None)
    @given(
        n_in=st.integers(min_value=2, max_value=40),
        n_out=st.integers(min_value=2, max_value=60),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_endpoints_and_idempotence(self, n_in, n_out, seed):
        rng = np.random.default_rng(seed)
        grid = np.sort(rng.uniform(0, 10, size=n_in))
        while np.any(np.diff(grid) <= 1e-9):
            grid = np.sort(rng.uniform(0, 10, size=n_in))
        inter = make_interaction(
            grid, rng.normal(size=(n_in, 2)), rng.normal(size=(n_in, 2))
        )
        out = resample(inter, n_out)
        # endpoints are preserved exactly by linear interpolation
        assert np.allclose(out.first.samples[0], inter.first.samples[0], atol=1e-12)
        assert np.allclose(out.first.samples[-1], inter.first.samples[-1], atol=1e-12)
        # resampling again at the same T is the identity
        again = resample(out, n_out)
        assert np.max(np.abs(again.first.samples - out.first.samples)) <= 1e-12
        assert np.max(np.abs(again.second.samples - out.second.samples)) <= 1e-12


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        grid = np.sort(rng.uniform(0, 7, size=12))
        encounters = [
            (
                f"enc{k}",
                make_interaction(grid, rng.normal(size=(12, 2)), rng.normal(size=(12, 2))),
            )
            for k in range(3)
        ]
        path = tmp_path / "enc.csv"
        write_encounters_csv(path, encounters, meta={"seed": 1})
        back = read_encounters_csv(path)
        assert [eid for eid, _ in back] == [eid for eid, _ in encounters]
        for (_, a), (_, b) in zip(back, encounters):
            assert np.array_equal(a.first.samples, b.first.samples)
            assert np.array_equal(a.second.samples, b.second.samples)
            assert np.array_equal(a.grid, b.grid)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "encounter_id,t,x1,y1,x2,y2\n"
            "a,0.0,1,2,3,4\n"
            "a,1.0,1,oops,3,4\n"
        )
        with pytest.raises(DataError, match=":3"):
            read_encounters_csv(path)

    def test_non_monotone_t_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "encounter_id,t,x1,y1,x2,y2\n"
            "a,0.0,1,2,3,4\n"
            "a,0.0,1,2,3,4\n"
        )
        with pytest.raises(DataError, match="strictly increasing"):
            read_encounters_csv(path)

    def test_split_group_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "encounter_id,t,x1,y1,x2,y2\n"
            "a,0.0,1,2,3,4\n"
            "b,0.0,1,2,3,4\n"
            "a,1.0,1,2,3,4\n"
        )
        with pytest.raises(DataError, match="contiguous"):
            read_encounters_csv(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,t,x1,y1,x2,y2\na,0,1,2,3,4\n")
        with pytest.raises(DataError, match="header"):
            read_encounters_csv(path)


def test_interaction_dict_round_trip():
    rng = np.random.default_rng(5)
    grid = np.linspace(0, 1, 7)
    inter = make_interaction(grid, rng.normal(size=(7, 2)), rng.normal(size=(7, 2)))
    back = interaction_from_dict(interaction_to_dict(inter))
    assert np.array_equal(back.first.samples, inter.first.samples)
    assert np.array_equal(back.grid, inter.grid)
