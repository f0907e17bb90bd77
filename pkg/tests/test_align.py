import numpy as np
import pytest

from oracles import (
    enumerate_dtw_cost,
    enumerate_jump_cost,
    enumerate_nwtw_cost,
    random_valid_points,
)
from structalign.align import (
    MOVE_DIAG,
    MOVE_JUMP,
    MOVE_START,
    AlignmentPath,
    NWTWParams,
    dtw,
    jump_dtw,
    load_path_csv,
    lookup_performance_time,
    nwtw_align,
    path_overlay_pgm,
    path_to_time_map,
    performance_frames_at,
    save_path_csv,
)
from structalign.neural import InflectionPointList
from structalign.simgrid import CrossSimilarityMatrix


def _csm(values, rate=1.0) -> CrossSimilarityMatrix:
    return CrossSimilarityMatrix(np.asarray(values, dtype=float), rate, rate)


def _check_path_structure(path: AlignmentPath, p: int, q: int,
                          points: InflectionPointList | None = None):
    assert path.cells[0] == (0, 0)
    assert path.cells[-1] == (p - 1, q - 1)
    edges = set(points.jump_edges()) if points else set()
    for k in range(1, len(path.cells)):
        pm, pn = path.cells[k - 1]
        m, n = path.cells[k]
        assert m >= pm  # performance frames never move backwards
        step = (m - pm, n - pn)
        if path.moves[k] == MOVE_JUMP:
            assert (path.cells[k - 1], path.cells[k]) in edges
        else:
            assert step in ((0, 1), (1, 0), (1, 1))


class TestDtw:
    def test_two_by_two_diagonal(self):
        path = dtw(_csm([[0, 1], [1, 0]]))
        assert path.cells == [(0, 0), (1, 1)]
        assert path.total_cost == 0.0

    def test_single_row_walks_columns(self):
        values = [[0.5, 1.5, 2.5]]
        path = dtw(_csm(values))
        assert path.cells == [(0, 0), (0, 1), (0, 2)]
        assert path.total_cost == pytest.approx(4.5)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            p, q = rng.integers(1, 7), rng.integers(1, 8)
            e = rng.random((p, q))
            assert dtw(_csm(e)).total_cost == pytest.approx(
                enumerate_dtw_cost(e), abs=1e-12)

    def test_identity_matrix_takes_diagonal(self):
        e = np.ones((5, 5)) - np.eye(5)
        path = dtw(_csm(e))
        assert path.cells == [(i, i) for i in range(5)]

    def test_transposition_cost_symmetry(self):
        rng = np.random.default_rng(1)
        e = rng.random((5, 6))
        assert dtw(_csm(e)).total_cost == dtw(_csm(e.T)).total_cost

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dtw(_csm(np.zeros((0, 3))))


class TestJumpDtw:
    def test_empty_points_equals_dtw(self):
        rng = np.random.default_rng(2)
        e = rng.random((6, 5))
        a = dtw(_csm(e))
        b = jump_dtw(_csm(e), InflectionPointList([]))
        assert a.cells == b.cells
        assert a.total_cost == b.total_cost

    def test_backward_jump_unlocks_cheap_band(self):
        # cheap cells at (0,0),(1,1) then (2,0),(3,1): only a backward jump
        # from (1,1) to (2,0) connects the two bands cheaply
        e = np.ones((4, 4))
        for m, n in [(0, 0), (1, 1), (2, 0), (3, 1)]:
            e[m, n] = 0.0
        e[3, 2] = e[3, 3] = 0.1
        points = InflectionPointList([(1, 1), (2, 0)])
        jumped = jump_dtw(_csm(e), points)
        plain = dtw(_csm(e))
        assert jumped.total_cost < plain.total_cost
        assert jumped.total_cost == pytest.approx(
            enumerate_jump_cost(e, points.jump_edges()), abs=1e-12)
        assert len(jumped.jump_positions) == 1
        k = jumped.jump_positions[0]
        assert jumped.cells[k - 1] == (1, 1) and jumped.cells[k] == (2, 0)

    def test_matches_enumeration_oracle_with_random_points(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 25:
            p, q = int(rng.integers(2, 7)), int(rng.integers(2, 8))
            e = rng.random((p, q))
            flat = random_valid_points(rng, p, q)
            points = InflectionPointList(flat)
            got = jump_dtw(_csm(e), points).total_cost
            want = enumerate_jump_cost(e, points.jump_edges())
            assert got == pytest.approx(want, abs=1e-12)
            checked += 1

    def test_cost_never_exceeds_dtw(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p, q = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            e = rng.random((p, q))
            points = InflectionPointList(random_valid_points(rng, p, q))
            assert jump_dtw(_csm(e), points).total_cost <= dtw(_csm(e)).total_cost

    def test_path_structure(self):
        rng = np.random.default_rng(5)
        e = rng.random((7, 6))
        points = InflectionPointList([(2, 4), (3, 1)])
        path = jump_dtw(_csm(e), points)
        _check_path_structure(path, 7, 6, points)

    def test_odd_count_rejected(self):
        with pytest.raises(ValueError):
            jump_dtw(_csm(np.ones((3, 3))), InflectionPointList([(1, 1)]))

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError) as exc:
            jump_dtw(_csm(np.ones((3, 3))), InflectionPointList([(1, 1), (2, 5)]))
        assert "(2, 5)" in str(exc.value)


class TestNwtw:
    def test_single_cell(self):
        for gamma in (0.0, 1.0, 100.0):
            assert nwtw_align(_csm([[0.7]]), NWTWParams(gamma)).total_cost == 0.7

    def test_zero_gamma_matches_oracle(self):
        rng = np.random.default_rng(6)
        e = rng.random((5, 6))
        got = nwtw_align(_csm(e), NWTWParams(0.0)).total_cost
        assert got == pytest.approx(enumerate_nwtw_cost(e, 0.0), abs=1e-12)

    def test_large_gamma_matches_oracle(self):
        rng = np.random.default_rng(7)
        e = rng.random((5, 6))
        gamma = float(e.max() * (5 + 6))
        got = nwtw_align(_csm(e), NWTWParams(gamma)).total_cost
        assert got == pytest.approx(enumerate_nwtw_cost(e, gamma), abs=1e-12)

    def test_random_matches_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            p, q = int(rng.integers(1, 7)), int(rng.integers(1, 8))
            e = rng.random((p, q))
            gamma = float(rng.random())
            assert nwtw_align(_csm(e), NWTWParams(gamma)).total_cost == pytest.approx(
                enumerate_nwtw_cost(e, gamma), abs=1e-12)

    def test_skips_flagged_not_matched(self):
        e = np.zeros((1, 4))
        path = nwtw_align(_csm(e), NWTWParams(0.0))
        matched = path.matched_cells()
        assert matched == [(0, 0)]

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            NWTWParams(-1.0)


class TestPathUtilities:
    def test_time_map_scaling(self):
        path = AlignmentPath([(0, 0), (3, 5)], 0.0, [MOVE_START, MOVE_DIAG])
        tm = path_to_time_map(path, 1.0, 1.0)
        assert tm[1] == (3.0, 5.0)

    def test_lookup_last_pass(self):
        cells = [(0, 0), (1, 1), (2, 2), (3, 1), (4, 2)]
        moves = [MOVE_START, MOVE_DIAG, MOVE_DIAG, MOVE_JUMP, MOVE_DIAG]
        path = AlignmentPath(cells, 0.0, moves)
        assert performance_frames_at(path, 2) == [2, 4]
        assert lookup_performance_time(path, 2.0, 1.0, 1.0) == 4.0

    def test_lookup_nearest_when_skipped(self):
        cells = [(0, 0), (1, 2)]
        moves = [MOVE_START, MOVE_DIAG]
        path = AlignmentPath(cells, 0.0, moves)
        assert performance_frames_at(path, 1) == [1]  # nearest matched column

    def test_csv_round_trip(self, tmp_path):
        e = np.random.default_rng(9).random((5, 5))
        path = jump_dtw(_csm(e), InflectionPointList([(1, 3), (2, 1)]))
        f = tmp_path / "path.csv"
        save_path_csv(f, path)
        loaded = load_path_csv(f)
        assert loaded.cells == path.cells
        assert loaded.moves == path.moves
        assert loaded.jump_positions == path.jump_positions

    def test_overlay_pgm(self, tmp_path):
        e = np.random.default_rng(10).random((4, 6))
        path = dtw(_csm(e))
        out = tmp_path / "o.pgm"
        path_overlay_pgm(out, _csm(e), path)
        assert out.read_bytes().startswith(b"P5\n6 4\n255\n")
