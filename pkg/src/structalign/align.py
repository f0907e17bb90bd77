"""Dynamic-programming alignment engines and path utilities.

Three engines over the same distance matrix: classic monotone DTW, DTW
extended with jump edges between declared inflection points, and a
Needleman-Wunsch-style gap-penalty aligner whose skip moves cost a flat
gamma instead of the cell distance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .neural import InflectionPointList
from .simgrid import CrossSimilarityMatrix

MOVE_START = "start"
MOVE_LEFT = "left"    # (m, n-1) -> (m, n)
MOVE_UP = "up"        # (m-1, n) -> (m, n)
MOVE_DIAG = "diag"    # (m-1, n-1) -> (m, n)
MOVE_JUMP = "jump"
MOVE_SKIP_LEFT = "skip_left"
MOVE_SKIP_UP = "skip_up"

_SKIP_MOVES = frozenset({MOVE_SKIP_LEFT, MOVE_SKIP_UP})


@dataclass
class NWTWParams:
    gamma: float = 1.0  # gap penalty per skipped frame

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and >= 0")


@dataclass
class AlignmentPath:
    cells: list[tuple[int, int]]
    total_cost: float
    moves: list[str] = field(default_factory=list)  # moves[k] produced cells[k]
    jump_positions: list[int] = field(default_factory=list)

    def matched_cells(self) -> list[tuple[int, int]]:
        """Cells actually matched (skip moves of the gap-penalty engine excluded)."""
        return [c for c, mv in zip(self.cells, self.moves) if mv not in _SKIP_MOVES]


def _check_matrix(csm: CrossSimilarityMatrix) -> np.ndarray:
    e = csm.values
    if e.size == 0:
        raise ValueError("empty cross-similarity matrix")
    return e


def _backtrack(pred: np.ndarray, p: int, q: int,
               jump_sources: dict[tuple[int, int], tuple[int, int]] | None = None):
    moves_by_code = {1: MOVE_DIAG, 2: MOVE_UP, 3: MOVE_LEFT, 4: MOVE_JUMP,
                     5: MOVE_SKIP_UP, 6: MOVE_SKIP_LEFT}
    cells = [(p - 1, q - 1)]
    moves = []
    m, n = p - 1, q - 1
    while (m, n) != (0, 0):
        code = pred[m, n]
        moves.append(moves_by_code[code])
        if code == 1:
            m, n = m - 1, n - 1
        elif code in (2, 5):
            m -= 1
        elif code in (3, 6):
            n -= 1
        else:
            m, n = jump_sources[(m, n)]
        cells.append((m, n))
    moves.append(MOVE_START)
    cells.reverse()
    moves.reverse()
    jump_positions = [i for i, mv in enumerate(moves) if mv == MOVE_JUMP]
    return cells, moves, jump_positions


def dtw(csm: CrossSimilarityMatrix) -> AlignmentPath:
    """Classic monotone DTW; ties broken diag > up > left."""
    return jump_dtw(csm, InflectionPointList([]))


def jump_dtw(csm: CrossSimilarityMatrix, points: InflectionPointList) -> AlignmentPath:
    """DTW whose recurrence admits jump edges between paired inflection points.

    A jump edge lets cell (a_i, b_i) (even i) take D(a_{i-1}, b_{i-1}) as a
    predecessor, contributing only the landing cell's distance. With an empty
    point list this is exactly classic DTW.
    """
    e = _check_matrix(csm)
    p, q = e.shape
    points.validate(p, q)
    jump_targets: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for src, dst in points.jump_edges():
        if (src[0], src[1]) >= (dst[0], dst[1]):
            raise ValueError(
                f"jump source {src} does not precede target {dst} in evaluation order")
        jump_targets.setdefault(dst, []).append(src)

    D = np.full((p, q), np.inf)
    pred = np.zeros((p, q), dtype=np.int8)
    chosen_jump: dict[tuple[int, int], tuple[int, int]] = {}
    D[0, 0] = e[0, 0]
    for m in range(p):
        for n in range(q):
            if m == 0 and n == 0:
                continue
            # candidate order fixes tie-breaking: diag > up > left > jumps
            best, code, jump_src = np.inf, 0, None
            if m > 0 and n > 0 and D[m - 1, n - 1] < best:
                best, code = D[m - 1, n - 1], 1
            if m > 0 and D[m - 1, n] < best:
                best, code = D[m - 1, n], 2
            if n > 0 and D[m, n - 1] < best:
                best, code = D[m, n - 1], 3
            for src in jump_targets.get((m, n), ()):
                if D[src] < best:
                    best, code, jump_src = D[src], 4, src
            D[m, n] = e[m, n] + best
            pred[m, n] = code
            if jump_src is not None:
                chosen_jump[(m, n)] = jump_src
    cells, moves, jump_positions = _backtrack(pred, p, q, chosen_jump)
    return AlignmentPath(cells, float(D[p - 1, q - 1]), moves, jump_positions)


def nwtw_align(csm: CrossSimilarityMatrix, params: NWTWParams) -> AlignmentPath:
    """Gap-penalty alignment: diagonal moves match (cost e), skips cost gamma."""
    e = _check_matrix(csm)
    gamma = params.gamma
    p, q = e.shape
    D = np.full((p, q), np.inf)
    pred = np.zeros((p, q), dtype=np.int8)
    D[0, 0] = e[0, 0]
    for m in range(p):
        for n in range(q):
            if m == 0 and n == 0:
                continue
            best, code = np.inf, 0
            if m > 0 and n > 0 and D[m - 1, n - 1] + e[m, n] < best:
                best, code = D[m - 1, n - 1] + e[m, n], 1
            if m > 0 and D[m - 1, n] + gamma < best:
                best, code = D[m - 1, n] + gamma, 5
            if n > 0 and D[m, n - 1] + gamma < best:
                best, code = D[m, n - 1] + gamma, 6
            D[m, n] = best
            pred[m, n] = code
    cells, moves, jump_positions = _backtrack(pred, p, q)
    return AlignmentPath(cells, float(D[p - 1, q - 1]), moves, jump_positions)


def path_to_time_map(
    path: AlignmentPath, perf_rate_hz: float, score_rate_hz: float
) -> list[tuple[float, float]]:
    """Per-cell (performance_seconds, score_seconds) along the path."""
    return [(m / perf_rate_hz, n / score_rate_hz) for m, n in path.cells]


def performance_frames_at(path: AlignmentPath, score_frame: int) -> list[int]:
    """Matched performance frames for a score frame, one per pass.

    Exact column hits are grouped into contiguous path runs (a jump path may
    traverse the same score region several times) and the last cell of each
    run is reported. Columns the path never matches (skipped or jumped over)
    resolve to the nearest matched column.
    """
    entries = [(i, cell) for i, (cell, mv) in enumerate(zip(path.cells, path.moves))
               if mv not in _SKIP_MOVES]
    hits = [(i, cell[0]) for i, cell in entries if cell[1] == score_frame]
    if not hits:
        nearest = min(abs(cell[1] - score_frame) for _, cell in entries)
        hits = [(i, cell[0]) for i, cell in entries
                if abs(cell[1] - score_frame) == nearest]
    frames = []
    prev_i = None
    for i, m in hits:
        if prev_i is not None and i == prev_i + 1:
            frames[-1] = m  # same run: keep the last cell of the run
        else:
            frames.append(m)
        prev_i = i
    return frames


def lookup_performance_time(
    path: AlignmentPath, score_seconds: float,
    perf_rate_hz: float, score_rate_hz: float,
) -> float:
    """Single-valued lookup: last matched pass over the queried score frame."""
    score_frame = int(round(score_seconds * score_rate_hz))
    return performance_frames_at(path, score_frame)[-1] / perf_rate_hz


def save_path_csv(path_file, path: AlignmentPath) -> None:
    with open(path_file, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["perf_frame", "score_frame", "move_tag"])
        for (m, n), mv in zip(path.cells, path.moves):
            writer.writerow([m, n, mv])


def load_path_csv(path_file) -> AlignmentPath:
    cells, moves = [], []
    with open(path_file, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for m, n, mv in reader:
            cells.append((int(m), int(n)))
            moves.append(mv)
    jump_positions = [i for i, mv in enumerate(moves) if mv == MOVE_JUMP]
    return AlignmentPath(cells, float("nan"), moves, jump_positions)


def path_overlay_pgm(path_file, csm: CrossSimilarityMatrix, path: AlignmentPath) -> None:
    """P5 image of the distance matrix with the path burned in at full white."""
    from .simgrid import write_pgm

    values = csm.values.copy()
    lo, hi = values.min(), values.max()
    span = hi - lo if hi > lo else 1.0
    for m, n in path.cells:
        values[m, n] = hi + 0.25 * span
    write_pgm(path_file, values)
