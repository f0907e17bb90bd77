"""Beat-level alignment accuracy and engine comparison tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .align import (
    AlignmentPath,
    NWTWParams,
    dtw,
    jump_dtw,
    nwtw_align,
    performance_frames_at,
)
from .neural import InflectionPointList
from .simgrid import CrossSimilarityMatrix
from .structgen import WarpMap

DEFAULT_THRESHOLDS_MS = (25, 50, 100, 200)


@dataclass
class BeatAnnotation:
    """Ground-truth (score_beat_seconds, performance_beat_seconds) pairs.

    Beats inside repeated regions appear once per pass; beats the performer
    skipped resolve to the first performance frame after the skip and are
    flagged.
    """

    pairs: list[tuple[float, float]]
    skipped: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.skipped:
            self.skipped = [False] * len(self.pairs)


@dataclass
class AccuracyReport:
    engine: str
    thresholds_ms: tuple[int, ...]
    accuracy_percent: list[float]
    num_beats: int

    def __post_init__(self):
        for a, b in zip(self.accuracy_percent, self.accuracy_percent[1:]):
            if b < a - 1e-9:
                raise ValueError("accuracy must be monotone in threshold")


def beats_from_warpmap(
    warp: WarpMap,
    score_beats_seconds: list[float],
    perf_rate_hz: float,
    score_rate_hz: float,
) -> BeatAnnotation:
    """Map score beats through the warp map, one pair per performance pass."""
    frames = warp.score_frames
    pairs, skipped = [], []
    for t in score_beats_seconds:
        sf = int(round(t * score_rate_hz))
        sf = min(sf, int(frames.max()))
        hits = np.flatnonzero(frames == sf)
        if hits.size:
            # one pair per contiguous run of performance frames on this beat
            starts = [hits[0]] + [b for a, b in zip(hits, hits[1:]) if b != a + 1]
            for pf in starts:
                pairs.append((t, pf / perf_rate_hz))
                skipped.append(False)
        else:
            after = np.flatnonzero(frames > sf)
            pf = int(after[0]) if after.size else len(frames) - 1
            pairs.append((t, pf / perf_rate_hz))
            skipped.append(True)
    return BeatAnnotation(pairs, skipped)


def accuracy(
    path: AlignmentPath,
    truth: BeatAnnotation,
    perf_rate_hz: float,
    score_rate_hz: float,
    thresholds_ms: tuple[int, ...] = DEFAULT_THRESHOLDS_MS,
    engine: str = "",
) -> AccuracyReport:
    """Percentage of ground-truth beats matched within each threshold.

    The path may cross a score beat several times (jump engines); each truth
    pair is scored against its nearest predicted pass.
    """
    if not truth.pairs:
        raise ValueError("empty beat annotation")
    errors = []
    for score_t, perf_t in truth.pairs:
        sf = int(round(score_t * score_rate_hz))
        candidates = performance_frames_at(path, sf)
        predicted = np.array(candidates) / perf_rate_hz
        errors.append(np.abs(predicted - perf_t).min())
    errors = np.array(errors)
    percents = [
        float(100.0 * np.mean(errors <= thr / 1000.0)) for thr in thresholds_ms
    ]
    return AccuracyReport(engine, tuple(thresholds_ms), percents, len(errors))


def compare_engines(
    csm: CrossSimilarityMatrix,
    points: InflectionPointList,
    truth: BeatAnnotation,
    nwtw_params: NWTWParams = NWTWParams(),
    thresholds_ms: tuple[int, ...] = DEFAULT_THRESHOLDS_MS,
) -> list[AccuracyReport]:
    """Run all engines on one piece; rows ordered by engine name."""
    perf_rate = csm.performance_frame_rate_hz
    score_rate = csm.score_frame_rate_hz
    paths = {
        "dtw": dtw(csm),
        "jumpdtw": jump_dtw(csm, points),
        "nwtw": nwtw_align(csm, nwtw_params),
    }
    return [
        accuracy(paths[name], truth, perf_rate, score_rate, thresholds_ms, name)
        for name in sorted(paths)
    ]


def merge_reports(reports: list[AccuracyReport], engine: str) -> AccuracyReport:
    """Beat-weighted aggregate of per-piece reports for one engine."""
    if not reports:
        raise ValueError("no reports to merge")
    thresholds = reports[0].thresholds_ms
    total = sum(r.num_beats for r in reports)
    percents = [
        sum(r.accuracy_percent[i] * r.num_beats for r in reports) / total
        for i in range(len(thresholds))
    ]
    return AccuracyReport(engine, thresholds, percents, total)


def reports_to_csv(path, reports: list[AccuracyReport]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["engine"] + [f"<{t}ms" for t in reports[0].thresholds_ms]
                        + ["num_beats"])
        for r in reports:
            writer.writerow([r.engine] + [f"{a:.1f}" for a in r.accuracy_percent]
                            + [r.num_beats])


def reports_table(reports: list[AccuracyReport]) -> str:
    """Aligned text table, one engine per row, one threshold per column."""
    headers = ["Engine"] + [f"<{t}ms" for t in reports[0].thresholds_ms]
    rows = [[r.engine] + [f"{a:.1f}" for a in r.accuracy_percent] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)
