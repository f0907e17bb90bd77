"""Synthetic performances with structural deviations and exact ground truth.

A StructurePlan lists contiguous score segments played in performance order;
discontinuities between consecutive segments are the structural deviations
(backward jumps for repeats, forward jumps for skips). The plan determines
both the per-frame warp map and the inflection points used as jump edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSequence, _normalize_frames
from .ingest import DEFAULT_TEMPO_USPQ, MidiScore, Note, midi_to_piano_roll
from .neural import InflectionPointList, encode_targets
from .simgrid import NetworkInputGrid, cross_similarity, to_network_input


@dataclass(frozen=True)
class Segment:
    score_start: int  # inclusive
    score_end: int    # inclusive
    tempo_factor: float = 1.0

    @property
    def num_score_frames(self) -> int:
        return self.score_end - self.score_start + 1

    @property
    def num_performance_frames(self) -> int:
        return max(1, round(self.num_score_frames / self.tempo_factor))


@dataclass
class WarpMap:
    """Score frame for every performance frame 0..len-1."""

    score_frames: np.ndarray

    def __len__(self) -> int:
        return len(self.score_frames)


@dataclass
class StructurePlan:
    segments: list[Segment]

    def __post_init__(self):
        self.segments = _merge_contiguous(self.segments)

    def performance_length(self) -> int:
        return sum(s.num_performance_frames for s in self.segments)

    def warp_map(self) -> WarpMap:
        frames = []
        for seg in self.segments:
            n_out = seg.num_performance_frames
            n_in = seg.num_score_frames
            idx = seg.score_start + np.floor(
                (np.arange(n_out) + 0.5) * n_in / n_out).astype(int)
            frames.append(np.minimum(idx, seg.score_end))
        return WarpMap(np.concatenate(frames))

    def inflection_points(self) -> InflectionPointList:
        points = []
        perf_pos = 0
        for prev, nxt in zip(self.segments, self.segments[1:]):
            perf_pos += prev.num_performance_frames
            if nxt.score_start != prev.score_end + 1:
                points.append((perf_pos - 1, prev.score_end))  # subpath end
                points.append((perf_pos, nxt.score_start))     # subpath begin
        return InflectionPointList(points)


def _merge_contiguous(segments: list[Segment]) -> list[Segment]:
    merged: list[Segment] = []
    for seg in segments:
        if seg.score_start > seg.score_end:
            raise ValueError(f"empty segment {seg}")
        if (merged and seg.score_start == merged[-1].score_end + 1
                and seg.tempo_factor == merged[-1].tempo_factor):
            merged[-1] = Segment(merged[-1].score_start, seg.score_end, seg.tempo_factor)
        else:
            merged.append(seg)
    return merged


@dataclass
class PlanConfig:
    num_repeats: int = 1
    jump_prob: float = 0.0
    tempo_range: tuple[float, float] = (0.8, 1.2)
    min_segment_frames: int = 8


def sample_plan(score_len: int, rng_seed: int, config: PlanConfig = PlanConfig()) -> StructurePlan:
    """Random plan over [0, score_len): repeats re-enter blocks, skips drop them."""
    if score_len < 2 * config.min_segment_frames:
        raise ValueError(
            f"score too short: {score_len} < 2 x {config.min_segment_frames} frames")
    rng = np.random.default_rng(rng_seed)
    if config.num_repeats == 0 and config.jump_prob == 0:
        return StructurePlan([Segment(0, score_len - 1, 1.0)])

    max_blocks = score_len // config.min_segment_frames
    n_blocks = int(min(max(2, config.num_repeats + 1 + rng.integers(0, 2)), max_blocks))
    # distinct interior cut points keeping every block >= min_segment_frames
    slack = score_len - n_blocks * config.min_segment_frames
    extra = rng.multinomial(slack, np.ones(n_blocks) / n_blocks)
    sizes = config.min_segment_frames + extra
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    blocks = [(int(bounds[i]), int(bounds[i + 1]) - 1) for i in range(n_blocks)]

    order = list(range(n_blocks))
    for _ in range(config.num_repeats):
        j = int(rng.integers(0, len(order)))
        order.insert(j + 1, order[j])  # replay the block: backward jump
    if len(order) > 2 and rng.random() < config.jump_prob:
        # drop one middle block occurrence: forward jump
        j = int(rng.integers(1, len(order) - 1))
        del order[j]

    lo, hi = config.tempo_range
    segments = [
        Segment(blocks[b][0], blocks[b][1], float(rng.uniform(lo, hi))) for b in order
    ]
    return StructurePlan(segments)


def render_performance(
    score: FeatureSequence,
    plan: StructurePlan,
    noise_std: float = 0.0,
    rng_seed: int = 0,
) -> tuple[FeatureSequence, WarpMap, InflectionPointList]:
    """Resample score segments per plan (nearest neighbor) and add chroma noise."""
    score_len = len(score)
    for seg in plan.segments:
        if not (0 <= seg.score_start <= seg.score_end < score_len):
            raise ValueError(f"segment {seg} outside score of length {score_len}")
    warp = plan.warp_map()
    vectors = score.vectors[warp.score_frames]
    if noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        vectors = vectors + rng.normal(0.0, noise_std, vectors.shape)
        vectors = _normalize_frames(np.clip(vectors, 0.0, None))
    return (
        FeatureSequence(vectors, score.frame_rate_hz, score.source_kind),
        warp,
        plan.inflection_points(),
    )


# ---------------------------------------------------------------------------
# procedural source material (random diatonic scores)

_MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)


def random_score(
    rng_seed: int,
    num_notes: int = 48,
    tonic_pitch: int = 60,
    note_seconds: float = 0.25,
) -> MidiScore:
    """Random diatonic note sequence with a quarter-note beat grid at 120 bpm."""
    rng = np.random.default_rng(rng_seed)
    notes = []
    t = 0.0
    for _ in range(num_notes):
        degree = int(rng.integers(0, len(_MAJOR_SCALE)))
        octave = int(rng.integers(-1, 2))
        pitch = tonic_pitch + _MAJOR_SCALE[degree] + 12 * octave
        notes.append(Note(t, note_seconds, pitch, int(rng.integers(48, 112))))
        t += note_seconds
    tpq = 480
    total_quarters = int(np.ceil(t / 0.5))
    beat_times = [0.5 * k for k in range(total_quarters + 1)]
    return MidiScore(notes, [(0, DEFAULT_TEMPO_USPQ)], tpq, beat_times)


def score_features(score: MidiScore, frame_rate_hz: float | None = None) -> FeatureSequence:
    from .features import chroma_from_piano_roll
    from .ingest import DEFAULT_FRAME_RATE_HZ

    rate = DEFAULT_FRAME_RATE_HZ if frame_rate_hz is None else frame_rate_hz
    return chroma_from_piano_roll(midi_to_piano_roll(score, rate))


# ---------------------------------------------------------------------------
# dataset protocol: per piece, one identity variant + structured variants


@dataclass
class DatasetSample:
    grid: NetworkInputGrid
    target: np.ndarray
    warp: WarpMap
    plan: StructurePlan
    points: InflectionPointList
    piece_index: int
    variant: int
    split: str  # "train" or "val"
    performance: FeatureSequence | None = None
    score: FeatureSequence | None = None


def build_dataset(
    scores: list[FeatureSequence],
    variants_per_piece: int = 5,
    seed: int = 0,
    noise_std: float = 0.05,
    input_size: int = 128,
    plan_config: PlanConfig = PlanConfig(),
    val_fraction: float = 0.1,
    keep_sequences: bool = False,
) -> list[DatasetSample]:
    """Deterministic corpus with 90/10 piece-level train/validation split."""
    if not scores:
        raise ValueError("no source scores")
    n_val = max(1, round(val_fraction * len(scores))) if len(scores) > 1 else 0
    rng = np.random.default_rng(seed)
    val_pieces = set(rng.choice(len(scores), size=n_val, replace=False).tolist())

    samples = []
    for piece_index, score in enumerate(scores):
        for variant in range(variants_per_piece):
            sample_seed = seed * 1_000_003 + piece_index * 101 + variant
            if variant == 0:
                plan = StructurePlan([Segment(0, len(score) - 1, 1.0)])
            else:
                cfg = PlanConfig(
                    num_repeats=1 + (variant - 1) % 2,
                    jump_prob=plan_config.jump_prob,
                    tempo_range=plan_config.tempo_range,
                    min_segment_frames=plan_config.min_segment_frames,
                )
                plan = sample_plan(len(score), sample_seed, cfg)
            performance, warp, points = render_performance(
                score, plan, noise_std, sample_seed)
            csm = cross_similarity(performance, score)
            grid = to_network_input(csm, input_size)
            target = encode_targets(points, len(performance), len(score))
            samples.append(DatasetSample(
                grid, target, warp, plan, points, piece_index, variant,
                "val" if piece_index in val_pieces else "train",
                performance if keep_sequences else None,
                score if keep_sequences else None,
            ))
    return samples
