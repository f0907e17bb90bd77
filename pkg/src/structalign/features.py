"""Chroma feature sequences from piano rolls or audio, plus FSEQ1 file I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .ingest import AudioClip, PianoRoll

CHROMA_DIMS = 12

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_WINDOW = 2048
DEFAULT_HOP = 512

# equal-tempered mapping bounds: A0 through C8
MIN_FREQ_HZ = 27.5
MAX_FREQ_HZ = 4186.0

FSEQ_MAGIC = b"FSEQ1"

SourceKind = Literal["symbolic", "audio"]


class FormatError(ValueError):
    """Corrupt or mislabeled binary feature/matrix file."""


@dataclass
class FeatureSequence:
    """Time-ordered 12-dim chroma vectors with frame-rate metadata."""

    vectors: np.ndarray  # [num_frames x 12]
    frame_rate_hz: float
    source_kind: SourceKind = "symbolic"

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != CHROMA_DIMS:
            raise ValueError(f"expected [n x {CHROMA_DIMS}] vectors, got {self.vectors.shape}")

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _normalize_frames(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize each frame; all-zero frames stay zero."""
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return vectors / safe


def chroma_from_piano_roll(roll: PianoRoll) -> FeatureSequence:
    """Fold the 128-pitch activation grid onto 12 pitch classes and normalize."""
    num_frames = roll.frames.shape[0]
    padded = np.zeros((num_frames, 132))
    padded[:, :128] = roll.frames
    chroma = np.zeros((num_frames, CHROMA_DIMS))
    # accumulate octave by octave: keeps the fold bit-exact under +12 shifts
    for octave in range(11):
        chroma += padded[:, octave * CHROMA_DIMS : (octave + 1) * CHROMA_DIMS]
    return FeatureSequence(_normalize_frames(chroma), roll.frame_rate_hz, "symbolic")


def _bin_pitch_classes(window: int, sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Pitch class per rFFT bin, and a keep-mask for bins inside [A0, C8]."""
    freqs = np.arange(window // 2 + 1) * sample_rate / window
    keep = (freqs >= MIN_FREQ_HZ) & (freqs <= MAX_FREQ_HZ)
    classes = np.zeros(len(freqs), dtype=int)
    nz = freqs > 0
    midi = np.zeros(len(freqs))
    midi[nz] = 69 + 12 * np.log2(freqs[nz] / 440.0)
    classes[nz] = np.round(midi[nz]).astype(int) % 12
    return classes, keep


def chroma_from_audio(
    clip: AudioClip, window: int = DEFAULT_WINDOW, hop: int = DEFAULT_HOP
) -> FeatureSequence:
    """STFT-based chroma: Hann-window magnitudes binned to nearest semitone class.

    Frames start at sample 0 with no padding: 1 + (len - window)//hop frames.
    """
    if window <= 0 or window & (window - 1):
        raise ValueError("window must be a power of two")
    if not 0 < hop <= window:
        raise ValueError("hop must satisfy 0 < hop <= window")
    samples = np.asarray(clip.samples, dtype=np.float64)
    if len(samples) < window:
        raise ValueError(f"clip too short: {len(samples)} samples < window {window}")

    num_frames = 1 + (len(samples) - window) // hop
    hann = np.hanning(window)
    offsets = np.arange(num_frames) * hop
    frames = samples[offsets[:, None] + np.arange(window)] * hann
    mags = np.abs(np.fft.rfft(frames, axis=1))

    classes, keep = _bin_pitch_classes(window, clip.sample_rate_hz)
    chroma = np.zeros((num_frames, CHROMA_DIMS))
    for pitch_class in range(CHROMA_DIMS):
        cols = keep & (classes == pitch_class)
        chroma[:, pitch_class] = mags[:, cols].sum(axis=1)
    frame_rate = clip.sample_rate_hz / hop
    return FeatureSequence(_normalize_frames(chroma), frame_rate, "audio")


def save_fseq(path, seq: FeatureSequence) -> None:
    """Write FSEQ1: magic, u32 frames, u32 dims, f64 frame rate, f32 row-major."""
    with open(path, "wb") as f:
        f.write(FSEQ_MAGIC)
        f.write(struct.pack("<IId", len(seq), CHROMA_DIMS, seq.frame_rate_hz))
        f.write(seq.vectors.astype("<f4").tobytes())


def load_fseq(path, source_kind: SourceKind = "symbolic") -> FeatureSequence:
    with open(path, "rb") as f:
        if f.read(len(FSEQ_MAGIC)) != FSEQ_MAGIC:
            raise FormatError(f"{path}: not an FSEQ1 file")
        num_frames, dims, frame_rate = struct.unpack("<IId", f.read(16))
        if dims != CHROMA_DIMS:
            raise FormatError(f"{path}: expected {CHROMA_DIMS} dims, got {dims}")
        raw = f.read(num_frames * dims * 4)
        if len(raw) != num_frames * dims * 4:
            raise FormatError(f"{path}: truncated frame data")
    vectors = np.frombuffer(raw, dtype="<f4").reshape(num_frames, dims)
    return FeatureSequence(vectors, frame_rate, source_kind)


def fseq_to_csv(path, seq: FeatureSequence) -> None:
    """One frame per line, 12 comma-separated values."""
    np.savetxt(path, seq.vectors, fmt="%.9g", delimiter=",")
