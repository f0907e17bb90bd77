import numpy as np
import pytest

from oracles import dft_chroma_frame
from structalign.features import (
    FeatureSequence,
    chroma_from_audio,
    chroma_from_piano_roll,
    fseq_to_csv,
    load_fseq,
    save_fseq,
)
from structalign.ingest import AudioClip, PianoRoll


def _roll(frames: np.ndarray) -> PianoRoll:
    return PianoRoll(frames, 10.0)


class TestPianoRollChroma:
    def test_single_pitch_unit_vector(self):
        frames = np.zeros((1, 128))
        frames[0, 60] = 1.0
        seq = chroma_from_piano_roll(_roll(frames))
        expected = np.zeros(12)
        expected[0] = 1.0  # 60 mod 12 = 0 (C)
        np.testing.assert_allclose(seq.vectors[0], expected)

    def test_octave_fold(self):
        frames = np.zeros((1, 128))
        frames[0, 60] = 1.0
        frames[0, 72] = 1.0
        seq = chroma_from_piano_roll(_roll(frames))
        assert seq.vectors[0, 0] == pytest.approx(1.0)
        assert np.linalg.norm(seq.vectors[0]) == pytest.approx(1.0)

    def test_zero_frame_stays_zero(self):
        seq = chroma_from_piano_roll(_roll(np.zeros((3, 128))))
        assert not seq.vectors.any()

    def test_transposition_by_octave_invariant(self):
        rng = np.random.default_rng(0)
        frames = np.zeros((8, 128))
        frames[:, 30:60] = rng.random((8, 30))
        shifted = np.zeros_like(frames)
        shifted[:, 42:72] = frames[:, 30:60]
        a = chroma_from_piano_roll(_roll(frames)).vectors
        b = chroma_from_piano_roll(_roll(shifted)).vectors
        np.testing.assert_array_equal(a, b)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        frames = rng.random((5, 128))
        a = chroma_from_piano_roll(_roll(frames)).vectors
        b = chroma_from_piano_roll(_roll(frames * 37.5)).vectors
        np.testing.assert_allclose(a, b, atol=1e-9)


def _sine(freq: float, seconds: float = 0.6, sr: int = 22050) -> AudioClip:
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(0.8 * np.sin(2 * np.pi * freq * t), sr)


class TestAudioChroma:
    def test_a440_dominant(self):
        seq = chroma_from_audio(_sine(440.0), window=2048, hop=512)
        assert np.argmax(seq.vectors.sum(axis=0)) == 9  # A
        assert np.all(seq.vectors[:, 9] > 0.9)

    def test_c261_dominant(self):
        seq = chroma_from_audio(_sine(261.63), window=2048, hop=512)
        assert np.argmax(seq.vectors.sum(axis=0)) == 0  # C

    def test_matches_direct_dft_oracle(self):
        clip = _sine(330.0, seconds=0.2)
        seq = chroma_from_audio(clip, window=2048, hop=512)
        frame = clip.samples[:2048] * np.hanning(2048)
        np.testing.assert_allclose(
            seq.vectors[0], dft_chroma_frame(frame, 22050), atol=1e-8)

    def test_silence_all_zero(self):
        seq = chroma_from_audio(AudioClip(np.zeros(4096), 22050))
        assert not seq.vectors.any()

    def test_frame_count_formula(self):
        clip = AudioClip(np.zeros(5000), 22050)
        seq = chroma_from_audio(clip, window=2048, hop=512)
        assert len(seq) == 1 + (5000 - 2048) // 512

    def test_too_short(self):
        with pytest.raises(ValueError):
            chroma_from_audio(AudioClip(np.zeros(100), 22050), window=2048, hop=512)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            chroma_from_audio(AudioClip(np.zeros(4096), 22050), window=1000, hop=100)


class TestFseqFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        seq = FeatureSequence(rng.random((17, 12)), 43.07, "audio")
        p1, p2 = tmp_path / "a.fseq", tmp_path / "b.fseq"
        save_fseq(p1, seq)
        loaded = load_fseq(p1, "audio")
        assert loaded.frame_rate_hz == seq.frame_rate_hz
        save_fseq(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_export(self, tmp_path):
        seq = FeatureSequence(np.eye(12)[:3], 10.0)
        out = tmp_path / "x.csv"
        fseq_to_csv(out, seq)
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 3
        assert len(rows[0].split(",")) == 12
