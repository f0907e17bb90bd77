"""Standard MIDI File parsing, piano rolls, and PCM WAV reading."""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

# 22050 Hz sample rate / 512-sample hop: symbolic and audio features share
# this time base by default.
DEFAULT_FRAME_RATE_HZ = 22050.0 / 512.0

DEFAULT_TEMPO_USPQ = 500_000


class MidiParseError(ValueError):
    """Malformed SMF input; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(ValueError):
    """Input file is structurally valid but not a supported variant."""


@dataclass(frozen=True)
class Note:
    onset_seconds: float
    duration_seconds: float
    pitch: int
    velocity: int


@dataclass
class MidiScore:
    """Parsed score: resolved note events plus tempo map and beat grid."""

    notes: list[Note]
    tempo_map: list[tuple[int, int]]  # (tick, microseconds per quarter)
    ticks_per_quarter: int
    beat_times: list[float] = field(default_factory=list)

    def total_duration_seconds(self) -> float:
        end = 0.0
        for n in self.notes:
            end = max(end, n.onset_seconds + n.duration_seconds)
        if self.beat_times:
            end = max(end, self.beat_times[-1])
        return end


@dataclass
class PianoRoll:
    frames: np.ndarray  # [num_frames x 128], velocity-scaled activations
    frame_rate_hz: float


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate_hz: int

    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str = "byte") -> int:
        return self.need(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack(">H", self.need(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack(">I", self.need(4, what))[0]

    def varint(self, what: str = "variable-length quantity") -> int:
        value = 0
        for _ in range(4):
            b = self.u8(what)
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError(f"overlong {what}", self.pos)


def _tick_to_seconds(tick: int, tempo_map: list[tuple[int, int]], tpq: int) -> float:
    seconds = 0.0
    prev_tick, prev_uspq = tempo_map[0]
    for t, uspq in tempo_map[1:]:
        if t >= tick:
            break
        seconds += (t - prev_tick) * prev_uspq / (tpq * 1e6)
        prev_tick, prev_uspq = t, uspq
    seconds += (tick - prev_tick) * prev_uspq / (tpq * 1e6)
    return seconds


def _seconds_to_tick(seconds: float, tempo_map: list[tuple[int, int]], tpq: int) -> int:
    elapsed = 0.0
    prev_tick, prev_uspq = tempo_map[0]
    for t, uspq in tempo_map[1:]:
        span = (t - prev_tick) * prev_uspq / (tpq * 1e6)
        if elapsed + span >= seconds:
            break
        elapsed += span
        prev_tick, prev_uspq = t, uspq
    return prev_tick + round((seconds - elapsed) * 1e6 * tpq / prev_uspq)


_CHANNEL_DATA_BYTES = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def parse_midi(data: bytes) -> MidiScore:
    """Parse an SMF format 0/1 byte string into a MidiScore.

    Unmatched Note-Ons are closed at end of track. Tempo changes are merged
    across tracks and applied piecewise when converting ticks to seconds.
    """
    r = _Reader(data)
    if r.need(4, "header chunk") != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = r.u32("header length")
    if header_len < 6:
        raise MidiParseError("header chunk too short", r.pos)
    fmt = r.u16("format")
    ntrks = r.u16("track count")
    division = r.u16("division")
    r.need(header_len - 6, "header padding")
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks per quarter", 12)
    tpq = division

    tempo_events: list[tuple[int, int]] = []
    raw_notes: list[tuple[int, int, int, int]] = []  # (on_tick, off_tick, pitch, vel)
    max_tick = 0

    for _ in range(ntrks):
        if r.need(4, "track chunk") != b"MTrk":
            raise MidiParseError("missing MTrk chunk", r.pos - 4)
        trk_len = r.u32("track length")
        trk_end = r.pos + trk_len
        if trk_end > len(r.data):
            raise MidiParseError("track length exceeds file size", r.pos)
        tick = 0
        running_status = None
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        ended = False
        while r.pos < trk_end and not ended:
            tick += r.varint()
            b = r.u8("event status")
            if b < 0x80:
                if running_status is None:
                    raise MidiParseError("data byte without running status", r.pos - 1)
                status = running_status
                first_data = b
            else:
                status = b
                first_data = None
            kind = status & 0xF0
            if status == 0xFF:
                meta_type = r.u8("meta type")
                meta_len = r.varint("meta length")
                payload = r.need(meta_len, "meta payload")
                if meta_type == 0x51:
                    if meta_len != 3:
                        raise MidiParseError("bad tempo meta length", r.pos)
                    tempo_events.append((tick, int.from_bytes(payload, "big")))
                elif meta_type == 0x2F:
                    ended = True
                running_status = None
            elif status in (0xF0, 0xF7):
                r.need(r.varint("sysex length"), "sysex payload")
                running_status = None
            elif kind in _CHANNEL_DATA_BYTES:
                running_status = status
                nbytes = _CHANNEL_DATA_BYTES[kind]
                if first_data is None:
                    first_data = r.u8("event data")
                data2 = r.u8("event data") if nbytes == 2 else 0
                channel = status & 0x0F
                if kind == 0x90 and data2 > 0:
                    open_notes.setdefault((channel, first_data), []).append((tick, data2))
                elif kind == 0x80 or (kind == 0x90 and data2 == 0):
                    stack = open_notes.get((channel, first_data))
                    if stack:
                        on_tick, vel = stack.pop(0)
                        off = tick if tick > on_tick else on_tick + 1
                        raw_notes.append((on_tick, off, first_data, vel))
            else:
                raise MidiParseError(f"unknown status byte 0x{status:02x}", r.pos - 1)
        # lossy files: close anything still sounding at end of track
        for (channel, pitch), stack in open_notes.items():
            for on_tick, vel in stack:
                off = tick if tick > on_tick else on_tick + 1
                raw_notes.append((on_tick, off, pitch, vel))
        max_tick = max(max_tick, tick)
        r.pos = trk_end

    tempo_events.sort(key=lambda e: e[0])
    tempo_map: list[tuple[int, int]] = []
    for t, uspq in tempo_events:
        if tempo_map and tempo_map[-1][0] == t:
            tempo_map[-1] = (t, uspq)
        else:
            tempo_map.append((t, uspq))
    if not tempo_map or tempo_map[0][0] > 0:
        tempo_map.insert(0, (0, DEFAULT_TEMPO_USPQ))

    notes = []
    for on_tick, off_tick, pitch, vel in sorted(raw_notes):
        onset = _tick_to_seconds(on_tick, tempo_map, tpq)
        offset = _tick_to_seconds(off_tick, tempo_map, tpq)
        notes.append(Note(onset, offset - onset, pitch, vel))
        max_tick = max(max_tick, off_tick)

    beat_times = [
        _tick_to_seconds(t, tempo_map, tpq) for t in range(0, max_tick + 1, tpq)
    ]
    return MidiScore(notes, tempo_map, tpq, beat_times)


def _encode_varint(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def midi_bytes(score: MidiScore) -> bytes:
    """Serialize a MidiScore to SMF format 0 (1-tick onset/duration quantization)."""
    tpq = score.ticks_per_quarter
    # (tick, priority, payload); tempo first, then note-offs, then note-ons
    events: list[tuple[int, int, bytes]] = []
    for tick, uspq in score.tempo_map:
        events.append((tick, 0, b"\xff\x51\x03" + uspq.to_bytes(3, "big")))
    for n in score.notes:
        on = _seconds_to_tick(n.onset_seconds, score.tempo_map, tpq)
        off = _seconds_to_tick(n.onset_seconds + n.duration_seconds, score.tempo_map, tpq)
        if off <= on:
            off = on + 1
        events.append((on, 2, bytes([0x90, n.pitch, n.velocity])))
        events.append((off, 1, bytes([0x80, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    body = io.BytesIO()
    prev_tick = 0
    for tick, _, payload in events:
        body.write(_encode_varint(tick - prev_tick))
        body.write(payload)
        prev_tick = tick
    body.write(_encode_varint(0) + b"\xff\x2f\x00")
    track = body.getvalue()
    return (
        b"MThd" + struct.pack(">IHHH", 6, 0, 1, tpq)
        + b"MTrk" + struct.pack(">I", len(track)) + track
    )


def midi_to_piano_roll(
    score: MidiScore, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
) -> PianoRoll:
    """Rasterize notes to a [num_frames x 128] velocity-scaled activation grid.

    A pitch is active in frame f if the note overlaps [f/rate, (f+1)/rate);
    overlapping same-pitch notes take the max activation.
    """
    if frame_rate_hz <= 0:
        raise ValueError("frame_rate_hz must be positive")
    total = score.total_duration_seconds()
    num_frames = math.ceil(total * frame_rate_hz)
    frames = np.zeros((num_frames, 128))
    for n in score.notes:
        first = math.floor(n.onset_seconds * frame_rate_hz)
        last = math.ceil((n.onset_seconds + n.duration_seconds) * frame_rate_hz)
        first = max(first, 0)
        last = min(last, num_frames)
        if last > first:
            level = n.velocity / 127.0
            block = frames[first:last, n.pitch]
            np.maximum(block, level, out=block)
    return PianoRoll(frames, frame_rate_hz)


def read_wav(data: bytes) -> AudioClip:
    """Read RIFF/WAVE PCM16 bytes; stereo is averaged to mono, scaled by 1/32768."""
    try:
        with wave.open(io.BytesIO(data), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise UnsupportedFormatError(f"compressed WAV ({wf.getcomptype()})")
            if wf.getsampwidth() != 2:
                raise UnsupportedFormatError(
                    f"only 16-bit PCM supported, got {8 * wf.getsampwidth()}-bit"
                )
            n_channels = wf.getnchannels()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(str(exc)) from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples / 32768.0, rate)
