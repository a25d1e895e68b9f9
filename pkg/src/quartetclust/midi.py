"""MIDI note extraction and the player-piano byte stream.

Stream layout (all values two's-complement signed bytes)::

    stream := track* ; tracks by decreasing average NoteOn velocity
    track  := step* END_TRACK
    step   := offset* END_STEP ; offsets ascending, each pitch once

``offset`` is the sounding pitch minus the track's modal pitch, clamped to
[-96, 96]. ``END_STEP`` is +127 (0x7F) and ``END_TRACK`` is -128 (0x80).
Steps are 0.05 s long with ticks converted at a fixed 120 BPM; tempo meta
events are ignored. Leading silent steps are kept, trailing ones dropped.
"""

from __future__ import annotations

import enum
import struct
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

__all__ = [
    "MidiError",
    "MalformedHeader",
    "TruncatedChunk",
    "UnsupportedFormat",
    "EmptyTrack",
    "EmptyTrackWarning",
    "NoteKind",
    "NoteEvent",
    "MidiFile",
    "TrackSummary",
    "QuantizedRoll",
    "END_STEP",
    "END_TRACK",
    "MAX_OFFSET",
    "STEP_SECONDS",
    "DEFAULT_TEMPO",
    "parse_midi",
    "summarize_track",
    "quantize",
    "step_of_seconds",
    "emit_stream",
    "decode_stream",
    "preprocess",
    "encode_midi",
]

END_STEP = 127
END_TRACK = -128
MAX_OFFSET = 96
STEP_SECONDS = Fraction(1, 20)
DEFAULT_TEMPO = 500_000  # microseconds per quarter note, i.e. 120 BPM


class MidiError(ValueError):
    pass


class MalformedHeader(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class EmptyTrack(MidiError):
    pass


class EmptyTrackWarning(UserWarning):
    pass


class NoteKind(enum.Enum):
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class NoteEvent:
    track_index: int
    tick: int
    kind: NoteKind
    pitch: int
    velocity: int
    channel: int = 0


@dataclass
class MidiFile:
    format: int
    division: int
    tracks: list[list[NoteEvent]]
    # tick of the last event (of any type) in each track
    end_ticks: list[int]

    @property
    def events(self):
        return [e for track in self.tracks for e in track]

    def ticks_per_second(self, tempo=DEFAULT_TEMPO) -> Fraction:
        if self.division & 0x8000:
            fps = -struct.unpack(">b", bytes([self.division >> 8]))[0]
            fps = Fraction(2997, 100) if fps == 29 else Fraction(fps)
            return fps * (self.division & 0xFF)
        return Fraction(self.division * 1_000_000, tempo)


def _read_vlq(data, pos, end):
    value = 0
    for _ in range(4):
        if pos >= end:
            raise TruncatedChunk("variable-length quantity runs past the chunk end")
        b = data[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise MidiError("variable-length quantity longer than 4 bytes")


def _parse_track(data, pos, end, index):
    events = []
    tick = 0
    running = None
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise TruncatedChunk(f"track {index}: event missing after delta time")
        status = data[pos]
        if status & 0x80:
            pos += 1
        elif running is None:
            raise MidiError(f"track {index}: data byte 0x{status:02X} without running status")
        else:
            status = running

        if status == 0xFF:
            running = None
            if pos >= end:
                raise TruncatedChunk(f"track {index}: truncated meta event")
            meta_type = data[pos]
            length, pos = _read_vlq(data, pos + 1, end)
            pos += length
            if pos > end:
                raise TruncatedChunk(f"track {index}: meta event overruns chunk")
            if meta_type == 0x2F:
                break
            continue
        if status in (0xF0, 0xF7):
            running = None
            length, pos = _read_vlq(data, pos, end)
            pos += length
            if pos > end:
                raise TruncatedChunk(f"track {index}: sysex overruns chunk")
            continue
        if status >= 0xF0:
            pos += {0xF1: 1, 0xF2: 2, 0xF3: 1}.get(status, 0)
            continue

        running = status
        size = 1 if status & 0xF0 in (0xC0, 0xD0) else 2
        if pos + size > end:
            raise TruncatedChunk(f"track {index}: channel message overruns chunk")
        msg = data[pos:pos + size]
        pos += size
        kind = status & 0xF0
        if kind in (0x80, 0x90):
            pitch, velocity = msg[0] & 0x7F, msg[1] & 0x7F
            on = kind == 0x90 and velocity > 0
            events.append(NoteEvent(index, tick, NoteKind.ON if on else NoteKind.OFF, pitch, velocity, status & 0x0F))
    return events, tick


def parse_midi(data: bytes) -> MidiFile:
    """Note-on/off events of a format 0 or 1 Standard MIDI File.

    Delta times are accumulated to absolute ticks and running status is
    honoured. Everything except note messages is skipped. A NoteOn with
    velocity 0 becomes a NoteOff.
    """
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd header chunk")
    (hlen,) = struct.unpack(">I", data[4:8])
    if hlen < 6:
        raise MalformedHeader(f"header length {hlen} < 6")
    if 8 + hlen > len(data):
        raise TruncatedChunk("header chunk runs past end of file")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("format 2 (independent sequences) is not supported")
    if fmt not in (0, 1):
        raise MalformedHeader(f"unknown MIDI format {fmt}")
    if division == 0:
        raise MalformedHeader("division must be non-zero")

    tracks, end_ticks = [], []
    pos = 8 + hlen
    while pos < len(data) and len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise TruncatedChunk("chunk header runs past end of file")
        kind = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        start, end = pos + 8, pos + 8 + length
        if end > len(data):
            raise TruncatedChunk(f"{kind!r} chunk claims {length} bytes, {len(data) - start} available")
        if kind == b"MTrk":
            events, last = _parse_track(data, start, end, len(tracks))
            tracks.append(events)
            end_ticks.append(last)
        pos = end
    if len(tracks) < ntracks:
        raise TruncatedChunk(f"header announces {ntracks} tracks, found {len(tracks)}")
    return MidiFile(fmt, division, tracks, end_ticks)


@dataclass(frozen=True)
class TrackSummary:
    average_volume: float
    modal_note: int


def summarize_track(events: Sequence[NoteEvent]) -> TrackSummary:
    """Mean NoteOn velocity and most frequent NoteOn pitch (lowest on ties)."""
    ons = [e for e in events if e.kind is NoteKind.ON]
    if not ons:
        raise EmptyTrack("track has no NoteOn events")
    counts = Counter(e.pitch for e in ons)
    top = max(counts.values())
    modal = min(p for p, c in counts.items() if c == top)
    return TrackSummary(sum(e.velocity for e in ons) / len(ons), modal)


def step_of_seconds(seconds) -> int:
    """Index of the 0.05 s step containing ``seconds`` (exact for decimal input)."""
    return int(Fraction(str(seconds)) // STEP_SECONDS)


@dataclass
class QuantizedRoll:
    """Sounding pitch sets per 0.05 s step, one list per kept track."""

    track_indices: list[int]
    steps: list[list[frozenset[int]]]

    def __len__(self):
        return len(self.steps)


def _track_steps(events, end_tick, tps):
    def step(tick):
        return int(Fraction(tick) / tps // STEP_SECONDS)

    by_step = defaultdict(list)
    for e in events:
        by_step[step(e.tick)].append(e)
    end_step = step(end_tick)
    last = max(max(by_step, default=0), end_step)
    active: Counter = Counter()
    steps = []
    for s in range(last + 1):
        for e in by_step.get(s, ()):
            key = (e.channel, e.pitch)
            if e.kind is NoteKind.ON:
                active[key] += 1
            elif active[key] > 0:
                active[key] -= 1
        if s >= end_step:
            active.clear()  # notes never switched off end with the track
        steps.append(frozenset(p for (_, p), c in active.items() if c > 0))
    while steps and not steps[-1]:
        steps.pop()
    return steps


def quantize(midi: MidiFile, tempo: int = DEFAULT_TEMPO, tracks: Sequence[int] | None = None) -> QuantizedRoll:
    """Quantize note events into 0.05 s steps at a fixed tempo.

    A pitch sounds in step ``s`` when more NoteOns than NoteOffs for it
    fall in steps ``<= s``; a note switched on and off in the same step
    never sounds.
    """
    tps = midi.ticks_per_second(tempo)
    if tracks is None:
        tracks = [i for i, t in enumerate(midi.tracks) if any(e.kind is NoteKind.ON for e in t)]
    steps = [_track_steps(midi.tracks[i], midi.end_ticks[i], tps) for i in tracks]
    return QuantizedRoll(list(tracks), steps)


def _to_byte(v):
    return v & 0xFF


def emit_stream(roll: QuantizedRoll, summaries: Sequence[TrackSummary]) -> bytes:
    """Encode a roll; ``summaries[i]`` describes ``roll.steps[i]``."""
    if len(summaries) != len(roll.steps):
        raise ValueError("need exactly one summary per roll track")
    order = sorted(range(len(roll.steps)), key=lambda i: -summaries[i].average_volume)
    out = bytearray()
    for i in order:
        modal = summaries[i].modal_note
        for sounding in roll.steps[i]:
            offsets = sorted({max(-MAX_OFFSET, min(MAX_OFFSET, p - modal)) for p in sounding})
            out.extend(_to_byte(o) for o in offsets)
            out.append(_to_byte(END_STEP))
        out.append(_to_byte(END_TRACK))
    return bytes(out)


def decode_stream(stream: bytes) -> list[list[list[int]]]:
    """Split a stream back into tracks of steps of signed offsets."""
    tracks, steps, current = [], [], []
    for b in stream:
        v = b - 256 if b > 127 else b
        if v == END_STEP:
            steps.append(current)
            current = []
        elif v == END_TRACK:
            if current:
                raise ValueError("track ended in the middle of a step")
            tracks.append(steps)
            steps = []
        else:
            if abs(v) > MAX_OFFSET:
                raise ValueError(f"offset {v} outside [-{MAX_OFFSET}, {MAX_OFFSET}]")
            current.append(v)
    if steps or current:
        raise ValueError("stream does not end with an end-of-track byte")
    return tracks


def preprocess(data: bytes, tempo: int = DEFAULT_TEMPO) -> bytes:
    """MIDI file bytes to player-piano stream bytes."""
    midi = parse_midi(data)
    kept, summaries = [], []
    for i, events in enumerate(midi.tracks):
        try:
            summaries.append(summarize_track(events))
        except EmptyTrack:
            warnings.warn(f"track {i} has no NoteOn events; dropped", EmptyTrackWarning, stacklevel=2)
            continue
        kept.append(i)
    if not kept:
        raise EmptyTrack("no track contains notes")
    return emit_stream(quantize(midi, tempo, kept), summaries)


# -- writing (synthetic data and tests) --------------------------------------


def _vlq(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def encode_midi(tracks: Sequence[Sequence[tuple[int, bytes]]], division: int = 480, fmt: int = 1,
                running_status: bool = True) -> bytes:
    """Build a Standard MIDI File from ``(absolute_tick, message)`` lists.

    Messages are raw status+data bytes (meta events included). An
    end-of-track meta event is appended to every track.
    """
    chunks = [b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)]
    for events in tracks:
        body = bytearray()
        last_tick = 0
        running = None
        for tick, msg in sorted(events, key=lambda e: e[0]):
            body += _vlq(tick - last_tick)
            last_tick = tick
            status = msg[0]
            if running_status and status < 0xF0 and status == running:
                body += msg[1:]
            else:
                body += msg
            running = status if status < 0xF0 else None
        body += _vlq(0) + b"\xff\x2f\x00"
        chunks.append(b"MTrk" + struct.pack(">I", len(body)) + bytes(body))
    return b"".join(chunks)
