"""Action-to-event conversion in the Linux multitouch (type B, single slot) protocol.

Every action becomes one block:

* start: ABS_MT_TRACKING_ID <id>, BTN_TOUCH 1, ABS_MT_POSITION_X, ABS_MT_POSITION_Y, SYN_REPORT
* body:  ABS_MT_POSITION_X, ABS_MT_POSITION_Y, SYN_REPORT per further frame
  (LONG_TAP re-emits its centroid, GESTURE walks its path; TAP has no body)
* end:   ABS_MT_TRACKING_ID -1, BTN_TOUCH 0, SYN_REPORT

Bursts are stamped 33 ms apart, one per video frame.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .core import FRAME_US, ActionKind, DeviceProfile, TouchReplayError
from .classify import Action, ActionList, TouchTrack

EV_SYN = 0x0000
EV_KEY = 0x0001
EV_ABS = 0x0003
SYN_REPORT = 0x0000
BTN_TOUCH = 0x014A
ABS_MT_POSITION_X = 0x0035
ABS_MT_POSITION_Y = 0x0036
ABS_MT_TRACKING_ID = 0x0039
RELEASE = -1  # serialized as 0xffffffff


class ScriptError(TouchReplayError):
    pass


class OutOfBounds(ScriptError):
    pass


class OverlapError(ScriptError):
    pass


@dataclass(frozen=True)
class LowLevelEvent:
    timestamp_us: int
    event_type: int
    event_code: int
    value: int

    def __post_init__(self):
        if not (0 <= self.event_type <= 0xFFFF and 0 <= self.event_code <= 0xFFFF):
            raise ValueError("event type and code are 16-bit")
        if not -(2**31) <= self.value < 2**31:
            raise ValueError("event value is a signed 32-bit integer")


@dataclass
class ReplayScript:
    device: str
    events: list[LowLevelEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def dumps(self) -> str:
        return "".join(format_event(e, self.device) + "\n" for e in self.events)

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str) -> "ReplayScript":
        device = None
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            dev, ev = parse_event_line(line, lineno)
            if device is None:
                device = dev
            elif dev != device:
                raise ScriptError(f"line {lineno}: device {dev} differs from {device}")
            events.append(ev)
        return cls(device or "", events)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReplayScript":
        return cls.loads(Path(path).read_text())


def format_event(e: LowLevelEvent, device: str) -> str:
    return "[%10.6f] %s: %04x %04x %08x" % (e.timestamp_us / 1e6, device, e.event_type,
                                             e.event_code, e.value & 0xFFFFFFFF)


LINE_RE = re.compile(r"^\[\s*(\d+\.\d{6})\] (\S+): ([0-9a-f]{4}) ([0-9a-f]{4}) ([0-9a-f]{8})$")


def parse_event_line(line: str, lineno: int = 0) -> tuple[str, LowLevelEvent]:
    m = LINE_RE.match(line.rstrip("\n"))
    if not m:
        raise ScriptError(f"line {lineno}: not a sendevent log line: {line!r}")
    secs, dev, t, c, v = m.groups()
    whole, frac = secs.split(".")
    ts = int(whole) * 1_000_000 + int(frac)
    value = int(v, 16)
    if value >= 2**31:
        value -= 2**32
    return dev, LowLevelEvent(ts, int(t, 16), int(c, 16), value)


def centroid(track: TouchTrack) -> tuple[float, float]:
    pts = track.centroid_path
    if not pts:
        raise ValueError("empty track")
    return (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))


def scale_to_device(p: tuple[float, float], profile: DeviceProfile) -> tuple[int, int]:
    x, y = p
    if not (0 <= x <= profile.screen_width and 0 <= y <= profile.screen_height):
        raise OutOfBounds(f"point ({x}, {y}) outside {profile.screen_width}x{profile.screen_height}")
    return (int(round(x * profile.axis_max_x / profile.screen_width)),
            int(round(y * profile.axis_max_y / profile.screen_height)))


def _position(t: int, xy: tuple[int, int]) -> list[LowLevelEvent]:
    return [LowLevelEvent(t, EV_ABS, ABS_MT_POSITION_X, xy[0]),
            LowLevelEvent(t, EV_ABS, ABS_MT_POSITION_Y, xy[1]),
            LowLevelEvent(t, EV_SYN, SYN_REPORT, 0)]


def action_to_events(action: Action, profile: DeviceProfile, base_time_us: int,
                     tracking_id: int = 1) -> list[LowLevelEvent]:
    """Event block for one action; the finger lifts ``duration_frames`` frames after touch-down."""
    path = action.track.path
    if action.kind is ActionKind.GESTURE:
        bursts = [(p.frame - action.start_frame, scale_to_device((p.x, p.y), profile)) for p in path]
    else:
        c = scale_to_device(centroid(action.track), profile)
        n = action.duration_frames if action.kind is ActionKind.LONG_TAP else 1
        bursts = [(k, c) for k in range(n)]

    t0 = base_time_us
    events = [LowLevelEvent(t0, EV_ABS, ABS_MT_TRACKING_ID, tracking_id),
              LowLevelEvent(t0, EV_KEY, BTN_TOUCH, 1)]
    events += _position(t0, bursts[0][1])
    for offset, xy in bursts[1:]:
        events += _position(base_time_us + FRAME_US * offset, xy)
    t_up = base_time_us + FRAME_US * action.duration_frames
    events += [LowLevelEvent(t_up, EV_ABS, ABS_MT_TRACKING_ID, RELEASE),
               LowLevelEvent(t_up, EV_KEY, BTN_TOUCH, 0),
               LowLevelEvent(t_up, EV_SYN, SYN_REPORT, 0)]
    return events


def generate_script(actions: ActionList, profile: DeviceProfile) -> ReplayScript:
    events: list[LowLevelEvent] = []
    prev = None
    for k, action in enumerate(actions, start=1):
        if prev is not None and action.start_frame <= prev.end_frame:
            raise OverlapError(f"action {k} (frames {action.start_frame}-{action.end_frame}) overlaps "
                               f"action {k - 1} (frames {prev.start_frame}-{prev.end_frame})")
        events += action_to_events(action, profile, FRAME_US * action.start_frame, tracking_id=k)
        prev = action
    return ReplayScript(profile.event_device, events)


def translate_for_device(script: ReplayScript, profile: DeviceProfile | None = None) -> str:
    """Compact replay-agent format: ``<delay_us> <type> <code> <value>`` per line.

    The delay is relative to the previous event (the first is relative to 0).
    """
    lines = []
    prev = 0
    for e in script.events:
        lines.append(f"{e.timestamp_us - prev} {e.event_type} {e.event_code} {e.value}\n")
        prev = e.timestamp_us
    return "".join(lines)


def parse_translated(text: str, device: str) -> ReplayScript:
    events = []
    t = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if len(parts) != 4:
            raise ScriptError(f"line {lineno}: expected 4 fields, got {line!r}")
        delay, typ, code, value = (int(p) for p in parts)
        if delay < 0:
            raise ScriptError(f"line {lineno}: negative delay")
        t += delay
        events.append(LowLevelEvent(t, typ, code, value))
    return ReplayScript(device, events)
