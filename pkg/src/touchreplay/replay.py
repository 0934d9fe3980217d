"""Script consumers: a virtual single-slot touchscreen, and hardware replay via a device bridge."""
from __future__ import annotations

import logging
import os
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import FRAME_US, ClassifierParams, DeviceProfile, TouchReplayError
from .classify import ActionList, TouchTrack, TrackPoint, translate_action
from .scriptgen import (ABS_MT_POSITION_X, ABS_MT_POSITION_Y, ABS_MT_TRACKING_ID, BTN_TOUCH, EV_ABS, EV_KEY,
                        EV_SYN, SYN_REPORT, ReplayScript, format_event, translate_for_device)

log = logging.getLogger(__name__)

BRIDGE_ENV = "TOUCHREPLAY_BRIDGE"
DEFAULT_BRIDGE = "adb"


class ProtocolViolation(TouchReplayError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line}")
        self.lineno = lineno
        self.reason = reason


@dataclass
class ContactTrace:
    tracking_id: int
    down_time_us: int
    points: list[tuple[int, int, int]] = field(default_factory=list)
    up_time_us: Optional[int] = None

    @property
    def duration_us(self) -> int:
        return (self.up_time_us or self.down_time_us) - self.down_time_us


@dataclass
class VirtualDeviceState:
    contact: Optional[ContactTrace] = None
    touching: bool = False
    x: Optional[int] = None
    y: Optional[int] = None
    trace: list[ContactTrace] = field(default_factory=list)


def simulate(script: ReplayScript, profile: Optional[DeviceProfile] = None) -> list[ContactTrace]:
    """Feed ``script`` to a virtual type-B single-slot touchscreen and return completed contacts."""
    st = VirtualDeviceState()
    pending = False
    burst_t = None
    last_t = None
    assign = release = moved = False
    new_id = None
    btn = None

    for lineno, e in enumerate(script.events, 1):
        line = format_event(e, script.device)

        def fail(reason):
            raise ProtocolViolation(lineno, line, reason)

        if last_t is not None and e.timestamp_us < last_t:
            fail("timestamp goes backwards")
        if pending and e.timestamp_us != burst_t:
            fail("SYN_REPORT missing between bursts")
        last_t = e.timestamp_us
        if not pending:
            burst_t = e.timestamp_us
        pending = True

        active = (st.contact is not None or assign) and not release
        if e.event_type == EV_ABS and e.event_code == ABS_MT_TRACKING_ID:
            if e.value >= 0:
                if active:
                    fail("touch-down while a contact is active")
                assign, new_id = True, e.value
            else:
                if not active:
                    fail("release without an active contact")
                release = True
        elif e.event_type == EV_ABS and e.event_code in (ABS_MT_POSITION_X, ABS_MT_POSITION_Y):
            if not active:
                fail("position without an active contact")
            if profile is not None:
                hi = profile.axis_max_x if e.event_code == ABS_MT_POSITION_X else profile.axis_max_y
                if not 0 <= e.value <= hi:
                    fail("position outside the axis range")
            if e.event_code == ABS_MT_POSITION_X:
                st.x = e.value
            else:
                st.y = e.value
            moved = True
        elif e.event_type == EV_KEY and e.event_code == BTN_TOUCH:
            want = bool(e.value)
            current = st.touching if btn is None else btn
            if want == current:
                fail("BTN_TOUCH down twice" if want else "BTN_TOUCH up without down")
            btn = want
        elif e.event_type == EV_SYN and e.event_code == SYN_REPORT:
            t = e.timestamp_us
            if btn is not None:
                st.touching = btn
            if assign:
                if st.x is None or st.y is None or not moved:
                    fail("touch-down without a position")
                st.contact = ContactTrace(new_id, t)
            if st.contact is not None and moved and not release:
                if st.contact.points and st.contact.points[-1][0] >= t:
                    fail("two position bursts at one timestamp")
                st.contact.points.append((t, st.x, st.y))
            if release:
                st.contact.up_time_us = t
                st.trace.append(st.contact)
                st.contact = None
                st.x = st.y = None
            if st.touching != (st.contact is not None):
                fail("BTN_TOUCH state disagrees with the tracked contact")
            pending = False
            assign = release = moved = False
            btn = None
        else:
            fail(f"unsupported event {e.event_type:04x} {e.event_code:04x}")

    if pending:
        n = len(script.events)
        raise ProtocolViolation(n, format_event(script.events[-1], script.device), "script ends without SYN_REPORT")
    if st.contact is not None:
        n = len(script.events)
        raise ProtocolViolation(n, format_event(script.events[-1], script.device), "contact never released")
    return st.trace


def reconstruct_actions(traces: list[ContactTrace], params: ClassifierParams,
                        profile: DeviceProfile) -> ActionList:
    """Classify replayed contacts with the same rules used on detections."""
    params = params.resolve(profile)
    sx = profile.screen_width / profile.axis_max_x
    sy = profile.screen_height / profile.axis_max_y
    actions = []
    for tr in traces:
        start = int(round(tr.down_time_us / FRAME_US))
        duration = max(1, int(round(tr.duration_us / FRAME_US)))
        end = start + duration - 1
        pts = []
        for t, x, y in tr.points:
            f = min(end, start + int(round((t - tr.down_time_us) / FRAME_US)))
            if pts and pts[-1].frame == f:
                continue
            pts.append(TrackPoint(f, x * sx, y * sy))
        if pts[-1].frame < end:
            last = pts[-1]
            pts.append(TrackPoint(end, last.x, last.y))
        actions.append(translate_action(TouchTrack(pts), params))
    return ActionList(actions)


class BridgeError(TouchReplayError):
    pass


class BridgeUnavailable(BridgeError):
    pass


class DeviceNotFound(BridgeError):
    pass


@dataclass
class BridgeCommands:
    """Command templates for a device bridge; ``{bridge}`` expands to the base invocation."""

    devices: str = "{bridge} devices"
    push: str = "{bridge} -s {device} push {local} {remote}"
    shell: str = "{bridge} -s {device} shell {command}"
    pull: str = "{bridge} -s {device} pull {remote} {local}"
    screenrecord: str = "{bridge} -s {device} shell screenrecord {remote}"


def _argv(template: str, **kw) -> list[str]:
    return shlex.split(template.format(**{k: shlex.quote(str(v)) if k != "bridge" else v for k, v in kw.items()}))


def _run(argv: list[str], step: str, timeout: Optional[float]) -> str:
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError as exc:
        raise BridgeUnavailable(str(exc)) from None
    if proc.returncode != 0:
        raise BridgeError(f"{step} failed (exit {proc.returncode}): {' '.join(argv)}\n"
                          f"{proc.stdout}{proc.stderr}".rstrip())
    return proc.stdout


def list_devices(bridge: str, commands: BridgeCommands = BridgeCommands(), timeout: Optional[float] = 30) -> list[str]:
    out = _run(_argv(commands.devices, bridge=bridge), "devices", timeout)
    serials = []
    for line in out.splitlines()[1:]:
        parts = line.split()
        if len(parts) >= 2 and parts[1] == "device":
            serials.append(parts[0])
    return serials


def deploy_and_replay(script_file: str | os.PathLike, profile: DeviceProfile,
                      bridge_command: Optional[str] = None, *,
                      agent_path: Optional[str | os.PathLike] = None,
                      device: Optional[str] = None,
                      out_dir: Optional[str | os.PathLike] = None,
                      remote_dir: str = "/data/local/tmp",
                      commands: BridgeCommands = BridgeCommands(),
                      timeout: Optional[float] = 600) -> Path:
    """Replay a ``send_events.log`` script on a connected device and pull a screen recording.

    The script is translated to the agent format, pushed with the agent
    binary (when ``agent_path`` is given), executed while ``screenrecord``
    runs, and the recording is pulled into ``out_dir``.
    """
    bridge = bridge_command or os.environ.get(BRIDGE_ENV) or DEFAULT_BRIDGE
    prog = shlex.split(bridge)[0]
    if shutil.which(prog) is None:
        raise BridgeUnavailable(f"device bridge {prog!r} not found on PATH")
    serials = list_devices(bridge, commands, timeout)
    if device is None:
        if not serials:
            raise DeviceNotFound("no device connected")
        device = serials[0]
    elif device not in serials:
        raise DeviceNotFound(f"device {device} not connected (found: {serials or 'none'})")

    out = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="replay-"))
    out.mkdir(parents=True, exist_ok=True)
    script = ReplayScript.load(script_file)
    local_script = out / "replay_events.txt"
    local_script.write_text(translate_for_device(script, profile))
    remote_script = f"{remote_dir}/replay_events.txt"
    remote_agent = f"{remote_dir}/touchreplay-agent"
    remote_video = f"{remote_dir}/touchreplay.mp4"

    _run(_argv(commands.push, bridge=bridge, device=device, local=local_script, remote=remote_script),
         "push script", timeout)
    if agent_path is not None:
        _run(_argv(commands.push, bridge=bridge, device=device, local=agent_path, remote=remote_agent),
             "push agent", timeout)
        _run(_argv(commands.shell, bridge=bridge, device=device, command=f"chmod 755 {remote_agent}"),
             "chmod agent", timeout)

    recorder = subprocess.Popen(_argv(commands.screenrecord, bridge=bridge, device=device, remote=remote_video),
                                stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
    try:
        time.sleep(0.5)
        _run(_argv(commands.shell, bridge=bridge, device=device,
                   command=f"{remote_agent} {remote_script} {profile.event_device}"),
             "run agent", timeout)
    finally:
        subprocess.run(_argv(commands.shell, bridge=bridge, device=device, command="pkill -INT screenrecord"),
                       capture_output=True, timeout=timeout)
        try:
            recorder.wait(timeout=10)
        except subprocess.TimeoutExpired:
            recorder.terminate()
            recorder.wait()
    local_video = out / "replay.mp4"
    _run(_argv(commands.pull, bridge=bridge, device=device, remote=remote_video, local=local_video),
         "pull recording", timeout)
    if not local_video.is_file() or local_video.stat().st_size == 0:
        raise BridgeError(f"recording {local_video} missing or empty")
    log.info("replay: device=%s events=%d recording=%s", device, len(script), local_video)
    return local_video
