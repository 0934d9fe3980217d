import os
import stat
import sys

import pytest

from touchreplay.classify import ActionList
from touchreplay.core import ActionKind, ClassifierParams
from touchreplay.replay import (BridgeError, BridgeUnavailable, ContactTrace, DeviceNotFound, ProtocolViolation,
                                deploy_and_replay, list_devices, reconstruct_actions, simulate)
from touchreplay.scriptgen import (ABS_MT_POSITION_X, ABS_MT_TRACKING_ID, BTN_TOUCH, EV_ABS, EV_KEY, EV_SYN,
                                   LowLevelEvent, ReplayScript, centroid, generate_script)

from helpers import make_action, random_action_list


def ev(t, typ, code, val):
    return LowLevelEvent(t, typ, code, val)


def down(t=0, tid=1, x=10, y=10):
    return [ev(t, EV_ABS, ABS_MT_TRACKING_ID, tid), ev(t, EV_KEY, BTN_TOUCH, 1),
            ev(t, EV_ABS, ABS_MT_POSITION_X, x), ev(t, EV_ABS, 0x36, y), ev(t, EV_SYN, 0, 0)]


def up(t):
    return [ev(t, EV_ABS, ABS_MT_TRACKING_ID, -1), ev(t, EV_KEY, BTN_TOUCH, 0), ev(t, EV_SYN, 0, 0)]


def test_single_tap_trace(nexus5):
    traces = simulate(generate_script(ActionList([make_action("TAP", [(0, 5, 5)])]), nexus5), nexus5)
    assert len(traces) == 1
    assert traces[0].points == [(0, 5, 5)]
    assert traces[0].duration_us == 33000 and traces[0].tracking_id == 1


def test_empty_script(nexus5):
    assert simulate(ReplayScript(nexus5.event_device), nexus5) == []


@pytest.mark.parametrize("events, reason", [
    (down() + [ev(0, EV_KEY, BTN_TOUCH, 1), ev(0, EV_SYN, 0, 0)], "BTN_TOUCH down twice"),
    (down() + down(33000, tid=2), "touch-down while a contact is active"),
    ([ev(0, EV_ABS, ABS_MT_POSITION_X, 3), ev(0, EV_SYN, 0, 0)], "position without an active contact"),
    (down()[:4] + up(33000), "SYN_REPORT missing"),
    (down(33000) + up(0), "timestamp goes backwards"),
    (down(), "contact never released"),
    (down()[:4], "script ends without SYN_REPORT"),
    (up(0), "release without an active contact"),
    (down(0, x=5000), "position outside the axis range"),
    ([ev(0, 4, 4, 1)], "unsupported event"),
])
def test_protocol_violations(nexus5, events, reason):
    with pytest.raises(ProtocolViolation) as exc:
        simulate(ReplayScript(nexus5.event_device, events), nexus5)
    assert reason in str(exc.value)
    assert exc.value.lineno >= 1
    assert f"line {exc.value.lineno}:" in str(exc.value)


def test_violation_names_line(nexus5):
    events = down() + down(33000, tid=2)
    with pytest.raises(ProtocolViolation) as exc:
        simulate(ReplayScript(nexus5.event_device, events), nexus5)
    assert exc.value.lineno == 6


def test_reconstruct_examples(nexus5):
    p = ClassifierParams()
    one = ContactTrace(1, 0, [(0, 100, 100)], 33000)
    hold = ContactTrace(2, 99000, [(99000 + 33000 * k, 300, 300) for k in range(20)], 99000 + 660000)
    swipe = ContactTrace(3, 990000, [(990000 + 33000 * k, 100 + 33 * k, 500) for k in range(10)], 990000 + 330000)
    kinds = reconstruct_actions([one, hold, swipe], p, nexus5).kinds
    assert kinds == [ActionKind.TAP, ActionKind.LONG_TAP, ActionKind.GESTURE]


def test_round_trip_random(nexus5, rng):
    params = ClassifierParams()
    for _ in range(50):
        acts = random_action_list(rng)
        back = reconstruct_actions(simulate(generate_script(acts, nexus5), nexus5), params, nexus5)
        assert back.kinds == acts.kinds
        for a, b in zip(acts, back):
            assert abs(a.duration_frames - b.duration_frames) <= 1
            (ax, ay), (bx, by) = centroid(a.track), centroid(b.track)
            assert abs(ax - bx) <= 1 and abs(ay - by) <= 1


FAKE_ADB = r'''#!{python}
import os, sys, shutil
log = os.environ["FAKE_ADB_LOG"]
state = os.environ["FAKE_ADB_STATE"]
args = sys.argv[1:]
with open(log, "a") as fh:
    fh.write(" ".join(args) + "\n")
if args == ["devices"]:
    print("List of devices attached")
    for s in os.environ.get("FAKE_ADB_DEVICES", "").split():
        print(s + "\tdevice")
    sys.exit(0)
serial, verb, rest = args[1], args[2], args[3:]
def local(remote):
    return os.path.join(state, remote.strip("/").replace("/", "_"))
if verb == "push":
    shutil.copy(rest[0], local(rest[1]))
elif verb == "pull":
    shutil.copy(local(rest[0]), rest[1])
elif verb == "shell":
    cmd = " ".join(rest)
    if cmd.startswith("screenrecord"):
        with open(local(cmd.split()[1]), "wb") as fh:
            fh.write(b"\x00\x00\x00\x18ftypmp42")
    elif os.environ.get("FAKE_ADB_FAIL") and os.environ["FAKE_ADB_FAIL"] in cmd:
        print("boom", file=sys.stderr)
        sys.exit(7)
'''


@pytest.fixture
def fake_adb(tmp_path, monkeypatch):
    bindir = tmp_path / "bin"
    bindir.mkdir()
    exe = bindir / "adb"
    exe.write_text(FAKE_ADB.replace("{python}", sys.executable))
    exe.chmod(exe.stat().st_mode | stat.S_IEXEC)
    state = tmp_path / "device"
    state.mkdir()
    monkeypatch.setenv("PATH", f"{bindir}{os.pathsep}{os.environ['PATH']}")
    monkeypatch.setenv("FAKE_ADB_LOG", str(tmp_path / "adb.log"))
    monkeypatch.setenv("FAKE_ADB_STATE", str(state))
    monkeypatch.setenv("FAKE_ADB_DEVICES", "emulator-5554")
    return tmp_path


@pytest.fixture
def script_file(tmp_path, nexus5):
    return generate_script(ActionList([make_action("TAP", [(0, 5, 5)])]), nexus5).save(tmp_path / "send_events.log")


def test_deploy_and_replay(fake_adb, script_file, nexus5, tmp_path):
    agent = tmp_path / "agent"
    agent.write_bytes(b"\x7fELF")
    rec = deploy_and_replay(script_file, nexus5, "adb", agent_path=agent, out_dir=tmp_path / "replay")
    assert rec.is_file() and rec.stat().st_size > 0
    log = (fake_adb / "adb.log").read_text().splitlines()
    assert log[0] == "devices"
    assert any("push" in l and "replay_events.txt" in l for l in log)
    assert any("touchreplay-agent /data/local/tmp/replay_events.txt /dev/input/event1" in l for l in log)
    pushed = (fake_adb / "device" / "data_local_tmp_replay_events.txt").read_text()
    assert pushed.splitlines()[0] == "0 3 57 1"


def test_bridge_from_env(fake_adb, script_file, nexus5, monkeypatch, tmp_path):
    monkeypatch.setenv("TOUCHREPLAY_BRIDGE", "adb")
    assert deploy_and_replay(script_file, nexus5, out_dir=tmp_path / "r").exists()


def test_no_device(fake_adb, script_file, nexus5, monkeypatch):
    monkeypatch.setenv("FAKE_ADB_DEVICES", "")
    with pytest.raises(DeviceNotFound):
        deploy_and_replay(script_file, nexus5, "adb")


def test_wrong_serial(fake_adb, script_file, nexus5):
    with pytest.raises(DeviceNotFound):
        deploy_and_replay(script_file, nexus5, "adb", device="R58M")


def test_missing_bridge(script_file, nexus5):
    with pytest.raises(BridgeUnavailable):
        deploy_and_replay(script_file, nexus5, "definitely-not-a-bridge-tool")


def test_step_failure_reports_output(fake_adb, script_file, nexus5, monkeypatch, tmp_path):
    monkeypatch.setenv("FAKE_ADB_FAIL", "touchreplay-agent")
    with pytest.raises(BridgeError, match="boom"):
        deploy_and_replay(script_file, nexus5, "adb", out_dir=tmp_path / "r")


def test_list_devices(fake_adb, monkeypatch):
    monkeypatch.setenv("FAKE_ADB_DEVICES", "a b")
    assert list_devices("adb") == ["a", "b"]
