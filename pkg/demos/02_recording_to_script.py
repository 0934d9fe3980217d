"""
From a recording to a replay script
===================================

A short made-up session (tap, long press, swipe) is rendered to frames,
run through the whole pipeline, and the resulting ``send_events.log`` is
replayed on the virtual touchscreen to check nothing was lost.
"""

import tempfile
from pathlib import Path

from touchreplay import ActionKind, RunConfig, load_profile, run_pipeline
from touchreplay.classify import ActionList
from touchreplay.core import ClassifierParams
from touchreplay.replay import reconstruct_actions, simulate
from touchreplay.scriptgen import ReplayScript
from touchreplay.synth import GroundTruthAction, GroundTruthScenario, render_scenario

profile = load_profile("nexus5")
work = Path(tempfile.mkdtemp(prefix="touchreplay-demo-"))

# each step is a list of (frame, x, y) plus how many faded frames follow the lift
steps = [
    GroundTruthAction(ActionKind.TAP, [(f, 540, 400) for f in range(2, 6)], 1),
    GroundTruthAction(ActionKind.LONG_TAP, [(f, 300, 1200) for f in range(12, 40)], 1),
    GroundTruthAction(ActionKind.GESTURE, [(f, 800, 1600 - 40 * (f - 48)) for f in range(48, 62)], 2),
]
frames, expected = render_scenario(GroundTruthScenario(profile, steps), background=(245, 245, 245))
frames.save(work / "frames")
print(len(frames), "frames written to", work / "frames")
print("expected:", [k.value for k in expected.kinds])

# the pipeline reads the frame directory and writes every stage's file
arts = run_pipeline(RunConfig(profile, work / "out", frames_dir=work / "frames"))
found = ActionList.load(arts.actions_path)
print("detected:", [k.value for k in found.kinds])
for a in found:
    print(f"  {a.kind.value:8s} frames {a.start_frame}-{a.end_frame} ({a.duration_frames} frames)")

script = ReplayScript.load(arts.script_path)
print(len(script), "events; first block:")
print("\n".join(arts.script_path.read_text().splitlines()[:5]))
print("agent format:", arts.translated_path.read_text().splitlines()[:3])

# replay on the virtual device and classify the contacts again
traces = simulate(script, profile)
again = reconstruct_actions(traces, ClassifierParams(), profile)
print("replayed:", [k.value for k in again.kinds])
for tr in traces:
    print(f"  contact {tr.tracking_id}: {len(tr.points)} points over {tr.duration_us / 1000:.0f} ms")
