"""Regenerate the golden pipeline outputs: ``python3 tests/golden/make_goldens.py``.

Only rerun after a deliberate format or algorithm change, and review the diff.
"""
from pathlib import Path

from touchreplay.classify import classify_actions
from touchreplay.core import ActionKind, ClassifierParams, load_profile
from touchreplay.detect import run_detection
from touchreplay.scriptgen import generate_script
from touchreplay.synth import GroundTruthAction, GroundTruthScenario, app_background, render_scenario

HERE = Path(__file__).parent
FILES = ("detection_full.json", "detected_actions.json", "send_events.log")


def _tap():
    return [GroundTruthAction(ActionKind.TAP, [(f, 540, 960) for f in range(1, 4)], 1)], (255, 255, 255)


def _swipe():
    path = [(f, 200 + 22 * (f - 2), 1400 - 15 * (f - 2)) for f in range(2, 14)]
    return [GroundTruthAction(ActionKind.GESTURE, path, 2)], "app"


def _mixed():
    steps = [GroundTruthAction(ActionKind.LONG_TAP, [(f, 300, 500) for f in range(0, 24)], 1)]
    t = 30
    for x, y in ((162, 1400), (486, 1500), (810, 1400)):
        steps.append(GroundTruthAction(ActionKind.TAP, [(f, x, y) for f in range(t, t + 3)], 1))
        t += 5
    return steps, (33, 33, 33)


SCENARIOS = {"tap": _tap, "swipe": _swipe, "mixed": _mixed}


def build(name: str) -> dict[str, str]:
    profile = load_profile("nexus5")
    steps, bg = SCENARIOS[name]()
    if bg == "app":
        bg = app_background(profile, 42)
    frames, _ = render_scenario(GroundTruthScenario(profile, steps), bg)
    report = run_detection(frames, profile)
    actions = classify_actions(report, ClassifierParams(), profile)
    script = generate_script(actions, profile)
    return {"detection_full.json": report.dumps(), "detected_actions.json": actions.dumps(),
            "send_events.log": script.dumps()}


def main():
    for name in SCENARIOS:
        out = HERE / name
        out.mkdir(exist_ok=True)
        for fname, text in build(name).items():
            (out / fname).write_text(text)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
