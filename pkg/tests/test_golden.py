import re
from pathlib import Path

import pytest

from touchreplay.classify import classify_actions
from touchreplay.core import ActionKind
from touchreplay.detect import import_detections

from golden.make_goldens import FILES, SCENARIOS, build

GOLDEN = Path(__file__).parent / "golden"
LOG_LINE = re.compile(r"^\[[ \d]{2}\d\.\d{6}\] /dev/input/event1: [0-9a-f]{4} [0-9a-f]{4} [0-9a-f]{8}$")


@pytest.fixture(scope="module", params=sorted(SCENARIOS))
def outputs(request):
    return request.param, build(request.param)


@pytest.mark.parametrize("fname", FILES)
def test_matches_golden(outputs, fname):
    name, files = outputs
    assert files[fname] == (GOLDEN / name / fname).read_text(), f"{name}/{fname} differs from golden"


def test_log_grammar(outputs):
    _, files = outputs
    lines = files["send_events.log"].splitlines()
    assert lines
    for line in lines:
        assert LOG_LINE.match(line), line
        assert len(line.split("] ")[0]) == 11  # "[" + %10.6f


def test_golden_kinds():
    import json
    kinds = {n: [a["type"] for a in json.loads((GOLDEN / n / "detected_actions.json").read_text())["actions"]]
             for n in SCENARIOS}
    assert kinds == {"tap": ["TAP"], "swipe": ["GESTURE"], "mixed": ["LONG_TAP", "TAP", "TAP", "TAP"]}


def test_minimal_detection_file(nexus5):
    rep = import_detections(GOLDEN / "minimal_detection.json", nexus5)
    assert rep.frame_count == 2 and len(rep) == 1
    assert classify_actions(rep, profile=nexus5).kinds == [ActionKind.TAP]
