"""
Plugging in another detector, and adding a device
=================================================

The detection stage can be replaced: any tool that writes a
``detection_full.json`` file feeds the rest of the pipeline. A new device
needs only a profile file and two indicator images.
"""

import json
import tempfile
from pathlib import Path

from touchreplay import (ClassifierParams, DeviceProfile, import_detections, load_profile, save_profile,
                         validate_profile)
from touchreplay.classify import classify_actions
from touchreplay.scriptgen import generate_script

work = Path(tempfile.mkdtemp(prefix="touchreplay-ext-"))

# a hand-written detection file, as a neural detector might produce it
frames = []
for i in range(6):
    frames.append({"index": i, "detections": [{
        "bbox": [500 + 30 * i, 900, 560 + 30 * i, 960],
        "confidence": 0.9 if i != 3 else 0.5,  # frame 3 falls under the 0.7 filter
        "opacity": "high" if i < 5 else "low",
        "opacity_confidence": 0.8}]})
doc = {"video": {"width": 1080, "height": 1920, "fps": 30, "frame_count": 8}, "frames": frames}
(work / "detection_full.json").write_text(json.dumps(doc, indent=2))

nexus5 = load_profile("nexus5")
report = import_detections(work / "detection_full.json", nexus5)
actions = classify_actions(report, ClassifierParams(), nexus5)
a = actions[0]
print(a.kind.value, "frames", a.start_frame, "-", a.end_frame)
print("missed frame filled in:", [(p.frame, round(p.x), p.interpolated) for p in a.track.path])

# a fictional 720p phone whose touch panel reports 0..4095 on both axes
phone = DeviceProfile.generated("demo720", 720, 1280, 20, axis_max_x=4095, axis_max_y=4095,
                                event_device="/dev/input/event2")
print(validate_profile(phone))
path = save_profile(phone, work / "profiles" / "demo720.json")
print(path.read_text())
print(sorted(p.name for p in path.parent.iterdir()))

# a bad profile is reported, not raised
print(validate_profile(DeviceProfile.generated("broken", 720, 1280, 20, axis_max_x=0)).violations)

# the same actions rescaled for a different panel
wide = DeviceProfile.generated("wide", 1080, 1920, 30, axis_max_x=32767, axis_max_y=32767)
print(generate_script(actions, wide).dumps().splitlines()[2:4])
