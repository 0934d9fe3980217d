"""
Finding the touch indicator in a frame
======================================

With "Show Touches" enabled, Android draws a small disc under the finger.
This script draws that disc onto a screen, finds it again, and reads its
opacity: pressed (high) or lifting (low).
"""

from touchreplay import load_profile
from touchreplay.core import Frame
from touchreplay.detect import detect_touches
from touchreplay.synth import app_background, composite

profile = load_profile("nexus5")
print(profile)

# a cluttered screen with one pressed finger and one finger lifting off
screen = app_background(profile, seed=3)
composite(screen, profile.template_high, 250, 700)
composite(screen, profile.template_low, 800, 1500)

for d in detect_touches(Frame(0, pixels=screen), profile):
    x, y = d.center
    print(f"indicator at ({x:.0f}, {y:.0f})  score {d.confidence:.3f}  "
          f"opacity {d.opacity.value} ({d.opacity_confidence:.2f})")

# an empty screen gives nothing back
print(detect_touches(Frame(1, pixels=app_background(profile, seed=3)), profile))

# the template itself: RGBA, the alpha channel is the glyph coverage
t = profile.template_high
print(t.shape, "fill", t[30, 30, :3], "rim", t[30, 3, :3], "alpha at centre", t[30, 30, 3])
print("low-opacity alpha", profile.template_low[30, 30, 3], "->", round(profile.template_low[30, 30, 3] / 255, 2))
