"""Builders shared by several test modules."""
import math

from touchreplay.classify import Action, ActionList, TouchTrack, TrackPoint
from touchreplay.core import ActionKind


def make_action(kind, points):
    return Action(ActionKind(kind), TouchTrack([TrackPoint(f, float(x), float(y)) for f, x, y in points]))


def stationary(kind, start, n, x, y):
    return make_action(kind, [(start + k, x, y) for k in range(n)])


def random_action_list(rng, width=1080, height=1920, n_max=6, interpolated=True):
    """Non-overlapping random actions whose kinds are consistent with the default rules (r = 30)."""
    actions = []
    t = int(rng.integers(0, 5))
    for _ in range(int(rng.integers(0, n_max + 1))):
        kind = rng.choice(["TAP", "LONG_TAP", "GESTURE"])
        if kind == "TAP":
            n = int(rng.integers(1, 20))
        elif kind == "LONG_TAP":
            n = int(rng.integers(20, 45))
        else:
            n = int(rng.integers(2, 25))
        x0 = rng.uniform(80, width - 80)
        y0 = rng.uniform(80, height - 80)
        pts = []
        if kind == "GESTURE":
            theta = rng.uniform(0, 2 * math.pi)
            step = rng.uniform(5, 40)
            for k in range(n):
                x = min(max(x0 + k * step * math.cos(theta), 0), width)
                y = min(max(y0 + k * step * math.sin(theta), 0), height)
                pts.append((t + k, x, y))
            if max(math.dist(p[1:], pts[0][1:]) for p in pts) <= 31:
                # too short to read as a gesture: push the last point 45 px sideways
                pts[-1] = (pts[-1][0], x0 + (45 if x0 < width / 2 else -45), y0)
        else:
            for k in range(n):
                pts.append((t + k, x0 + rng.uniform(-5, 5), y0 + rng.uniform(-5, 5)))
        if interpolated and n > 3 and rng.random() < 0.3:
            # drop an inner point; it comes back as an interpolated path point
            del pts[int(rng.integers(1, n - 1))]
        actions.append(make_action(kind, pts))
        t += n + int(rng.integers(1, 10))
    return ActionList(actions)
