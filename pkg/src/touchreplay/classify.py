"""Turn per-frame touch detections into discrete GUI actions.

The stages are: drop low-confidence detections, group runs of consecutive
detection-bearing frames, split each group into single-finger tracks by
spatial proximity across frames, and label each track TAP, LONG_TAP or
GESTURE from its duration and displacement.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import ActionKind, ClassifierParams, DeviceProfile, Opacity, TouchDetection, TouchReplayError
from .detect import DetectionReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    x: float
    y: float
    opacity: Opacity = Opacity.HIGH
    confidence: float = 1.0
    interpolated: bool = False

    @classmethod
    def from_detection(cls, det: TouchDetection) -> "TrackPoint":
        x, y = det.center
        return cls(det.frame_index, x, y, det.opacity, det.confidence)

    def dist(self, other: "TrackPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class FrameGroup:
    start_frame: int
    end_frame: int
    touches: list[TrackPoint]


@dataclass
class TouchTrack:
    """One finger-down-to-lift episode.

    ``touches`` are the observed points; ``path`` additionally holds linearly
    interpolated points for frames the detector missed inside the track.
    """

    touches: list[TrackPoint]
    path: list[TrackPoint] = field(default_factory=list)

    def __post_init__(self):
        if not self.path:
            self.path = interpolate(self.touches)

    @property
    def centroid_path(self) -> list[tuple[float, float]]:
        return [(p.x, p.y) for p in self.path]

    @property
    def start_frame(self) -> int:
        return self.touches[0].frame

    @property
    def end_frame(self) -> int:
        return self.touches[-1].frame

    def max_displacement(self) -> float:
        first = self.path[0]
        return max(first.dist(p) for p in self.path)


def interpolate(touches: Sequence[TrackPoint]) -> list[TrackPoint]:
    path: list[TrackPoint] = []
    for a, b in zip(touches, touches[1:]):
        path.append(a)
        span = b.frame - a.frame
        for k in range(1, span):
            t = k / span
            path.append(TrackPoint(a.frame + k, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
                                   a.opacity, 0.0, True))
    if touches:
        path.append(touches[-1])
    return path


@dataclass
class Action:
    kind: ActionKind
    track: TouchTrack

    @property
    def start_frame(self) -> int:
        return self.track.start_frame

    @property
    def end_frame(self) -> int:
        return self.track.end_frame

    @property
    def duration_frames(self) -> int:
        return self.end_frame - self.start_frame + 1

    def to_dict(self) -> dict:
        return {
            "type": self.kind.value,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "touches": [{"frame": p.frame, "x": round(p.x, 4), "y": round(p.y, 4),
                         "opacity": p.opacity.value, "confidence": round(p.confidence, 4),
                         "interpolated": p.interpolated} for p in self.track.path],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        path = [TrackPoint(t["frame"], t["x"], t["y"], Opacity(t["opacity"]), t["confidence"],
                           t["interpolated"]) for t in d["touches"]]
        if not path:
            raise TouchReplayError("action without touches")
        touches = [p for p in path if not p.interpolated]
        action = cls(ActionKind(d["type"]), TouchTrack(touches, path))
        if (action.start_frame, action.end_frame) != (d["start_frame"], d["end_frame"]):
            raise TouchReplayError("start_frame/end_frame disagree with touches")
        return action


def _order_key(a: Action):
    first = a.track.path[0]
    return (a.start_frame, first.x, first.y)


@dataclass
class ActionList:
    actions: list[Action] = field(default_factory=list)

    def __post_init__(self):
        self.actions = sorted(self.actions, key=_order_key)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, i):
        return self.actions[i]

    @property
    def kinds(self) -> list[ActionKind]:
        return [a.kind for a in self.actions]

    def to_dict(self) -> dict:
        return {"actions": [a.to_dict() for a in self.actions]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "ActionList":
        return cls([Action.from_dict(a) for a in d["actions"]])

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ActionList":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def filter_low_confidence(report: DetectionReport, threshold: float) -> DetectionReport:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    per_frame = [[d for d in dets if d.confidence >= threshold] for dets in report.per_frame]
    return DetectionReport(report.width, report.height, report.frame_count, per_frame, report.fps)


def group_consecutive(report: DetectionReport, bridge: int = 0) -> list[FrameGroup]:
    """Split detections into maximal runs of consecutive detection-bearing frames.

    With ``bridge`` > 0, runs separated by at most that many empty frames are
    merged, so a track can later span a short detector dropout.
    """
    groups: list[FrameGroup] = []
    for i, dets in enumerate(report.per_frame):
        if not dets:
            continue
        points = [TrackPoint.from_detection(d) for d in dets]
        if groups and i - groups[-1].end_frame <= bridge + 1:
            groups[-1].end_frame = i
            groups[-1].touches.extend(points)
        else:
            groups.append(FrameGroup(i, i, points))
    return groups


def _linked(a: TrackPoint, b: TrackPoint, params: ClassifierParams) -> bool:
    df = abs(a.frame - b.frame)
    return 1 <= df <= params.interpolation_gap + 1 and a.dist(b) <= params.cluster_distance


def connected_components(points: Sequence[TrackPoint], params: ClassifierParams) -> list[list[int]]:
    """Indices of ``points`` grouped by connectivity under the track-link predicate."""
    n = len(points)
    seen = [False] * n
    order = sorted(range(n), key=lambda i: points[i].frame)
    comps = []
    for s in order:
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in range(n):
                if not seen[j] and _linked(points[i], points[j], params):
                    seen[j] = True
                    stack.append(j)
        comps.append(sorted(comp))
    return comps


def _split_component(points: list[TrackPoint], params: ClassifierParams) -> list[list[TrackPoint]]:
    """Assign a component's points to single-finger tracks in time order.

    One point per track per frame, higher confidence first; a track whose
    last point is LOW (finger lifting) accepts no further HIGH point. A point
    joins the eligible track seen most recently, then the nearest one.
    """
    tracks: list[list[TrackPoint]] = []
    pts = sorted(points, key=lambda p: (p.frame, -p.confidence, p.x, p.y))
    for p in pts:
        best, best_key = None, None
        for t in tracks:
            last = t[-1]
            df = p.frame - last.frame
            if not 1 <= df <= params.interpolation_gap + 1:
                continue
            if last.opacity is Opacity.LOW and p.opacity is Opacity.HIGH:
                continue
            d = last.dist(p)
            # the most recently seen track wins, then the nearest
            if d <= params.cluster_distance and (best_key is None or (df, d) < best_key):
                best, best_key = t, (df, d)
        if best is None:
            tracks.append([p])
        else:
            best.append(p)
    return tracks


def segment_actions(group: FrameGroup, params: ClassifierParams) -> list[TouchTrack]:
    if params.cluster_distance is None:
        raise ValueError("cluster_distance unresolved; call ClassifierParams.resolve(profile)")
    tracks = []
    for comp in connected_components(group.touches, params):
        for pts in _split_component([group.touches[i] for i in comp], params):
            tracks.append(TouchTrack(pts))
    tracks.sort(key=lambda t: (t.start_frame, t.touches[0].x, t.touches[0].y))
    return tracks


def translate_action(track: TouchTrack, params: ClassifierParams) -> Action:
    if not track.touches:
        raise ValueError("empty track")
    limit = params.tap_displacement_limit
    if limit is None:
        raise ValueError("tap_displacement_limit unresolved; call ClassifierParams.resolve(profile)")
    duration = track.end_frame - track.start_frame + 1
    if track.max_displacement() <= limit:
        kind = ActionKind.TAP if duration < params.tap_frame_limit else ActionKind.LONG_TAP
    else:
        kind = ActionKind.GESTURE
    return Action(kind, track)


def classify_actions(report: DetectionReport, params: ClassifierParams = ClassifierParams(),
                     profile: Optional[DeviceProfile] = None,
                     out_path: Optional[str | os.PathLike] = None) -> ActionList:
    if profile is not None:
        params = params.resolve(profile)
    filtered = filter_low_confidence(report, params.confidence_threshold)
    groups = group_consecutive(filtered, bridge=params.interpolation_gap)
    actions = []
    lifted = 0
    for g in groups:
        for track in segment_actions(g, params):
            lifted += track.touches[-1].opacity is Opacity.LOW
            actions.append(translate_action(track, params))
    result = ActionList(actions)
    log.info("classify: detections=%d groups=%d actions=%d (low-opacity terminated=%d)",
             len(filtered), len(groups), len(result), lifted)
    if out_path is not None:
        result.save(out_path)
    return result
