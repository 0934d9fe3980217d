import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from touchreplay.core import ActionKind, ClassifierParams, Opacity, TouchDetection
from touchreplay.classify import (Action, ActionList, FrameGroup, TouchTrack, TrackPoint, classify_actions,
                                  connected_components, filter_low_confidence, group_consecutive,
                                  interpolate, segment_actions, translate_action)
from touchreplay.detect import DetectionReport

P60 = ClassifierParams(cluster_distance=60.0, tap_displacement_limit=30.0)


def report(points, n=None, w=1080, h=1920, side=60):
    """Detection report from (frame, x, y[, conf[, opacity]]) tuples."""
    n = n if n is not None else max((p[0] for p in points), default=-1) + 1
    per = [[] for _ in range(n)]
    for p in points:
        f, x, y = p[:3]
        conf = p[3] if len(p) > 3 else 0.95
        op = p[4] if len(p) > 4 else Opacity.HIGH
        per[f].append(TouchDetection(f, (x - side / 2, y - side / 2, x + side / 2, y + side / 2), conf, op, 0.9))
    return DetectionReport(w, h, n, per)


def track(points):
    return TouchTrack([TrackPoint(f, x, y) for f, x, y in points])


def test_filter_boundary():
    rep = report([(0, 100, 100, 0.69), (1, 100, 100, 0.70), (2, 100, 100, 0.71)])
    kept = filter_low_confidence(rep, 0.7)
    assert [d.frame_index for d in kept.detections()] == [1, 2]
    assert filter_low_confidence(rep, 0.0) == rep


def test_filter_keeps_order():
    rep = report([(0, 100, 100, 0.9), (0, 500, 500, 0.8), (0, 900, 900, 0.6)])
    kept = list(filter_low_confidence(rep, 0.7).detections())
    assert [d.center[0] for d in kept] == [100, 500]


def test_group_consecutive_runs():
    rep = report([(f, 100, 100) for f in (1, 2, 3, 7, 8)], n=10)
    groups = group_consecutive(rep)
    assert [(g.start_frame, g.end_frame) for g in groups] == [(1, 3), (7, 8)]
    assert [len(g.touches) for g in groups] == [3, 2]


def test_group_single_and_empty():
    assert [(g.start_frame, g.end_frame) for g in group_consecutive(report([(0, 5, 5)]))] == [(0, 0)]
    assert group_consecutive(report([], n=5)) == []


def test_group_bridge():
    rep = report([(f, 100, 100) for f in (1, 2, 5, 9)], n=10)
    assert [(g.start_frame, g.end_frame) for g in group_consecutive(rep, bridge=2)] == [(1, 5), (9, 9)]


def test_segment_typing_two_keys():
    # frames 0-5 alternate between two keys 300 px apart
    pts = [TrackPoint(f, 100.0 + 300 * (f % 2), 500.0) for f in range(6)]
    tracks = segment_actions(FrameGroup(0, 5, pts), P60)
    assert len(tracks) == 2
    assert [[p.frame for p in t.touches] for t in tracks] == [[0, 2, 4], [1, 3, 5]]


def test_segment_swipe_chain():
    pts = [TrackPoint(f, x, 300.0) for f, x in enumerate((100.0, 140.0, 180.0, 220.0))]
    tracks = segment_actions(FrameGroup(0, 3, pts), P60)
    assert len(tracks) == 1 and len(tracks[0].touches) == 4


def test_segment_single():
    tracks = segment_actions(FrameGroup(4, 4, [TrackPoint(4, 1.0, 1.0)]), P60)
    assert len(tracks) == 1 and tracks[0].start_frame == 4


def test_segment_low_opacity_terminates():
    pts = [TrackPoint(0, 100, 100), TrackPoint(1, 100, 100, Opacity.LOW),
           TrackPoint(2, 100, 100), TrackPoint(3, 100, 100, Opacity.LOW)]
    tracks = segment_actions(FrameGroup(0, 3, pts), P60)
    assert [[p.frame for p in t.touches] for t in tracks] == [[0, 1], [2, 3]]


def test_segment_same_frame_split_by_confidence():
    pts = [TrackPoint(0, 100, 100, confidence=0.9), TrackPoint(1, 110, 100, confidence=0.95),
           TrackPoint(1, 90, 100, confidence=0.8), TrackPoint(2, 112, 100, confidence=0.9)]
    tracks = segment_actions(FrameGroup(0, 2, pts), P60)
    assert all(len({p.frame for p in t.touches}) == len(t.touches) for t in tracks)
    main = max(tracks, key=lambda t: len(t.touches))
    assert [(p.frame, p.x) for p in main.touches] == [(0, 100), (1, 110), (2, 112)]
    assert len(tracks) == 2


def test_segment_needs_resolved_params():
    with pytest.raises(ValueError):
        segment_actions(FrameGroup(0, 0, [TrackPoint(0, 1, 1)]), ClassifierParams())


def test_interpolate_missed_frames():
    path = interpolate([TrackPoint(0, 0.0, 0.0), TrackPoint(3, 30.0, 60.0)])
    assert [(p.frame, p.x, p.y, p.interpolated) for p in path] == [
        (0, 0, 0, False), (1, 10, 20, True), (2, 20, 40, True), (3, 30, 60, False)]


def union_find_components(points, params):
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, a in enumerate(points):
        for j, b in enumerate(points):
            df = abs(a.frame - b.frame)
            if i < j and 1 <= df <= params.interpolation_gap + 1 and \
                    math.hypot(a.x - b.x, a.y - b.y) <= params.cluster_distance:
                parent[find(i)] = find(j)
    comps = {}
    for i in range(len(points)):
        comps.setdefault(find(i), []).append(i)
    return sorted(sorted(c) for c in comps.values())


points_st = st.lists(st.builds(TrackPoint, st.integers(0, 8), st.integers(0, 200).map(float),
                               st.integers(0, 200).map(float)), max_size=12)


@settings(max_examples=300, deadline=None)
@given(points_st, st.integers(0, 3), st.sampled_from([20.0, 60.0, 120.0]))
def test_components_match_union_find(points, gap, dist):
    params = ClassifierParams(cluster_distance=dist, tap_displacement_limit=10.0, interpolation_gap=gap)
    assert sorted(connected_components(points, params)) == union_find_components(points, params)


@settings(max_examples=200, deadline=None)
@given(points_st)
def test_segment_partitions_group(points):
    points = sorted(points, key=lambda p: p.frame)
    if not points:
        return
    group = FrameGroup(points[0].frame, points[-1].frame, points)
    tracks = segment_actions(group, P60)
    got = sorted((p.frame, p.x, p.y) for t in tracks for p in t.touches)
    assert got == sorted((p.frame, p.x, p.y) for p in points)
    for t in tracks:
        frames = [p.frame for p in t.touches]
        assert frames == sorted(set(frames))
        for a, b in zip(t.touches, t.touches[1:]):
            assert b.frame - a.frame <= P60.interpolation_gap + 1 and a.dist(b) <= P60.cluster_distance


def test_translate_tap():
    t = track([(f, 100 + (f % 3), 200 + (f % 5)) for f in range(10)])
    assert translate_action(t, P60).kind is ActionKind.TAP


def test_translate_long_tap_boundary():
    assert translate_action(track([(f, 100, 200) for f in range(20)]), P60).kind is ActionKind.LONG_TAP
    assert translate_action(track([(f, 100, 200) for f in range(19)]), P60).kind is ActionKind.TAP


def test_translate_gesture():
    t = track([(f, 100 + 30 * f, 200) for f in range(10)])
    assert translate_action(t, P60).kind is ActionKind.GESTURE


def test_translate_displacement_from_first_point():
    # 30 px from the first point is still stationary, 31 px is not
    assert translate_action(track([(0, 0, 0), (1, 30, 0)]), P60).kind is ActionKind.TAP
    assert translate_action(track([(0, 0, 0), (1, 31, 0)]), P60).kind is ActionKind.GESTURE


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 80)), min_size=1, max_size=30),
       st.integers(1, 30))
def test_rules_exhaustive(offsets, limit):
    params = ClassifierParams(cluster_distance=60.0, tap_displacement_limit=30.0, tap_frame_limit=limit)
    t = track([(f, 500 + dx, 500 + dy) for f, (dx, dy) in enumerate(offsets)])
    kind = translate_action(t, params).kind
    dur = len(offsets)
    moved = t.max_displacement() > 30.0
    preds = {ActionKind.TAP: dur < limit and not moved,
             ActionKind.LONG_TAP: dur >= limit and not moved,
             ActionKind.GESTURE: moved}
    assert sum(preds.values()) == 1 and preds[kind]


def test_classify_tap_pause_swipe():
    pts = [(f, 300, 400) for f in range(5)] + [(5, 300, 400, 0.9, Opacity.LOW)]
    pts += [(12 + k, 200 + 25 * k, 1000) for k in range(8)]
    acts = classify_actions(report(pts), P60)
    assert acts.kinds == [ActionKind.TAP, ActionKind.GESTURE]


def test_classify_empty():
    assert len(classify_actions(report([], n=4), P60)) == 0


def test_classify_long_press():
    acts = classify_actions(report([(f, 540, 960) for f in range(25)]), P60)
    assert acts.kinds == [ActionKind.LONG_TAP]
    assert acts[0].duration_frames == 25


def test_classify_bridges_missed_frames():
    pts = [(f, 200 + 20 * f, 800) for f in range(12) if f not in (4, 5)]
    acts = classify_actions(report(pts), P60)
    assert acts.kinds == [ActionKind.GESTURE]
    path = acts[0].track.path
    assert [p.frame for p in path] == list(range(12))
    assert [p.frame for p in path if p.interpolated] == [4, 5]
    assert path[4].x == pytest.approx(280)


def test_classify_three_missed_frames_split():
    pts = [(f, 200, 800) for f in range(12) if f not in (4, 5, 6)]
    assert len(classify_actions(report(pts), P60)) == 2


def test_classify_uses_profile_defaults(nexus5):
    pts = [(f, 200 + 50 * f, 800) for f in range(6)]
    assert classify_actions(report(pts), ClassifierParams(), nexus5).kinds == [ActionKind.GESTURE]


def test_order_ties_leftmost_then_topmost():
    a = Action(ActionKind.TAP, track([(3, 500, 10)]))
    b = Action(ActionKind.TAP, track([(3, 100, 900)]))
    c = Action(ActionKind.TAP, track([(3, 100, 50)]))
    d = Action(ActionKind.TAP, track([(1, 999, 999)]))
    assert [x.track.touches[0].x for x in ActionList([a, b, c, d])] == [999, 100, 100, 500]
    assert ActionList([a, b, c, d])[1].track.touches[0].y == 50


def _random_report(rng, n_frames=40):
    pts = []
    for f in range(n_frames):
        for _ in range(rng.integers(0, 3)):
            pts.append((f, int(rng.integers(50, 1000)), int(rng.integers(50, 1800)),
                        float(rng.choice([0.5, 0.65, 0.7, 0.8, 0.95])),
                        Opacity.LOW if rng.random() < 0.2 else Opacity.HIGH))
    return report(pts, n=n_frames)


def test_partition_and_monotonicity(rng):
    for _ in range(30):
        rep = _random_report(rng)
        prev = None
        for thr in (0.0, 0.6, 0.7, 0.9):
            params = ClassifierParams(confidence_threshold=thr, cluster_distance=60.0, tap_displacement_limit=30.0)
            n_in = len(filter_low_confidence(rep, thr))
            acts = classify_actions(rep, params)
            assert sum(len(a.track.touches) for a in acts) == n_in
            assert [a.start_frame for a in acts] == sorted(a.start_frame for a in acts)
            if prev is not None:
                assert n_in <= prev
            prev = n_in


def test_actions_json_schema_and_round_trip(tmp_path):
    pts = [(f, 200 + 20 * f, 800) for f in range(12) if f != 4] + [(20, 50, 60)]
    acts = classify_actions(report(pts), P60, out_path=tmp_path / "detected_actions.json")
    doc = json.loads((tmp_path / "detected_actions.json").read_text())
    a = doc["actions"][0]
    assert set(a) == {"type", "start_frame", "end_frame", "touches"}
    assert (a["type"], a["start_frame"], a["end_frame"]) == ("GESTURE", 0, 11)
    assert set(a["touches"][0]) == {"frame", "x", "y", "opacity", "confidence", "interpolated"}
    assert a["touches"][4]["interpolated"] is True
    back = ActionList.load(tmp_path / "detected_actions.json")
    assert back.dumps() == acts.dumps()
    assert back.kinds == acts.kinds
