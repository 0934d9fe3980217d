"""Touch-indicator localization and opacity classification.

The indicator is a fixed glyph drawn by the system, so a masked zero-mean
normalized cross-correlation against the device template locates it. Scores
reported in a detection are always recomputed by :func:`ncc_score` on the
full-resolution frame, whatever search strategy produced the candidate.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import cv2
import jsonschema
import numpy as np

from .core import (FPS, DetectorParams, DeviceProfile, Frame, Opacity, TouchDetection,
                   TouchReplayError, luma)
from .ingest import DimensionMismatch

log = logging.getLogger(__name__)

# candidates this far below the threshold are still refined before rejection
_SEARCH_SLACK = 0.05
_COARSE_SLACK = 0.2
MIN_CLAMPED_AREA = 0.25


class DegenerateCrop(TouchReplayError):
    pass


class SchemaViolation(TouchReplayError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def _rank_key(d: TouchDetection):
    return (-d.confidence, tuple(d.bbox))


def non_max_suppress(dets: Iterable[TouchDetection], iou_threshold: float) -> list[TouchDetection]:
    """Greedy suppression; ties in confidence are broken by bbox order."""
    kept: list[TouchDetection] = []
    for d in sorted(dets, key=_rank_key):
        if all(iou(d.bbox, k.bbox) <= iou_threshold for k in kept):
            kept.append(d)
    return kept


class TemplateMatcher:
    """Precomputed template data for one device profile."""

    def __init__(self, profile: DeviceProfile):
        self.profile = profile
        high = profile.template_high
        self.side = high.shape[0]
        self.gray_high = luma(high[..., :3]).astype(np.float64)
        self.gray_low = luma(profile.template_low[..., :3]).astype(np.float64)
        self.alpha_high = high[..., 3].astype(np.float64) / 255.0
        self.alpha_low = profile.template_low[..., 3].astype(np.float64) / 255.0
        # fully covered glyph pixels; the antialiased rim mixes with the background
        self.mask = high[..., 3] >= 250
        self.outside = high[..., 3] == 0
        if not self.mask.any():
            raise TouchReplayError(f"template of {profile.name} has no opaque pixels")
        t = self.gray_high[self.mask]
        self.t_zm = t - t.mean()
        self.t_energy = float(self.t_zm @ self.t_zm)
        self.cv_template = self.gray_high.astype(np.float32)
        self.cv_mask = self.mask.astype(np.uint8)
        self._coarse: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def coarse(self, stride: int) -> tuple[np.ndarray, np.ndarray]:
        if stride not in self._coarse:
            n = max(3, self.side // stride)
            t = cv2.resize(self.cv_template, (n, n), interpolation=cv2.INTER_AREA)
            m = cv2.resize(self.mask.astype(np.float32), (n, n), interpolation=cv2.INTER_AREA)
            self._coarse[stride] = (t, (m > 0.99).astype(np.uint8))
        return self._coarse[stride]


def ncc_score(gray: np.ndarray, x0: int, y0: int, matcher: TemplateMatcher) -> float:
    """Masked zero-mean normalized cross-correlation of the template placed at (x0, y0)."""
    s = matcher.side
    p = gray[y0:y0 + s, x0:x0 + s][matcher.mask].astype(np.float64)
    p = p - p.mean()
    denom = float(p @ p) * matcher.t_energy
    if denom <= 0.0:
        return 0.0
    return float(p @ matcher.t_zm) / float(np.sqrt(denom))


def _local_peaks(score: np.ndarray, floor: float, radius: int) -> list[tuple[int, int]]:
    k = 2 * max(1, radius) + 1
    dil = cv2.dilate(score, np.ones((k, k), np.uint8))
    ys, xs = np.nonzero((score >= dil) & (score >= floor))
    return sorted(zip(xs.tolist(), ys.tolist()), key=lambda p: (p[1], p[0]))


def _hill_climb(gray, x, y, matcher, cache) -> tuple[int, int, float]:
    max_x = gray.shape[1] - matcher.side
    max_y = gray.shape[0] - matcher.side

    def score(px, py):
        key = (px, py)
        if key not in cache:
            cache[key] = ncc_score(gray, px, py, matcher)
        return cache[key]

    best = score(x, y)
    while True:
        nxt = None
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                px, py = x + dx, y + dy
                if (dx or dy) and 0 <= px <= max_x and 0 <= py <= max_y:
                    sc = score(px, py)
                    if sc > best:
                        best, nxt = sc, (px, py)
        if nxt is None:
            return x, y, best
        x, y = nxt


def _candidates(gray: np.ndarray, matcher: TemplateMatcher, params: DetectorParams):
    side = matcher.side
    radius = matcher.profile.indicator_radius
    h, w = gray.shape
    if h < side or w < side:
        return []
    g32 = gray.astype(np.float32)
    stride = params.search_stride
    if stride == 1:
        res = cv2.matchTemplate(g32, matcher.cv_template, cv2.TM_CCOEFF_NORMED, mask=matcher.cv_mask)
        res[~np.isfinite(res)] = 0
        return _local_peaks(res, params.score_threshold - _SEARCH_SLACK, radius // 2)

    t_small, m_small = matcher.coarse(stride)
    hs, ws = h // stride, w // stride
    small = cv2.resize(g32[:hs * stride, :ws * stride], (ws, hs), interpolation=cv2.INTER_AREA)
    if small.shape[0] < t_small.shape[0] or small.shape[1] < t_small.shape[1]:
        return []
    res = cv2.matchTemplate(small, t_small, cv2.TM_CCOEFF_NORMED, mask=m_small)
    res[~np.isfinite(res)] = 0
    out = []
    for cx, cy in _local_peaks(res, params.score_threshold - _COARSE_SLACK, max(1, radius // (2 * stride))):
        x0 = max(0, cx * stride - stride)
        y0 = max(0, cy * stride - stride)
        x1 = min(w - side, cx * stride + stride)
        y1 = min(h - side, cy * stride + stride)
        if x1 < x0 or y1 < y0:
            continue
        win = g32[y0:y1 + side, x0:x1 + side]
        r = cv2.matchTemplate(win, matcher.cv_template, cv2.TM_CCOEFF_NORMED, mask=matcher.cv_mask)
        r[~np.isfinite(r)] = -1
        iy, ix = np.unravel_index(int(np.argmax(r)), r.shape)
        if r[iy, ix] < params.score_threshold - _SEARCH_SLACK:
            continue
        out.append((x0 + int(ix), y0 + int(iy)))
    return out


def clamp_bbox(bbox, width: int, height: int):
    x0, y0, x1, y1 = bbox
    return (max(0, x0), max(0, y0), min(width, x1), min(height, y1))


def _q(v: float) -> float:
    return round(float(v), 4)


def detect_touches(frame: Frame, profile: DeviceProfile, params: DetectorParams = DetectorParams(),
                   matcher: Optional[TemplateMatcher] = None) -> list[TouchDetection]:
    """Locate touch indicators in one frame, with opacity already classified."""
    matcher = matcher or TemplateMatcher(profile)
    pixels = frame.pixels
    h, w = pixels.shape[:2]
    if (w, h) != (profile.screen_width, profile.screen_height):
        raise DimensionMismatch(f"frame {frame.index} is {w}x{h}, profile {profile.name} "
                                f"is {profile.screen_width}x{profile.screen_height}")
    gray = luma(pixels)
    cache: dict = {}
    peaks = {}
    for x, y in _candidates(gray, matcher, params):
        px, py, sc = _hill_climb(gray, x, y, matcher, cache)
        if sc >= params.score_threshold:
            peaks[(px, py)] = sc
    side = matcher.side
    dets = []
    for (x, y), sc in peaks.items():
        bbox = clamp_bbox((x, y, x + side, y + side), w, h)
        if (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]) < MIN_CLAMPED_AREA * side * side:
            continue
        det = TouchDetection(frame.index, bbox, _q(min(1.0, sc)))
        opacity, oconf = _opacity(gray, det, matcher)
        dets.append(TouchDetection(frame.index, bbox, det.confidence, opacity, _q(oconf)))
    return non_max_suppress(dets, params.nms_iou)


def _crop(gray: np.ndarray, det: TouchDetection, side: int) -> np.ndarray:
    h, w = gray.shape
    x0, y0, x1, y1 = (int(round(v)) for v in clamp_bbox(det.bbox, w, h))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateCrop(f"bbox {det.bbox} has no area inside the frame")
    crop = gray[y0:y1, x0:x1].astype(np.float64)
    if crop.shape != (side, side):
        crop = cv2.resize(crop, (side, side), interpolation=cv2.INTER_LINEAR)
    return crop


def _opacity(gray: np.ndarray, det: TouchDetection, m: TemplateMatcher) -> tuple[Opacity, float]:
    crop = _crop(gray, det, m.side)
    # background level under the glyph, estimated from the uncovered corners
    bg = float(np.median(crop[m.outside])) if m.outside.any() else 0.0
    d = crop[m.mask] - bg
    scores = []
    for g, a in ((m.gray_high, m.alpha_high), (m.gray_low, m.alpha_low)):
        e = (a * (g - bg))[m.mask]
        denom = float(d @ d + e @ e)
        s = 2.0 * float(d @ e) / denom if denom > 0 else 0.0
        scores.append((1.0 + s) / 2.0)
    high, low = scores
    total = high + low
    if total <= 0:
        return Opacity.HIGH, 0.5
    if high >= low:
        return Opacity.HIGH, high / total
    return Opacity.LOW, low / total


def classify_opacity(frame: Frame, det: TouchDetection, profile: DeviceProfile,
                     matcher: Optional[TemplateMatcher] = None) -> tuple[Opacity, float]:
    """Decide HIGH/LOW opacity by comparing the crop against both templates.

    Each template is scored with a concordance-style correlation of the
    background-subtracted crop against the template's expected contribution,
    mapped to [0, 1]; confidence is the winner's share of the two scores.
    """
    matcher = matcher or TemplateMatcher(profile)
    return _opacity(luma(frame.pixels), det, matcher)


@dataclass
class DetectionReport:
    width: int
    height: int
    frame_count: int
    per_frame: list[list[TouchDetection]] = field(default_factory=list)
    fps: int = FPS

    def __post_init__(self):
        if not self.per_frame:
            self.per_frame = [[] for _ in range(self.frame_count)]
        if len(self.per_frame) != self.frame_count:
            raise ValueError("per_frame must have one entry per frame")

    def detections(self) -> Iterator[TouchDetection]:
        for dets in self.per_frame:
            yield from dets

    def __len__(self) -> int:
        return sum(len(d) for d in self.per_frame)

    def to_dict(self) -> dict:
        frames = []
        for i, dets in enumerate(self.per_frame):
            if not dets:
                continue
            frames.append({"index": i, "detections": [
                {"bbox": [_num(v) for v in d.bbox],
                 "confidence": _q(d.confidence),
                 "opacity": d.opacity.value,
                 "opacity_confidence": _q(d.opacity_confidence)} for d in dets]})
        return {"video": {"width": self.width, "height": self.height, "fps": self.fps,
                          "frame_count": self.frame_count},
                "frames": frames}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path


def _num(v):
    if isinstance(v, (int, np.integer)) or float(v).is_integer():
        return int(v)
    return _q(v)


def run_detection(frames, profile: DeviceProfile, params: DetectorParams = DetectorParams(),
                  jobs: int = 1) -> DetectionReport:
    """Detect touches on every frame; ``jobs`` > 1 runs frames on a thread pool."""
    if len(frames):
        frames.check_profile(profile)
    matcher = TemplateMatcher(profile)

    def one(frame):
        return detect_touches(frame, profile, params, matcher)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_frame = list(pool.map(one, frames))
    else:
        per_frame = [one(f) for f in frames]
    report = DetectionReport(profile.screen_width, profile.screen_height, len(per_frame), per_frame)
    log.info("detect: frames=%d detections=%d", report.frame_count, len(report))
    return report


_SCHEMA = {
    "type": "object",
    "required": ["video", "frames"],
    "properties": {
        "video": {
            "type": "object",
            "required": ["width", "height", "fps", "frame_count"],
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
                "fps": {"const": FPS},
                "frame_count": {"type": "integer", "minimum": 0},
            },
        },
        "frames": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "detections"],
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "detections": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["bbox", "confidence", "opacity", "opacity_confidence"],
                            "properties": {
                                "bbox": {"type": "array", "items": {"type": "number"},
                                         "minItems": 4, "maxItems": 4},
                                "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                                "opacity": {"enum": ["high", "low"]},
                                "opacity_confidence": {"type": "number", "minimum": 0, "maximum": 1},
                            },
                        },
                    },
                },
            },
        },
    },
}


def _pointer(parts) -> str:
    return "".join(f"/{p}" for p in parts)


def parse_detections(doc: dict, profile: Optional[DeviceProfile] = None) -> DetectionReport:
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(_pointer(exc.absolute_path), exc.message) from None
    video = doc["video"]
    width, height, count = video["width"], video["height"], video["frame_count"]
    if profile is not None:
        if width != profile.screen_width:
            raise SchemaViolation("/video/width", f"{width} does not match profile {profile.name}")
        if height != profile.screen_height:
            raise SchemaViolation("/video/height", f"{height} does not match profile {profile.name}")
    per_frame: list[list[TouchDetection]] = [[] for _ in range(count)]
    seen = set()
    for fi, fr in enumerate(doc["frames"]):
        idx = fr["index"]
        if idx >= count:
            raise SchemaViolation(f"/frames/{fi}/index", f"{idx} out of range for {count} frames")
        if idx in seen:
            raise SchemaViolation(f"/frames/{fi}/index", f"duplicate frame index {idx}")
        seen.add(idx)
        for di, d in enumerate(fr["detections"]):
            det = TouchDetection(idx, tuple(d["bbox"]), d["confidence"],
                                 Opacity(d["opacity"]), d["opacity_confidence"])
            bad = det.violations(width, height)
            if bad:
                raise SchemaViolation(f"/frames/{fi}/detections/{di}/bbox", bad[0])
            per_frame[idx].append(det)
    return DetectionReport(width, height, count, per_frame)


def import_detections(path: str | os.PathLike, profile: Optional[DeviceProfile] = None) -> DetectionReport:
    """Read a ``detection_full.json`` file from this or any external detector."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("", f"not JSON: {exc}") from None
    return parse_detections(doc, profile)
