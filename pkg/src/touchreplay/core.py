"""Domain types, device profiles and run configuration shared by every stage."""
from __future__ import annotations

import dataclasses
import enum
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import cv2
import numpy as np

log = logging.getLogger(__name__)

FPS = 30
FRAME_MS = 33
FRAME_US = 33_000

PROFILE_DIR = Path(__file__).parent / "profiles"


class TouchReplayError(Exception):
    """Base class for every error raised by the pipeline."""


class ConfigError(TouchReplayError):
    pass


class Opacity(str, enum.Enum):
    HIGH = "high"
    LOW = "low"


class ActionKind(str, enum.Enum):
    TAP = "TAP"
    LONG_TAP = "LONG_TAP"
    GESTURE = "GESTURE"


def render_indicator(radius: int, alpha: float = 1.0, ring_fraction: float = 0.27) -> np.ndarray:
    """Draw the default touch indicator glyph as a square RGBA patch.

    The glyph is a light disc with a dark rim, antialiased at the border.
    ``alpha`` scales the opacity of the whole glyph (1.0 for a pressed finger,
    lower for the fade-out after lift).
    """
    side = 2 * radius
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    dist = np.hypot(xx - radius, yy - radius)
    cover = np.clip(radius - dist, 0.0, 1.0)
    ring = max(1, int(round(radius * ring_fraction)))
    value = np.where(dist > radius - ring, 30, 250).astype(np.uint8)
    rgba = np.zeros((side, side, 4), np.uint8)
    rgba[..., :3] = value[..., None]
    rgba[..., 3] = np.round(cover * alpha * 255).astype(np.uint8)
    return rgba


def luma(rgb: np.ndarray) -> np.ndarray:
    """Grayscale of an 8-bit RGB image (BT.601 weights), as uint8."""
    if rgb.ndim == 2:
        return rgb
    return cv2.cvtColor(np.ascontiguousarray(rgb[..., :3]), cv2.COLOR_RGB2GRAY)


def read_image(path: str | os.PathLike, alpha: bool = False) -> np.ndarray:
    flag = cv2.IMREAD_UNCHANGED if alpha else cv2.IMREAD_COLOR
    img = cv2.imread(str(path), flag)
    if img is None:
        raise FileNotFoundError(f"cannot read image {path}")
    if img.ndim == 2:
        img = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
    if img.shape[2] == 4:
        return cv2.cvtColor(img, cv2.COLOR_BGRA2RGBA)
    rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    if alpha:
        return np.dstack([rgb, np.full(rgb.shape[:2], 255, np.uint8)])
    return rgb


def write_image(path: str | os.PathLike, img: np.ndarray) -> None:
    if img.ndim == 3 and img.shape[2] == 4:
        bgr = cv2.cvtColor(img, cv2.COLOR_RGBA2BGRA)
    elif img.ndim == 3:
        bgr = cv2.cvtColor(img, cv2.COLOR_RGB2BGR)
    else:
        bgr = img
    if not cv2.imwrite(str(path), bgr):
        raise OSError(f"cannot write image {path}")


@dataclass(frozen=True, eq=False)
class DeviceProfile:
    """Screen geometry, indicator templates and input-axis ranges of a target device.

    Templates are RGBA patches: the color channels hold the glyph and the alpha
    channel its coverage, so the same patch serves rendering and matching.
    """

    name: str
    screen_width: int
    screen_height: int
    axis_max_x: int
    axis_max_y: int
    event_device: str
    indicator_radius: int
    template_high: np.ndarray = field(repr=False)
    template_low: np.ndarray = field(repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DeviceProfile):
            return NotImplemented
        for f in dataclasses.fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if not (isinstance(b, np.ndarray) and a.shape == b.shape and np.array_equal(a, b)):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None  # type: ignore[assignment]

    @property
    def template_side(self) -> int:
        return int(self.template_high.shape[0])

    @classmethod
    def generated(cls, name: str, width: int, height: int, radius: int,
                  event_device: str = "/dev/input/event1",
                  axis_max_x: Optional[int] = None, axis_max_y: Optional[int] = None,
                  low_alpha: float = 0.4) -> "DeviceProfile":
        """Profile using the built-in indicator glyph; axis ranges default to the resolution."""
        return cls(
            name=name,
            screen_width=width,
            screen_height=height,
            axis_max_x=width if axis_max_x is None else axis_max_x,
            axis_max_y=height if axis_max_y is None else axis_max_y,
            event_device=event_device,
            indicator_radius=radius,
            template_high=render_indicator(radius, 1.0),
            template_low=render_indicator(radius, low_alpha),
        )

    def to_dict(self, template_high: str, template_low: str) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["template_high"] = template_high
        d["template_low"] = template_low
        return d


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_profile(profile: DeviceProfile) -> ValidationResult:
    res = ValidationResult()
    v = res.violations
    if profile.screen_width <= 0:
        v.append("screen_width > 0")
    if profile.screen_height <= 0:
        v.append("screen_height > 0")
    if profile.axis_max_x < 1:
        v.append("axis_max_x ≥ 1")
    if profile.axis_max_y < 1:
        v.append("axis_max_y ≥ 1")
    if profile.indicator_radius <= 0:
        v.append("indicator_radius > 0")
    for label in ("template_high", "template_low"):
        t = getattr(profile, label)
        if t.ndim < 2 or t.shape[0] != t.shape[1]:
            v.append(f"{label} must be square")
            continue
        if abs(t.shape[0] - 2 * profile.indicator_radius) > 2:
            v.append(f"{label} side ≈ 2·indicator_radius")
    if profile.template_high.shape != profile.template_low.shape:
        v.append("template_high and template_low must have the same shape")
    return res


def load_profile(ref: str | os.PathLike) -> DeviceProfile:
    """Load a profile by bundled name (``nexus5``) or by path to a profile JSON file."""
    path = Path(ref)
    if not path.suffix and not path.exists():
        path = PROFILE_DIR / f"{ref}.json"
    if not path.exists():
        raise ConfigError(f"unknown device profile {ref!r}")
    with open(path) as fh:
        d = json.load(fh)
    base = path.parent
    d["template_high"] = read_image(base / d["template_high"], alpha=True)
    d["template_low"] = read_image(base / d["template_low"], alpha=True)
    profile = DeviceProfile(**d)
    res = validate_profile(profile)
    if not res:
        raise ConfigError(f"invalid profile {path}: {'; '.join(res.violations)}")
    return profile


def save_profile(profile: DeviceProfile, path: str | os.PathLike) -> Path:
    """Write ``profile`` as JSON plus two PNG templates next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    high, low = f"{path.stem}_high.png", f"{path.stem}_low.png"
    write_image(path.parent / high, profile.template_high)
    write_image(path.parent / low, profile.template_low)
    with open(path, "w") as fh:
        json.dump(profile.to_dict(high, low), fh, indent=2)
        fh.write("\n")
    return path


def bundled_profiles() -> list[str]:
    return sorted(p.stem for p in PROFILE_DIR.glob("*.json"))


class Frame:
    """One video frame; pixel data may be produced lazily by a loader."""

    __slots__ = ("index", "_pixels", "_loader")

    def __init__(self, index: int, pixels: Optional[np.ndarray] = None,
                 loader: Optional[Callable[[], np.ndarray]] = None):
        if (pixels is None) == (loader is None):
            raise ValueError("exactly one of pixels or loader is required")
        self.index = index
        self._pixels = pixels
        self._loader = loader

    @property
    def timestamp_ms(self) -> int:
        return FRAME_MS * self.index

    @property
    def pixels(self) -> np.ndarray:
        if self._pixels is not None:
            return self._pixels
        return self._loader()

    def __repr__(self) -> str:
        return f"Frame(index={self.index}, timestamp_ms={self.timestamp_ms})"


@dataclass(frozen=True)
class TouchDetection:
    frame_index: int
    bbox: tuple[float, float, float, float]
    confidence: float
    opacity: Opacity = Opacity.HIGH
    opacity_confidence: float = 1.0

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return max(0.0, x1 - x0) * max(0.0, y1 - y0)

    def violations(self, width: int, height: int) -> list[str]:
        x0, y0, x1, y1 = self.bbox
        v = []
        if not 0 <= x0 < x1 <= width:
            v.append("0 ≤ x_min < x_max ≤ screen_width")
        if not 0 <= y0 < y1 <= height:
            v.append("0 ≤ y_min < y_max ≤ screen_height")
        if not 0.0 <= self.confidence <= 1.0:
            v.append("confidence in [0, 1]")
        if not 0.0 <= self.opacity_confidence <= 1.0:
            v.append("opacity_confidence in [0, 1]")
        return v


@dataclass(frozen=True)
class DetectorParams:
    score_threshold: float = 0.7
    nms_iou: float = 0.5
    # coarse-to-fine downsampling factor; 1 scores every pixel offset
    search_stride: int = 4

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError("score_threshold must be in [0, 1]")
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ConfigError("nms_iou must be in [0, 1]")
        if self.search_stride < 1:
            raise ConfigError("search_stride must be ≥ 1")


@dataclass(frozen=True)
class ClassifierParams:
    """Thresholds for grouping, segmentation and action translation.

    ``cluster_distance`` and ``tap_displacement_limit`` default to
    2·radius and radius of the device indicator; call :meth:`resolve` to fill
    them in for a given profile.
    """

    confidence_threshold: float = 0.7
    tap_frame_limit: int = 20
    cluster_distance: Optional[float] = None
    tap_displacement_limit: Optional[float] = None
    interpolation_gap: int = 2

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError("confidence_threshold must be in [0, 1]")
        if self.tap_frame_limit < 1:
            raise ConfigError("tap_frame_limit must be ≥ 1")
        if self.cluster_distance is not None and self.cluster_distance <= 0:
            raise ConfigError("cluster_distance must be > 0")
        if self.interpolation_gap < 0:
            raise ConfigError("interpolation_gap must be ≥ 0")

    def resolve(self, profile: DeviceProfile) -> "ClassifierParams":
        r = float(profile.indicator_radius)
        return dataclasses.replace(
            self,
            cluster_distance=2 * r if self.cluster_distance is None else self.cluster_distance,
            tap_displacement_limit=r if self.tap_displacement_limit is None else self.tap_displacement_limit,
        )


@dataclass
class RunConfig:
    device: DeviceProfile
    output_dir: Path
    video_path: Optional[Path] = None
    frames_dir: Optional[Path] = None
    detections_path: Optional[Path] = None
    detector_params: DetectorParams = field(default_factory=DetectorParams)
    classifier_params: ClassifierParams = field(default_factory=ClassifierParams)

    def __post_init__(self):
        entries = [p for p in (self.video_path, self.frames_dir, self.detections_path) if p is not None]
        if len(entries) != 1:
            raise ConfigError("exactly one of video_path, frames_dir, detections_path must be set")

    @property
    def entry_point(self) -> str:
        if self.detections_path is not None:
            return "detections"
        if self.frames_dir is not None:
            return "frames"
        return "video"


def _opt_path(v: Any) -> Optional[Path]:
    return None if v is None else Path(v)


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a JSON run configuration; relative paths resolve against the file's directory."""
    path = Path(path)
    with open(path) as fh:
        d = json.load(fh)
    base = path.parent
    unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def rel(v):
        p = _opt_path(v)
        return p if p is None or p.is_absolute() else base / p

    device_ref = d.get("device")
    if device_ref is None:
        raise ConfigError("config needs a device")
    dev_path = base / device_ref
    device = load_profile(dev_path if dev_path.exists() else device_ref)
    return RunConfig(
        device=device,
        output_dir=rel(d.get("output_dir", "out")),
        video_path=rel(d.get("video_path")),
        frames_dir=rel(d.get("frames_dir")),
        detections_path=rel(d.get("detections_path")),
        detector_params=DetectorParams(**d.get("detector_params", {})),
        classifier_params=ClassifierParams(**d.get("classifier_params", {})),
    )


def save_config(config: RunConfig, path: str | os.PathLike) -> Path:
    """Write ``config`` as JSON.

    A bundled device is referenced by name; any other device is written as a
    profile file next to the config.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    device_ref: str = config.device.name
    if device_ref not in bundled_profiles() or load_profile(device_ref) != config.device:
        prof = save_profile(config.device, path.with_name(f"{path.stem}.profile.json"))
        device_ref = prof.name

    def s(p):
        return None if p is None else str(p)

    d = {
        "video_path": s(config.video_path),
        "frames_dir": s(config.frames_dir),
        "detections_path": s(config.detections_path),
        "device": device_ref,
        "detector_params": dataclasses.asdict(config.detector_params),
        "classifier_params": dataclasses.asdict(config.classifier_params),
        "output_dir": s(config.output_dir),
    }
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2)
        fh.write("\n")
    return path
