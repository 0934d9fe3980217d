"""Ground-truth scenario rendering for desk-scale verification.

A scenario lists finger paths frame by frame; rendering composites the
device's indicator template onto a background at every path point (and the
faded template for the lift tail). Rendering is lazy: frames are drawn when
their pixels are requested, so long corpora do not sit in memory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from .core import ActionKind, ClassifierParams, DeviceProfile, Frame, Opacity, save_profile
from .classify import ActionList, TouchTrack, TrackPoint, translate_action
from .ingest import FrameSequence

Placement = tuple[int, int, Opacity]


@dataclass
class GroundTruthAction:
    kind: ActionKind
    path: list[tuple[int, int, int]]  # (frame, x, y)
    low_opacity_tail: int = 1

    @property
    def start_frame(self) -> int:
        return self.path[0][0]

    @property
    def end_frame(self) -> int:
        return self.path[-1][0] + self.low_opacity_tail

    def points(self) -> list[TrackPoint]:
        pts = [TrackPoint(f, float(x), float(y)) for f, x, y in self.path]
        f, x, y = self.path[-1]
        pts += [TrackPoint(f + k, float(x), float(y), Opacity.LOW) for k in range(1, self.low_opacity_tail + 1)]
        return pts


@dataclass
class GroundTruthScenario:
    device: DeviceProfile
    steps: list[GroundTruthAction] = field(default_factory=list)
    n_frames: Optional[int] = None

    def __post_init__(self):
        r = self.device.indicator_radius
        prev_end = -1
        for i, st in enumerate(sorted(self.steps, key=lambda s: s.start_frame)):
            if st.start_frame <= prev_end:
                raise ValueError(f"step {i} overlaps the previous step in frames")
            frames = [f for f, _, _ in st.path]
            if frames != list(range(frames[0], frames[0] + len(frames))):
                raise ValueError(f"step {i} path frames must be consecutive")
            for _, x, y in st.path:
                if not (r <= x <= self.device.screen_width - r and r <= y <= self.device.screen_height - r):
                    raise ValueError(f"step {i} point ({x}, {y}) puts the indicator off screen")
            prev_end = st.end_frame
        if self.n_frames is None:
            self.n_frames = prev_end + 1
        elif self.n_frames <= prev_end:
            raise ValueError("n_frames too short for the steps")

    def placements(self) -> list[list[Placement]]:
        plan: list[list[Placement]] = [[] for _ in range(self.n_frames)]
        for st in self.steps:
            for p in st.points():
                plan[p.frame].append((int(p.x), int(p.y), p.opacity))
        return plan


def composite(canvas: np.ndarray, template: np.ndarray, cx: int, cy: int) -> None:
    """Alpha-blend an RGBA ``template`` centred at (cx, cy) into ``canvas`` in place."""
    side = template.shape[0]
    r = side // 2
    x0, y0 = cx - r, cy - r
    h, w = canvas.shape[:2]
    tx0, ty0 = max(0, -x0), max(0, -y0)
    tx1, ty1 = min(side, w - x0), min(side, h - y0)
    if tx1 <= tx0 or ty1 <= ty0:
        return
    t = template[ty0:ty1, tx0:tx1].astype(np.float32)
    region = canvas[y0 + ty0:y0 + ty1, x0 + tx0:x0 + tx1]
    a = t[..., 3:4] / 255.0
    blended = a * t[..., :3] + (1.0 - a) * region.astype(np.float32)
    region[...] = np.round(blended).astype(np.uint8)


class RenderedSequence(FrameSequence):
    """Frame sequence drawn on demand from a placement plan."""

    def __init__(self, profile: DeviceProfile, plan: list[list[Placement]], background: np.ndarray,
                 gaussian_sigma: float = 0.0, noise_seed: int = 0, source: str = "synthetic"):
        self.profile = profile
        self.plan = plan
        self.background = background
        self.gaussian_sigma = gaussian_sigma
        self.noise_seed = noise_seed
        frames = [Frame(i, loader=lambda i=i: self.render(i)) for i in range(len(plan))]
        super().__init__(frames, profile.screen_width, profile.screen_height, source)

    def render(self, index: int) -> np.ndarray:
        canvas = self.background.copy()
        for x, y, op in self.plan[index]:
            tmpl = self.profile.template_high if op is Opacity.HIGH else self.profile.template_low
            composite(canvas, tmpl, x, y)
        if self.gaussian_sigma > 0:
            # one noise field shared by the three channels (luminance noise)
            rng = np.random.default_rng([self.noise_seed, index])
            noise = rng.standard_normal(canvas.shape[:2], dtype=np.float32)
            noise *= np.float32(self.gaussian_sigma)
            noisy = cv2.add(canvas.astype(np.float32), cv2.merge([noise, noise, noise]))
            canvas = cv2.convertScaleAbs(cv2.max(noisy, 0.0))
        return canvas


def solid_background(profile: DeviceProfile, color=(255, 255, 255)) -> np.ndarray:
    bg = np.empty((profile.screen_height, profile.screen_width, 3), np.uint8)
    bg[...] = np.asarray(color, np.uint8)
    return bg


def app_background(profile: DeviceProfile, seed: int) -> np.ndarray:
    """A cluttered, screenshot-like background: status bar, list rows, buttons, text lines."""
    rng = np.random.default_rng([seed, 7])
    w, h = profile.screen_width, profile.screen_height
    dark = rng.random() < 0.3
    base = rng.integers(15, 45) if dark else rng.integers(225, 256)
    tint = rng.integers(-12, 13, size=3)
    bg = np.empty((h, w, 3), np.int32)
    bg[...] = np.clip(base + tint, 0, 255)

    def rect(x0, y0, x1, y1, color):
        bg[max(0, y0):max(0, y1), max(0, x0):max(0, x1)] = color

    accent = rng.integers(40, 220, size=3)
    bar = int(h * 0.035)
    rect(0, 0, w, bar, accent // 2)
    rect(0, bar, w, 3 * bar, accent)
    y = 3 * bar + int(rng.integers(10, 40))
    while y < h - 2 * bar:
        row = int(rng.integers(h // 24, h // 9))
        shade = np.clip(base + rng.integers(-70, 71, size=3), 0, 255)
        rect(int(w * 0.04), y, int(w * 0.96), y + row - 6, shade)
        ink = np.clip(base + (90 if dark else -90) + rng.integers(-30, 31, size=3), 0, 255)
        ty = y + 10
        while ty + 12 < y + row - 10:
            tw = int(w * rng.uniform(0.2, 0.8))
            rect(int(w * 0.08), ty, int(w * 0.08) + tw, ty + int(rng.integers(6, 14)), ink)
            ty += int(rng.integers(18, 34))
        if rng.random() < 0.4:
            bx = int(rng.integers(w // 2, int(w * 0.85)))
            rect(bx, y + 8, bx + int(w * 0.1), y + row - 14, accent)
        y += row
    rect(0, h - 2 * bar, w, h, accent // 3)
    return bg.astype(np.uint8)


def expected_actions(scenario: GroundTruthScenario, params: ClassifierParams = ClassifierParams()) -> ActionList:
    """Apply the classifier's translation rules to each ground-truth step."""
    params = params.resolve(scenario.device)
    return ActionList([translate_action(TouchTrack(st.points()), params) for st in scenario.steps])


def render_scenario(scenario: GroundTruthScenario, background=(255, 255, 255),
                    params: ClassifierParams = ClassifierParams()) -> tuple[RenderedSequence, ActionList]:
    """Render ``scenario`` and return the frames with the actions they should classify to.

    ``background`` is an RGB color or an image of the screen size.
    """
    bg = np.asarray(background)
    if bg.ndim == 1:
        bg = solid_background(scenario.device, tuple(int(c) for c in bg))
    elif bg.shape[:2] != (scenario.device.screen_height, scenario.device.screen_width):
        raise ValueError("background image must match the device screen size")
    seq = RenderedSequence(scenario.device, scenario.placements(), bg.astype(np.uint8))
    return seq, expected_actions(scenario, params)


@dataclass(frozen=True)
class NoiseSpec:
    jitter_px: int = 0
    drop_rate: float = 0.0
    gaussian_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        if self.jitter_px < 0 or self.gaussian_sigma < 0:
            raise ValueError("jitter_px and gaussian_sigma must be ≥ 0")


def perturb(frames: RenderedSequence, noise: NoiseSpec, seed: int) -> RenderedSequence:
    """Re-render with jittered or dropped indicators and additive pixel noise.

    Deterministic for a fixed seed. Jitter is clamped so the indicator stays
    on screen.
    """
    if not isinstance(frames, RenderedSequence):
        raise TypeError("perturb needs a RenderedSequence (it re-renders the indicators)")
    rng = np.random.default_rng([seed, 1])
    prof = frames.profile
    r = prof.indicator_radius
    plan = []
    for placements in frames.plan:
        out = []
        for x, y, op in placements:
            dx, dy = rng.integers(-noise.jitter_px, noise.jitter_px + 1, size=2)
            drop = rng.random() < noise.drop_rate
            if drop:
                continue
            x = int(np.clip(x + dx, r, prof.screen_width - r))
            y = int(np.clip(y + dy, r, prof.screen_height - r))
            out.append((x, y, op))
        plan.append(out)
    return RenderedSequence(prof, plan, frames.background, noise.gaussian_sigma, seed,
                            source=f"{frames.source}+noise")


ARCHETYPES = ("tap", "long_tap", "swipe", "flick", "typing", "mixed")


@dataclass
class CorpusSpec:
    """Scenario counts per archetype, plus rendering options."""

    counts: dict[str, int]
    device: str = "nexus5"
    typing_keys: tuple[int, int] = (3, 8)
    backgrounds: str = "mixed"  # "solid", "app" or "mixed"
    noise: Optional[NoiseSpec] = None

    def __post_init__(self):
        unknown = set(self.counts) - set(ARCHETYPES)
        if unknown:
            raise ValueError(f"unknown archetypes {sorted(unknown)}")
        if isinstance(self.typing_keys, int):
            self.typing_keys = (self.typing_keys, self.typing_keys)
        self.typing_keys = tuple(self.typing_keys)
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CorpusSpec":
        with open(path) as fh:
            d = json.load(fh)
        if "counts" not in d:
            d = {"counts": d}
        return cls(**d)


@dataclass
class CorpusItem:
    scenario_id: str
    scenario: GroundTruthScenario
    frames: RenderedSequence
    expected: ActionList


class _ScenarioBuilder:
    """Lays steps out on a timeline for one scenario."""

    def __init__(self, profile: DeviceProfile, rng: np.random.Generator):
        self.p = profile
        self.rng = rng
        self.t = int(rng.integers(2, 6))
        self.steps: list[GroundTruthAction] = []
        self.margin = 2 * profile.indicator_radius

    def point(self) -> tuple[int, int]:
        m = self.margin
        return (int(self.rng.integers(m, self.p.screen_width - m)),
                int(self.rng.integers(m, self.p.screen_height - m)))

    def add(self, kind: ActionKind, xy: list[tuple[int, int]], tail: int, gap: int):
        path = [(self.t + k, x, y) for k, (x, y) in enumerate(xy)]
        self.steps.append(GroundTruthAction(kind, path, tail))
        self.t += len(xy) + tail + gap

    def stationary(self, kind: ActionKind, hold: int, gap: int):
        x, y = self.point()
        self.add(kind, [(x, y)] * hold, int(self.rng.integers(1, 3)), gap)

    def tap(self, gap: int):
        self.stationary(ActionKind.TAP, int(self.rng.integers(1, 9)), gap)

    def long_tap(self, gap: int):
        self.stationary(ActionKind.LONG_TAP, int(self.rng.integers(22, 36)), gap)

    def moving(self, n_range, step_range, gap: int):
        rng = self.rng
        m = self.margin
        for _ in range(1000):
            n = int(rng.integers(*n_range))
            step = float(rng.uniform(*step_range))
            theta = float(rng.uniform(0, 2 * np.pi))
            x0, y0 = self.point()
            xy = [(int(round(x0 + k * step * np.cos(theta))), int(round(y0 + k * step * np.sin(theta))))
                  for k in range(n)]
            if all(m <= x <= self.p.screen_width - m and m <= y <= self.p.screen_height - m for x, y in xy):
                self.add(ActionKind.GESTURE, xy, int(rng.integers(1, 3)), gap)
                return
        raise RuntimeError("could not place a gesture on screen")

    def swipe(self, gap: int):
        # per-frame steps stay under half the default link distance so one dropped
        # frame (plus jitter) still links
        self.moving((6, 16), (10.0, 25.0), gap)

    def flick(self, gap: int):
        self.moving((3, 6), (20.0, 26.0), gap)

    def typing(self, n_keys: int):
        cols, rows = 10, 4
        pitch_x = self.p.screen_width / cols
        top = self.p.screen_height * 0.62
        pitch_y = (self.p.screen_height * 0.95 - top) / rows
        prev = None
        for k in range(n_keys):
            while True:
                key = (int(self.rng.integers(cols)), int(self.rng.integers(rows)))
                if key != prev:
                    break
            prev = key
            x = int(round((key[0] + 0.5) * pitch_x))
            y = int(round(top + (key[1] + 0.5) * pitch_y))
            hold = int(self.rng.integers(2, 5))
            gap = int(self.rng.integers(0, 2)) if k < n_keys - 1 else 0
            self.add(ActionKind.TAP, [(x, y)] * hold, int(self.rng.integers(1, 3)), gap)

    def finish(self) -> GroundTruthScenario:
        n = self.t + int(self.rng.integers(2, 6))
        return GroundTruthScenario(self.p, self.steps, n)


def build_scenario(archetype: str, profile: DeviceProfile, rng: np.random.Generator,
                   typing_keys: tuple[int, int] = (3, 8)) -> GroundTruthScenario:
    b = _ScenarioBuilder(profile, rng)
    sep = lambda: int(rng.integers(4, 11))  # noqa: E731 - separation longer than the interpolation gap
    if archetype == "typing":
        b.typing(int(rng.integers(typing_keys[0], typing_keys[1] + 1)))
    elif archetype == "mixed":
        for _ in range(int(rng.integers(3, 6))):
            getattr(b, str(rng.choice(["tap", "long_tap", "swipe", "flick"])))(sep())
    else:
        getattr(b, archetype)(sep())
    return b.finish()


def _background_for(spec: CorpusSpec, profile: DeviceProfile, rng: np.random.Generator) -> np.ndarray:
    choice = spec.backgrounds
    if choice == "mixed":
        choice = "app" if rng.random() < 0.5 else "solid"
    if choice == "app":
        return app_background(profile, int(rng.integers(0, 2**31)))
    palette = [(255, 255, 255), (250, 250, 250), (33, 33, 33), (18, 18, 18), (230, 240, 255), (66, 133, 244)]
    return solid_background(profile, palette[int(rng.integers(len(palette)))])


def generate_corpus(spec: CorpusSpec, seed: int, profile: Optional[DeviceProfile] = None,
                    params: ClassifierParams = ClassifierParams()) -> list[CorpusItem]:
    """Deterministic synthetic corpus: same (spec, seed) gives the same scenarios and pixels."""
    from .core import load_profile

    profile = profile or load_profile(spec.device)
    items = []
    for archetype in ARCHETYPES:
        for k in range(spec.counts.get(archetype, 0)):
            rng = np.random.default_rng([seed, ARCHETYPES.index(archetype), k])
            scenario = build_scenario(archetype, profile, rng, spec.typing_keys)
            bg = _background_for(spec, profile, rng)
            frames, expected = render_scenario(scenario, bg, params)
            if spec.noise is not None:
                frames = perturb(frames, spec.noise, seed=int(rng.integers(0, 2**31)))
            items.append(CorpusItem(f"{archetype}-{k:03d}", scenario, frames, expected))
    return items


def write_corpus(items: Sequence[CorpusItem], out_dir: str | os.PathLike) -> Path:
    """Write frame directories, expected action files and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    profiles = {}
    for item in items:
        sdir = out / item.scenario_id
        item.frames.save(sdir / "frames")
        item.expected.save(sdir / "expected_actions.json")
        dev = item.scenario.device
        if dev.name not in profiles:
            profiles[dev.name] = save_profile(dev, out / "profiles" / f"{dev.name}.json")
        entries.append({
            "id": item.scenario_id,
            "frames_dir": f"{item.scenario_id}/frames",
            "expected_actions": f"{item.scenario_id}/expected_actions.json",
            "frame_count": len(item.frames),
            "device": f"profiles/{dev.name}.json",
        })
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"scenarios": entries}, indent=2) + "\n")
    return manifest


def detector_benchmark(n_frames: int = 500, seed: int = 0, profile: Optional[DeviceProfile] = None,
                       low_fraction: float = 0.25, gaussian_sigma: float = 0.0,
                       frames_per_background: int = 25) -> tuple[FrameSequence, dict[int, list[tuple]]]:
    """Independent frames holding 0-2 indicators each, for scoring the detector.

    Returns the frames and the ground-truth boxes keyed by frame index. The
    background changes every ``frames_per_background`` frames, alternating
    between app-like and solid screens.
    """
    from .core import load_profile

    profile = profile or load_profile("nexus5")
    rng = np.random.default_rng([seed, 11])
    side = profile.template_side
    half = side // 2
    r = profile.indicator_radius
    spec = CorpusSpec({}, backgrounds="mixed")
    frames, truth = [], {}
    seq = None
    for i in range(n_frames):
        if i % frames_per_background == 0:
            bg = _background_for(spec, profile, rng)
            seq = RenderedSequence(profile, [], bg, gaussian_sigma, int(rng.integers(0, 2**31)))
        placements: list[Placement] = []
        for _ in range(int(rng.integers(0, 3))):
            for _ in range(100):
                x = int(rng.integers(r, profile.screen_width - r + 1))
                y = int(rng.integers(r, profile.screen_height - r + 1))
                if all(np.hypot(x - px, y - py) > 3 * r for px, py, _ in placements):
                    break
            else:
                continue
            op = Opacity.LOW if rng.random() < low_fraction else Opacity.HIGH
            placements.append((x, y, op))
        seq.plan.append(placements)
        j = len(seq.plan) - 1
        frames.append(Frame(i, loader=lambda s=seq, j=j: s.render(j)))
        truth[i] = [(x - half, y - half, x - half + side, y - half + side) for x, y, _ in placements]
    return FrameSequence(frames, profile.screen_width, profile.screen_height, "benchmark"), truth
