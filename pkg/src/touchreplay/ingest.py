"""Frame extraction: normalize recordings to 30 FPS and load frame directories."""
from __future__ import annotations

import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import warnings
from pathlib import Path
from typing import Iterator, Optional, Sequence

import cv2
import numpy as np
from PIL import Image

from .core import FPS, DeviceProfile, Frame, TouchReplayError, read_image, write_image

log = logging.getLogger(__name__)

MIN_SOURCE_FPS = 29.0
FRAME_PATTERN = "%06d.png"
TRANSCODER_ENV = "TOUCHREPLAY_TRANSCODER"
DEFAULT_TRANSCODER = "ffmpeg -v error -y -i {input} -vf fps={fps} -start_number 0 {output_pattern}"

_FRAME_NAME = re.compile(r"^(\d+)\.png$")


class IngestError(TouchReplayError):
    pass


class UnreadableVideo(IngestError):
    pass


class FpsTooLow(IngestError):
    pass


class DimensionMismatch(IngestError):
    pass


class MissingIndex(IngestError):
    pass


class FrameSequence(Sequence[Frame]):
    """Index-ordered frames at 30 FPS, all sized to the device screen."""

    fps = FPS

    def __init__(self, frames: list[Frame], width: int, height: int, source: str = ""):
        for i, f in enumerate(frames):
            if f.index != i:
                raise MissingIndex(f"frame at position {i} has index {f.index}")
        self.frames = frames
        self.width = width
        self.height = height
        self.source = source

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray], source: str = "arrays") -> "FrameSequence":
        if not arrays:
            return cls([], 0, 0, source)
        h, w = arrays[0].shape[:2]
        for i, a in enumerate(arrays):
            if a.shape[:2] != (h, w):
                raise DimensionMismatch(f"frame {i} is {a.shape[1]}x{a.shape[0]}, expected {w}x{h}")
        return cls([Frame(i, pixels=a) for i, a in enumerate(arrays)], w, h, source)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __repr__(self) -> str:
        return f"FrameSequence({len(self)} frames, {self.width}x{self.height}, source={self.source!r})"

    def check_profile(self, profile: DeviceProfile) -> None:
        if len(self) and (self.width, self.height) != (profile.screen_width, profile.screen_height):
            raise DimensionMismatch(
                f"frames are {self.width}x{self.height}, profile {profile.name} is "
                f"{profile.screen_width}x{profile.screen_height}")

    def save(self, directory: str | os.PathLike) -> Path:
        """Write every frame as ``%06d.png`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for f in self.frames:
            write_image(directory / (FRAME_PATTERN % f.index), f.pixels)
        return directory


def load_frame_dir(directory: str | os.PathLike, profile: Optional[DeviceProfile] = None) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestError(f"{directory} is not a directory")
    indexed = {}
    for p in directory.iterdir():
        m = _FRAME_NAME.match(p.name)
        if m:
            indexed[int(m.group(1))] = p
    if not indexed:
        warnings.warn(f"no frames found in {directory}", stacklevel=2)
        return FrameSequence([], 0, 0, source=str(directory))
    missing = sorted(set(range(max(indexed) + 1)) - set(indexed))
    if missing:
        raise MissingIndex(f"{directory}: missing frame index {missing[0]}")

    paths = [indexed[i] for i in range(len(indexed))]
    sizes = set()
    for p in paths:
        with Image.open(p) as im:
            sizes.add(im.size)
    if len(sizes) > 1:
        raise DimensionMismatch(f"{directory}: frames have differing sizes {sorted(sizes)}")
    width, height = sizes.pop()
    frames = [Frame(i, loader=lambda p=p: read_image(p)) for i, p in enumerate(paths)]
    seq = FrameSequence(frames, width, height, source=str(directory))
    if profile is not None:
        seq.check_profile(profile)
    return seq


def probe_video(video_path: str | os.PathLike) -> tuple[float, int, int, int]:
    """Return (fps, width, height, frame_count) as reported by the container."""
    cap = cv2.VideoCapture(str(video_path))
    try:
        if not cap.isOpened():
            raise UnreadableVideo(f"cannot open {video_path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        w = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        h = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
        n = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    finally:
        cap.release()
    if fps <= 0 or w <= 0 or h <= 0:
        raise UnreadableVideo(f"{video_path}: no decodable video stream")
    return fps, w, h, n


def _transcoder_available(template: str) -> bool:
    argv = shlex.split(template)
    return bool(argv) and shutil.which(argv[0]) is not None


def _run_transcoder(template: str, video_path: Path, out_dir: Path) -> None:
    cmd = template.format(input=shlex.quote(str(video_path)), fps=FPS,
                          output_pattern=shlex.quote(str(out_dir / FRAME_PATTERN)))
    log.info("transcoding: %s", cmd)
    proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise UnreadableVideo(f"transcoder failed ({proc.returncode}): {proc.stderr.strip()}")


def _decode_resampled(video_path: Path, src_fps: float, out_dir: Path) -> int:
    """Decode with OpenCV and keep the source frame nearest below each 30 FPS tick."""
    cap = cv2.VideoCapture(str(video_path))
    ratio = src_fps / FPS
    written = 0
    n_src = 0
    last = None
    try:
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            last = bgr
            while math.floor(written * ratio + 1e-9) == n_src:
                cv2.imwrite(str(out_dir / (FRAME_PATTERN % written)), bgr)
                written += 1
            n_src += 1
    finally:
        cap.release()
    if n_src == 0:
        raise UnreadableVideo(f"{video_path}: no frames decoded")
    target = round(n_src / src_fps * FPS)
    while written > target:
        written -= 1
        os.remove(out_dir / (FRAME_PATTERN % written))
    while written < target:
        cv2.imwrite(str(out_dir / (FRAME_PATTERN % written)), last)
        written += 1
    return written


def normalize_and_extract(video_path: str | os.PathLike, profile: DeviceProfile,
                          out_dir: Optional[str | os.PathLike] = None,
                          transcoder: Optional[str] = None) -> FrameSequence:
    """Resample a screen recording to 30 FPS and return its frames.

    Frames are extracted with the external transcoder command template when
    its program is on PATH (``$TOUCHREPLAY_TRANSCODER`` overrides the default
    ffmpeg template); otherwise OpenCV decodes in-process. The frames land in
    ``out_dir`` (a temporary directory when omitted) as ``%06d.png``.
    """
    video_path = Path(video_path)
    if not video_path.is_file():
        raise UnreadableVideo(f"{video_path} does not exist")
    src_fps, w, h, _ = probe_video(video_path)
    if src_fps < MIN_SOURCE_FPS:
        raise FpsTooLow(f"{video_path}: {src_fps:.2f} FPS, need at least {FPS}")
    if (w, h) != (profile.screen_width, profile.screen_height):
        raise DimensionMismatch(
            f"{video_path}: {w}x{h} does not match {profile.name} "
            f"({profile.screen_width}x{profile.screen_height})")

    out = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp(prefix="frames-"))
    out.mkdir(parents=True, exist_ok=True)
    template = transcoder or os.environ.get(TRANSCODER_ENV) or DEFAULT_TRANSCODER
    if _transcoder_available(template):
        _run_transcoder(template, video_path, out)
    else:
        log.info("transcoder %r not found; decoding with OpenCV", shlex.split(template)[0])
        _decode_resampled(video_path, src_fps, out)
    seq = load_frame_dir(out, profile)
    seq.source = str(video_path)
    return seq
