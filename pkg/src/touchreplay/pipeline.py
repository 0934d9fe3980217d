"""End-to-end composition: ingest, detect (or import), classify, generate the script, optionally replay."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import RunConfig, TouchReplayError
from .classify import classify_actions
from .detect import import_detections, run_detection
from .ingest import load_frame_dir, normalize_and_extract
from .scriptgen import generate_script, translate_for_device

log = logging.getLogger(__name__)

DETECTIONS_FILE = "detection_full.json"
ACTIONS_FILE = "detected_actions.json"
SCRIPT_FILE = "send_events.log"
TRANSLATED_FILE = "replay_events.txt"
REPORT_FILE = "run_report.json"


class StageError(TouchReplayError):
    def __init__(self, stage: str, path, cause: Exception):
        super().__init__(f"[{stage}] {path}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineArtifacts:
    detection_path: Path
    actions_path: Path
    script_path: Path
    translated_path: Path
    report_path: Path
    recording_path: Optional[Path] = None


def run_pipeline(config: RunConfig, jobs: int = 1, bridge: Optional[str] = None,
                 agent_path: Optional[str | os.PathLike] = None,
                 replay_device: Optional[str] = None) -> PipelineArtifacts:
    """Run every stage, writing each stage's file under ``config.output_dir``.

    The replay stage runs only when ``bridge`` is given.
    """
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise StageError("config", out, exc) from exc
    profile = config.device
    arts = PipelineArtifacts(out / DETECTIONS_FILE, out / ACTIONS_FILE, out / SCRIPT_FILE,
                             out / TRANSLATED_FILE, out / REPORT_FILE)
    counts: dict[str, int] = {}

    if config.entry_point == "detections":
        try:
            report = import_detections(config.detections_path, profile)
        except (TouchReplayError, OSError) as exc:
            raise StageError("import", config.detections_path, exc) from exc
        log.info("stage=import detections=%d frames=%d", len(report), report.frame_count)
    else:
        src = config.video_path if config.entry_point == "video" else config.frames_dir
        try:
            if config.entry_point == "video":
                frames = normalize_and_extract(config.video_path, profile, out / "frames")
            else:
                frames = load_frame_dir(config.frames_dir, profile)
        except (TouchReplayError, OSError) as exc:
            raise StageError("ingest", src, exc) from exc
        log.info("stage=ingest frames=%d source=%s", len(frames), frames.source)
        counts["frames"] = len(frames)
        try:
            report = run_detection(frames, profile, config.detector_params, jobs=jobs)
        except (TouchReplayError, OSError) as exc:
            raise StageError("detect", src, exc) from exc
        log.info("stage=detect frames=%d detections=%d", report.frame_count, len(report))
    report.save(arts.detection_path)
    counts["detections"] = len(report)

    try:
        actions = classify_actions(report, config.classifier_params, profile, arts.actions_path)
    except TouchReplayError as exc:
        raise StageError("classify", arts.detection_path, exc) from exc
    log.info("stage=classify actions=%d", len(actions))
    counts["actions"] = len(actions)

    try:
        script = generate_script(actions, profile)
    except TouchReplayError as exc:
        raise StageError("genscript", arts.actions_path, exc) from exc
    script.save(arts.script_path)
    arts.translated_path.write_text(translate_for_device(script, profile))
    log.info("stage=genscript events=%d", len(script))
    counts["events"] = len(script)

    if bridge is not None:
        from .replay import deploy_and_replay

        try:
            arts.recording_path = deploy_and_replay(arts.script_path, profile, bridge, agent_path=agent_path,
                                                    device=replay_device, out_dir=out / "replay")
        except TouchReplayError as exc:
            raise StageError("replay", arts.script_path, exc) from exc
        log.info("stage=replay recording=%s", arts.recording_path)

    arts.report_path.write_text(json.dumps({
        "device": profile.name,
        "entry_point": config.entry_point,
        "counts": counts,
        "kinds": [a.kind.value for a in actions],
    }, indent=2) + "\n")
    return arts
