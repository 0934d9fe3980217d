"""Turn screen recordings of Android touch indicators into replayable input scripts."""
from .core import (
    ActionKind, ClassifierParams, ConfigError, DetectorParams, DeviceProfile, Frame, Opacity,
    RunConfig, TouchDetection, TouchReplayError, bundled_profiles, load_config, load_profile,
    save_config, save_profile, validate_profile,
)
from .ingest import FrameSequence, load_frame_dir, normalize_and_extract
from .detect import DetectionReport, detect_touches, import_detections, iou, non_max_suppress, run_detection
from .classify import Action, ActionList, TouchTrack, TrackPoint, classify_actions
from .scriptgen import ReplayScript, generate_script, translate_for_device
from .replay import ProtocolViolation, deploy_and_replay, reconstruct_actions, simulate
from .metrics import CorpusSummary, EvalReport, evaluate, levenshtein, lcs, lcs_subsequence, precision_recall
from .pipeline import PipelineArtifacts, run_pipeline

__version__ = "0.1.0"
