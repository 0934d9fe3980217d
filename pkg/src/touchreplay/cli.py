"""Command-line entry point: the full pipeline and one subcommand per stage."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .core import ClassifierParams, DetectorParams, TouchReplayError, load_config, load_profile

log = logging.getLogger("touchreplay")


def _profile(args):
    return load_profile(args.device)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    cfg = load_config(args.config)
    if args.device:
        cfg = dataclasses.replace(cfg, device=load_profile(args.device))
    if args.out:
        cfg = dataclasses.replace(cfg, output_dir=Path(args.out))
    if args.detector == "import" and cfg.entry_point != "detections":
        raise TouchReplayError("--detector import needs detections_path in the config")
    if args.detector == "template" and cfg.entry_point == "detections":
        raise TouchReplayError("--detector template needs video_path or frames_dir in the config")
    arts = run_pipeline(cfg, jobs=args.jobs, bridge=args.bridge, agent_path=args.agent)
    for f in dataclasses.fields(arts):
        v = getattr(arts, f.name)
        if v is not None:
            print(f"{f.name}: {v}")
    return 0


def cmd_detect(args) -> int:
    from .detect import run_detection
    from .ingest import load_frame_dir, normalize_and_extract

    profile = _profile(args)
    src = Path(args.inp)
    if src.is_dir():
        frames = load_frame_dir(src, profile)
    else:
        frames_out = Path(args.frames_out) if args.frames_out else Path(args.out).parent / "frames"
        frames = normalize_and_extract(src, profile, frames_out)
    params = DetectorParams(search_stride=args.stride) if args.stride else DetectorParams()
    report = run_detection(frames, profile, params, jobs=args.jobs)
    report.save(args.out)
    print(f"frames: {report.frame_count} detections: {len(report)} -> {args.out}")
    return 0


def cmd_classify(args) -> int:
    from .classify import classify_actions
    from .detect import import_detections

    profile = _profile(args)
    report = import_detections(args.inp, profile)
    actions = classify_actions(report, ClassifierParams(), profile, args.out)
    kinds = " ".join(a.kind.value for a in actions) or "-"
    print(f"actions: {len(actions)} [{kinds}] -> {args.out}")
    return 0


def cmd_genscript(args) -> int:
    from .classify import ActionList
    from .scriptgen import generate_script, translate_for_device

    profile = _profile(args)
    script = generate_script(ActionList.load(args.inp), profile)
    script.save(args.out)
    translated = Path(args.translated) if args.translated else Path(args.out).with_name("replay_events.txt")
    translated.write_text(translate_for_device(script, profile))
    print(f"events: {len(script)} -> {args.out}, {translated}")
    return 0


def cmd_simulate(args) -> int:
    from .replay import reconstruct_actions, simulate
    from .scriptgen import ReplayScript

    profile = _profile(args)
    traces = simulate(ReplayScript.load(args.inp), profile)
    actions = reconstruct_actions(traces, ClassifierParams(), profile)
    if args.out:
        actions.save(args.out)
    for tr, a in zip(traces, actions):
        print(f"contact {tr.tracking_id}: {len(tr.points)} points, {tr.duration_us} us -> {a.kind.value}")
    print(f"contacts: {len(traces)}")
    return 0


def cmd_replay(args) -> int:
    from .replay import deploy_and_replay

    rec = deploy_and_replay(args.inp, _profile(args), args.bridge, agent_path=args.agent,
                            device=args.serial, out_dir=args.out)
    print(f"recording: {rec}")
    return 0


def cmd_synth(args) -> int:
    from .synth import CorpusSpec, generate_corpus, write_corpus

    spec = CorpusSpec.load(args.spec)
    profile = load_profile(args.device) if args.device else None
    items = generate_corpus(spec, args.seed, profile)
    manifest = write_corpus(items, args.out)
    print(f"scenarios: {len(items)} -> {manifest}")
    return 0


def cmd_eval(args) -> int:
    from .classify import ActionList
    from .metrics import evaluate

    report = evaluate(ActionList.load(args.pred), ActionList.load(args.truth), args.tolerance)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        report.save(args.out)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="touchreplay", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        return sp

    def io(sp, out_required=True):
        sp.add_argument("--in", dest="inp", required=True)
        sp.add_argument("--out", required=out_required)

    def device(sp, default="nexus5"):
        sp.add_argument("--device", default=default, help="bundled profile name or profile JSON path")

    sp = add("run", cmd_run, "run the whole pipeline from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--device")
    sp.add_argument("--out")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--detector", choices=["template", "import"])
    sp.add_argument("--bridge", help="device bridge invocation; enables the replay stage")
    sp.add_argument("--agent", help="replay agent binary to push")

    sp = add("detect", cmd_detect, "video or frame directory -> detection_full.json")
    io(sp)
    device(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--frames-out")

    sp = add("classify", cmd_classify, "detection_full.json -> detected_actions.json")
    io(sp)
    device(sp)

    sp = add("genscript", cmd_genscript, "detected_actions.json -> send_events.log")
    io(sp)
    device(sp)
    sp.add_argument("--translated")

    sp = add("simulate", cmd_simulate, "replay send_events.log on a virtual touchscreen")
    io(sp, out_required=False)
    device(sp)

    sp = add("replay", cmd_replay, "replay send_events.log on a connected device")
    io(sp, out_required=False)
    device(sp)
    sp.add_argument("--bridge")
    sp.add_argument("--agent")
    sp.add_argument("--serial")

    sp = add("synth", cmd_synth, "render a synthetic corpus")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--device")

    sp = add("eval", cmd_eval, "compare detected actions against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--out")
    sp.add_argument("--tolerance", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except (TouchReplayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
