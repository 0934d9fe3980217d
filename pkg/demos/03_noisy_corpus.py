"""
Scoring the pipeline on a noisy corpus
======================================

A few synthetic scenarios are rendered with jittered, occasionally missing
indicators and pixel noise, then scored with edit distance, the longest
matching block, and per-kind precision/recall.
"""

import tempfile
from pathlib import Path

from touchreplay import ClassifierParams, load_profile
from touchreplay.classify import classify_actions
from touchreplay.detect import run_detection
from touchreplay.metrics import CorpusSummary, evaluate
from touchreplay.synth import CorpusSpec, NoiseSpec, generate_corpus

profile = load_profile("nexus5")
spec = CorpusSpec({"tap": 2, "swipe": 2, "typing": 2, "mixed": 2},
                  noise=NoiseSpec(jitter_px=2, drop_rate=0.03, gaussian_sigma=4))
items = generate_corpus(spec, seed=11)

rows = []
for item in items:
    actions = classify_actions(run_detection(item.frames, profile), ClassifierParams(), profile)
    report = evaluate(actions, item.expected, position_tolerance=profile.indicator_radius)
    rows.append((item.scenario_id, report))
    print(f"{item.scenario_id:12s} {len(item.frames):3d} frames  "
          f"truth {' '.join(k.value for k in item.expected.kinds)}")
    print(f"{'':12s} lev {report.levenshtein}  lcs {report.lcs_ratio:.2f}  success {report.scenario_success}")

summary = CorpusSummary(rows)
print("corpus LCS ratio", round(summary.lcs_ratio, 3))
print("fraction exact  ", summary.fraction_exact())
for kind, c in summary.pooled().per_kind.items():
    print(f"  {kind:8s} P={c.precision} R={c.recall}")

out = Path(tempfile.mkdtemp(prefix="touchreplay-eval-")) / "summary.csv"
summary.write_csv(out)
print(out.read_text())
