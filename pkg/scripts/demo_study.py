#!/usr/bin/env python3
"""Offline walkthrough of the whole study pipeline on synthetic data.

Builds a small blinded study, simulates three graders of varying acuity by
writing session logs directly (each grader detects deformation with a
probability that grows with the item's sigma), then prints the rate /
significance report.  No HTTP involved; see `octaug study serve` for the
interactive path.
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from octaug.sessionlog import EventLogWriter, load_session_log
from octaug.stats import analyze_study
from octaug.study import CategorySpec, build_study

from make_synthetic_pool import synthetic


def simulate_grader(manifest, sessions_dir, grader_id, acuity, rng):
    """acuity: roughly the sigma at which detection reaches 50/50."""
    path = sessions_dir / f"{grader_id}.jsonl"
    w = EventLogWriter(path)
    w.append("started", session_id=grader_id, grader_id=grader_id,
             study_id=manifest.study_id, item_count=len(manifest.items))
    for index in range(len(manifest.items)):
        item = manifest.item_at_display_index(index)
        if item.ground_truth == "original":
            # graders mislabel some originals as modified too
            says_modified = rng.random() < 0.15
        else:
            detect_p = 1.0 / (1.0 + np.exp(-(item.sigma_used - acuity) / 2.5))
            says_modified = rng.random() < detect_p
        w.append("verdict", item_index=index,
                 verdict="modified" if says_modified else "original")
    w.append("finished")
    w.close()
    return path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=30, help="pairs per band")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--work-dir", help="defaults to a temp dir")
    args = ap.parse_args()

    work = Path(args.work_dir) if args.work_dir else Path(tempfile.mkdtemp())
    rng = np.random.default_rng(args.seed)

    pool_dir = work / "pool"
    pool_dir.mkdir(parents=True, exist_ok=True)
    n_sources = args.pairs * 4
    for i in range(n_sources):
        from octaug import save_image
        save_image(synthetic(128, 96, rng), pool_dir / f"scan_{i:04d}.png")

    specs = [
        CategorySpec("low", 1.0, 6.0, args.pairs),
        CategorySpec("medium", 7.0, 12.0, args.pairs),
        CategorySpec("high", 13.0, 18.0, args.pairs),
        CategorySpec("extreme", 19.0, 24.0, args.pairs),
    ]
    manifest = build_study(sorted(pool_dir.iterdir()), specs,
                           master_seed=args.seed, out_dir=work / "study")
    print(f"built study {manifest.study_id} with {len(manifest.items)} items "
          f"in {work / 'study'}")

    sessions = work / "sessions"
    sessions.mkdir(exist_ok=True)
    logs = []
    for grader_id, acuity in [("sim-sharp", 8.0), ("sim-mid", 12.0),
                              ("sim-lenient", 16.0)]:
        logs.append(load_session_log(
            simulate_grader(manifest, sessions, grader_id, acuity, rng)))

    print()
    print(analyze_study(manifest, logs).to_text())


if __name__ == "__main__":
    main()
