"""Command-line front end.

Thin wrappers over the library operations: single-image deformation, batch
augmentation, field diagnostics, study build/serve/analyze, and the
standalone statistical tests.  Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import raster_io, service, stats, study, warpfield
from .rng import SplitMix64, derive_seed
from .sessionlog import load_session_log
from .warpfield import BorderPolicy

IMAGE_SUFFIXES = (".png", ".pgm")

# the four sigma bands of the main study design
DEFAULT_CATEGORIES = "LDA:1:6:100,MDA:7:12:100,HDA:13:18:100,CTRL:19:24:20"


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage errors exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, _, cols = text.lower().partition("x")
        return int(rows), int(cols)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"grid must look like ROWSxCOLS, e.g. 3x3, got {text!r}"
        ) from None


def _parse_categories(text: str) -> list[study.CategorySpec]:
    specs = []
    for part in text.split(","):
        fields = part.split(":")
        if len(fields) != 4:
            raise argparse.ArgumentTypeError(
                f"category must be NAME:SIGMA_MIN:SIGMA_MAX:PAIRS, got {part!r}"
            )
        name, lo, hi, pairs = fields
        try:
            specs.append(study.CategorySpec(name, float(lo), float(hi), int(pairs)))
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from None
    return specs


def _u64(text: str) -> int:
    value = int(text, 0)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def _image_files(directory: Path) -> list[Path]:
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise FileNotFoundError(f"no {'/'.join(IMAGE_SUFFIXES)} files in {directory}")
    return files


# -- subcommand bodies ----------------------------------------------------


def _cmd_deform(args) -> int:
    image = raster_io.load_image(args.input)
    result = warpfield.deform(
        image,
        sigma=args.sigma,
        seed=args.seed,
        grid_dims=args.grid,
        border=BorderPolicy(args.border),
    )
    out = result.image
    if args.overlay_grid:
        out = warpfield.render_grid_overlay(out, result.field, args.overlay_grid)
    raster_io.save_image(out, args.output)
    if args.dump_field:
        np.savez(args.dump_field, ux=result.field.ux, uy=result.field.uy)
    return 0


def _cmd_augment(args) -> int:
    if args.sigma_min <= 0 or args.sigma_max < args.sigma_min:
        raise ValueError("need 0 < sigma-min <= sigma-max")
    if args.copies < 1:
        raise ValueError("copies must be >= 1")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _image_files(Path(args.input_dir))
    written = 0
    for file_index, path in enumerate(files):
        image = raster_io.load_image(path)
        for k in range(args.copies):
            index = file_index * args.copies + k
            u = SplitMix64(derive_seed(args.seed, "augment-sigma", index)).next_float()
            sigma = args.sigma_min + u * (args.sigma_max - args.sigma_min)
            warp_seed = derive_seed(args.seed, "augment-warp", index)
            result = warpfield.deform(
                image, sigma=sigma, seed=warp_seed, border=BorderPolicy(args.border)
            )
            raster_io.save_image(result.image, out_dir / f"{path.stem}_aug{k:03d}.png")
            written += 1
    print(f"wrote {written} images to {out_dir}")
    return 0


def _cmd_field_check(args) -> int:
    report = warpfield.field_check(
        width=args.width,
        height=args.height,
        sigma=args.sigma,
        grid_dims=args.grid,
        trials=args.trials,
        seed=args.seed,
    )
    if args.format == "json":
        print(
            json.dumps(
                {
                    "width": report.width,
                    "height": report.height,
                    "sigma": report.sigma,
                    "grid": [report.rows, report.cols],
                    "trials": report.trials,
                    "foldover_count": report.foldover_count,
                    "foldover_rate": report.foldover_rate,
                    "min_jacobian": report.min_jacobian,
                    "max_displacement": report.max_displacement,
                }
            )
        )
    else:
        print(
            f"sigma={report.sigma:g} grid={report.rows}x{report.cols} "
            f"trials={report.trials}\n"
            f"foldover_rate={report.foldover_rate:.6g} "
            f"min_jacobian={report.min_jacobian:.6g} "
            f"max_displacement={report.max_displacement:.6g}"
        )
    return 0


def _cmd_study_build(args) -> int:
    pool = _image_files(Path(args.pool_dir))
    manifest = study.build_study(
        pool=pool,
        specs=args.categories,
        master_seed=args.seed,
        out_dir=args.out_dir,
        border=BorderPolicy(args.border),
    )
    print(f"study {manifest.study_id}: {manifest.item_count} items in {args.out_dir}")
    return 0


def _cmd_study_serve(args) -> int:
    service.serve(
        study_dirs=args.study_dir,
        sessions_dir=args.sessions_dir,
        admin_token=args.admin_token,
        host=args.host,
        port=args.port,
    )
    return 0


def _cmd_study_analyze(args) -> int:
    manifest = study.load_study_dir(args.study_dir)
    log_paths = list(args.log or [])
    if args.sessions_dir:
        log_paths.extend(sorted(Path(args.sessions_dir).glob("*.jsonl")))
    if not log_paths:
        raise ValueError("no session logs given (use --log or --sessions-dir)")
    logs = [load_session_log(p) for p in log_paths]
    reference = None
    if args.reference:
        reference = json.loads(Path(args.reference).read_text(encoding="utf-8"))
    report = stats.analyze_study(manifest, logs, reference=reference)
    print(report.to_json() if args.format == "json" else report.to_text())
    return 0


def _cmd_stats_chi2(args) -> int:
    table = stats.ContingencyTable2x2(args.a, args.b, args.c, args.d)
    stat, p = stats.chi_square_2x2(table, yates=not args.no_yates)
    print(f"statistic={stat:.6g}\np={p:.6g}\np_display={stats.format_p(p)}")
    return 0


def _cmd_stats_fisher(args) -> int:
    table = stats.ContingencyTable2x2(args.a, args.b, args.c, args.d)
    p = stats.fisher_exact_2x2(table)
    print(f"p={p:.6g}\np_display={stats.format_p(p)}")
    return 0


def _cmd_stats_samplesize(args) -> int:
    design = stats.NoninferiorityDesign(
        p_standard=args.p_std,
        p_test=args.p_test,
        margin=args.margin,
        alpha=args.alpha,
        power=args.power,
    )
    print(stats.noninferiority_sample_size(design))
    return 0


# -- parser wiring ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="octaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deform", help="elastically deform one image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--grid", type=_parse_grid, default=(3, 3))
    p.add_argument("--border", choices=[b.value for b in BorderPolicy], default="clamp")
    p.add_argument("--overlay-grid", type=int, metavar="SPACING")
    p.add_argument("--dump-field", metavar="NPZ")
    p.set_defaults(func=_cmd_deform)

    p = sub.add_parser("augment", help="expand an image directory K-fold")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--sigma-min", type=float, required=True)
    p.add_argument("--sigma-max", type=float, required=True)
    p.add_argument("--copies", type=int, required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--border", choices=[b.value for b in BorderPolicy], default="clamp")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("field-check", help="fold-over statistics for random fields")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--grid", type=_parse_grid, default=(3, 3))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=_cmd_field_check)

    study_p = sub.add_parser("study", help="build, serve, or analyze grading studies")
    study_sub = study_p.add_subparsers(dest="study_command", required=True)

    p = study_sub.add_parser("build", help="construct a blinded study set")
    p.add_argument("--pool-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--categories", type=_parse_categories,
                   default=_parse_categories(DEFAULT_CATEGORIES),
                   help="comma-separated NAME:SIGMA_MIN:SIGMA_MAX:PAIRS "
                        f"(default {DEFAULT_CATEGORIES})")
    p.add_argument("--border", choices=[b.value for b in BorderPolicy], default="clamp")
    p.set_defaults(func=_cmd_study_build)

    p = study_sub.add_parser("serve", help="serve studies for blinded grading")
    p.add_argument("--study-dir", action="append", required=True)
    p.add_argument("--sessions-dir", required=True)
    p.add_argument("--admin-token", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.set_defaults(func=_cmd_study_serve)

    p = study_sub.add_parser("analyze", help="rates and significance from session logs")
    p.add_argument("--study-dir", required=True)
    p.add_argument("--log", action="append", metavar="JSONL")
    p.add_argument("--sessions-dir")
    p.add_argument("--reference", metavar="JSON",
                   help="grader->category->displayed-p map to compare against")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=_cmd_study_analyze)

    stats_p = sub.add_parser("stats", help="standalone statistical tests")
    stats_sub = stats_p.add_subparsers(dest="stats_command", required=True)

    p = stats_sub.add_parser("chi2", help="2x2 chi-square (Yates by default)")
    for name in "abcd":
        p.add_argument(name, type=int)
    p.add_argument("--no-yates", action="store_true")
    p.set_defaults(func=_cmd_stats_chi2)

    p = stats_sub.add_parser("fisher", help="2x2 Fisher exact, two-sided")
    for name in "abcd":
        p.add_argument(name, type=int)
    p.set_defaults(func=_cmd_stats_fisher)

    p = stats_sub.add_parser("samplesize", help="non-inferiority n per group")
    p.add_argument("--p-std", type=float, required=True)
    p.add_argument("--p-test", type=float, required=True)
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.80)
    p.set_defaults(func=_cmd_stats_samplesize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # runtime failure -> diagnostics on stderr, exit 2
        print(f"octaug: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
