#!/usr/bin/env python3
"""Generate a pool of synthetic layered B-scan-like images.

Handy for exercising the study pipeline without any clinical data:
each image is a pair of bright curved bands over a dark background with
seeded speckle, written as 8-bit grayscale PNG.
"""

import argparse
from pathlib import Path

import numpy as np

from octaug import save_image


def synthetic(width, height, rng):
    x = np.arange(width, dtype=np.float64)[None, :]
    y = np.arange(height, dtype=np.float64)[:, None]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    amp = rng.uniform(0.02, 0.08) * height
    surface = 0.30 * height + amp * np.sin(2.0 * np.pi * x / width * rng.uniform(1.0, 2.5) + phase)
    depth = y - surface
    img = (
        25.0
        + 145.0 * np.exp(-0.5 * ((depth - 0.12 * height) / (0.05 * height)) ** 2)
        + 70.0 * np.exp(-0.5 * ((depth - 0.40 * height) / (0.03 * height)) ** 2)
    )
    img = np.where(depth < 0, 0.15 * img, img)
    img += rng.normal(0.0, 6.0, size=img.shape)  # speckle
    return np.clip(img, 0, 255).astype(np.uint8)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--count", type=int, default=320)
    ap.add_argument("--width", type=int, default=496)
    ap.add_argument("--height", type=int, default=352)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        save_image(synthetic(args.width, args.height, rng), out / f"scan_{i:04d}.png")
    print(f"wrote {args.count} scans ({args.width}x{args.height}) to {out}")


if __name__ == "__main__":
    main()
