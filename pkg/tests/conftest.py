"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from octaug.warpfield import DeformationGrid, grid_node_coords


def synthetic_scan(width: int = 496, height: int = 352, phase: float = 0.0) -> np.ndarray:
    """Deterministic layered test raster (no RNG involved).

    Two bright curved bands over a dark background with a weak diagonal
    texture, loosely shaped like a retinal B-scan so warps act on visible
    structure.  Pure function of (width, height, phase).
    """
    x = np.arange(width, dtype=np.float64)[None, :]
    y = np.arange(height, dtype=np.float64)[:, None]
    surface = 0.30 * height + 0.05 * height * np.sin(
        2.0 * np.pi * x / width * 1.7 + phase
    )
    depth = y - surface
    img = (
        28.0
        + 140.0 * np.exp(-0.5 * ((depth - 0.12 * height) / (0.05 * height)) ** 2)
        + 70.0 * np.exp(-0.5 * ((depth - 0.40 * height) / (0.03 * height)) ** 2)
        + 18.0 * np.sin(0.23 * x + 0.11 * y + phase)
    )
    img = np.where(depth < 0, 0.15 * img, img)
    return np.clip(img, 0.0, 255.0).astype(np.uint8)


@pytest.fixture
def scan() -> np.ndarray:
    return synthetic_scan()


@pytest.fixture
def small_scan() -> np.ndarray:
    return synthetic_scan(64, 48)


def write_pool(directory, count: int, width: int = 64, height: int = 48):
    """Write `count` distinct synthetic scans as PNGs; returns sorted paths."""
    from octaug import raster_io

    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        img = synthetic_scan(width, height, phase=0.37 * i + 0.11)
        p = directory / f"scan_{i:04d}.png"
        raster_io.save_image(img, p)
        paths.append(p)
    return paths


# -- independent natural-cubic-spline oracle --------------------------------
#
# Solves the dense 4(n-1)-coefficient piecewise-cubic system directly with
# numpy.linalg.solve: per segment a_i + b_i t + c_i t^2 + d_i t^3, with value
# interpolation, C1/C2 continuity at interior knots, and natural end
# conditions (second derivative zero at both ends).  Deliberately a different
# formulation and axis order from the library's tridiagonal solver.


def natural_cubic_oracle_1d(xs: np.ndarray, ys: np.ndarray, xq: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = len(xs)
    if n == 2:
        t = (xq - xs[0]) / (xs[1] - xs[0])
        return ys[0] + t * (ys[1] - ys[0])
    nseg = n - 1
    A = np.zeros((4 * nseg, 4 * nseg))
    rhs = np.zeros(4 * nseg)
    row = 0
    for i in range(nseg):
        h = xs[i + 1] - xs[i]
        # value at both ends of segment i
        A[row, 4 * i] = 1.0
        rhs[row] = ys[i]
        row += 1
        A[row, 4 * i : 4 * i + 4] = [1.0, h, h * h, h**3]
        rhs[row] = ys[i + 1]
        row += 1
    for i in range(nseg - 1):
        h = xs[i + 1] - xs[i]
        # first- and second-derivative continuity at interior knot i+1
        A[row, 4 * i + 1 : 4 * i + 4] = [1.0, 2.0 * h, 3.0 * h * h]
        A[row, 4 * (i + 1) + 1] = -1.0
        row += 1
        A[row, 4 * i + 2 : 4 * i + 4] = [2.0, 6.0 * h]
        A[row, 4 * (i + 1) + 2] = -2.0
        row += 1
    A[row, 2] = 2.0  # y'' = 0 at the left end
    row += 1
    h_last = xs[-1] - xs[-2]
    A[row, 4 * (nseg - 1) + 2 : 4 * (nseg - 1) + 4] = [2.0, 6.0 * h_last]
    coef = np.linalg.solve(A, rhs).reshape(nseg, 4)
    seg = np.clip(np.searchsorted(xs, xq, side="right") - 1, 0, nseg - 1)
    t = np.asarray(xq, dtype=np.float64) - xs[seg]
    a, b, c, d = coef[seg].T
    return a + t * (b + t * (c + t * d))


def spline_field_oracle(grid: DeformationGrid, width: int, height: int) -> np.ndarray:
    """Dense (height, width, 2) tensor-product field, rows first then columns
    (the library interpolates columns first)."""
    node_x, node_y = grid_node_coords(grid, width, height)
    xq = np.arange(width, dtype=np.float64)
    yq = np.arange(height, dtype=np.float64)
    out = np.empty((height, width, 2))
    for comp in range(2):
        # pass 1: along x at each node row
        rows = np.empty((grid.rows, width))
        for i in range(grid.rows):
            rows[i] = natural_cubic_oracle_1d(node_x, grid.cells[i, :, comp], xq)
        # pass 2: along y at every pixel column
        for j in range(width):
            out[:, j, comp] = natural_cubic_oracle_1d(node_y, rows[:, j], yq)
    return out
