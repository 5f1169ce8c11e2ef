"""Elastic deformation of 2D grayscale rasters.

The deformation runs in three steps:

1. ``sample_grid``  - draw an n-by-m control grid of displacement vectors,
   each component from N(0, sigma^2), with a seeded generator.
2. ``build_field``  - interpolate the control grid to a dense per-pixel
   displacement field with a tensor-product natural cubic spline.  The
   grid spans the whole raster, nodes at the corners/edges/center for 3x3.
3. ``warp``         - resample the image through the field with backward
   mapping and bilinear interpolation, quantized round-half-up to 8 bits.

``deform`` chains the three and returns all intermediates.  ``min_jacobian``
diagnoses fold-over (local non-invertibility) of a field, and
``render_grid_overlay`` draws a deformed reference grid onto an image to
visualize the transformation.

All functions are pure; grids and fields are frozen after construction and
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import SplitMix64


class BorderPolicy(str, Enum):
    """How backward-mapped samples outside the raster are resolved."""

    CLAMP = "clamp"      # clamp-to-edge (default)
    ZERO = "zero"        # taps outside contribute intensity 0
    REFLECT = "reflect"  # mirror about the edge pixels (no edge duplication)


@dataclass(frozen=True)
class DeformationGrid:
    """Control grid of per-cell displacement vectors, in pixels.

    ``cells`` has shape (rows, cols, 2) with components ordered (dx, dy).
    Regenerating with the same (rows, cols, sigma, seed) is bit-identical.
    """

    cells: np.ndarray
    sigma: float
    seed: int

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 3 or cells.shape[2] != 2:
            raise ValueError("cells must have shape (rows, cols, 2)")
        if cells.shape[0] < 2 or cells.shape[1] < 2:
            raise ValueError("control grid needs at least 2 nodes per axis")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]


@dataclass(frozen=True)
class DisplacementField:
    """Dense per-pixel displacement, in pixels.

    ``ux`` and ``uy`` are (height, width) float64 arrays; ``ux[y, x]`` is the
    horizontal displacement sampled at pixel (x, y).
    """

    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        ux = np.asarray(self.ux, dtype=np.float64)
        uy = np.asarray(self.uy, dtype=np.float64)
        if ux.ndim != 2 or ux.shape != uy.shape:
            raise ValueError("ux and uy must be 2D arrays of equal shape")
        if not (np.isfinite(ux).all() and np.isfinite(uy).all()):
            raise ValueError("displacement field must be finite everywhere")
        ux.flags.writeable = False
        uy.flags.writeable = False
        object.__setattr__(self, "ux", ux)
        object.__setattr__(self, "uy", uy)

    @property
    def width(self) -> int:
        return self.ux.shape[1]

    @property
    def height(self) -> int:
        return self.ux.shape[0]


@dataclass(frozen=True)
class DeformResult:
    """Output of ``deform``: the warped image plus both intermediates."""

    image: np.ndarray
    grid: DeformationGrid
    field: DisplacementField


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check an array is a valid 8-bit grayscale raster (>= 2 px per axis)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"image must be 2D grayscale, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"image must be uint8, got {img.dtype}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("image must be at least 2x2 pixels")
    return img


def sample_grid(rows: int, cols: int, sigma: float, seed: int) -> DeformationGrid:
    """Draw a control grid with components ~ N(0, sigma^2), deterministically.

    Cells are filled row-major; each cell consumes one Box-Muller pair from
    a SplitMix64 stream seeded with ``seed`` (dx takes the cosine branch,
    dy the sine branch).  Values are computed as sigma * z so the same seed
    at doubled sigma yields exactly doubled cells.
    """
    if rows < 2 or cols < 2:
        raise ValueError("control grid needs at least 2 nodes per axis")
    if not (math.isfinite(sigma) and sigma >= 0.0):
        raise ValueError(f"sigma must be finite and non-negative, got {sigma}")
    gen = SplitMix64(seed)
    cells = np.empty((rows, cols, 2), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            zx, zy = gen.next_normal_pair()
            cells[i, j, 0] = sigma * zx
            cells[i, j, 1] = sigma * zy
    return DeformationGrid(cells=cells, sigma=float(sigma), seed=seed)


def grid_node_coords(grid: DeformationGrid, width: int, height: int):
    """Pixel coordinates of the control nodes spanning a width-x-height raster."""
    xs = np.array([j * (width - 1) / (grid.cols - 1) for j in range(grid.cols)])
    ys = np.array([i * (height - 1) / (grid.rows - 1) for i in range(grid.rows)])
    return xs, ys


def _natural_cubic_second_derivs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second derivatives M of the natural cubic spline through (x, y).

    ``y`` is (n, K): K independent splines sharing the knots.  Natural
    boundary: M[0] = M[-1] = 0.  Interior M solved with the Thomas
    algorithm on the standard tridiagonal system
    h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1] = 6 * (d[i] - d[i-1])
    where d[i] is the slope of segment i.
    """
    n = x.shape[0]
    M = np.zeros_like(y)
    if n == 2:  # two nodes: the spline is the straight line, M = 0
        return M
    h = np.diff(x)                       # (n-1,)
    slopes = np.diff(y, axis=0) / h[:, None]
    rhs = 6.0 * np.diff(slopes, axis=0)  # (n-2, K)
    diag = 2.0 * (h[:-1] + h[1:])        # (n-2,)
    lower = h[1:-1]                      # sub/super diagonal, (n-3,)

    # Thomas forward sweep
    cp = np.empty(n - 2)
    dp = np.empty((n - 2, y.shape[1]))
    cp[0] = lower[0] / diag[0] if n > 3 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n - 2):
        denom = diag[i] - lower[i - 1] * cp[i - 1]
        cp[i] = lower[i] / denom if i < n - 3 else 0.0
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / denom
    # back substitution
    M[n - 2] = dp[n - 3]
    for i in range(n - 4, -1, -1):
        M[i + 1] = dp[i] - cp[i] * M[i + 2]
    return M


def _natural_cubic_eval(x: np.ndarray, y: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Evaluate natural cubic splines through (x, y[:, k]) at points xq.

    Returns shape (len(xq), K).  Queries must lie within [x[0], x[-1]].
    """
    M = _natural_cubic_second_derivs(x, y)
    seg = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, x.shape[0] - 2)
    h = (x[seg + 1] - x[seg])[:, None]
    t0 = (x[seg + 1] - xq)[:, None]
    t1 = (xq - x[seg])[:, None]
    y0, y1 = y[seg], y[seg + 1]
    m0, m1 = M[seg], M[seg + 1]
    return (
        m0 * t0**3 / (6.0 * h)
        + m1 * t1**3 / (6.0 * h)
        + (y0 / h - m0 * h / 6.0) * t0
        + (y1 / h - m1 * h / 6.0) * t1
    )


def eval_field_at(
    grid: DeformationGrid, width: int, height: int, xq: np.ndarray, yq: np.ndarray
) -> np.ndarray:
    """Evaluate the spline displacement surface at the product grid xq x yq.

    Returns shape (len(yq), len(xq), 2).  This is the continuous interpolant
    that ``build_field`` samples at integer pixels; evaluating it at the
    control-node coordinates returns the grid cells exactly (up to rounding).
    """
    if width < 2 or height < 2:
        raise ValueError("field dimensions must be at least 2x2")
    xs, ys = grid_node_coords(grid, width, height)
    xq = np.asarray(xq, dtype=np.float64)
    yq = np.asarray(yq, dtype=np.float64)
    out = np.empty((yq.shape[0], xq.shape[0], 2), dtype=np.float64)
    for c in range(2):
        comp = grid.cells[:, :, c]                       # (rows, cols)
        # interpolate along x for every node row, then along y per column
        across_x = _natural_cubic_eval(xs, comp.T, xq)   # (len(xq), rows)
        out[:, :, c] = _natural_cubic_eval(ys, across_x.T, yq)
    return out


def build_field(grid: DeformationGrid, width: int, height: int) -> DisplacementField:
    """Dense displacement field for a width-x-height raster.

    Each component is interpolated independently by a tensor-product natural
    cubic spline through the control nodes, which are spread to span the
    full raster (node j at x = j*(width-1)/(cols-1), likewise for rows).
    """
    vals = eval_field_at(grid, width, height, np.arange(width), np.arange(height))
    return DisplacementField(ux=vals[:, :, 0], uy=vals[:, :, 1])


def _fold_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Mirror out-of-range indices about the edge pixels (period 2n-2)."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.mod(idx, period)
    return np.where(idx < n, idx, period - idx)


def bilinear_sample(
    image: np.ndarray, sx: np.ndarray, sy: np.ndarray, border: BorderPolicy
) -> np.ndarray:
    """Bilinear samples of an 8-bit image at real-valued coordinates.

    Returns float64.  Out-of-raster taps follow ``border``.
    """
    h, w = image.shape
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    x1 = x0 + 1
    y1 = y0 + 1

    img = image.astype(np.float64)
    if border is BorderPolicy.ZERO:
        taps = []
        for xi, yi in ((x0, y0), (x1, y0), (x0, y1), (x1, y1)):
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            v = np.zeros(xi.shape, dtype=np.float64)
            v[inside] = img[yi[inside], xi[inside]]
            taps.append(v)
        v00, v10, v01, v11 = taps
    else:
        if border is BorderPolicy.CLAMP:
            x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x1, 0, w - 1)
            y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y1, 0, h - 1)
        elif border is BorderPolicy.REFLECT:
            x0c, x1c = _fold_indices(x0, w), _fold_indices(x1, w)
            y0c, y1c = _fold_indices(y0, h), _fold_indices(y1, h)
        else:
            raise ValueError(f"unknown border policy: {border}")
        v00 = img[y0c, x0c]
        v10 = img[y0c, x1c]
        v01 = img[y1c, x0c]
        v11 = img[y1c, x1c]

    top = v00 * (1.0 - fx) + v10 * fx
    bot = v01 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def warp(
    image: np.ndarray,
    field: DisplacementField,
    border: BorderPolicy = BorderPolicy.CLAMP,
) -> np.ndarray:
    """Apply a displacement field to an image by backward mapping.

    Each output pixel samples the source at its own position plus the field:
    out(x, y) = bilinear(source, x + ux(x, y), y + uy(x, y)).  Backward
    mapping keeps the output dense (forward splatting would leave holes).
    Samples are quantized to 8 bits with round-half-up.
    """
    img = validate_image(image)
    h, w = img.shape
    if (field.height, field.width) != (h, w):
        raise ValueError(
            f"field {field.width}x{field.height} does not match image {w}x{h}"
        )
    yy, xx = np.mgrid[0:h, 0:w]
    sampled = bilinear_sample(img, xx + field.ux, yy + field.uy, border)
    return np.clip(np.floor(sampled + 0.5), 0.0, 255.0).astype(np.uint8)


def deform(
    image: np.ndarray,
    sigma: float,
    seed: int,
    grid_dims: tuple[int, int] = (3, 3),
    border: BorderPolicy = BorderPolicy.CLAMP,
) -> DeformResult:
    """Full elastic deformation: sample grid, build field, warp.

    Deterministic in (sigma, seed, grid_dims, border); all intermediates are
    returned for audit.  grid_dims is (rows, cols).
    """
    img = validate_image(image)
    rows, cols = grid_dims
    grid = sample_grid(rows, cols, sigma, seed)
    field = build_field(grid, img.shape[1], img.shape[0])
    return DeformResult(image=warp(img, field, border), grid=grid, field=field)


def min_jacobian(field: DisplacementField) -> float:
    """Minimum det(I + grad u) over interior pixels, by central differences.

    A positive value means the warp map p -> p + u(p) is locally invertible
    everywhere on the interior: no fold-over.  Needs at least 3 px per axis
    so the interior is non-empty.
    """
    if field.width < 3 or field.height < 3:
        raise ValueError("field must be at least 3x3 for interior differences")
    ux, uy = field.ux, field.uy
    dux_dx = (ux[1:-1, 2:] - ux[1:-1, :-2]) / 2.0
    dux_dy = (ux[2:, 1:-1] - ux[:-2, 1:-1]) / 2.0
    duy_dx = (uy[1:-1, 2:] - uy[1:-1, :-2]) / 2.0
    duy_dy = (uy[2:, 1:-1] - uy[:-2, 1:-1]) / 2.0
    det = (1.0 + dux_dx) * (1.0 + duy_dy) - dux_dy * duy_dx
    return float(det.min())


def grid_overlay_polylines(
    field: DisplacementField, spacing: int
) -> list[np.ndarray]:
    """Vertex chains of a regular grid after displacement by the field.

    Lines run along every multiple of ``spacing`` in both directions, with
    one vertex per pixel step; each vertex (x, y) moves by exactly
    (ux(x, y), uy(x, y)).  Returns a list of (n, 2) float arrays of
    displaced (x, y) vertices.
    """
    if spacing < 2:
        raise ValueError("spacing must be at least 2 pixels")
    w, h = field.width, field.height
    lines = []
    for y in range(0, h, spacing):
        xs = np.arange(w)
        ys = np.full(w, y)
        lines.append(
            np.column_stack([xs + field.ux[y, xs], ys + field.uy[y, xs]])
        )
    for x in range(0, w, spacing):
        ys = np.arange(h)
        lines.append(
            np.column_stack(
                [x + field.ux[ys, x], ys + field.uy[ys, x]]
            )
        )
    return lines


def render_grid_overlay(
    image: np.ndarray,
    field: DisplacementField,
    spacing: int,
    intensity: int = 255,
) -> np.ndarray:
    """Draw the displaced reference grid onto a copy of the image.

    Visualizes the configuration and magnitude of the transformation the
    field applies; with a zero field the lines are straight and evenly
    spaced.  Vertices falling outside the raster are clipped.
    """
    img = validate_image(image).copy()
    h, w = img.shape
    for line in grid_overlay_polylines(field, spacing):
        for k in range(len(line) - 1):
            x0, y0 = line[k]
            x1, y1 = line[k + 1]
            steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
            ts = np.linspace(0.0, 1.0, steps + 1)
            px = np.rint(x0 + ts * (x1 - x0)).astype(np.int64)
            py = np.rint(y0 + ts * (y1 - y0)).astype(np.int64)
            inside = (px >= 0) & (px < w) & (py >= 0) & (py < h)
            img[py[inside], px[inside]] = intensity
    return img


@dataclass(frozen=True)
class FieldCheckReport:
    """Fold-over statistics for a batch of random fields at one sigma."""

    width: int
    height: int
    sigma: float
    rows: int
    cols: int
    trials: int
    foldover_count: int
    min_jacobian: float
    max_displacement: float

    @property
    def foldover_rate(self) -> float:
        return self.foldover_count / self.trials


def field_check(
    width: int,
    height: int,
    sigma: float,
    grid_dims: tuple[int, int] = (3, 3),
    trials: int = 100,
    seed: int = 0,
) -> FieldCheckReport:
    """Fold-over rate over ``trials`` seeded fields (seeds seed, seed+1, ...).

    A trial folds over when its min_jacobian is <= 0.  Also reports the
    global minimum Jacobian and the largest displacement magnitude seen.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows, cols = grid_dims
    fold = 0
    min_jac = math.inf
    max_disp = 0.0
    for t in range(trials):
        grid = sample_grid(rows, cols, sigma, (seed + t) & ((1 << 64) - 1))
        field = build_field(grid, width, height)
        jac = min_jacobian(field)
        if jac <= 0.0:
            fold += 1
        min_jac = min(min_jac, jac)
        max_disp = max(max_disp, float(np.hypot(field.ux, field.uy).max()))
    return FieldCheckReport(
        width=width,
        height=height,
        sigma=sigma,
        rows=rows,
        cols=cols,
        trials=trials,
        foldover_count=fold,
        min_jacobian=min_jac,
        max_displacement=max_disp,
    )
