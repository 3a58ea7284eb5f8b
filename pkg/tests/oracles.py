"""Independent reference computations used by the tests.

Nothing here calls into the silhouette or polygon code under test: areas
come from casting rays at the 3-D shape on a dense angular grid.
"""

from __future__ import annotations

import numpy as np


def ray_directions(az_deg: np.ndarray, el_deg: np.ndarray) -> np.ndarray:
    """Camera-frame directions for per-axis tangent angles (broadcast)."""
    x = np.tan(np.radians(az_deg))
    y = np.tan(np.radians(el_deg))
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def sphere_hits(dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Rays from the origin that pass within ``radius`` of ``center``."""
    u = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    t = u @ center
    closest2 = center @ center - t**2
    return (t > 0) & (closest2 <= radius**2)


def box_hits(dirs: np.ndarray, center: np.ndarray, rotation: np.ndarray, extents) -> np.ndarray:
    """Slab test of rays from the origin against an oriented box."""
    half = np.asarray(extents, dtype=float) / 2.0
    o = rotation.T @ (-center)  # ray origin in box coordinates
    d = dirs @ rotation  # ray directions in box coordinates
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    return (tmax >= np.maximum(tmin, 0.0))


def raster_area(hit_fn, bounds: tuple[float, float, float, float], n: int = 1000, chunk: int = 250) -> float:
    """Area in deg^2 of the set of (az, el) cell centers for which ``hit_fn``
    reports a hit, on an ``n x n`` grid over ``bounds = (az0, az1, el0, el1)``."""
    az0, az1, el0, el1 = bounds
    daz = (az1 - az0) / n
    de = (el1 - el0) / n
    az = az0 + daz * (np.arange(n) + 0.5)
    el = el0 + de * (np.arange(n) + 0.5)
    count = 0
    for s in range(0, n, chunk):
        A, E = np.meshgrid(az, el[s : s + chunk])
        count += int(np.count_nonzero(hit_fn(ray_directions(A, E))))
    return count * daz * de


def polygon_raster_area(vertices: np.ndarray, n: int = 1000) -> float:
    """Area of a convex CCW polygon by counting grid cells inside all edges."""
    v = np.asarray(vertices, dtype=float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    pad = 0.02 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    xs = lo[0] + (hi[0] - lo[0]) * (np.arange(n) + 0.5) / n
    ys = lo[1] + (hi[1] - lo[1]) * (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, ys)
    inside = np.ones_like(X, dtype=bool)
    for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
        inside &= (x1 - x0) * (Y - y0) - (y1 - y0) * (X - x0) >= 0
    return inside.sum() * (hi[0] - lo[0]) * (hi[1] - lo[1]) / n**2


def brute_force_min_width(points: np.ndarray, n_angles: int = 20000) -> float:
    """Minimum over sampled directions of the projection extent."""
    p = np.asarray(points, dtype=float)
    th = np.linspace(0, np.pi, n_angles, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    proj = p @ dirs.T
    return float((proj.max(axis=0) - proj.min(axis=0)).min())


def exact_min_width(points: np.ndarray) -> float:
    """O(n^3) width: for every pair of points as an edge direction, the
    extent perpendicular to it; the minimum over pairs is the width."""
    p = np.asarray(points, dtype=float)
    best = np.inf
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            e = p[j] - p[i]
            L = np.hypot(*e)
            if L == 0:
                continue
            nrm = np.array([-e[1], e[0]]) / L
            proj = p @ nrm
            best = min(best, proj.max() - proj.min())
    return float(best)


def scanline_raster_area(vertices: np.ndarray, n: int = 1000) -> float:
    """Area of any simple polygon from an ``n x n`` grid over its bounding box.

    Each grid row is intersected with every edge; cell centers between
    alternate crossings are inside (even-odd rule).
    """
    v = np.asarray(vertices, dtype=float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    pad = 0.02 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    dx, dy = (hi - lo) / n
    ys = lo[1] + dy * (np.arange(n) + 0.5)
    a, b = v, np.roll(v, -1, axis=0)
    y0, y1 = a[:, 1][None, :], b[:, 1][None, :]
    Y = ys[:, None]
    crosses = (y0 <= Y) != (y1 <= Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = a[:, 0] + (Y - y0) * (b[:, 0] - a[:, 0]) / (y1 - y0)
    count = 0
    for row, mask in zip(xc, crosses):
        xs = np.sort(row[mask])
        for x_in, x_out in zip(xs[::2], xs[1::2]):
            # centers lo + dx * (i + 0.5) with x_in <= center < x_out
            i0 = int(np.ceil((x_in - lo[0]) / dx - 0.5))
            i1 = int(np.ceil((x_out - lo[0]) / dx - 0.5))
            count += max(0, i1 - i0)
    return count * dx * dy
