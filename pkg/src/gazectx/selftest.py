"""Quick oracle checks that run from an installed package (``gazectx selftest``).

Each check compares a pipeline stage against an independent computation on
a small input and returns a ``(name, ok, detail)`` triple.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from .experiments import bootstrap_ci, run_sweep, sample_e1_trials
from .gaze import build_scanpath, interval_f1
from .geometry import (
    AngularPolygon,
    CameraModel,
    ObjectShape,
    Pose,
    angular_polygon_area,
    area_equivalent_radius,
    convex_hull,
    minimal_half_width,
    project_object,
)
from .synthgen import SynthConfig, generate
from .vlm import MockClient


def _sphere_radius() -> tuple[bool, str]:
    worst = 0.0
    for ratio in (0.05, 0.1, 0.3):
        poly = project_object(CameraModel(), Pose((0.0, 0.0, 1.0)), ObjectShape.sphere(ratio))
        expect = math.degrees(math.asin(ratio))
        r = area_equivalent_radius(angular_polygon_area(poly))
        w = minimal_half_width(poly)
        worst = max(worst, abs(r - expect) / expect, abs(w - expect) / expect)
    return worst < 0.02, f"max relative error {worst:.4f}"


def _raster_area() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        hull = convex_hull(rng.uniform(-10, 10, size=(12, 2)))
        poly = AngularPolygon(tuple(map(tuple, hull)))
        n = 400
        xs = np.linspace(-10, 10, n, endpoint=False) + 10 / n
        gx, gy = np.meshgrid(xs, xs)
        inside = np.ones_like(gx, dtype=bool)
        for (x0, y0), (x1, y1) in zip(hull, np.roll(hull, -1, axis=0)):
            inside &= (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0) >= 0
        raster = inside.sum() * (20 / n) ** 2
        worst = max(worst, abs(raster - angular_polygon_area(poly)) / raster)
    return worst < 0.02, f"max relative error {worst:.4f}"


def _detector() -> tuple[bool, str]:
    rec, truth = generate(SynthConfig(seed=3, n_fixations=25))
    sp = build_scanpath(rec)
    f1 = interval_f1([(f.start_ns, f.end_ns) for f in sp.fixations], [(s, e) for s, e, _ in truth.true_fixations])
    same = [f.assigned_object for f in sp.fixations] == [o for _, _, o in truth.true_fixations]
    return f1 >= 0.99 and same, f"F1 {f1:.3f}, sequence match {same}"


def _bootstrap() -> tuple[bool, str]:
    lo, hi = bootstrap_ci([1] * 50 + [0] * 50, seed=0)
    ok = abs(lo - 0.40) <= 0.02 and abs(hi - 0.60) <= 0.02 and bootstrap_ci([1] * 20) == (1.0, 1.0)
    return ok, f"50/50 interval ({lo:.3f}, {hi:.3f})"


def _echo_mock() -> tuple[bool, str]:
    rec, _ = generate(SynthConfig(seed=5, n_fixations=30, repeat_probability=1.0))
    trials = sample_e1_trials([(rec, build_scanpath(rec))], n=10, seed=0)
    table = run_sweep(trials, [MockClient("echo-prev")], k_values=[1, 5], resamples=200)
    accs = [r.accuracy for r in table.rows]
    return all(a == 1.0 for a in accs), f"accuracy {accs}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "sphere silhouette radius": _sphere_radius,
    "shoelace vs raster area": _raster_area,
    "fixation recovery": _detector,
    "bootstrap interval": _bootstrap,
    "echo mock on repeated targets": _echo_mock,
}


def run_selftest() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), f"{detail} [{time.perf_counter() - t0:.2f}s]"))
    return out
