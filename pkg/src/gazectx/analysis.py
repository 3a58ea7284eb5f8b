"""Visual-size distributions per interaction space.

For every frame, each object whose center lies inside the camera field of
view contributes one sample per space tag it carries (near, mid,
interacted).  Fixated samples come from the scanpath instead: one per
assigned fixation, measured at the fixation's midpoint frame.  Distances
are measured from the device origin to the object centroid.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateProjectionError, DomainError, UsageError
from .geometry import AngularPolygon, in_field_of_view, visual_size
from .gaze import Scanpath
from .scene import Frame, InteractionEvent, Recording, object_distance, object_in_camera, silhouette

log = logging.getLogger(__name__)

SPACES = ("near", "mid", "interacted", "fixated")
METRICS = ("radius_deg", "half_min_width_deg")
PERCENTILES = (10, 25, 50, 75, 90)
HISTOGRAM_BIN_DEG = 0.25
RELIABILITY_DEG = 3.0

NOTES = (
    "distance is device origin to object centroid",
    "field of view membership: object center within camera max_fov_deg",
    "silhouettes are unoccluded per-object projections",
    "fixated samples are one per assigned fixation at its midpoint frame",
)

# Medians read from the ADT reference measurements; kept for comparison only,
# they cannot be reproduced without that dataset.
REFERENCE_MEDIANS_DEG = {
    "fixated": {"radius_deg": 4.07, "minor_axis_deg": 3.12},
    "near": {"radius_deg": 5.88, "minor_axis_deg": 4.69},
    "mid": {"radius_deg": 3.3, "minor_axis_deg": 2.54},
    "interacted": {"radius_deg": 10.81, "minor_axis_deg": 9.10},
}


@dataclass(frozen=True)
class SpaceConfig:
    near_max_m: float = 1.0
    mid_min_m: float = 1.0
    mid_max_m: float = 2.0
    fixated_max_m: float = 2.0
    interaction_pad_s: float = 1.0
    per_frame_fixated: bool = False

    def __post_init__(self):
        if not (0 < self.near_max_m <= self.mid_min_m < self.mid_max_m):
            raise DomainError("space bounds must satisfy 0 < near_max <= mid_min < mid_max")
        if self.interaction_pad_s < 0:
            raise DomainError("interaction_pad_s must be >= 0")
        if not self.fixated_max_m > 0:
            raise DomainError("fixated_max_m must be > 0")


@dataclass(frozen=True)
class SizeSample:
    object_id: str
    t_ns: int
    space: str
    radius_deg: float
    half_min_width_deg: float


@dataclass
class SampleSet:
    """Collected samples plus the count of observations that had to be skipped."""

    samples: list[SizeSample] = field(default_factory=list)
    skipped: int = 0

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def merge(self, other: "SampleSet") -> "SampleSet":
        return SampleSet(self.samples + other.samples, self.skipped + other.skipped)


def classify_spaces(
    frame: Frame, interactions: Iterable[InteractionEvent], t_ns: int | None = None, cfg: SpaceConfig = SpaceConfig()
) -> dict[str, set[str]]:
    """Space tags of every object observed in ``frame``.

    near: distance <= near_max; mid: mid_min < distance <= mid_max;
    interacted: ``t_ns`` within an interaction on that object, padded on
    both sides.  Tags are not exclusive.
    """
    t = frame.timestamp_ns if t_ns is None else t_ns
    pad = int(round(cfg.interaction_pad_s * 1e9))
    active = {ev.object_id for ev in interactions if ev.start_ns - pad <= t <= ev.end_ns + pad}
    out: dict[str, set[str]] = {}
    for obs in frame.observations:
        d = object_distance(frame, obs.object_id)
        tags = set()
        if d <= cfg.near_max_m:
            tags.add("near")
        elif cfg.mid_min_m < d <= cfg.mid_max_m:
            tags.add("mid")
        if obs.object_id in active:
            tags.add("interacted")
        out[obs.object_id] = tags
    return out


def _metrics(recording: Recording, frame: Frame, obs):
    try:
        poly = silhouette(recording, frame, obs)
    except DegenerateProjectionError:
        return None
    if not isinstance(poly, AngularPolygon):
        return None
    return visual_size(poly)


def collect_size_samples(recording: Recording, scanpath: Scanpath | None, cfg: SpaceConfig = SpaceConfig()) -> SampleSet:
    out = SampleSet()
    fixated_at: dict[int, list[str]] = {}
    if scanpath is not None:
        if scanpath.recording_id != recording.recording_id:
            raise DomainError(f"scanpath of {scanpath.recording_id} does not belong to {recording.recording_id}")
        for fx in scanpath.fixations:
            if fx.assigned_object is None:
                continue
            if cfg.per_frame_fixated:
                for k, f in enumerate(recording.frames):
                    if fx.start_ns <= f.timestamp_ns <= fx.end_ns:
                        fixated_at.setdefault(k, []).append(fx.assigned_object)
            else:
                k = recording.nearest_frame_index(fx.midpoint_ns)
                fixated_at.setdefault(k, []).append(fx.assigned_object)

    for k, frame in enumerate(recording.frames):
        tags = classify_spaces(frame, recording.interactions, frame.timestamp_ns, cfg)
        for obs in frame.observations:
            obj_tags = sorted(tags.get(obs.object_id, ()))
            want_fixated = obs.object_id in fixated_at.get(k, ()) and object_distance(frame, obs.object_id) <= cfg.fixated_max_m
            if not obj_tags and not want_fixated:
                continue
            if not in_field_of_view(recording.camera, object_in_camera(frame, obs).position):
                continue
            m = _metrics(recording, frame, obs)
            if m is None:
                out.skipped += 1
                log.warning("no silhouette for %s at t=%d; sample skipped", obs.object_id, frame.timestamp_ns)
                continue
            for tag in obj_tags:
                out.samples.append(SizeSample(obs.object_id, frame.timestamp_ns, tag, m.radius_deg, m.half_min_width_deg))
            if want_fixated:
                for _ in range(fixated_at[k].count(obs.object_id)):
                    out.samples.append(SizeSample(obs.object_id, frame.timestamp_ns, "fixated", m.radius_deg, m.half_min_width_deg))
    return out


def percentile(samples: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile at rank ``q / 100 * (n - 1)``."""
    xs = sorted(float(x) for x in samples)
    if not xs:
        raise DomainError("percentile of an empty list")
    if not 0 <= q <= 100:
        raise DomainError(f"q must lie in [0, 100], got {q}")
    r = q / 100.0 * (len(xs) - 1)
    lo = math.floor(r)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (r - lo) * (xs[hi] - xs[lo])


def histogram(values: Sequence[float], bin_width: float = HISTOGRAM_BIN_DEG) -> list[dict]:
    if not values:
        return []
    top = max(values)
    n_bins = max(1, int(math.floor(top / bin_width)) + 1)
    idx = np.minimum(np.floor(np.asarray(values) / bin_width).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return [
        {"lo": round(i * bin_width, 6), "hi": round((i + 1) * bin_width, 6), "n": int(c)} for i, c in enumerate(counts)
    ]


@dataclass
class SizeDistributionReport:
    """Per-metric, per-space summaries of a sample set."""

    stats: dict[str, dict[str, dict]]
    counts: dict[str, int]
    skipped: int
    config: dict
    notes: tuple[str, ...] = NOTES

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "notes": list(self.notes),
            "skipped": self.skipped,
            "reference_medians_deg": REFERENCE_MEDIANS_DEG,
            "metrics": self.stats,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "space", "statistic", "value"])
        for metric, spaces in self.stats.items():
            for space, s in spaces.items():
                w.writerow([metric, space, "count", s["count"]])
                for name, v in s["percentiles"].items():
                    w.writerow([metric, space, name, "" if v is None else f"{v:.6f}"])
                w.writerow([metric, space, "frac_ge_3deg", "" if s["frac_ge_3deg"] is None else f"{s['frac_ge_3deg']:.6f}"])
        return buf.getvalue()


def summarize(values: Sequence[float]) -> dict:
    if not values:
        return {
            "count": 0,
            "percentiles": {f"p{q}": None for q in PERCENTILES},
            "frac_ge_3deg": None,
            "histogram": [],
        }
    return {
        "count": len(values),
        "percentiles": {f"p{q}": percentile(values, q) for q in PERCENTILES},
        "frac_ge_3deg": sum(1 for v in values if v >= RELIABILITY_DEG) / len(values),
        "histogram": histogram(values),
    }


def build_report(samples: SampleSet | Sequence[SizeSample], cfg: SpaceConfig = SpaceConfig()) -> SizeDistributionReport:
    items = list(samples)
    skipped = samples.skipped if isinstance(samples, SampleSet) else 0
    by_space: dict[str, list[SizeSample]] = {s: [] for s in SPACES}
    for s in items:
        by_space[s.space].append(s)
    stats = {m: {sp: summarize([getattr(x, m) for x in by_space[sp]]) for sp in SPACES} for m in METRICS}
    counts = dict(Counter({sp: len(by_space[sp]) for sp in SPACES}))
    return SizeDistributionReport(stats, counts, skipped, asdict(cfg))


def emit_report(samples, cfg: SpaceConfig = SpaceConfig(), format: str = "json") -> tuple[SizeDistributionReport, str]:
    """Report plus its rendering as ``"json"`` or ``"csv"``."""
    report = build_report(samples, cfg)
    if format == "json":
        return report, json.dumps(report.to_json(), indent=2, sort_keys=False) + "\n"
    if format == "csv":
        return report, report.to_csv()
    raise UsageError(f"unknown report format {format!r} (expected json or csv)")
