"""Velocity-threshold fixation detection, object assignment and scanpaths."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateProjectionError, DomainError
from .geometry import AngularPolygon, angular_distances, direction_to_angular, distance_to_boundary, point_in_polygon
from .scene import Recording, object_distance, silhouette

DEFAULT_TOLERANCE_DEG = 1.5
FIXATED_MAX_DISTANCE_M = 2.0

HIT = "hit"
TOLERANCE = "tolerance"
UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class DetectorConfig:
    velocity_threshold_deg_s: float = 100.0
    min_duration_ms: float = 150.0
    max_gap_samples: int = 1

    def __post_init__(self):
        if not self.velocity_threshold_deg_s > 0:
            raise DomainError("velocity_threshold_deg_s must be > 0")
        if not self.min_duration_ms > 0:
            raise DomainError("min_duration_ms must be > 0")
        if self.max_gap_samples < 0:
            raise DomainError("max_gap_samples must be >= 0")


@dataclass(frozen=True)
class FixationEvent:
    start_ns: int
    end_ns: int
    centroid_direction: tuple[float, float, float]
    assigned_object: str | None = None
    assignment: str = UNASSIGNED

    @property
    def duration_ms(self) -> float:
        return (self.end_ns - self.start_ns) / 1e6

    @property
    def midpoint_ns(self) -> int:
        return (self.start_ns + self.end_ns) // 2


@dataclass(frozen=True)
class Scanpath:
    recording_id: str
    fixations: tuple[FixationEvent, ...]

    def __len__(self):
        return len(self.fixations)

    @property
    def assigned(self) -> list[int]:
        """Indices of fixations that carry an object."""
        return [i for i, f in enumerate(self.fixations) if f.assigned_object is not None]

    def method_counts(self) -> dict[str, int]:
        out = {HIT: 0, TOLERANCE: 0, UNASSIGNED: 0}
        for f in self.fixations:
            out[f.assignment] += 1
        return out


# --------------------------------------------------------------------------
# Detection
# --------------------------------------------------------------------------


def _slow_runs(slow: np.ndarray) -> list[tuple[int, int]]:
    """Sample spans ``(first, last)`` covered by maximal runs of slow intervals."""
    runs = []
    i, n = 0, len(slow)
    while i < n:
        if slow[i]:
            j = i
            while j + 1 < n and slow[j + 1]:
                j += 1
            runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return runs


def detect_fixations(samples: Sequence[tuple[int, Sequence[float]]], config: DetectorConfig = DetectorConfig()) -> list[FixationEvent]:
    """I-VT fixation detection on ``(t_ns, direction)`` samples.

    Velocities come from adjacent-sample differences.  Maximal runs of
    below-threshold intervals are candidate fixations.  Two neighbouring
    runs are joined across a gap when at most ``max_gap_samples`` samples
    lie between them and the jump from the end of one run to the start of
    the next is itself below threshold (a transient spike, not a saccade).
    Candidates shorter than ``min_duration_ms`` are dropped.
    """
    if len(samples) < 2:
        raise DomainError(f"need at least 2 samples, got {len(samples)}")
    t = np.array([s[0] for s in samples], dtype=np.int64)
    d = np.array([s[1] for s in samples], dtype=float)
    if d.ndim != 2 or d.shape[1] != 3:
        raise DomainError("directions must be 3-vectors")
    dt = np.diff(t)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0))
        raise DomainError(f"timestamps not strictly increasing at sample {k + 1} ({t[k]} -> {t[k + 1]})")
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    thr = config.velocity_threshold_deg_s
    vel = angular_distances(d[:-1], d[1:]) / (dt / 1e9)
    runs = _slow_runs(vel < thr)

    merged: list[list[int]] = []
    for s, e in runs:
        if merged:
            ps, pe = merged[-1]
            between = s - pe - 1
            if between <= config.max_gap_samples:
                jump = angular_distances(d[pe], d[s]) / ((t[s] - t[pe]) / 1e9)
                if jump < thr:
                    merged[-1][1] = e
                    continue
        merged.append([s, e])

    events = []
    for s, e in merged:
        if (t[e] - t[s]) / 1e6 < config.min_duration_ms:
            continue
        c = d[s : e + 1].mean(axis=0)
        c = c / np.linalg.norm(c)
        events.append(FixationEvent(int(t[s]), int(t[e]), tuple(float(v) for v in c)))
    return events


# --------------------------------------------------------------------------
# Assignment
# --------------------------------------------------------------------------


def assign_with_method(
    fix: FixationEvent,
    recording: Recording,
    tolerance_deg: float = DEFAULT_TOLERANCE_DEG,
    max_distance_m: float = FIXATED_MAX_DISTANCE_M,
) -> tuple[str | None, str]:
    """Object under a fixation plus which rule selected it.

    Uses the frame nearest the fixation midpoint and the fixation's centroid
    gaze direction.  A silhouette hit wins (nearest object on ties); otherwise
    the object whose outline is closest, if within ``tolerance_deg``.
    Objects beyond ``max_distance_m`` are never considered.
    """
    if not recording.frames:
        return None, UNASSIGNED
    frame = recording.frames[recording.nearest_frame_index(fix.midpoint_ns)]
    if not frame.observations or fix.centroid_direction[2] <= 0:
        return None, UNASSIGNED
    gaze = direction_to_angular(fix.centroid_direction).as_tuple()

    hits: list[tuple[float, str]] = []
    near: list[tuple[float, float, str]] = []
    for obs in frame.observations:
        dist = object_distance(frame, obs.object_id)
        if dist > max_distance_m:
            continue
        try:
            poly = silhouette(recording, frame, obs)
        except DegenerateProjectionError:
            continue
        if not isinstance(poly, AngularPolygon):
            continue
        if point_in_polygon(gaze, poly):
            hits.append((dist, obs.object_id))
        else:
            b = distance_to_boundary(gaze, poly)
            if b <= tolerance_deg:
                near.append((b, dist, obs.object_id))
    if hits:
        return min(hits)[1], HIT
    if near:
        return min(near)[2], TOLERANCE
    return None, UNASSIGNED


def assign_fixation_object(
    fix: FixationEvent, recording: Recording, tolerance_deg: float = DEFAULT_TOLERANCE_DEG
) -> str | None:
    return assign_with_method(fix, recording, tolerance_deg)[0]


def build_scanpath(
    recording: Recording, detector: DetectorConfig = DetectorConfig(), tolerance_deg: float = DEFAULT_TOLERANCE_DEG
) -> Scanpath:
    """Detect and assign every fixation in the recording.

    Consecutive fixations on the same object stay separate; unassigned
    fixations are kept with ``assignment == "unassigned"``.
    """
    events = detect_fixations(recording.gaze_samples(), detector)
    out = []
    for ev in events:
        oid, how = assign_with_method(ev, recording, tolerance_deg)
        out.append(replace(ev, assigned_object=oid, assignment=how))
    return Scanpath(recording.recording_id, tuple(out))


# --------------------------------------------------------------------------
# Evaluation against ground truth
# --------------------------------------------------------------------------


def _iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union


def match_intervals(
    detected: Sequence[tuple[int, int]], truth: Sequence[tuple[int, int]], min_iou: float = 0.5
) -> dict[int, int]:
    """One-to-one matching ``truth index -> detected index`` by temporal IoU.

    With ``min_iou >= 0.5`` each interval can overlap at most one partner
    that strongly, so greedy matching in descending IoU is optimal.
    """
    pairs = []
    for i, tr in enumerate(truth):
        for j, de in enumerate(detected):
            if de[0] >= tr[1]:
                break
            v = _iou(tr, de)
            if v >= min_iou:
                pairs.append((-v, i, j))
    pairs.sort()
    used_t, used_d, out = set(), set(), {}
    for _, i, j in pairs:
        if i not in used_t and j not in used_d:
            used_t.add(i)
            used_d.add(j)
            out[i] = j
    return out


def interval_f1(detected: Sequence[tuple[int, int]], truth: Sequence[tuple[int, int]], min_iou: float = 0.5) -> float:
    if not detected and not truth:
        return 1.0
    m = len(match_intervals(detected, truth, min_iou))
    if m == 0:
        return 0.0
    precision = m / len(detected)
    recall = m / len(truth)
    return 2 * precision * recall / (precision + recall)


def assignment_accuracy(scanpath: Scanpath, true_fixations: Sequence[tuple[int, int, str]], min_iou: float = 0.5) -> float:
    """Share of ground-truth fixations recovered with the right object."""
    if not true_fixations:
        raise DomainError("no ground-truth fixations")
    det = [(f.start_ns, f.end_ns) for f in scanpath.fixations]
    match = match_intervals(det, [(s, e) for s, e, _ in true_fixations], min_iou)
    correct = sum(
        1 for i, (_, _, oid) in enumerate(true_fixations) if i in match and scanpath.fixations[match[i]].assigned_object == oid
    )
    return correct / len(true_fixations)


# --------------------------------------------------------------------------
# CSV dump
# --------------------------------------------------------------------------

FIXATION_CSV_COLUMNS = ("start_ns", "end_ns", "duration_ms", "object_id", "az_deg", "el_deg")


def fixations_csv(scanpath: Scanpath) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIXATION_CSV_COLUMNS)
    for f in scanpath.fixations:
        x, y, z = f.centroid_direction
        az = math.degrees(math.atan2(x, z))
        el = math.degrees(math.atan2(y, z))
        w.writerow([f.start_ns, f.end_ns, f"{f.duration_ms:.3f}", f.assigned_object or "", f"{az:.4f}", f"{el:.4f}"])
    return buf.getvalue()
