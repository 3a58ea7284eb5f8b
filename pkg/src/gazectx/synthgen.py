"""Deterministic synthetic scenes with ground-truth scanpaths.

A generated scene is a static device looking at a handful of spheres and
boxes.  The gaze stream alternates fixations (gaze on an object centroid
plus Gaussian jitter) and straight-line saccades, all aligned to the sample
grid so that fixation boundaries are exact sample timestamps.  Everything
random is drawn from one ``numpy.random.Generator`` seeded by
``SynthConfig.seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from os import PathLike
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, PlacementError
from .geometry import (
    CameraModel,
    ObjectShape,
    Pose,
    angular_distance,
    angular_to_direction,
    quat_from_axis_angle,
    quat_multiply,
    rotate_towards,
)
from .scene import Frame, InteractionEvent, ObjectCatalogEntry, ObjectObservation, Recording

MIN_FIXATION_MS = 150.0
SACCADE_PEAK_DEG_S = 300.0
INTERACTION_LOOKAHEAD_NS = 1_000_000_000
_SEPARATION_MARGIN_DEG = 3.0

OBJECT_NAMES = (
    "mug", "vase", "book", "bowl", "plant", "lamp", "remote", "bottle", "candle", "clock",
    "picture frame", "spoon", "kettle", "pillow", "basket", "jar", "cutting board", "cup",
    "plate", "phone", "tissue box", "keys", "notebook", "pen holder",
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_objects: int = 5
    object_size_range: tuple[float, float] = (0.04, 0.12)
    placement_radius_range: tuple[float, float] = (0.6, 1.9)
    n_fixations: int = 40
    # uniform stand-in: the real fixation duration distribution is unknown
    fixation_duration_range_ms: tuple[float, float] = (150.0, 600.0)
    saccade_duration_range_ms: tuple[float, float] = (30.0, 80.0)
    gaze_jitter_deg: float = 0.3
    interaction_fraction: float = 0.2
    sample_rate_hz: float = 30.0
    shape_kinds: tuple[str, ...] = ("sphere", "box")
    repeat_probability: float = 0.25
    min_separation_deg: float = 12.0
    field_half_width_deg: float = 30.0
    max_placement_attempts: int = 200
    camera: CameraModel = field(default_factory=CameraModel)
    task_label: str = "synthetic"

    def __post_init__(self):
        def rng_ok(r, name, lo_min=0.0):
            if len(r) != 2 or not (lo_min < r[0] <= r[1]) or not all(map(math.isfinite, r)):
                raise ConfigError(f"{name} must be a non-empty positive range, got {r}")

        if self.n_objects < 1:
            raise ConfigError(f"n_objects must be >= 1, got {self.n_objects}")
        if self.n_fixations < 1:
            raise ConfigError(f"n_fixations must be >= 1, got {self.n_fixations}")
        rng_ok(self.object_size_range, "object_size_range")
        rng_ok(self.placement_radius_range, "placement_radius_range")
        rng_ok(self.fixation_duration_range_ms, "fixation_duration_range_ms")
        rng_ok(self.saccade_duration_range_ms, "saccade_duration_range_ms")
        if self.fixation_duration_range_ms[0] < MIN_FIXATION_MS:
            raise ConfigError(f"fixation durations must be >= {MIN_FIXATION_MS} ms")
        if not 0.0 <= self.interaction_fraction <= 1.0:
            raise ConfigError(f"interaction_fraction must be in [0, 1], got {self.interaction_fraction}")
        if not 0.0 <= self.repeat_probability <= 1.0:
            raise ConfigError(f"repeat_probability must be in [0, 1], got {self.repeat_probability}")
        if self.gaze_jitter_deg < 0:
            raise ConfigError("gaze_jitter_deg must be >= 0")
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be > 0")
        if not self.shape_kinds or set(self.shape_kinds) - {"sphere", "box"}:
            raise ConfigError(f"shape_kinds must be drawn from sphere/box, got {self.shape_kinds}")
        if not 0 < self.field_half_width_deg < self.camera.max_fov_deg:
            raise ConfigError("field_half_width_deg must lie inside the camera field of view")

    @property
    def recording_id(self) -> str:
        return f"synth-{self.seed:06d}"


@dataclass(frozen=True)
class GroundTruth:
    true_fixations: tuple[tuple[int, int, str], ...]
    true_interaction_targets: tuple[tuple[int, str], ...] = ()

    def to_json(self) -> dict:
        return {
            "true_fixations": [{"start_ns": s, "end_ns": e, "id": i} for s, e, i in self.true_fixations],
            "interactions": [{"t_ns": t, "id": i} for t, i in self.true_interaction_targets],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            tuple((int(f["start_ns"]), int(f["end_ns"]), str(f["id"])) for f in obj["true_fixations"]),
            tuple((int(t["t_ns"]), str(t["id"])) for t in obj["interactions"]),
        )


def save_truth(truth: GroundTruth, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(truth.to_json(), separators=(",", ":")) + "\n")


def load_truth(path: str | PathLike) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return GroundTruth.from_json(json.load(fh))


def truth_path_for(recording_path: str) -> str:
    base = recording_path[:-6] if recording_path.endswith(".jsonl") else recording_path
    return base + ".truth.json"


def sample_times_ns(n: int, rate_hz: float, t0_ns: int = 0) -> list[int]:
    return [t0_ns + int(round(k * 1e9 / rate_hz)) for k in range(n)]


# --------------------------------------------------------------------------
# Scene placement
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Placed:
    object_id: str
    name: str
    shape: ObjectShape
    center_cam: np.ndarray
    local_quat: tuple[float, float, float, float]
    bound_deg: float


def _random_quat(rng: np.random.Generator) -> tuple[float, float, float, float]:
    axis = rng.normal(size=3)
    return quat_from_axis_angle(axis, float(rng.uniform(0, 2 * math.pi)))


def _place_objects(cfg: SynthConfig, rng: np.random.Generator) -> list[_Placed]:
    names = [OBJECT_NAMES[i] for i in rng.permutation(len(OBJECT_NAMES))]
    if cfg.n_objects > len(names):
        names += [f"object {i}" for i in range(len(names), cfg.n_objects)]
    for _ in range(20):
        placed: list[_Placed] = []
        for k in range(cfg.n_objects):
            for _attempt in range(cfg.max_placement_attempts):
                kind = cfg.shape_kinds[int(rng.integers(len(cfg.shape_kinds)))]
                size = float(rng.uniform(*cfg.object_size_range))
                if kind == "sphere":
                    shape = ObjectShape.sphere(size)
                    quat = (1.0, 0.0, 0.0, 0.0)
                else:
                    ext = 2.0 * size * rng.uniform(0.7, 1.0, size=3)
                    shape = ObjectShape.box(*ext)
                    quat = _random_quat(rng)
                dist = float(rng.uniform(*cfg.placement_radius_range))
                az, el = rng.uniform(-cfg.field_half_width_deg, cfg.field_half_width_deg, size=2)
                center = dist * angular_to_direction((az, el))
                if dist <= 1.05 * shape.bounding_radius:
                    continue
                bound = math.degrees(math.asin(shape.bounding_radius / dist))
                ok = all(
                    angular_distance(center, p.center_cam)
                    >= max(cfg.min_separation_deg, bound + p.bound_deg + _SEPARATION_MARGIN_DEG)
                    for p in placed
                )
                if ok:
                    placed.append(_Placed(f"obj-{k:02d}", names[k], shape, center, quat, bound))
                    break
            else:
                break
        if len(placed) == cfg.n_objects:
            return placed
    raise PlacementError(
        f"could not place {cfg.n_objects} objects without overlap (seed {cfg.seed}); "
        "reduce n_objects or object sizes"
    )


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    omega = math.radians(angular_distance(a, b))
    if omega < 1e-12:
        return a.copy()
    s = math.sin(omega)
    v = (math.sin((1 - t) * omega) * a + math.sin(t * omega) * b) / s
    return v / np.linalg.norm(v)


def _jittered(rng: np.random.Generator, d: np.ndarray, sd: float) -> np.ndarray:
    if sd == 0:
        return d
    return rotate_towards(d, rng.normal(0.0, sd, size=2))


def generate(config: SynthConfig) -> tuple[Recording, GroundTruth]:
    """Build a synthetic recording and its ground-truth sidecar."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    placed = _place_objects(cfg, rng)

    yaw = float(rng.uniform(-math.pi, math.pi))
    device = Pose(
        tuple(float(v) for v in rng.uniform(-2.0, 2.0, size=3)),
        quat_from_axis_angle((0.0, 1.0, 0.0), yaw),
    )
    target_dirs = {p.object_id: p.center_cam / np.linalg.norm(p.center_cam) for p in placed}
    ids = [p.object_id for p in placed]

    rate = cfg.sample_rate_hz
    min_intervals = math.ceil(MIN_FIXATION_MS * rate / 1000.0 - 1e-9)
    excursion_deg = cfg.min_separation_deg

    gaze: list[np.ndarray] = []
    fix_spans: list[tuple[int, int, str]] = []
    target = ids[int(rng.integers(len(ids)))]
    for i in range(cfg.n_fixations):
        dur_ms = float(rng.uniform(*cfg.fixation_duration_range_ms))
        n_int = max(min_intervals, int(round(dur_ms * rate / 1000.0)))
        start = len(gaze) if not gaze else len(gaze) - 1
        if gaze:
            # the saccade's landing sample is the first fixation sample
            gaze.pop()
        for _ in range(n_int + 1):
            gaze.append(_jittered(rng, target_dirs[target], cfg.gaze_jitter_deg))
        fix_spans.append((start, start + n_int, target))
        if i == cfg.n_fixations - 1:
            break

        if len(ids) > 1 and rng.random() >= cfg.repeat_probability:
            others = [o for o in ids if o != target]
            nxt = others[int(rng.integers(len(others)))]
        else:
            nxt = target
        last = gaze[-1]
        if nxt == target:
            # out-and-back excursion with a one-interval dwell, too short to
            # register as a fixation but long enough to split the two visits
            phi = float(rng.uniform(0, 2 * math.pi))
            away = rotate_towards(target_dirs[target], (excursion_deg * math.cos(phi), excursion_deg * math.sin(phi)))
            gaze.append(_jittered(rng, away, cfg.gaze_jitter_deg))
            gaze.append(_jittered(rng, away, cfg.gaze_jitter_deg))
            gaze.append(target_dirs[nxt])
        else:
            amp = angular_distance(last, target_dirs[nxt])
            sac_ms = float(rng.uniform(*cfg.saccade_duration_range_ms))
            m = max(1, min(int(round(sac_ms * rate / 1000.0)), int(math.floor(amp * rate / SACCADE_PEAK_DEG_S))))
            for j in range(1, m):
                gaze.append(_slerp(last, target_dirs[nxt], j / m))
            gaze.append(target_dirs[nxt])
        target = nxt

    times = sample_times_ns(len(gaze), rate)
    world_objs = []
    for p in placed:
        pos = device.transform_point(p.center_cam)
        q = quat_multiply(device.orientation, p.local_quat) if p.shape.kind == "box" else (1.0, 0.0, 0.0, 0.0)
        world_objs.append(ObjectObservation(p.object_id, Pose(tuple(float(v) for v in pos), q)))
    world_objs = tuple(world_objs)

    frames = tuple(
        Frame(t, device, tuple(float(v) for v in g), world_objs) for t, g in zip(times, gaze)
    )
    true_fix = tuple((times[a], times[b], oid) for a, b, oid in fix_spans)

    n_inter = int(round(cfg.interaction_fraction * (len(fix_spans) - 1)))
    interactions: list[InteractionEvent] = []
    if n_inter:
        chosen = sorted(rng.choice(len(fix_spans) - 1, size=n_inter, replace=False).tolist())
        for idx in chosen:
            _, end_ns, oid = true_fix[idx]
            start = end_ns + int(rng.integers(1, 400_000_000))
            length = int(rng.integers(500_000_000, 2_000_000_000))
            interactions.append(InteractionEvent(oid, start, start + length))

    catalog = tuple(ObjectCatalogEntry(p.object_id, p.name, p.shape) for p in placed)
    rec = Recording(
        recording_id=cfg.recording_id,
        sample_rate_hz=float(rate),
        camera=cfg.camera,
        catalog=catalog,
        frames=frames,
        interactions=tuple(interactions),
        task_label=cfg.task_label,
    )
    truth = GroundTruth(true_fix, tuple((e.start_ns, e.object_id) for e in interactions))
    return rec, truth


# --------------------------------------------------------------------------
# Gaze error model
# --------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _rice_mean_ratio(noise_fraction: float) -> float:
    """E|b + n| / b for a bias b and isotropic 2-D noise of sd noise_fraction * b."""
    if noise_fraction == 0:
        return 1.0
    return float(stats.rice(1.0 / noise_fraction, scale=noise_fraction).mean())


def perturb_gaze(recording: Recording, error_deg: float, seed: int, noise_fraction: float = 0.1) -> Recording:
    """Apply a constant gaze bias plus per-sample isotropic noise.

    The bias has a random direction fixed for the whole recording; the noise
    sd is ``noise_fraction`` times the bias.  The bias magnitude is scaled so
    that the expected angular offset of a sample equals ``error_deg``.
    """
    if error_deg < 0:
        raise ConfigError(f"error_deg must be >= 0, got {error_deg}")
    if error_deg == 0:
        return recording
    rng = np.random.default_rng(seed)
    bias = error_deg / _rice_mean_ratio(noise_fraction)
    phi = float(rng.uniform(0, 2 * math.pi))
    offset = np.array([bias * math.cos(phi), bias * math.sin(phi)])
    noise = rng.normal(0.0, noise_fraction * bias, size=(len(recording.frames), 2))
    frames = [
        replace(f, gaze_direction=tuple(float(v) for v in rotate_towards(np.asarray(f.gaze_direction), offset + n)))
        for f, n in zip(recording.frames, noise)
    ]
    return recording.replace_frames(frames)


# --------------------------------------------------------------------------
# Hand-built recordings (tests, constructed scenes)
# --------------------------------------------------------------------------


def make_recording(
    objects: Sequence[tuple[str, str, ObjectShape, Sequence[Sequence[float]] | Sequence[float]]],
    gaze: Sequence[Sequence[float]],
    sample_rate_hz: float = 30.0,
    interactions: Sequence[InteractionEvent] = (),
    camera: CameraModel | None = None,
    recording_id: str = "constructed",
    device_positions: Sequence[Sequence[float]] | None = None,
) -> Recording:
    """Recording with an identity-oriented device at the origin (or at
    ``device_positions``) and objects given by camera-frame positions.

    Each object is ``(id, name, shape, position)`` where ``position`` is a
    single 3-vector or one 3-vector per frame.
    """
    n = len(gaze)
    times = sample_times_ns(n, sample_rate_hz)
    frames = []
    for k in range(n):
        dev = Pose(tuple(float(v) for v in device_positions[k])) if device_positions is not None else Pose()
        obs = []
        for oid, _name, _shape, pos in objects:
            p = np.asarray(pos, dtype=float)
            p = p[k] if p.ndim == 2 else p
            obs.append(ObjectObservation(oid, Pose(tuple(float(v) for v in np.asarray(dev.position) + p))))
        g = np.asarray(gaze[k], dtype=float)
        frames.append(Frame(times[k], dev, tuple(float(v) for v in g / np.linalg.norm(g)), tuple(obs)))
    catalog = tuple(ObjectCatalogEntry(oid, name, shape) for oid, name, shape, _ in objects)
    return Recording(
        recording_id=recording_id,
        sample_rate_hz=float(sample_rate_hz),
        camera=camera or CameraModel(),
        catalog=catalog,
        frames=tuple(frames),
        interactions=tuple(interactions),
    )
