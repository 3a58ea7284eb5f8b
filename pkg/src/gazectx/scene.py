"""Recording data model, JSON Lines serialization and validation.

File layout (UTF-8, ``\\n`` separated):

* line 1, header: ``version`` (=1), ``recording_id``, ``sample_rate_hz``,
  ``camera{focal_length_px,cx,cy,width,height,max_fov_deg}``, ``task_label``,
  ``silhouettes`` (``"stored"`` or ``"computed"``) and
  ``catalog[{id,name,shape{kind,dims}}]``
* one line per frame: ``{t_ns, device{pos,quat}, gaze, objects[{id,pos,quat,
  silhouette?}], image?}``
* last line, trailer: ``{interactions[{id,start_ns,end_ns}]}``

Unknown fields are rejected.  Quaternions are (w, x, y, z).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable

import numpy as np

from .errors import AbsentObservationError, DomainError, FormatError, ValidationError
from .geometry import (
    AngularPolygon,
    CameraModel,
    ObjectShape,
    Pose,
    Projection,
    is_simple,
    project_object,
)

FORMAT_VERSION = 1
UNIT_TOL = 1e-6

__all__ = [
    "FORMAT_VERSION",
    "ObjectCatalogEntry",
    "ObjectObservation",
    "Frame",
    "InteractionEvent",
    "Recording",
    "Violation",
    "Pose",
    "ObjectShape",
    "load_recording",
    "loads_recording",
    "save_recording",
    "dumps_recording",
    "validate",
    "object_distance",
    "object_in_camera",
    "silhouette",
]


@dataclass(frozen=True)
class ObjectCatalogEntry:
    object_id: str
    name: str
    shape: ObjectShape


@dataclass(frozen=True)
class ObjectObservation:
    object_id: str
    pose: Pose
    silhouette: AngularPolygon | None = None


@dataclass(frozen=True)
class Frame:
    timestamp_ns: int
    device_pose: Pose
    gaze_direction: tuple[float, float, float]
    observations: tuple[ObjectObservation, ...] = ()
    image: str | None = None

    def observation(self, object_id: str) -> ObjectObservation | None:
        for obs in self.observations:
            if obs.object_id == object_id:
                return obs
        return None


@dataclass(frozen=True)
class InteractionEvent:
    object_id: str
    start_ns: int
    end_ns: int


@dataclass(frozen=True)
class Recording:
    recording_id: str
    sample_rate_hz: float
    camera: CameraModel
    catalog: tuple[ObjectCatalogEntry, ...]
    frames: tuple[Frame, ...]
    interactions: tuple[InteractionEvent, ...] = ()
    task_label: str = ""
    silhouettes_stored: bool = False
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.object_id: e for e in self.catalog})

    def entry(self, object_id: str) -> ObjectCatalogEntry:
        try:
            return self._by_id[object_id]
        except KeyError:
            raise KeyError(f"object {object_id!r} not in catalog of {self.recording_id}") from None

    def name_of(self, object_id: str) -> str:
        return self.entry(object_id).name

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp_ns for f in self.frames], dtype=np.int64)

    def gaze_samples(self) -> list[tuple[int, tuple[float, float, float]]]:
        return [(f.timestamp_ns, f.gaze_direction) for f in self.frames]

    def nearest_frame_index(self, t_ns: int) -> int:
        ts = self.timestamps
        i = int(np.searchsorted(ts, t_ns))
        if i <= 0:
            return 0
        if i >= len(ts):
            return len(ts) - 1
        # ties go to the earlier frame
        return i - 1 if (t_ns - ts[i - 1]) <= (ts[i] - t_ns) else i

    def replace_frames(self, frames: Iterable[Frame]) -> "Recording":
        return Recording(
            self.recording_id,
            self.sample_rate_hz,
            self.camera,
            self.catalog,
            tuple(frames),
            self.interactions,
            self.task_label,
            self.silhouettes_stored,
        )


# --------------------------------------------------------------------------
# Derived quantities
# --------------------------------------------------------------------------


def object_in_camera(frame: Frame, obs: ObjectObservation) -> Pose:
    """Object pose expressed in the device (camera) frame."""
    return frame.device_pose.inverse().compose(obs.pose)


def object_distance(frame: Frame, object_id: str) -> float:
    """Device origin to object centroid distance, in meters."""
    obs = frame.observation(object_id)
    if obs is None:
        raise AbsentObservationError(f"object {object_id!r} not observed at t={frame.timestamp_ns}")
    d = np.asarray(obs.pose.position, dtype=float) - np.asarray(frame.device_pose.position, dtype=float)
    return float(np.linalg.norm(d))


def silhouette(recording: Recording, frame: Frame, obs: ObjectObservation) -> Projection:
    """Stored silhouette if present, otherwise projected from the catalog shape."""
    if obs.silhouette is not None:
        return obs.silhouette
    shape = recording.entry(obs.object_id).shape
    return project_object(recording.camera, object_in_camera(frame, obs), shape, object_id=obs.object_id)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    message: str = ""

    def __str__(self):
        text = f"{self.code} @ {self.location}"
        return f"{text}: {self.message}" if self.message else text


def _is_unit(v, tol=UNIT_TOL) -> bool:
    n = math.sqrt(sum(float(c) * float(c) for c in v))
    return abs(n - 1.0) <= tol


def validate(recording: Recording) -> list[Violation]:
    """All invariant violations in ``recording``; empty when it is valid."""
    out: list[Violation] = []
    add = lambda code, loc, msg="": out.append(Violation(code, loc, msg))  # noqa: E731

    if not (recording.sample_rate_hz > 0 and math.isfinite(recording.sample_rate_hz)):
        add("BAD_SAMPLE_RATE", "header.sample_rate_hz", f"{recording.sample_rate_hz}")

    ids: set[str] = set()
    names: set[str] = set()
    for i, entry in enumerate(recording.catalog):
        if entry.object_id in ids:
            add("DUPLICATE_ID", f"catalog[{i}]", entry.object_id)
        if entry.name in names:
            add("DUPLICATE_NAME", f"catalog[{i}]", entry.name)
        ids.add(entry.object_id)
        names.add(entry.name)
        if not all(d > 0 for d in entry.shape.dims):
            add("BAD_SHAPE", f"catalog[{i}]", f"{entry.shape.dims}")

    prev_t = None
    for k, frame in enumerate(recording.frames):
        loc = f"frame {k}"
        if prev_t is not None and frame.timestamp_ns <= prev_t:
            add("TIME_NOT_INCREASING", loc, f"t={frame.timestamp_ns} follows t={prev_t}")
        prev_t = frame.timestamp_ns
        if not _is_unit(frame.device_pose.orientation):
            add("QUAT_NOT_UNIT", f"{loc}.device", f"norm={np.linalg.norm(frame.device_pose.orientation):.6g}")
        if not _is_unit(frame.gaze_direction):
            add("GAZE_NOT_UNIT", loc, f"norm={np.linalg.norm(frame.gaze_direction):.6g}")
        seen: set[str] = set()
        for j, obs in enumerate(frame.observations):
            oloc = f"{loc}.objects[{j}]"
            if obs.object_id not in ids:
                add("UNKNOWN_OBJECT", oloc, obs.object_id)
            if obs.object_id in seen:
                add("DUPLICATE_OBSERVATION", oloc, obs.object_id)
            seen.add(obs.object_id)
            if not _is_unit(obs.pose.orientation):
                add("QUAT_NOT_UNIT", oloc, f"norm={np.linalg.norm(obs.pose.orientation):.6g}")
            if obs.silhouette is not None and not is_simple(obs.silhouette):
                add("SILHOUETTE_NOT_SIMPLE", oloc, obs.object_id)

    if len(recording.frames) >= 2 and recording.sample_rate_hz > 0:
        dt = np.diff(recording.timestamps)
        med = float(np.median(dt))
        nominal = 1e9 / recording.sample_rate_hz
        if abs(med - nominal) > 0.2 * nominal:
            add("SAMPLE_INTERVAL", "frames", f"median interval {med:.0f} ns vs nominal {nominal:.0f} ns")

    for i, ev in enumerate(recording.interactions):
        loc = f"interactions[{i}]"
        if not ev.start_ns < ev.end_ns:
            add("BAD_INTERVAL", loc, f"start {ev.start_ns} >= end {ev.end_ns}")
        if ev.object_id not in ids:
            add("UNKNOWN_OBJECT", loc, ev.object_id)
    return out


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

_HEADER_KEYS = {"version", "recording_id", "sample_rate_hz", "camera", "task_label", "silhouettes", "catalog"}
_HEADER_REQUIRED = {"version", "recording_id", "sample_rate_hz", "camera", "catalog"}
_CAMERA_KEYS = {"focal_length_px", "cx", "cy", "width", "height", "max_fov_deg"}
_FRAME_KEYS = {"t_ns", "device", "gaze", "objects", "image"}
_FRAME_REQUIRED = {"t_ns", "device", "gaze", "objects"}
_OBJ_KEYS = {"id", "pos", "quat", "silhouette"}


def _pose_json(p: Pose) -> dict:
    return {"pos": list(p.position), "quat": list(p.orientation)}


def _header_json(r: Recording) -> dict:
    cam = r.camera
    return {
        "version": FORMAT_VERSION,
        "recording_id": r.recording_id,
        "sample_rate_hz": r.sample_rate_hz,
        "camera": {
            "focal_length_px": cam.focal_length_px,
            "cx": cam.principal_point[0],
            "cy": cam.principal_point[1],
            "width": cam.resolution[0],
            "height": cam.resolution[1],
            "max_fov_deg": cam.max_fov_deg,
        },
        "task_label": r.task_label,
        "silhouettes": "stored" if r.silhouettes_stored else "computed",
        "catalog": [
            {"id": e.object_id, "name": e.name, "shape": {"kind": e.shape.kind, "dims": list(e.shape.dims)}}
            for e in r.catalog
        ],
    }


def _frame_json(f: Frame) -> dict:
    objs = []
    for o in f.observations:
        d = {"id": o.object_id, **_pose_json(o.pose)}
        if o.silhouette is not None:
            d["silhouette"] = [list(v) for v in o.silhouette.vertices]
        objs.append(d)
    out = {"t_ns": f.timestamp_ns, "device": _pose_json(f.device_pose), "gaze": list(f.gaze_direction), "objects": objs}
    if f.image is not None:
        out["image"] = f.image
    return out


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def dumps_recording(recording: Recording) -> str:
    lines = [_dump(_header_json(recording))]
    lines.extend(_dump(_frame_json(f)) for f in recording.frames)
    lines.append(
        _dump({"interactions": [{"id": e.object_id, "start_ns": e.start_ns, "end_ns": e.end_ns} for e in recording.interactions]})
    )
    return "\n".join(lines) + "\n"


def save_recording(recording: Recording, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_recording(recording))


def _check_keys(obj, allowed: set, required: set, where: str, line: int):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object", line)
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{where}: unknown field(s) {sorted(unknown)}", line)
    missing = required - set(obj)
    if missing:
        raise FormatError(f"{where}: missing field(s) {sorted(missing)}", line)


def _vec(value, n: int, where: str, line: int) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise FormatError(f"{where}: expected a list of {n} numbers", line)
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise FormatError(f"{where}: expected finite numbers, got {v!r}", line)
        out.append(float(v))
    return tuple(out)


def _int(value, where: str, line: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{where}: expected an integer, got {value!r}", line)
    return value


def _pose(obj, where: str, line: int) -> Pose:
    return Pose(_vec(obj.get("pos"), 3, f"{where}.pos", line), _vec(obj.get("quat"), 4, f"{where}.quat", line))


def _parse_header(h, line: int):
    _check_keys(h, _HEADER_KEYS, _HEADER_REQUIRED, "header", line)
    if h["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {h['version']!r} (expected {FORMAT_VERSION})", line)
    cam = h["camera"]
    _check_keys(cam, _CAMERA_KEYS, _CAMERA_KEYS, "header.camera", line)
    try:
        camera = CameraModel(
            float(cam["focal_length_px"]),
            (float(cam["cx"]), float(cam["cy"])),
            (int(cam["width"]), int(cam["height"])),
            float(cam["max_fov_deg"]),
        )
    except (DomainError, TypeError, ValueError) as exc:
        raise FormatError(f"header.camera: {exc}", line) from None
    if not isinstance(h["catalog"], list):
        raise FormatError("header.catalog: expected a list", line)
    catalog = []
    for i, e in enumerate(h["catalog"]):
        where = f"header.catalog[{i}]"
        _check_keys(e, {"id", "name", "shape"}, {"id", "name", "shape"}, where, line)
        _check_keys(e["shape"], {"kind", "dims"}, {"kind", "dims"}, f"{where}.shape", line)
        dims = e["shape"]["dims"]
        if not isinstance(dims, list):
            raise FormatError(f"{where}.shape.dims: expected a list", line)
        try:
            shape = ObjectShape(e["shape"]["kind"], _vec(dims, len(dims), f"{where}.shape.dims", line))
        except DomainError as exc:
            raise FormatError(f"{where}.shape: {exc}", line) from None
        catalog.append(ObjectCatalogEntry(str(e["id"]), str(e["name"]), shape))
    silh = h.get("silhouettes", "computed")
    if silh not in ("stored", "computed"):
        raise FormatError(f"header.silhouettes must be 'stored' or 'computed', got {silh!r}", line)
    rate = h["sample_rate_hz"]
    if isinstance(rate, bool) or not isinstance(rate, (int, float)):
        raise FormatError("header.sample_rate_hz: expected a number", line)
    return dict(
        recording_id=str(h["recording_id"]),
        sample_rate_hz=float(rate),
        camera=camera,
        catalog=tuple(catalog),
        task_label=str(h.get("task_label", "")),
        silhouettes_stored=silh == "stored",
    )


def _parse_frame(fr, line: int) -> Frame:
    _check_keys(fr, _FRAME_KEYS, _FRAME_REQUIRED, "frame", line)
    _check_keys(fr["device"], {"pos", "quat"}, {"pos", "quat"}, "frame.device", line)
    if not isinstance(fr["objects"], list):
        raise FormatError("frame.objects: expected a list", line)
    observations = []
    for j, o in enumerate(fr["objects"]):
        where = f"frame.objects[{j}]"
        _check_keys(o, _OBJ_KEYS, {"id", "pos", "quat"}, where, line)
        sil = None
        if "silhouette" in o:
            verts = o["silhouette"]
            if not isinstance(verts, list):
                raise FormatError(f"{where}.silhouette: expected a list of [az, el]", line)
            try:
                sil = AngularPolygon(tuple(_vec(v, 2, f"{where}.silhouette", line) for v in verts), str(o["id"]))
            except DomainError as exc:
                raise FormatError(f"{where}.silhouette: {exc}", line) from None
        observations.append(ObjectObservation(str(o["id"]), _pose(o, where, line), sil))
    image = fr.get("image")
    if image is not None and not isinstance(image, str):
        raise FormatError("frame.image: expected a string path", line)
    return Frame(
        _int(fr["t_ns"], "frame.t_ns", line),
        _pose(fr["device"], "frame.device", line),
        _vec(fr["gaze"], 3, "frame.gaze", line),
        tuple(observations),
        image,
    )


def loads_recording(text: str, check: bool = True) -> Recording:
    """Parse a recording; malformed input is rejected.

    With ``check`` the result is also validated and any violation raises
    :class:`ValidationError`.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise FormatError("a recording needs a header and a trailer line", len(lines) or 1)
    records = []
    for n, raw in enumerate(lines, start=1):
        try:
            records.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg} (column {exc.colno})", n) from None

    header = _parse_header(records[0], 1)
    frames = tuple(_parse_frame(fr, n) for n, fr in enumerate(records[1:-1], start=2))
    trailer = records[-1]
    last = len(records)
    _check_keys(trailer, {"interactions"}, {"interactions"}, "trailer", last)
    if not isinstance(trailer["interactions"], list):
        raise FormatError("trailer.interactions: expected a list", last)
    interactions = []
    for i, ev in enumerate(trailer["interactions"]):
        where = f"trailer.interactions[{i}]"
        _check_keys(ev, {"id", "start_ns", "end_ns"}, {"id", "start_ns", "end_ns"}, where, last)
        interactions.append(
            InteractionEvent(str(ev["id"]), _int(ev["start_ns"], f"{where}.start_ns", last), _int(ev["end_ns"], f"{where}.end_ns", last))
        )
    rec = Recording(frames=frames, interactions=tuple(interactions), **header)
    if check:
        violations = validate(rec)
        if violations:
            raise ValidationError(violations)
    return rec


def load_recording(path: str | PathLike, check: bool = True) -> Recording:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 ({exc.reason})") from None
    return loads_recording(text, check)
