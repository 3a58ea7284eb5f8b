"""Camera model, angular coordinates and object visual-size metrics.

Angular coordinates are per-axis tangent angles of a linear (pinhole)
camera: a camera-frame direction ``(x, y, z)`` with ``z > 0`` maps to
``azimuth = atan(x / z)`` and ``elevation = atan(y / z)``, in degrees.  The
camera frame follows the usual computer-vision convention (x right, y down,
z forward), so elevation grows towards the bottom of the image, matching
pixel rows.

Silhouette areas are shoelace areas over these degree coordinates rather
than solid angles.  Inside a 50 degree half field of view the distortion
stays around 2%, which is why ``CameraModel.max_fov_deg`` defaults to 50.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateInputError, DegenerateProjectionError, DomainError

MAX_POLYGON_VERTICES = 512
DEFAULT_SPHERE_VERTICES = 32
BOX_EDGE_SAMPLES = 8
_BOX_SIGNS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
_HEMISPHERE_LIMIT = 90.0 - 1e-6


# --------------------------------------------------------------------------
# Rigid transforms
# --------------------------------------------------------------------------


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = (float(c) for c in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_from_axis_angle(axis: Sequence[float], angle_rad: float) -> tuple[float, float, float, float]:
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0:
        raise DomainError("rotation axis must be non-zero")
    a = a / n
    s = math.sin(angle_rad / 2.0)
    return (math.cos(angle_rad / 2.0), float(a[0] * s), float(a[1] * s), float(a[2] * s))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: maps points from a local frame into the parent frame."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def transform_point(self, p: Sequence[float]) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + np.asarray(self.position, dtype=float)

    def inverse(self) -> "Pose":
        w, x, y, z = self.orientation
        n2 = w * w + x * x + y * y + z * z
        q_inv = (w / n2, -x / n2, -y / n2, -z / n2)
        t = -(quat_to_matrix(q_inv) @ np.asarray(self.position, dtype=float))
        return Pose(tuple(float(v) for v in t), q_inv)

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: apply ``other`` first, then ``self``."""
        t = self.transform_point(other.position)
        q = quat_multiply(self.orientation, other.orientation)
        return Pose(tuple(float(v) for v in t), q)


@dataclass(frozen=True)
class ObjectShape:
    """Synthetic object geometry: ``sphere`` with dims ``(radius,)`` or
    ``box`` with dims ``(ex, ey, ez)`` full extents, all in meters."""

    kind: str
    dims: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        if self.kind == "sphere":
            if len(self.dims) != 1:
                raise DomainError(f"sphere needs 1 dimension, got {len(self.dims)}")
        elif self.kind == "box":
            if len(self.dims) != 3:
                raise DomainError(f"box needs 3 extents, got {len(self.dims)}")
        else:
            raise DomainError(f"unknown shape kind {self.kind!r}")
        if not all(d > 0 and math.isfinite(d) for d in self.dims):
            raise DomainError(f"shape dimensions must be positive, got {self.dims}")

    @classmethod
    def sphere(cls, radius: float) -> "ObjectShape":
        return cls("sphere", (radius,))

    @classmethod
    def box(cls, ex: float, ey: float, ez: float) -> "ObjectShape":
        return cls("box", (ex, ey, ez))

    @property
    def bounding_radius(self) -> float:
        if self.kind == "sphere":
            return self.dims[0]
        return 0.5 * math.sqrt(sum(d * d for d in self.dims))


# --------------------------------------------------------------------------
# Camera and angular coordinates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraModel:
    focal_length_px: float = 600.0
    principal_point: tuple[float, float] = (704.0, 704.0)
    resolution: tuple[int, int] = (1408, 1408)
    max_fov_deg: float = 50.0

    def __post_init__(self):
        if not self.focal_length_px > 0:
            raise DomainError(f"focal_length_px must be > 0, got {self.focal_length_px}")
        w, h = self.resolution
        cx, cy = self.principal_point
        if not (w > 0 and h > 0):
            raise DomainError(f"resolution must be positive, got {self.resolution}")
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise DomainError(f"principal point {self.principal_point} outside resolution {self.resolution}")
        if not 0 < self.max_fov_deg < 90:
            raise DomainError(f"max_fov_deg must lie in (0, 90), got {self.max_fov_deg}")


@dataclass(frozen=True)
class AngularPoint:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        if not (abs(self.azimuth_deg) < 90 and abs(self.elevation_deg) < 90):
            raise DomainError(
                f"angular point ({self.azimuth_deg}, {self.elevation_deg}) outside the forward hemisphere"
            )

    def as_tuple(self) -> tuple[float, float]:
        return (self.azimuth_deg, self.elevation_deg)


def pixel_to_angular(camera: CameraModel, pixel: Sequence[float]) -> AngularPoint:
    u, v = (float(c) for c in pixel)
    w, h = camera.resolution
    if not 0 <= u <= w:
        raise DomainError(f"pixel u={u} outside [0, {w}]")
    if not 0 <= v <= h:
        raise DomainError(f"pixel v={v} outside [0, {h}]")
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    az = math.degrees(math.atan((u - cx) / f))
    el = math.degrees(math.atan((v - cy) / f))
    if abs(az) > camera.max_fov_deg or abs(el) > camera.max_fov_deg:
        raise DomainError(f"pixel ({u}, {v}) maps beyond max_fov_deg={camera.max_fov_deg}")
    return AngularPoint(az, el)


def angular_to_pixel(camera: CameraModel, point: AngularPoint) -> tuple[float, float]:
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    return (
        cx + f * math.tan(math.radians(point.azimuth_deg)),
        cy + f * math.tan(math.radians(point.elevation_deg)),
    )


def direction_to_angular(d: Sequence[float]) -> AngularPoint:
    x, y, z = (float(c) for c in d)
    if not z > 0:
        raise DomainError(f"direction {tuple(d)} is not in front of the camera")
    return AngularPoint(math.degrees(math.atan2(x, z)), math.degrees(math.atan2(y, z)))


def angular_to_direction(point: AngularPoint | Sequence[float]) -> np.ndarray:
    az, el = point.as_tuple() if isinstance(point, AngularPoint) else point
    v = np.array([math.tan(math.radians(az)), math.tan(math.radians(el)), 1.0])
    return v / np.linalg.norm(v)


def angular_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle between two directions in degrees, in [0, 180].

    Uses ``atan2(|a x b|, a . b)``, which equals the arccos of the normalized
    dot product but keeps full precision for nearly parallel vectors.
    """
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if not np.any(va) or not np.any(vb):
        raise DomainError("angular_distance needs non-zero vectors")
    cross = np.linalg.norm(np.cross(va, vb))
    return math.degrees(math.atan2(cross, float(np.dot(va, vb))))


def angular_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise :func:`angular_distance` for two ``(n, 3)`` arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.einsum("...i,...i->...", a, b)
    if np.any((np.linalg.norm(a, axis=-1) == 0) | (np.linalg.norm(b, axis=-1) == 0)):
        raise DomainError("angular_distances needs non-zero vectors")
    return np.degrees(np.arctan2(cross, dot))


def rotate_towards(d: np.ndarray, offset_deg: Sequence[float]) -> np.ndarray:
    """Rotate unit direction ``d`` by a small tangent-plane offset.

    ``offset_deg`` is (horizontal, vertical) in degrees, expressed in a
    tangent basis built from the camera's y axis, so a constant offset means
    the same thing (e.g. "2 deg to the right") anywhere in the forward view.
    The angular distance between input and output equals ``|offset_deg|``.
    """
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    ox, oy = float(offset_deg[0]), float(offset_deg[1])
    theta = math.hypot(ox, oy)
    if theta == 0.0:
        return d
    u = np.cross(np.array([0.0, 1.0, 0.0]), d)  # points to +x for d = +z
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        u = np.array([1.0, 0.0, 0.0])
    else:
        u = u / nu
    v = np.cross(d, u)  # points to +y for d = +z
    w = (ox * u + oy * v) / theta
    t = math.radians(theta)
    out = math.cos(t) * d + math.sin(t) * w
    return out / np.linalg.norm(out)


# --------------------------------------------------------------------------
# Polygons
# --------------------------------------------------------------------------


def _as_vertex_array(poly) -> np.ndarray:
    if isinstance(poly, AngularPolygon):
        return poly.array
    arr = np.asarray(poly, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DegenerateInputError(f"expected (n, 2) vertices, got shape {arr.shape}")
    return arr


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_simple(vertices) -> bool:
    """True when no two non-adjacent edges properly intersect."""
    v = _as_vertex_array(vertices)
    n = len(v)
    if n < 4:
        return n == 3
    a = v
    b = np.roll(v, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    return not bool(np.any(_segments_cross(a[i], b[i], a[j], b[j])))


@dataclass(frozen=True)
class AngularPolygon:
    """Object silhouette in angular coordinates (degrees)."""

    vertices: tuple[tuple[float, float], ...]
    object_id: str | None = None
    max_vertices: int = field(default=MAX_POLYGON_VERTICES, compare=False, repr=False)

    def __post_init__(self):
        verts = tuple((float(az), float(el)) for az, el in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise DegenerateInputError(f"polygon needs at least 3 vertices, got {len(verts)}")
        if len(verts) > self.max_vertices:
            raise DomainError(f"polygon has {len(verts)} vertices, cap is {self.max_vertices}")
        for az, el in verts:
            if not (abs(az) < 90 and abs(el) < 90):
                raise DomainError(f"vertex ({az}, {el}) outside the forward hemisphere")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    @property
    def centroid(self) -> tuple[float, float]:
        a = self.array
        return (float(a[:, 0].mean()), float(a[:, 1].mean()))


@dataclass(frozen=True)
class VisualSizeMetrics:
    area_deg2: float
    radius_deg: float
    half_min_width_deg: float

    @property
    def min_width_deg(self) -> float:
        return 2.0 * self.half_min_width_deg


def angular_polygon_area(poly) -> float:
    """Shoelace area of the polygon in deg^2 (orientation independent)."""
    v = _as_vertex_array(poly)
    if len(v) < 3:
        raise DegenerateInputError(f"area needs at least 3 vertices, got {len(v)}")
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def area_equivalent_radius(area_deg2: float) -> float:
    if area_deg2 < 0 or not math.isfinite(area_deg2):
        raise DomainError(f"area must be a finite non-negative number, got {area_deg2}")
    return math.sqrt(area_deg2 / math.pi)


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise convex hull (Andrew's monotone chain).

    Collinear points are dropped; a fully collinear input yields its two
    extreme points.
    """
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def minimal_width(points) -> float:
    """Smallest caliper width of the convex hull of ``points``.

    Rotating calipers: for every hull edge the antipodal vertex is advanced
    monotonically, so the sweep is linear in the hull size.
    """
    h = convex_hull(points)
    m = len(h)
    if m < 3:
        return 0.0

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    best = math.inf
    j = 1
    for i in range(m):
        a, b = h[i], h[(i + 1) % m]
        while cross(a, b, h[(j + 1) % m]) > cross(a, b, h[j]):
            j = (j + 1) % m
        edge = math.hypot(b[0] - a[0], b[1] - a[1])
        best = min(best, cross(a, b, h[j]) / edge)
    return best


def minimal_half_width(poly) -> float:
    """Half the minimal width of the polygon's convex hull, in degrees."""
    v = _as_vertex_array(poly)
    if len(v) < 3:
        raise DegenerateInputError(f"width needs at least 3 vertices, got {len(v)}")
    return 0.5 * minimal_width(v)


def visual_size(poly) -> VisualSizeMetrics:
    area = angular_polygon_area(poly)
    return VisualSizeMetrics(area, area_equivalent_radius(area), minimal_half_width(poly))


def point_in_polygon(point: Sequence[float], poly) -> bool:
    """Even-odd containment test; points on an edge count as inside."""
    v = _as_vertex_array(poly)
    px, py = float(point[0]), float(point[1])
    if distance_to_boundary(point, v) == 0.0:
        return True
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < x_cross)
    return bool(np.count_nonzero(hits) % 2)


def distance_to_boundary(point: Sequence[float], poly) -> float:
    """Euclidean distance (degrees) from a point to the polygon outline."""
    v = _as_vertex_array(poly)
    p = np.asarray(point, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(closest - p, axis=1)))


# --------------------------------------------------------------------------
# Projection of synthetic shapes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OutOfView:
    """Marker returned by :func:`project_object` when the object center is
    behind the camera or outside ``max_fov_deg``."""

    reason: str = "outside_fov"


Projection = Union[AngularPolygon, OutOfView]


def in_field_of_view(camera: CameraModel, center_in_camera: Sequence[float]) -> bool:
    c = np.asarray(center_in_camera, dtype=float)
    if not c[2] > 0:
        return False
    return angular_distance(c, (0.0, 0.0, 1.0)) <= camera.max_fov_deg


def _clamp_hemisphere(v: np.ndarray) -> np.ndarray:
    # silhouettes reaching past the forward hemisphere are clamped at its edge
    return np.clip(v, -_HEMISPHERE_LIMIT, _HEMISPHERE_LIMIT)


def project_object(
    camera: CameraModel,
    object_pose_in_camera: Pose,
    shape: ObjectShape,
    n_vertices: int = DEFAULT_SPHERE_VERTICES,
    object_id: str | None = None,
) -> Projection:
    """Silhouette of a sphere or box in angular coordinates.

    A sphere's outline is the cone of half-angle ``asin(r / d)`` around its
    center direction, sampled at ``n_vertices`` evenly spaced rim directions
    and converted to (azimuth, elevation); on the optical axis this is close
    to a circle of that radius and away from it the outline stretches the way
    the angular coordinates do.  A box outline is the convex hull of its
    corners in the image plane, with each hull edge sampled at
    ``BOX_EDGE_SAMPLES`` points before conversion to angles.  Occlusion by
    other objects is not modeled.
    """
    center = np.asarray(object_pose_in_camera.position, dtype=float)
    dist = float(np.linalg.norm(center))

    if shape.kind == "sphere":
        r = shape.dims[0]
        if dist <= r:
            raise DegenerateProjectionError(f"camera is inside the sphere (d={dist:.4g} m, r={r:.4g} m)")
    else:
        local = object_pose_in_camera.inverse().transform_point((0.0, 0.0, 0.0))
        half = np.asarray(shape.dims) / 2.0
        if np.all(np.abs(local) <= half):
            raise DegenerateProjectionError("camera is inside the box")

    if not in_field_of_view(camera, center):
        reason = "behind_camera" if center[2] <= 0 else "outside_fov"
        return OutOfView(reason)

    if shape.kind == "sphere":
        if n_vertices < 3:
            raise DegenerateInputError(f"need at least 3 vertices, got {n_vertices}")
        rho = math.asin(shape.dims[0] / dist)
        c = center / dist
        u = np.cross((0.0, 1.0, 0.0), c)
        u = u / np.linalg.norm(u)
        v = np.cross(c, u)
        theta = 2.0 * math.pi * np.arange(n_vertices) / n_vertices
        rim = math.cos(rho) * c + math.sin(rho) * (np.outer(np.cos(theta), u) + np.outer(np.sin(theta), v))
        if np.any(rim[:, 2] <= 0):
            raise DegenerateProjectionError("sphere silhouette reaches behind the camera plane")
        verts = np.degrees(np.column_stack([np.arctan2(rim[:, 0], rim[:, 2]), np.arctan2(rim[:, 1], rim[:, 2])]))
        return AngularPolygon(tuple(map(tuple, _clamp_hemisphere(verts))), object_id)

    half = np.asarray(shape.dims) / 2.0
    corners = (object_pose_in_camera.rotation @ (_BOX_SIGNS * half).T).T + center
    if np.any(corners[:, 2] <= 0):
        raise DegenerateProjectionError("box crosses the camera plane")
    # the outline is convex in the image plane; its edges bend once mapped to angles
    plane = convex_hull(corners[:, :2] / corners[:, 2:3])
    if len(plane) < 3:
        raise DegenerateProjectionError("box silhouette collapsed to a line")
    t = np.arange(BOX_EDGE_SAMPLES) / BOX_EDGE_SAMPLES
    nxt = np.roll(plane, -1, axis=0)
    pts = (plane[:, None, :] + t[None, :, None] * (nxt - plane)[:, None, :]).reshape(-1, 2)
    outline = np.degrees(np.arctan(pts))
    return AngularPolygon(tuple(map(tuple, _clamp_hemisphere(outline))), object_id)
