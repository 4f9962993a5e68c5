"""Point-cloud primitives: FPS, unit-cube normalization, chamfer, crops, surface sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientPointsError(ValueError):
    pass


class DegenerateCloudError(ValueError):
    pass


class EmptyCropError(ValueError):
    pass


@dataclass
class PointCloud:
    """Ordered set of 3D points in meters, tagged with the frame it lives in."""

    points: np.ndarray
    frame_label: str = "world"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class Aabb:
    """Axis-aligned bounding box, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64).reshape(3)
        self.max = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(self.min > self.max):
            raise ValueError("Aabb min must not exceed max")

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Aabb":
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            raise DegenerateCloudError("cannot bound an empty point set")
        return cls(points.min(axis=0), points.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extents(self) -> np.ndarray:
        return self.max - self.min

    @property
    def longest_edge(self) -> float:
        return float(self.extents.max())

    def contains(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all((points >= self.min - atol) & (points <= self.max + atol),
                      axis=1)

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.min, self.max)


@dataclass
class NormalizationRecord:
    """Invertible record of a unit-cube normalization: p' = (p - offset) * scale."""

    scale: float
    offset: np.ndarray

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(3)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.offset) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.offset


def farthest_point_sample(pc: PointCloud | np.ndarray, k: int,
                          start_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; returns k distinct indices.

    The first pick is ``start_index``; each later pick maximizes the minimum
    distance to the picked set, ties broken by the lowest index.  Output for a
    smaller k is always a prefix of the output for a larger k.
    """
    points = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InsufficientPointsError(
            f"insufficient points: requested {k} from cloud of {n}")
    if not 0 <= start_index < n:
        raise IndexError(f"start_index {start_index} out of range for {n} points")
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start_index
    # Squared distances preserve the argmax and its ties exactly.
    min_sq = np.sum((points - points[start_index]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_sq))
        chosen[i] = nxt
        np.minimum(min_sq, np.sum((points - points[nxt]) ** 2, axis=1), out=min_sq)
    return chosen


def fps_start_index(points: np.ndarray) -> int:
    """Deterministic FPS seed: the point nearest the cloud centroid."""
    points = np.asarray(points, dtype=np.float64)
    centroid = points.mean(axis=0)
    return int(np.argmin(np.sum((points - centroid) ** 2, axis=1)))


def normalize_unit_cube(
        clouds: list[PointCloud],
) -> tuple[list[PointCloud], NormalizationRecord]:
    """Rescale one or more clouds jointly into [-0.5, 0.5]^3.

    A single shared transform is used (offset = joint bounding-box center,
    scale = 1 / longest joint edge) so the relative scale between clouds is
    preserved.
    """
    if not clouds or all(len(c) == 0 for c in clouds):
        raise DegenerateCloudError("degenerate cloud: nothing to normalize")
    box = Aabb.from_points(np.concatenate([c.points for c in clouds], axis=0))
    longest = box.longest_edge
    if longest <= 0.0:
        raise DegenerateCloudError("degenerate cloud: zero longest edge")
    record = NormalizationRecord(scale=1.0 / longest, offset=box.center)
    normalized = [PointCloud(record.apply(c.points), c.frame_label) for c in clouds]
    return normalized, record


def chamfer_distance(a: PointCloud | np.ndarray, b: PointCloud | np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance (Euclidean, meters)."""
    pa = a.points if isinstance(a, PointCloud) else np.asarray(a, dtype=np.float64)
    pb = b.points if isinstance(b, PointCloud) else np.asarray(b, dtype=np.float64)
    if pa.size == 0 or pb.size == 0:
        raise DegenerateCloudError("chamfer distance requires non-empty clouds")
    d = pairwise_distances(pa, pb)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense (|a|, |b|) Euclidean distance matrix.

    Uses direct differencing (chunked over rows to bound memory) so that
    coincident points yield exactly zero, unlike the expanded quadratic form.
    """
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, int(4e6 // max(b.shape[0], 1)))
    for lo in range(0, a.shape[0], step):
        hi = min(lo + step, a.shape[0])
        diff = a[lo:hi, None, :] - b[None, :, :]
        out[lo:hi] = np.sqrt(np.sum(diff * diff, axis=-1))
    return out


def crop_sphere(pc: PointCloud, center, radius: float) -> PointCloud:
    """All points within ``radius`` of ``center``, order preserved."""
    if not radius > 0.0:
        raise ValueError("crop radius must be positive")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    mask = np.sum((pc.points - center) ** 2, axis=1) <= radius * radius
    if not mask.any():
        raise EmptyCropError("empty crop")
    return PointCloud(pc.points[mask], "crop")


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def sample_mesh_surface(mesh, n: int, rng: np.random.Generator,
                        frame_label: str = "world") -> PointCloud:
    """Draw n points area-uniformly from a triangle mesh surface.

    ``mesh`` is anything with (V, 3) ``vertices`` and (F, 3) ``triangles``.
    Triangles are chosen with probability proportional to area and points are
    placed by uniform barycentric sampling.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    vertices = np.asarray(mesh.vertices, dtype=np.float64)
    triangles = np.asarray(mesh.triangles, dtype=np.int64)
    if triangles.shape[0] < 1:
        raise ValueError("mesh has no triangles")
    areas = triangle_areas(vertices, triangles)
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero total surface area")
    picks = rng.choice(triangles.shape[0], size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    reflect = u + v > 1.0
    u[reflect] = 1.0 - u[reflect]
    v[reflect] = 1.0 - v[reflect]
    v0 = vertices[triangles[picks, 0]]
    v1 = vertices[triangles[picks, 1]]
    v2 = vertices[triangles[picks, 2]]
    pts = v0 + u[:, None] * (v1 - v0) + v[:, None] * (v2 - v0)
    return PointCloud(pts, frame_label)
