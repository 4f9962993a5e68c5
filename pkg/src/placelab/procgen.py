"""Parametric object generators with placement slots annotated at build time.

Thirteen categories are supported.  Placed objects (peg, vial, stick, cup,
ring, lid, plate) carry the geometry needed for compatibility checks in their
params; base objects (hole_plate, vial_plate, rack, beaker, pot, plate_rack,
ring) additionally expose PlacementSlots.

Meshes are built directly from triangle primitives (prisms, tubes, boolean-free
hole construction by ring triangulation), so generation is deterministic given
the seed and needs no external modeling tools.  Dimension ranges live in
``procgen_ranges.json`` next to this module.

Frames: every object is generated in its own frame.  Placed objects use +z as
their placement axis (the axis aligned with the slot axis when placed); hang
targets (cup, ring) have their loop centered on the origin with the loop axis
along +z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

CATEGORIES = (
    "peg", "hole_plate", "cup", "rack", "beaker", "vial", "vial_plate",
    "ring", "lid", "pot", "plate", "plate_rack", "stick",
)

# Categories that own placement slots; everything else is only ever placed.
BASE_CATEGORIES = ("hole_plate", "vial_plate", "rack", "beaker", "pot",
                   "ring", "plate_rack")

_MIN_TRIANGLE_AREA = 1e-14


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64, meters
    triangles: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        if self.triangles.size and self.triangles.min() < 0:
            raise ValueError("negative triangle index")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class PlacementSlot:
    """One annotated placement location on a base object (its own frame)."""

    center: np.ndarray        # (3,) meters
    axis: np.ndarray          # (3,) unit
    slot_type: str            # "insert" | "stack" | "hang"
    clearance: float          # meters of radial free space

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(axis)
        if abs(norm - 1.0) > 1e-9:
            axis = axis / norm
        self.axis = axis
        if self.slot_type not in ("insert", "stack", "hang"):
            raise ValueError(f"unknown slot type {self.slot_type!r}")
        if not self.clearance > 0.0:
            raise ValueError("clearance must be positive")


@dataclass
class ObjectSpec:
    category: str
    params: dict[str, float]
    seed: int
    slots: list[PlacementSlot] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "category": self.category,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "seed": self.seed,
            "slots": [
                {
                    "center": [float(v) for v in s.center],
                    "axis": [float(v) for v in s.axis],
                    "slot_type": s.slot_type,
                    "clearance": float(s.clearance),
                }
                for s in self.slots
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ObjectSpec":
        return cls(
            category=d["category"],
            params=dict(d["params"]),
            seed=int(d["seed"]),
            slots=[
                PlacementSlot(np.array(s["center"]), np.array(s["axis"]),
                              s["slot_type"], s["clearance"])
                for s in d["slots"]
            ],
        )


def load_ranges() -> dict:
    """Per-category dimension ranges checked into the repo."""
    text = resources.files("placelab").joinpath("procgen_ranges.json").read_text()
    return json.loads(text)


_RANGES = None


def default_ranges() -> dict:
    global _RANGES
    if _RANGES is None:
        _RANGES = load_ranges()
    return _RANGES


# ---------------------------------------------------------------------------
# Mesh building blocks


class _Builder:
    def __init__(self):
        self.vertices: list[np.ndarray] = []
        self.triangles: list[tuple[int, int, int]] = []

    def add_vertices(self, pts: np.ndarray) -> int:
        base = len(self.vertices)
        self.vertices.extend(np.asarray(pts, dtype=np.float64).reshape(-1, 3))
        return base

    def add_triangle(self, a: int, b: int, c: int):
        self.triangles.append((a, b, c))

    def mesh(self) -> Mesh:
        m = Mesh(np.array(self.vertices), np.array(self.triangles))
        areas = _areas(m)
        if areas.size and areas.min() < _MIN_TRIANGLE_AREA:
            raise ValueError("builder emitted a degenerate triangle")
        return m


def _areas(mesh: Mesh) -> np.ndarray:
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def _ring(radius: float, sides: int, z: float,
          cx: float = 0.0, cy: float = 0.0) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(sides) / sides
    return np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang),
                     np.full(sides, float(z))], axis=1)


def _side_quads(b: _Builder, lower: int, upper: int, sides: int, flip=False):
    for k in range(sides):
        k2 = (k + 1) % sides
        if flip:
            b.add_triangle(lower + k, upper + k, lower + k2)
            b.add_triangle(lower + k2, upper + k, upper + k2)
        else:
            b.add_triangle(lower + k, lower + k2, upper + k)
            b.add_triangle(lower + k2, upper + k2, upper + k)


def _cap_fan(b: _Builder, ring_base: int, sides: int, center_idx: int, up: bool):
    for k in range(sides):
        k2 = (k + 1) % sides
        if up:
            b.add_triangle(center_idx, ring_base + k, ring_base + k2)
        else:
            b.add_triangle(center_idx, ring_base + k2, ring_base + k)


def _annulus(b: _Builder, outer_base: int, inner_base: int, sides: int, up: bool):
    for k in range(sides):
        k2 = (k + 1) % sides
        if up:
            b.add_triangle(outer_base + k, outer_base + k2, inner_base + k)
            b.add_triangle(outer_base + k2, inner_base + k2, inner_base + k)
        else:
            b.add_triangle(outer_base + k, inner_base + k, outer_base + k2)
            b.add_triangle(outer_base + k2, inner_base + k, inner_base + k2)


def _solid_cylinder(b: _Builder, radius: float, z0: float, z1: float, sides: int,
                    cx: float = 0.0, cy: float = 0.0,
                    rx: float | None = None, ry: float | None = None):
    """Capped cylinder (optionally elliptical: rx/ry override radius)."""
    rx = radius if rx is None else rx
    ry = radius if ry is None else ry
    ang = 2.0 * np.pi * np.arange(sides) / sides
    lower = b.add_vertices(np.stack([cx + rx * np.cos(ang), cy + ry * np.sin(ang),
                                     np.full(sides, z0)], axis=1))
    upper = b.add_vertices(np.stack([cx + rx * np.cos(ang), cy + ry * np.sin(ang),
                                     np.full(sides, z1)], axis=1))
    _side_quads(b, lower, upper, sides)
    c0 = b.add_vertices(np.array([[cx, cy, z0]]))
    c1 = b.add_vertices(np.array([[cx, cy, z1]]))
    _cap_fan(b, lower, sides, c0, up=False)
    _cap_fan(b, upper, sides, c1, up=True)


def _tube(b: _Builder, outer: float, inner: float, z0: float, z1: float, sides: int):
    """Annular cylinder with flat annulus caps."""
    ob0 = b.add_vertices(_ring(outer, sides, z0))
    ob1 = b.add_vertices(_ring(outer, sides, z1))
    ib0 = b.add_vertices(_ring(inner, sides, z0))
    ib1 = b.add_vertices(_ring(inner, sides, z1))
    _side_quads(b, ob0, ob1, sides)
    _side_quads(b, ib0, ib1, sides, flip=True)
    _annulus(b, ob1, ib1, sides, up=True)
    _annulus(b, ob0, ib0, sides, up=False)


def _open_vessel(b: _Builder, outer: float, wall: float, bottom: float,
                 z0: float, z1: float, sides: int):
    """Cylindrical container: solid floor, annular walls, open top."""
    inner = outer - wall
    floor_top = z0 + bottom
    ob0 = b.add_vertices(_ring(outer, sides, z0))
    ob1 = b.add_vertices(_ring(outer, sides, z1))
    _side_quads(b, ob0, ob1, sides)
    c0 = b.add_vertices(np.array([[0.0, 0.0, z0]]))
    _cap_fan(b, ob0, sides, c0, up=False)
    ib0 = b.add_vertices(_ring(inner, sides, floor_top))
    ib1 = b.add_vertices(_ring(inner, sides, z1))
    _side_quads(b, ib0, ib1, sides, flip=True)
    ci = b.add_vertices(np.array([[0.0, 0.0, floor_top]]))
    _cap_fan(b, ib0, sides, ci, up=True)
    _annulus(b, ob1, ib1, sides, up=True)


def _box(b: _Builder, lx: float, ly: float, lz: float, center=(0.0, 0.0, 0.0)):
    cx, cy, cz = center
    hx, hy, hz = lx / 2.0, ly / 2.0, lz / 2.0
    corners = np.array([
        [cx - hx, cy - hy, cz - hz], [cx + hx, cy - hy, cz - hz],
        [cx + hx, cy + hy, cz - hz], [cx - hx, cy + hy, cz - hz],
        [cx - hx, cy - hy, cz + hz], [cx + hx, cy - hy, cz + hz],
        [cx + hx, cy + hy, cz + hz], [cx - hx, cy + hy, cz + hz],
    ])
    base = b.add_vertices(corners)
    faces = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7),
             (0, 1, 5), (0, 5, 4), (1, 2, 6), (1, 6, 5),
             (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)]
    for a, bb, c in faces:
        b.add_triangle(base + a, base + bb, base + c)


def _rect_boundary_point(half_w: float, half_h: float, angle: float) -> np.ndarray:
    dx, dy = np.cos(angle), np.sin(angle)
    tx = half_w / abs(dx) if abs(dx) > 1e-12 else np.inf
    ty = half_h / abs(dy) if abs(dy) > 1e-12 else np.inf
    t = min(tx, ty)
    return np.array([t * dx, t * dy])


def _cell_face_with_hole(b: _Builder, cx: float, cy: float, half_w: float,
                         half_h: float, radius: float, z: float, sides: int,
                         up: bool):
    """Triangulate a rectangular cell face with a centered circular hole."""
    ang = 2.0 * np.pi * np.arange(sides) / sides
    circle = b.add_vertices(_ring(radius, sides, z, cx, cy))
    rect_pts = np.array([_rect_boundary_point(half_w, half_h, a) for a in ang])
    rect = b.add_vertices(np.stack([cx + rect_pts[:, 0], cy + rect_pts[:, 1],
                                    np.full(sides, float(z))], axis=1))
    for k in range(sides):
        k2 = (k + 1) % sides
        if up:
            b.add_triangle(circle + k, rect + k, rect + k2)
            b.add_triangle(circle + k, rect + k2, circle + k2)
        else:
            b.add_triangle(circle + k, rect + k2, rect + k)
            b.add_triangle(circle + k, circle + k2, rect + k2)


def _cell_face_plain(b: _Builder, cx: float, cy: float, half_w: float,
                     half_h: float, z: float, up: bool):
    quad = b.add_vertices(np.array([
        [cx - half_w, cy - half_h, z], [cx + half_w, cy - half_h, z],
        [cx + half_w, cy + half_h, z], [cx - half_w, cy + half_h, z],
    ]))
    if up:
        b.add_triangle(quad, quad + 1, quad + 2)
        b.add_triangle(quad, quad + 2, quad + 3)
    else:
        b.add_triangle(quad, quad + 2, quad + 1)
        b.add_triangle(quad, quad + 3, quad + 2)


def _hole_grid(lx: float, ly: float, count: int, radius: float,
               rng: np.random.Generator, pitch_factor: float = 2.6):
    """Pick a grid of cells (>= count) and choose cells to carry holes.

    Returns (hole_centers, effective_count).  The count is clamped so each
    hole keeps at least pitch_factor * radius of cell pitch in each direction.
    """
    min_pitch = pitch_factor * radius
    nx = max(1, int(lx / min_pitch))
    ny = max(1, int(ly / min_pitch))
    count = max(1, min(count, nx * ny))
    cells = [(ix, iy) for ix in range(nx) for iy in range(ny)]
    order = rng.permutation(len(cells))[:count]
    centers = []
    for ci in sorted(order.tolist()):
        ix, iy = cells[ci]
        centers.append([-lx / 2.0 + (ix + 0.5) * lx / nx,
                        -ly / 2.0 + (iy + 0.5) * ly / ny, 0.0])
    return np.array(centers), count, nx, ny


def _slab(b: _Builder, lx, ly, thickness, centers, radius, sides, nx, ny):
    # Re-grid so _slab_with_holes sees the exact partition used for layout.
    hz = thickness / 2.0
    hole_set = {(round(float(c[0]), 9), round(float(c[1]), 9)) for c in centers}
    for ix in range(nx):
        for iy in range(ny):
            cx = -lx / 2.0 + (ix + 0.5) * lx / nx
            cy = -ly / 2.0 + (iy + 0.5) * ly / ny
            key = (round(cx, 9), round(cy, 9))
            if key in hole_set:
                _cell_face_with_hole(b, cx, cy, lx / nx / 2.0, ly / ny / 2.0,
                                     radius, hz, sides, up=True)
                _cell_face_with_hole(b, cx, cy, lx / nx / 2.0, ly / ny / 2.0,
                                     radius, -hz, sides, up=False)
                top = b.add_vertices(_ring(radius, sides, hz, cx, cy))
                bot = b.add_vertices(_ring(radius, sides, -hz, cx, cy))
                _side_quads(b, bot, top, sides, flip=True)
            else:
                _cell_face_plain(b, cx, cy, lx / nx / 2.0, ly / ny / 2.0, hz, up=True)
                _cell_face_plain(b, cx, cy, lx / nx / 2.0, ly / ny / 2.0, -hz, up=False)
    corners = np.array([[-lx / 2, -ly / 2], [lx / 2, -ly / 2],
                        [lx / 2, ly / 2], [-lx / 2, ly / 2]])
    for k in range(4):
        p0, p1 = corners[k], corners[(k + 1) % 4]
        quad = b.add_vertices(np.array([
            [p0[0], p0[1], -hz], [p1[0], p1[1], -hz],
            [p1[0], p1[1], hz], [p0[0], p0[1], hz],
        ]))
        b.add_triangle(quad, quad + 1, quad + 2)
        b.add_triangle(quad, quad + 2, quad + 3)


# ---------------------------------------------------------------------------
# Category generators


def _u(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def _scales(rng, interval):
    return tuple(float(rng.uniform(interval[0], interval[1])) for _ in range(3))


def _gen_peg(rng, r, interval):
    radius = _u(rng, *r["radius"])
    height = _u(rng, *r["height"])
    edges = int(rng.integers(r["edge_count"][0], r["edge_count"][1] + 1))
    sx, sy, sz = _scales(rng, interval)
    b = _Builder()
    _solid_cylinder(b, radius, -height / 2, height / 2, edges,
                    rx=radius * sx, ry=radius * sy)
    height *= sz
    built = b.mesh()
    mesh = Mesh(built.vertices * np.array([1.0, 1.0, sz]), built.triangles)
    params = {
        "radius": radius, "height": height, "edge_count": float(edges),
        "scale_x": sx, "scale_y": sy, "scale_z": sz,
        "radial_extent": radius * max(sx, sy),
        "axis_halfextent": height / 2, "bottom_z": -height / 2,
    }
    return mesh, params, []


def _gen_stick(rng, r, interval):
    mesh, params, _ = _gen_peg(rng, r, interval)
    return mesh, params, []


def _gen_vial(rng, r, interval):
    radius = _u(rng, *r["radius"])
    height = _u(rng, *r["height"])
    lip = 0.001
    lip_h = 0.004
    sx, sy, sz = _scales(rng, interval)
    sxy = min(sx, sy)  # keep the vial round so insertion stays analytic
    b = _Builder()
    _solid_cylinder(b, radius * sxy, -height / 2, height / 2 - lip_h, 24)
    _solid_cylinder(b, (radius + lip) * sxy, height / 2 - lip_h, height / 2, 24)
    built = b.mesh()
    mesh = Mesh(built.vertices * np.array([1.0, 1.0, sz]), built.triangles)
    height *= sz
    params = {
        "radius": radius * sxy, "height": height,
        "scale_x": sxy, "scale_y": sxy, "scale_z": sz,
        "radial_extent": (radius + lip) * sxy,
        "body_radius": radius * sxy,
        "axis_halfextent": height / 2, "bottom_z": -height / 2,
    }
    return mesh, params, []


def _gen_plate_with_holes(rng, r, interval, count_range):
    lx = _u(rng, *r["length"])
    ly = _u(rng, *r["width"])
    thickness = _u(rng, *r["thickness"])
    radius = _u(rng, *r["hole_radius"])
    sx, sy, sz = _scales(rng, interval)
    lx, ly, thickness = lx * sx, ly * sy, thickness * sz
    want = int(rng.integers(count_range[0], count_range[1] + 1))
    centers, count, nx, ny = _hole_grid(lx, ly, want, radius, rng)
    b = _Builder()
    _slab(b, lx, ly, thickness, centers, radius, 24, nx, ny)
    mesh = b.mesh()
    slots = [PlacementSlot(np.array([c[0], c[1], 0.0]), np.array([0.0, 0.0, 1.0]),
                           "insert", radius) for c in centers]
    params = {
        "length": lx, "width": ly, "thickness": thickness,
        "hole_radius": radius, "hole_count": float(count), "hole_depth": thickness,
        "scale_x": sx, "scale_y": sy, "scale_z": sz,
        "radial_extent": float(np.hypot(lx / 2, ly / 2)),
        "axis_halfextent": thickness / 2, "bottom_z": -thickness / 2,
    }
    return mesh, params, slots


def _gen_hole_plate(rng, r, interval):
    return _gen_plate_with_holes(rng, r, interval, (1, 4))


def _gen_vial_plate(rng, r, interval):
    return _gen_plate_with_holes(rng, r, interval, (2, 12))


def _gen_beaker(rng, r, interval):
    outer = _u(rng, *r["radius"])
    height = _u(rng, *r["height"])
    wall = 0.0025
    bottom = 0.004
    sx, sy, sz = _scales(rng, interval)
    outer *= min(sx, sy)
    height *= sz
    b = _Builder()
    _open_vessel(b, outer, wall, bottom, -height / 2, height / 2, 32)
    inner = outer - wall
    depth = height - bottom
    floor_z = -height / 2 + bottom
    slots = [PlacementSlot(np.array([0.0, 0.0, floor_z + depth / 2]),
                           np.array([0.0, 0.0, 1.0]), "insert", inner)]
    params = {
        "radius": outer, "height": height, "wall": wall,
        "inner_radius": inner, "hole_depth": depth,
        "scale_x": min(sx, sy), "scale_y": min(sx, sy), "scale_z": sz,
        "radial_extent": outer, "axis_halfextent": height / 2,
        "bottom_z": -height / 2,
    }
    return b.mesh(), params, slots


def _gen_pot(rng, r, interval):
    outer = _u(rng, *r["radius"])
    height = _u(rng, *r["height"])
    wall = 0.004
    bottom = 0.005
    sx, sy, sz = _scales(rng, interval)
    outer *= min(sx, sy)
    height *= sz
    b = _Builder()
    _open_vessel(b, outer, wall, bottom, -height / 2, height / 2, 32)
    slots = [PlacementSlot(np.array([0.0, 0.0, height / 2]),
                           np.array([0.0, 0.0, 1.0]), "stack", outer)]
    params = {
        "radius": outer, "height": height, "wall": wall,
        "inner_radius": outer - wall, "hole_depth": height - bottom,
        "scale_x": min(sx, sy), "scale_y": min(sx, sy), "scale_z": sz,
        "radial_extent": outer, "axis_halfextent": height / 2,
        "bottom_z": -height / 2,
    }
    return b.mesh(), params, slots


def _gen_ring(rng, r, interval):
    inner = _u(rng, *r["inner_radius"])
    band = _u(rng, *r["band"])
    height = _u(rng, *r["height"])
    sx, sy, sz = _scales(rng, interval)
    s = min(sx, sy)
    inner, band, height = inner * s, band * s, height * sz
    outer = inner + band
    b = _Builder()
    _tube(b, outer, inner, -height / 2, height / 2, 32)
    slots = [PlacementSlot(np.array([0.0, 0.0, height / 2]),
                           np.array([0.0, 0.0, 1.0]), "stack", outer)]
    params = {
        "inner_radius": inner, "outer_radius": outer, "height": height,
        "scale_x": s, "scale_y": s, "scale_z": sz,
        "radial_extent": outer, "axis_halfextent": height / 2,
        "bottom_z": -height / 2,
        "loop_inner_radius": inner, "loop_outer_radius": outer,
        "sweep_radius": outer,
    }
    return b.mesh(), params, slots


def _gen_lid(rng, r, interval):
    radius = _u(rng, *r["radius"])
    disk_h = _u(rng, *r["thickness"])
    knob_h = _u(rng, *r["knob_height"])
    knob_r = 0.006
    sx, sy, sz = _scales(rng, interval)
    s = min(sx, sy)
    radius *= s
    disk_h *= sz
    b = _Builder()
    _solid_cylinder(b, radius, -disk_h / 2, disk_h / 2, 32)
    _solid_cylinder(b, knob_r, disk_h / 2, disk_h / 2 + knob_h, 16)
    height = disk_h + knob_h
    params = {
        "radius": radius, "thickness": disk_h, "height": height,
        "knob_height": knob_h,
        "scale_x": s, "scale_y": s, "scale_z": sz,
        "radial_extent": radius, "axis_halfextent": height / 2,
        "bottom_z": -disk_h / 2,
    }
    return b.mesh(), params, []


def _gen_plate(rng, r, interval):
    radius = _u(rng, *r["radius"])
    thickness = _u(rng, *r["thickness"])
    sx, sy, sz = _scales(rng, interval)
    s = min(sx, sy)
    radius *= s
    thickness *= sz
    b = _Builder()
    _solid_cylinder(b, radius, -thickness / 2, thickness / 2, 32)
    params = {
        "radius": radius, "thickness": thickness, "height": thickness,
        "scale_x": s, "scale_y": s, "scale_z": sz,
        "radial_extent": radius, "axis_halfextent": thickness / 2,
        "bottom_z": -thickness / 2,
    }
    return b.mesh(), params, []


def _gen_cup(rng, r, interval):
    body_r = _u(rng, *r["body_radius"])
    body_len = _u(rng, *r["body_length"])
    loop_inner = _u(rng, *r["loop_inner"])
    loop_band = 0.003
    loop_h = 0.004
    sx, sy, sz = _scales(rng, interval)
    s = min(sx, sy, sz)  # uniform: the loop must stay round
    body_r, body_len, loop_inner = body_r * s, body_len * s, loop_inner * s
    loop_outer = loop_inner + loop_band
    b = _Builder()
    # Handle loop centered on the origin, axis +z (the placement axis).
    _tube(b, loop_outer, loop_inner, -loop_h / 2, loop_h / 2, 24)
    # Body: open cup along -x, attached beyond the loop rim so the loop
    # opening stays clear.
    body = _Builder()
    _open_vessel(body, body_r, 0.002, 0.003, -body_len, 0.0, 24)
    rot = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    body_verts = body.mesh().vertices @ rot.T \
        + np.array([-(loop_outer + body_len), 0.0, 0.0])
    base = b.add_vertices(body_verts)
    for tri in body.mesh().triangles:
        b.add_triangle(base + tri[0], base + tri[1], base + tri[2])
    sweep = loop_outer + body_len + 0.002
    params = {
        "body_radius": body_r, "body_length": body_len,
        "loop_inner_radius": loop_inner, "loop_outer_radius": loop_outer,
        "sweep_radius": sweep, "height": loop_h,
        "scale_x": s, "scale_y": s, "scale_z": s,
        "radial_extent": sweep, "axis_halfextent": max(loop_h / 2, body_r),
    }
    return b.mesh(), params, []


def _gen_rack(rng, r, interval):
    base_lx = _u(rng, *r["base_depth"])
    base_ly = _u(rng, *r["base_width"])
    base_h = 0.008
    wall_t = 0.008
    wall_h = _u(rng, *r["wall_height"])
    pole_r = _u(rng, *r["pole_radius"])
    pole_len = _u(rng, *r["pole_length"])
    sx, sy, sz = _scales(rng, interval)
    base_lx, base_ly, wall_h, pole_len = (base_lx * sx, base_ly * sy,
                                          wall_h * sz, pole_len * sx)
    want = int(rng.integers(r["pole_count"][0], r["pole_count"][1] + 1))
    max_by_spacing = max(1, int(base_ly / 0.030))
    count = min(want, max_by_spacing)
    b = _Builder()
    _box(b, base_lx, base_ly, base_h, center=(0.0, 0.0, base_h / 2))
    wall_x = -base_lx / 2 + wall_t / 2
    _box(b, wall_t, base_ly, wall_h, center=(wall_x, 0.0, base_h + wall_h / 2))
    face_x = wall_x + wall_t / 2
    spacing = base_ly / count
    ys = [-base_ly / 2 + (i + 0.5) * spacing for i in range(count)]
    z_lo, z_hi = 0.55 * wall_h, 0.85 * wall_h
    slots = []
    for y in ys:
        z = base_h + _u(rng, z_lo, z_hi)
        pole = _Builder()
        _solid_cylinder(pole, pole_r, 0.0, pole_len, 12)
        rot = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        verts = pole.mesh().vertices @ rot.T + np.array([face_x, y, z])
        base_idx = b.add_vertices(verts)
        for tri in pole.mesh().triangles:
            b.add_triangle(base_idx + tri[0], base_idx + tri[1], base_idx + tri[2])
        mid = np.array([face_x + pole_len / 2, y, z])
        clearance = min(spacing / 2 if count > 1 else 0.06,
                        z - base_h, 0.06)
        slots.append(PlacementSlot(mid, np.array([1.0, 0.0, 0.0]), "hang",
                                   clearance))
    params = {
        "base_depth": base_lx, "base_width": base_ly, "base_height": base_h,
        "wall_height": wall_h, "pole_radius": pole_r, "pole_length": pole_len,
        "pole_count": float(count),
        "scale_x": sx, "scale_y": sy, "scale_z": sz,
        "radial_extent": float(np.hypot(base_lx / 2 + pole_len, base_ly / 2)),
        "axis_halfextent": (base_h + wall_h) / 2, "bottom_z": 0.0,
        "wall_face_x": face_x,
    }
    return b.mesh(), params, slots


def _gen_plate_rack(rng, r, interval):
    groove_len = _u(rng, *r["groove_length"])
    fin_h = _u(rng, *r["fin_height"])
    gap = _u(rng, *r["groove_gap"])
    fin_t = 0.005
    base_h = 0.008
    sx, sy, sz = _scales(rng, interval)
    groove_len *= sx
    fin_h *= sz
    count = int(rng.integers(r["slot_count"][0], r["slot_count"][1] + 1))
    base_ly = (count + 1) * fin_t + count * gap
    b = _Builder()
    _box(b, groove_len, base_ly, base_h, center=(0.0, 0.0, base_h / 2))
    slots = []
    y = -base_ly / 2
    for i in range(count + 1):
        fin_y = y + fin_t / 2
        _box(b, groove_len, fin_t, fin_h,
             center=(0.0, fin_y, base_h + fin_h / 2))
        if i < count:
            groove_y = y + fin_t + gap / 2
            slots.append(PlacementSlot(
                np.array([0.0, groove_y, base_h + fin_h / 2]),
                np.array([0.0, 1.0, 0.0]), "insert", gap / 2))
        y += fin_t + gap
    params = {
        "groove_length": groove_len, "fin_height": fin_h, "groove_gap": gap,
        "fin_thickness": fin_t, "slot_count": float(count),
        "base_height": base_h, "base_width": base_ly,
        "scale_x": sx, "scale_y": sy, "scale_z": sz,
        "radial_extent": float(np.hypot(groove_len / 2, base_ly / 2)),
        "axis_halfextent": (base_h + fin_h) / 2, "bottom_z": 0.0,
    }
    return b.mesh(), params, slots


_GENERATORS = {
    "peg": ("peg", _gen_peg),
    "stick": ("stick", _gen_stick),
    "vial": ("vial", _gen_vial),
    "hole_plate": ("hole_plate", _gen_hole_plate),
    "vial_plate": ("vial_plate", _gen_vial_plate),
    "beaker": ("beaker", _gen_beaker),
    "pot": ("pot", _gen_pot),
    "ring": ("ring", _gen_ring),
    "lid": ("lid", _gen_lid),
    "plate": ("plate", _gen_plate),
    "cup": ("cup", _gen_cup),
    "rack": ("rack", _gen_rack),
    "plate_rack": ("plate_rack", _gen_plate_rack),
}


def generate_object(category: str, seed: int,
                    scale_interval: tuple[float, float] = (0.8, 1.25),
                    ranges: dict | None = None) -> tuple[Mesh, ObjectSpec]:
    """Build one object deterministically from (category, seed)."""
    if category not in _GENERATORS:
        raise ValueError(f"unknown category {category!r}")
    ranges = ranges if ranges is not None else default_ranges()
    rng = np.random.Generator(np.random.PCG64(seed))
    key, gen = _GENERATORS[category]
    mesh, params, slots = gen(rng, ranges[key], scale_interval)
    return mesh, ObjectSpec(category=category, params=params, seed=seed,
                            slots=slots)


def enumerate_slots(spec: ObjectSpec) -> list[PlacementSlot]:
    """All placement slots annotated at generation time (empty for placed objects)."""
    return list(spec.slots)


# ---------------------------------------------------------------------------
# Analytic material occupancy (for interpenetration checks)


def material_occupancy(spec: ObjectSpec, points: np.ndarray,
                       margin: float = 0.0) -> np.ndarray:
    """True where a point (own frame) is inside the object's solid material.

    Defined for base categories; used to verify that placed objects never
    interpenetrate their base.  ``margin`` shrinks the solid so that surface
    contact does not count as penetration.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    p = spec.params
    m = float(margin)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r_xy = np.hypot(x, y)
    cat = spec.category

    def box(cx, cy, cz, hx, hy, hzz):
        return (np.abs(x - cx) <= hx - m) & (np.abs(y - cy) <= hy - m) \
            & (np.abs(z - cz) <= hzz - m)

    if cat in ("hole_plate", "vial_plate"):
        inside = box(0, 0, 0, p["length"] / 2, p["width"] / 2, p["thickness"] / 2)
        for s in spec.slots:
            d = np.hypot(x - s.center[0], y - s.center[1])
            inside &= ~(d < p["hole_radius"] + m)
        return inside
    if cat in ("beaker", "pot"):
        h2 = p["height"] / 2
        bottom_top = -h2 + (p["height"] - p["hole_depth"])
        in_floor = (z >= -h2 + m) & (z <= bottom_top - m) & (r_xy <= p["radius"] - m)
        in_wall = (z > bottom_top + m) & (z <= h2 - m) \
            & (r_xy >= p["inner_radius"] + m) & (r_xy <= p["radius"] - m)
        return in_floor | in_wall
    if cat == "ring":
        return (np.abs(z) <= p["height"] / 2 - m) \
            & (r_xy >= p["inner_radius"] + m) & (r_xy <= p["outer_radius"] - m)
    if cat == "rack":
        inside = box(0, 0, p["base_height"] / 2, p["base_depth"] / 2,
                     p["base_width"] / 2, p["base_height"] / 2)
        wall_x = -p["base_depth"] / 2 + 0.008 / 2
        inside |= box(wall_x, 0, p["base_height"] + p["wall_height"] / 2,
                      0.004, p["base_width"] / 2, p["wall_height"] / 2)
        for s in spec.slots:
            along = x - (s.center[0] - p["pole_length"] / 2)
            rad = np.hypot(y - s.center[1], z - s.center[2])
            inside |= (along >= m) & (along <= p["pole_length"] - m) \
                & (rad <= p["pole_radius"] - m)
        return inside
    if cat == "plate_rack":
        inside = box(0, 0, p["base_height"] / 2, p["groove_length"] / 2,
                     p["base_width"] / 2, p["base_height"] / 2)
        count = int(p["slot_count"])
        fin_t, gap = p["fin_thickness"], p["groove_gap"]
        yy = -p["base_width"] / 2
        for _ in range(count + 1):
            fin_y = yy + fin_t / 2
            inside |= box(0, fin_y, p["base_height"] + p["fin_height"] / 2,
                          p["groove_length"] / 2, fin_t / 2, p["fin_height"] / 2)
            yy += fin_t + gap
        return inside
    raise ValueError(f"occupancy not defined for category {cat!r}")


# ---------------------------------------------------------------------------
# Wavefront OBJ I/O (triangles only)


def write_obj(mesh: Mesh, path):
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path) -> Mesh:
    vertices, triangles = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(idx) != 3:
                    raise ValueError("only triangle faces are supported")
                triangles.append(idx)
    return Mesh(np.array(vertices), np.array(triangles))
