import numpy as np
import pytest

from placelab import procgen
from placelab.pointcloud import crop_sphere, sample_mesh_surface


def test_all_categories_generate():
    for cat in procgen.CATEGORIES:
        mesh, spec = procgen.generate_object(cat, seed=101)
        assert len(mesh.vertices) > 0 and len(mesh.triangles) > 0
        assert spec.category == cat
        assert spec.seed == 101


def test_unknown_category():
    with pytest.raises(ValueError, match="unknown category"):
        procgen.generate_object("sprocket", seed=0)


def test_determinism_bit_exact():
    for cat in ("peg", "vial_plate", "rack", "cup"):
        m1, s1 = procgen.generate_object(cat, seed=7)
        m2, s2 = procgen.generate_object(cat, seed=7)
        assert np.array_equal(m1.vertices, m2.vertices)
        assert np.array_equal(m1.triangles, m2.triangles)
        assert s1.to_json_dict() == s2.to_json_dict()


def test_no_degenerate_triangles():
    for cat in procgen.CATEGORIES:
        mesh, _ = procgen.generate_object(cat, seed=23)
        v0 = mesh.vertices[mesh.triangles[:, 0]]
        e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
        e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
        areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
        assert areas.min() > 1e-14


def test_vial_plate_contract():
    for seed in range(20):
        _, spec = procgen.generate_object("vial_plate", seed=seed)
        count = int(spec.params["hole_count"])
        assert 2 <= count <= 12
        assert len(spec.slots) == count
        assert all(s.slot_type == "insert" for s in spec.slots)
        centers = np.array([s.center for s in spec.slots])
        radius = spec.params["hole_radius"]
        for i in range(count):
            for j in range(i + 1, count):
                assert np.linalg.norm(centers[i] - centers[j]) >= 2 * radius


def test_rack_contract():
    for seed in range(20):
        _, spec = procgen.generate_object("rack", seed=seed)
        count = int(spec.params["pole_count"])
        assert 1 <= count <= 6
        assert len(spec.slots) == count
        assert all(s.slot_type == "hang" for s in spec.slots)


def test_placed_objects_have_no_slots():
    for cat in ("peg", "vial", "stick", "cup", "lid", "plate"):
        _, spec = procgen.generate_object(cat, seed=3)
        assert procgen.enumerate_slots(spec) == []


def test_ring_single_stack_slot_at_top():
    _, spec = procgen.generate_object("ring", seed=5)
    slots = procgen.enumerate_slots(spec)
    assert len(slots) == 1
    assert slots[0].slot_type == "stack"
    assert np.allclose(slots[0].center[:2], 0.0)
    assert slots[0].center[2] == pytest.approx(spec.params["height"] / 2)


def test_slot_centers_inside_inflated_aabb():
    for cat in procgen.BASE_CATEGORIES:
        mesh, spec = procgen.generate_object(cat, seed=13)
        lo, hi = mesh.aabb()
        for s in spec.slots:
            assert np.all(s.center >= lo - s.clearance - 1e-12)
            assert np.all(s.center <= hi + s.clearance + 1e-12)


def test_insert_cavity_property():
    mesh, spec = procgen.generate_object("vial_plate", seed=31)
    pc = sample_mesh_surface(mesh, 40_000, np.random.default_rng(0))
    depth = spec.params["hole_depth"]
    for slot in spec.slots:
        crop = crop_sphere(pc, slot.center, slot.clearance)
        rel = crop.points - slot.center
        axial = rel @ slot.axis
        radial = np.linalg.norm(rel - np.outer(axial, slot.axis), axis=1)
        in_depth = np.abs(axial) < depth / 2 * 0.99
        assert not np.any(in_depth & (radial < slot.clearance * 0.9))


def test_spec_roundtrip_reproduces_object():
    mesh, spec = procgen.generate_object("beaker", seed=77)
    mesh2, spec2 = procgen.generate_object(spec.category, spec.seed)
    assert spec.to_json_dict() == spec2.to_json_dict()
    assert np.array_equal(mesh.vertices, mesh2.vertices)


def test_obj_roundtrip(tmp_path):
    mesh, _ = procgen.generate_object("pot", seed=9)
    path = tmp_path / "pot.obj"
    procgen.write_obj(mesh, path)
    back = procgen.read_obj(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_material_occupancy_plate():
    _, spec = procgen.generate_object("vial_plate", seed=41)
    hole = spec.slots[0].center
    probes = np.array([
        [spec.params["length"] / 2 - 1e-4, 0.0, 0.0],   # inside slab corner area
        hole,                                            # center of a hole
        [0.0, 0.0, spec.params["thickness"]],            # above the slab
    ])
    # Probe 0 might coincide with a hole on some seeds; verify directly.
    inside = procgen.material_occupancy(spec, probes)
    assert not inside[1]
    assert not inside[2]


def test_scale_interval_respected():
    _, spec = procgen.generate_object("peg", seed=12, scale_interval=(1.0, 1.0))
    assert spec.params["scale_x"] == 1.0
    assert spec.params["scale_y"] == 1.0
    assert spec.params["scale_z"] == 1.0
