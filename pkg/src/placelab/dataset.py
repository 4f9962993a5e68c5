"""Ground-truth placement scenes: pairing, pose generation, step targets, storage.

Frames
------
Each scene lives in a slot-centered "scene frame": the base object is shifted
so the active slot center sits at the origin.  This keeps the whole scene
(cropped base region, placed target, pose perturbations) within a few crop
radii of the origin, so the perturbation draw "rotation uniform over SO(3),
translation uniform in the crop bounding box" produces well-conditioned poses.

``SceneRecord.sample.placement_pose`` maps the target's own frame to its
placed pose in the scene frame.  The perturbed starting cloud for denoising is
``T_init`` applied to the placed cloud, and the ground-truth correction
telescopes to ``inverse(T_init)``.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (RigidTransform, UnitQuaternion, interpolate_transform,
                       sample_uniform_rotation)
from .pointcloud import Aabb, PointCloud, crop_sphere, sample_mesh_surface
from .procgen import (Mesh, ObjectSpec, generate_object, read_obj, write_obj)

FORMAT_VERSION = "placelab-dataset-1"

TASKS = ("hanging", "stacking", "vial_insertion", "other_insertion")

# (base category, target category) pairs eligible per task.
TASK_PAIRS: dict[str, tuple[tuple[str, str], ...]] = {
    "hanging": (("rack", "ring"), ("rack", "cup")),
    "stacking": (("pot", "lid"), ("ring", "ring")),
    "vial_insertion": (("vial_plate", "vial"),),
    "other_insertion": (("hole_plate", "peg"), ("hole_plate", "stick"),
                        ("beaker", "vial"), ("beaker", "stick"),
                        ("beaker", "peg"), ("plate_rack", "plate")),
}


class PairRejectedError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass
class PlacementSample:
    """One ground-truth placement of a target object into a base slot."""

    base_id: str
    target_id: str
    slot_index: int
    placement_pose: RigidTransform  # target own frame -> placed pose
    symmetry_axis: np.ndarray       # own frame, unit
    symmetry: str                   # "continuous" | "discrete:<n>" | "none"

    def __post_init__(self):
        self.symmetry_axis = np.asarray(self.symmetry_axis,
                                        dtype=np.float64).reshape(3)


@dataclass
class SceneRecord:
    """Everything needed to train or evaluate on one placement scene."""

    target_cloud: PointCloud        # target object, its own frame
    base_cloud: PointCloud          # base object, scene frame
    crop_center: np.ndarray         # scene frame (the active slot center)
    crop_radius: float
    init_transform: RigidTransform  # pose perturbation applied to the placed cloud
    sample: PlacementSample
    scene_id: str = ""
    task: str = ""
    split: str = ""

    def __post_init__(self):
        self.crop_center = np.asarray(self.crop_center,
                                      dtype=np.float64).reshape(3)

    def placed_target_points(self) -> np.ndarray:
        return self.sample.placement_pose.apply(self.target_cloud.points)

    def initial_target_cloud(self) -> PointCloud:
        return PointCloud(
            self.init_transform.apply(self.placed_target_points()), "scene")

    def cropped_base(self) -> PointCloud:
        return crop_sphere(self.base_cloud, self.crop_center, self.crop_radius)


@dataclass
class DiffusionStepTarget:
    """Ground-truth incremental transform for one denoising step."""

    k: int
    delta: RigidTransform


@dataclass
class DatasetManifest:
    version: str
    master_seed: int
    objects: list[dict]   # id, category, seed, split, obj, spec
    scenes: list[dict]    # scene_id, task, split, base_id, target_id, slot_index
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"version": self.version, "master_seed": self.master_seed,
                "objects": self.objects, "scenes": self.scenes,
                "counts": self.counts}

    @classmethod
    def from_json_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("version") != FORMAT_VERSION:
            raise DatasetFormatError(
                f"version mismatch: expected {FORMAT_VERSION}, "
                f"got {d.get('version')!r}")
        return cls(d["version"], int(d["master_seed"]), d["objects"],
                   d["scenes"], d["counts"])


# ---------------------------------------------------------------------------
# Placement pose generation


def check_compatibility(base: ObjectSpec, target: ObjectSpec,
                        slot_index: int) -> str | None:
    """Geometric compatibility gate; returns a rejection reason or None."""
    slot = base.slots[slot_index]
    bp, tp = base.params, target.params
    if slot.slot_type == "insert":
        if base.category == "plate_rack":
            if tp["axis_halfextent"] >= slot.clearance * 0.95:
                return "target too thick for groove"
            if tp["radial_extent"] >= bp["fin_height"] / 2:
                return "target too wide for groove depth"
            if tp["radial_extent"] >= bp["groove_length"] / 2:
                return "target too wide for groove length"
        else:
            if tp["radial_extent"] >= slot.clearance:
                return "target radius exceeds hole radius"
    elif slot.slot_type == "stack":
        if tp["radial_extent"] > slot.clearance * 1.2:
            return "target footprint exceeds support face"
        inner = bp.get("inner_radius", 0.0)
        if inner > 0.0 and tp["radial_extent"] <= inner:
            return "target falls through support opening"
    elif slot.slot_type == "hang":
        if "loop_inner_radius" not in tp:
            return "target has no loop"
        if tp["loop_inner_radius"] <= bp["pole_radius"] * 1.15:
            return "loop too small for pole"
        if tp["sweep_radius"] > slot.clearance:
            return "target sweep exceeds free space"
        if tp["axis_halfextent"] >= bp["pole_length"] / 2 * 0.9:
            return "target too deep for pole length"
    return None


def generate_placement_pose(base: ObjectSpec, target: ObjectSpec,
                            slot_index: int, rng: np.random.Generator,
                            base_id: str = "", target_id: str = "",
                            symmetry: str = "continuous") -> PlacementSample:
    """Ground-truth placement pose in the base object's frame.

    The target is centered on the slot axis at the depth that maximizes the
    minimal surface separation (analytic per slot type), its +z axis aligned
    with the slot axis, with a free rotation about that axis drawn per the
    symmetry model.
    """
    reason = check_compatibility(base, target, slot_index)
    if reason is not None:
        raise PairRejectedError(f"pair rejected: {reason}")
    slot = base.slots[slot_index]
    align = UnitQuaternion.from_two_vectors(np.array([0.0, 0.0, 1.0]), slot.axis)
    if symmetry == "continuous":
        phi = float(rng.uniform(0.0, 2.0 * np.pi))
    elif symmetry.startswith("discrete:"):
        n = int(symmetry.split(":")[1])
        phi = 2.0 * np.pi * int(rng.integers(n)) / n
    elif symmetry == "none":
        phi = 0.0
    else:
        raise ValueError(f"unknown symmetry model {symmetry!r}")
    rotation = align.compose(
        UnitQuaternion.from_axis_angle(np.array([0.0, 0.0, 1.0]), phi))

    if slot.slot_type == "insert" and base.category != "plate_rack":
        # Rest the target bottom on the hole floor plane.
        anchor = slot.center - slot.axis * (base.params["hole_depth"] / 2.0)
        reference = np.array([0.0, 0.0, target.params["bottom_z"]])
    elif slot.slot_type == "stack":
        anchor = slot.center
        reference = np.array([0.0, 0.0, target.params["bottom_z"]])
    else:
        # Groove insertion and hanging center the target on the slot.
        anchor = slot.center
        reference = np.zeros(3)
    translation = anchor - rotation.rotate(reference)
    return PlacementSample(
        base_id=base_id or f"{base.category}#{base.seed}",
        target_id=target_id or f"{target.category}#{target.seed}",
        slot_index=slot_index,
        placement_pose=RigidTransform(rotation, translation),
        symmetry_axis=np.array([0.0, 0.0, 1.0]),
        symmetry=symmetry,
    )


# ---------------------------------------------------------------------------
# Scene construction


def _f32(points: np.ndarray) -> np.ndarray:
    # Scenes are stored as little-endian float32; quantize at build time so a
    # round trip through disk is lossless.
    return points.astype("<f4").astype(np.float64)


def bounding_sphere_radius(mesh: Mesh) -> float:
    lo, hi = mesh.aabb()
    center = 0.5 * (lo + hi)
    return float(np.linalg.norm(mesh.vertices - center, axis=1).max())


def build_scene(base_mesh: Mesh, base_spec: ObjectSpec, target_mesh: Mesh,
                target_spec: ObjectSpec, sample: PlacementSample,
                n_points: int, rng: np.random.Generator,
                crop_radius_factor: float = 1.5, base_point_factor: int = 4,
                scene_id: str = "", task: str = "",
                split: str = "") -> SceneRecord:
    """Sample surfaces and draw the pose perturbation for one scene.

    ``sample.placement_pose`` arrives in the base frame and is re-expressed in
    the scene frame (active slot center at the origin).  The perturbation's
    rotation is uniform over SO(3) and its translation uniform in the bounding
    box of the cropped base region.
    """
    if n_points < 64:
        raise ValueError("need at least 64 points per cloud")
    slot = base_spec.slots[sample.slot_index]
    shift = -slot.center

    base_pts = sample_mesh_surface(
        base_mesh, n_points * base_point_factor, rng).points + shift
    base_cloud = PointCloud(_f32(base_pts), "scene")
    target_cloud = PointCloud(
        _f32(sample_mesh_surface(target_mesh, n_points, rng).points), "object")

    crop_radius = crop_radius_factor * bounding_sphere_radius(target_mesh)
    crop = crop_sphere(base_cloud, np.zeros(3), crop_radius)

    rotation = sample_uniform_rotation(rng)
    translation = Aabb.from_points(crop.points).sample_uniform(rng)
    init = RigidTransform(rotation, translation)

    scene_sample = replace(
        sample,
        placement_pose=RigidTransform(sample.placement_pose.rotation,
                                      sample.placement_pose.translation + shift))
    return SceneRecord(
        target_cloud=target_cloud, base_cloud=base_cloud,
        crop_center=np.zeros(3), crop_radius=crop_radius,
        init_transform=init, sample=scene_sample,
        scene_id=scene_id, task=task, split=split,
    )


def make_step_targets(init_transform: RigidTransform,
                      t_max: int) -> list[DiffusionStepTarget]:
    """Hand-defined denoising schedule, returned in denoising order.

    With S(a) = interpolate(identity, T_init, a), step k undoes the segment
    from S(k / t_max) to S((k - 1) / t_max); the ordered product of all deltas
    telescopes to inverse(T_init).
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    identity = RigidTransform.identity()
    targets = []
    for k in range(t_max, 0, -1):
        pose_here = interpolate_transform(identity, init_transform, k / t_max)
        pose_next = interpolate_transform(identity, init_transform,
                                          (k - 1) / t_max)
        targets.append(DiffusionStepTarget(
            k=k, delta=pose_next.compose(pose_here.inverse())))
    return targets


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass
class DatasetConfig:
    counts: dict[str, dict[str, int]] = field(default_factory=lambda: {
        task: {"train": 8, "val": 2} for task in TASKS})
    points_per_target: int = 1024
    base_point_factor: int = 4
    crop_radius_factor: float = 1.5
    poses_per_pair: int = 4
    schedule_steps: int = 5
    scale_interval: tuple[float, float] = (0.8, 1.25)
    insertion_pairs: tuple[tuple[str, str], ...] = TASK_PAIRS["other_insertion"]

    def pairs_for(self, task: str) -> tuple[tuple[str, str], ...]:
        if task == "other_insertion":
            return self.insertion_pairs
        return TASK_PAIRS[task]


def _derive_seed(*keys) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


@dataclass
class GeneratedDataset:
    manifest: DatasetManifest
    scenes: list[SceneRecord]
    objects: dict[str, tuple[Mesh, ObjectSpec]]


def generate_dataset(config: DatasetConfig, master_seed: int) -> GeneratedDataset:
    """Deterministically generate objects, placements, and scenes."""
    objects: dict[str, tuple[Mesh, ObjectSpec]] = {}
    object_rows: list[dict] = []
    scene_rows: list[dict] = []
    scenes: list[SceneRecord] = []
    counts: dict[str, dict[str, int]] = {}
    object_counter = 0

    def new_object(category: str, split: str, task: str):
        nonlocal object_counter
        seed = _derive_seed(master_seed, 1, object_counter)
        obj_id = f"{task}-{split}-{category}-{object_counter:04d}"
        object_counter += 1
        mesh, spec = generate_object(category, seed,
                                     scale_interval=config.scale_interval)
        objects[obj_id] = (mesh, spec)
        object_rows.append({"id": obj_id, "category": category, "seed": seed,
                            "split": split,
                            "obj": f"objects/{obj_id}.obj",
                            "spec": f"objects/{obj_id}.spec.json"})
        return obj_id

    for task_index, task in enumerate(TASKS):
        task_counts = config.counts.get(task, {})
        counts[task] = {}
        for split_index, split in enumerate(("train", "val")):
            want = int(task_counts.get(split, 0))
            counts[task][split] = want
            if want == 0:
                continue
            pairs = config.pairs_for(task)
            layout = np.random.Generator(np.random.PCG64(
                _derive_seed(master_seed, 2, task_index, split_index)))
            pools: dict[str, list[str]] = {}
            pool_size = max(3, int(np.ceil(np.sqrt(
                want / max(config.poses_per_pair, 1)))) + 1)

            def pick(category: str) -> str:
                pool = pools.setdefault(category, [])
                if len(pool) < pool_size:
                    pool.append(new_object(category, split, task))
                return pool[int(layout.integers(len(pool)))]

            pair_uses: dict[tuple[str, str], int] = {}
            built = 0
            failures = 0
            while built < want:
                base_cat, target_cat = pairs[int(layout.integers(len(pairs)))]
                base_id = pick(base_cat)
                target_id = pick(target_cat)
                if pair_uses.get((base_id, target_id), 0) >= config.poses_per_pair:
                    failures += 1
                    if failures > 50:
                        pool_size += 1
                        failures = 0
                    continue
                base_mesh, base_spec = objects[base_id]
                target_mesh, target_spec = objects[target_id]
                scene_rng = np.random.Generator(np.random.PCG64(
                    _derive_seed(master_seed, 3, task_index, split_index, built)))
                slot_index = int(scene_rng.integers(len(base_spec.slots)))
                try:
                    sample = generate_placement_pose(
                        base_spec, target_spec, slot_index, scene_rng,
                        base_id=base_id, target_id=target_id)
                except PairRejectedError:
                    failures += 1
                    if failures > 50:
                        pool_size += 1
                        failures = 0
                    continue
                failures = 0
                pair_uses[(base_id, target_id)] = \
                    pair_uses.get((base_id, target_id), 0) + 1
                scene_id = f"{task}/{split}/{built:05d}"
                scene = build_scene(
                    base_mesh, base_spec, target_mesh, target_spec, sample,
                    config.points_per_target, scene_rng,
                    crop_radius_factor=config.crop_radius_factor,
                    base_point_factor=config.base_point_factor,
                    scene_id=scene_id, task=task, split=split)
                scenes.append(scene)
                scene_rows.append({"scene_id": scene_id, "task": task,
                                   "split": split, "base_id": base_id,
                                   "target_id": target_id,
                                   "slot_index": sample.slot_index})
                built += 1

    manifest = DatasetManifest(version=FORMAT_VERSION, master_seed=master_seed,
                               objects=object_rows, scenes=scene_rows,
                               counts=counts)
    return GeneratedDataset(manifest, scenes, objects)


# ---------------------------------------------------------------------------
# Serialization


def _encode_cloud(points: np.ndarray) -> str:
    return base64.b64encode(points.astype("<f4").tobytes()).decode("ascii")


def _decode_cloud(text: str) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 3)


def _transform_to_json(t: RigidTransform) -> dict:
    return {"rotation_wxyz": [float(v) for v in t.rotation.wxyz],
            "translation": [float(v) for v in t.translation]}


def _transform_from_json(d: dict) -> RigidTransform:
    return RigidTransform(UnitQuaternion(np.array(d["rotation_wxyz"])),
                          np.array(d["translation"]))


def scene_to_json_dict(scene: SceneRecord) -> dict:
    s = scene.sample
    return {
        "scene_id": scene.scene_id, "task": scene.task, "split": scene.split,
        "base_id": s.base_id, "target_id": s.target_id,
        "slot_index": s.slot_index,
        "crop_center": [float(v) for v in scene.crop_center],
        "crop_radius": float(scene.crop_radius),
        "init_transform": _transform_to_json(scene.init_transform),
        "placement_pose": _transform_to_json(s.placement_pose),
        "symmetry_axis": [float(v) for v in s.symmetry_axis],
        "symmetry": s.symmetry,
        "target_cloud": _encode_cloud(scene.target_cloud.points),
        "base_cloud": _encode_cloud(scene.base_cloud.points),
    }


def scene_from_json_dict(d: dict) -> SceneRecord:
    sample = PlacementSample(
        base_id=d["base_id"], target_id=d["target_id"],
        slot_index=int(d["slot_index"]),
        placement_pose=_transform_from_json(d["placement_pose"]),
        symmetry_axis=np.array(d["symmetry_axis"]),
        symmetry=d["symmetry"])
    return SceneRecord(
        target_cloud=PointCloud(_decode_cloud(d["target_cloud"]), "object"),
        base_cloud=PointCloud(_decode_cloud(d["base_cloud"]), "scene"),
        crop_center=np.array(d["crop_center"]),
        crop_radius=float(d["crop_radius"]),
        init_transform=_transform_from_json(d["init_transform"]),
        sample=sample, scene_id=d["scene_id"], task=d["task"],
        split=d["split"])


def write_dataset(directory: str, data: GeneratedDataset):
    os.makedirs(os.path.join(directory, "objects"), exist_ok=True)
    for row in data.manifest.objects:
        mesh, spec = data.objects[row["id"]]
        write_obj(mesh, os.path.join(directory, row["obj"]))
        with open(os.path.join(directory, row["spec"]), "w") as fh:
            json.dump(spec.to_json_dict(), fh, sort_keys=True, indent=1)
    with open(os.path.join(directory, "scenes.jsonl"), "w") as fh:
        for scene in data.scenes:
            fh.write(json.dumps(scene_to_json_dict(scene), sort_keys=True))
            fh.write("\n")
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(data.manifest.to_json_dict(), fh, sort_keys=True, indent=1)


def read_manifest(directory: str) -> DatasetManifest:
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        raise DatasetFormatError(f"no manifest at {path}")
    with open(path) as fh:
        return DatasetManifest.from_json_dict(json.load(fh))


def read_scenes(directory: str) -> list[SceneRecord]:
    scenes = []
    with open(os.path.join(directory, "scenes.jsonl")) as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                scenes.append(scene_from_json_dict(json.loads(line)))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DatasetFormatError(
                    f"corrupt scene record at index {index}: {exc}") from exc
    return scenes


def load_object(directory: str, manifest: DatasetManifest,
                object_id: str) -> tuple[Mesh, ObjectSpec]:
    for row in manifest.objects:
        if row["id"] == object_id:
            mesh = read_obj(os.path.join(directory, row["obj"]))
            with open(os.path.join(directory, row["spec"])) as fh:
                spec = ObjectSpec.from_json_dict(json.load(fh))
            return mesh, spec
    raise DatasetFormatError(f"unknown object id {object_id!r}")


def read_dataset(directory: str) -> GeneratedDataset:
    manifest = read_manifest(directory)
    scenes = read_scenes(directory)
    objects = {row["id"]: load_object(directory, manifest, row["id"])
               for row in manifest.objects}
    return GeneratedDataset(manifest, scenes, objects)
