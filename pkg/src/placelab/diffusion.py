"""Iterative denoising engine: runs a pose refiner through the schedule,
computes the per-step training loss, and samples multimodal placement poses.

A refiner is anything with ``refine(cloud, crop, t) -> RefinerOutput``.  If it
also exposes ``on_sample_start(scene, proposal, init_transform,
schedule_steps)`` it is notified whenever ``sample_poses`` draws a fresh
starting perturbation (the oracle refiner uses this to arm its replay queue).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import DiffusionStepTarget, SceneRecord, make_step_targets
from .geometry import RigidTransform, geodesic_distance, sample_uniform_rotation
from .pointcloud import (Aabb, EmptyCropError, PointCloud, chamfer_distance,
                         crop_sphere)

logger = logging.getLogger(__name__)

SCHEDULE_STEPS_DEFAULT = 5
TOTAL_STEPS_DEFAULT = 50


class DenoiseAbortError(RuntimeError):
    pass


@dataclass
class RefinerOutput:
    """One predicted incremental transform."""

    delta: RigidTransform


@dataclass
class TraceStep:
    step_index: int            # timestep fed to the refiner
    delta: RigidTransform      # predicted increment at this step
    cloud_pose: RigidTransform  # cumulative transform from the start cloud


@dataclass
class DenoiseTrace:
    steps: list[TraceStep]

    def to_json_dict(self) -> dict:
        return {"steps": [
            {"step_index": s.step_index,
             "delta_rotation_wxyz": [float(v) for v in s.delta.rotation.wxyz],
             "delta_translation": [float(v) for v in s.delta.translation],
             "pose_rotation_wxyz": [float(v) for v in s.cloud_pose.rotation.wxyz],
             "pose_translation": [float(v) for v in s.cloud_pose.translation]}
            for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


@dataclass
class LossBreakdown:
    translation: float  # meters, L1
    rotation: float     # radians, geodesic
    chamfer: float      # meters
    total: float

    @classmethod
    def from_parts(cls, translation: float, rotation: float,
                   chamfer: float) -> "LossBreakdown":
        return cls(translation, rotation, chamfer,
                   translation + rotation + chamfer)


def _crop_cap(crop: PointCloud) -> float:
    box = Aabb.from_points(crop.points)
    radius = float(np.linalg.norm(crop.points - box.center, axis=1).max())
    return 2.0 * radius


def denoise(refiner, start_cloud: PointCloud, crop: PointCloud,
            schedule_steps: int = SCHEDULE_STEPS_DEFAULT,
            total_steps: int = TOTAL_STEPS_DEFAULT,
            max_step: float | None = None) -> tuple[RigidTransform, DenoiseTrace]:
    """Run the refinement schedule and return the composite correction.

    Timesteps schedule_steps..1 are fed once each; the smallest timestep is
    then repeated until total_steps refiner calls have been made (extra
    fine-grained refinement at test time).  The returned transform is the
    ordered product of all predicted increments; the crop is never mutated.
    """
    if schedule_steps < 1 or total_steps < schedule_steps:
        raise ValueError("need total_steps >= schedule_steps >= 1")
    if len(start_cloud) == 0 or len(crop) == 0:
        raise ValueError("clouds must be non-empty")
    cap = _crop_cap(crop) if max_step is None else float(max_step)
    timesteps = list(range(schedule_steps, 0, -1))
    timesteps += [1] * (total_steps - schedule_steps)

    points = start_cloud.points
    composite = RigidTransform.identity()
    steps: list[TraceStep] = []
    for i, t in enumerate(timesteps):
        out = refiner.refine(PointCloud(points, start_cloud.frame_label), crop, t)
        delta = out.delta
        if not (np.all(np.isfinite(delta.rotation.wxyz))
                and np.all(np.isfinite(delta.translation))):
            raise DenoiseAbortError(f"non-finite refiner output at step {i}")
        shift = float(np.linalg.norm(delta.translation))
        if shift > cap:
            logger.warning("step %d translation %.4f m exceeds cap %.4f m; clamped",
                           i, shift, cap)
            delta = RigidTransform(delta.rotation,
                                   delta.translation * (cap / shift))
        points = delta.apply(points)
        composite = delta.compose(composite)
        steps.append(TraceStep(step_index=t, delta=delta, cloud_pose=composite))
    return composite, DenoiseTrace(steps)


def diffusion_loss(pred: RefinerOutput, gt: DiffusionStepTarget,
                   cloud: PointCloud) -> LossBreakdown:
    """Per-step loss: L1 translation + geodesic rotation + chamfer, unit weights."""
    if len(cloud) == 0:
        raise ValueError("cloud must be non-empty")
    translation = float(np.abs(pred.delta.translation
                               - gt.delta.translation).sum())
    rotation = geodesic_distance(pred.delta.rotation, gt.delta.rotation)
    chamfer = chamfer_distance(pred.delta.apply(cloud.points),
                               gt.delta.apply(cloud.points))
    return LossBreakdown.from_parts(translation, rotation, chamfer)


def sample_poses(refiner, scene: SceneRecord, proposals, n_per_proposal: int,
                 rng: np.random.Generator,
                 schedule_steps: int = SCHEDULE_STEPS_DEFAULT,
                 total_steps: int = TOTAL_STEPS_DEFAULT,
                 trace_sink: list | None = None) -> list[RigidTransform]:
    """Sample placement poses around each proposed location.

    For every proposal the base cloud is cropped there, a fresh perturbation
    is drawn per sample (rotation uniform over SO(3), translation uniform in
    the crop bounding box), and the denoised correction is composed into an
    absolute placed pose of the target's own frame in the scene frame.
    """
    if not len(proposals):
        raise ValueError("need at least one proposal")
    placed_pose = scene.sample.placement_pose
    placed_points = scene.placed_target_points()
    results: list[RigidTransform] = []
    for proposal in proposals:
        proposal = np.asarray(proposal, dtype=np.float64).reshape(3)
        try:
            crop = crop_sphere(scene.base_cloud, proposal, scene.crop_radius)
        except EmptyCropError:
            logger.warning("scene %s: empty crop at proposal %s; skipped",
                           scene.scene_id, np.round(proposal, 4))
            continue
        box = Aabb.from_points(crop.points)
        for _ in range(n_per_proposal):
            init = RigidTransform(sample_uniform_rotation(rng),
                                  box.sample_uniform(rng))
            if hasattr(refiner, "on_sample_start"):
                refiner.on_sample_start(scene=scene, proposal=proposal,
                                        init_transform=init,
                                        schedule_steps=schedule_steps)
            start = PointCloud(init.apply(placed_points), "scene")
            correction, trace = denoise(refiner, start, crop,
                                        schedule_steps, total_steps)
            results.append(correction.compose(init).compose(placed_pose))
            if trace_sink is not None:
                trace_sink.append(trace)
    return results


# ---------------------------------------------------------------------------
# Reference refiners


class IdentityRefiner:
    """Predicts the identity increment; the cloud never moves."""

    def refine(self, cloud, crop, t) -> RefinerOutput:
        return RefinerOutput(RigidTransform.identity())


class OracleRefiner:
    """Test double that replays ground-truth schedule increments.

    Armed either directly with a list of deltas, or from a full correction
    transform (split into a denoising schedule).  Used through
    ``sample_poses`` it steers each sample toward the slot nearest the
    proposal, so oracle proposals recover every placement mode exactly.
    Once its queue is exhausted it returns identity increments.
    """

    def __init__(self, base_spec=None):
        self._queue: list[RigidTransform] = []
        self._base_spec = base_spec

    def arm(self, deltas: list[RigidTransform]):
        self._queue = list(deltas)

    def arm_correction(self, correction: RigidTransform, schedule_steps: int):
        targets = make_step_targets(correction.inverse(), schedule_steps)
        self.arm([t.delta for t in targets])

    def slot_poses(self, scene: SceneRecord) -> list[RigidTransform]:
        """Expected placed pose at every slot of the scene's base object."""
        pose = scene.sample.placement_pose
        if self._base_spec is None:
            return [pose]
        slots = self._base_spec.slots
        active = slots[scene.sample.slot_index]
        poses = []
        for slot in slots:
            offset = slot.center - active.center
            poses.append(RigidTransform(pose.rotation,
                                        pose.translation + offset))
        return poses

    def on_sample_start(self, scene: SceneRecord, proposal, init_transform,
                        schedule_steps: int):
        proposal = np.asarray(proposal, dtype=np.float64).reshape(3)
        poses = self.slot_poses(scene)
        dists = [np.linalg.norm(p.translation - proposal) for p in poses]
        target_pose = poses[int(np.argmin(dists))]
        start_pose = init_transform.compose(scene.sample.placement_pose)
        correction = target_pose.compose(start_pose.inverse())
        self.arm_correction(correction, schedule_steps)

    def refine(self, cloud, crop, t) -> RefinerOutput:
        if self._queue:
            return RefinerOutput(self._queue.pop(0))
        return RefinerOutput(RigidTransform.identity())
