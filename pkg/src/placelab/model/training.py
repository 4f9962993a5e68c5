"""Training loop for the pose refiner: AdamW, warmup+cosine schedule, grad check.

Each iteration draws a batch of scenes and one schedule step per scene, puts
the target cloud at the interpolated pose, and minimizes the summed loss
(L1 translation + geodesic rotation + chamfer) against the hand-defined step
increment, all in metric scene coordinates.  The pose perturbation is redrawn
on every visit by default so the model trains against the full perturbation
distribution rather than the one stored per scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import SceneRecord
from ..pointcloud import farthest_point_sample, fps_start_index
from .autodiff import Tensor
from .network import ModelConfig, PoseRefiner


class TrainAbortError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 3e-4
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    warmup_epochs: int = 4
    total_iterations: int = 2000
    seed: int = 0
    schedule_steps: int = 5
    resample_perturbation: bool = True

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        base = dict(batch_size=48, learning_rate=1e-4, weight_decay=0.1,
                    beta1=0.9, beta2=0.95, warmup_epochs=50,
                    total_iterations=500_000, schedule_steps=5)
        base.update(overrides)
        return cls(**base)

    def to_json_dict(self) -> dict:
        return {"batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "weight_decay": self.weight_decay, "beta1": self.beta1,
                "beta2": self.beta2, "warmup_epochs": self.warmup_epochs,
                "total_iterations": self.total_iterations, "seed": self.seed,
                "schedule_steps": self.schedule_steps,
                "resample_perturbation": self.resample_perturbation}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def learning_rate_at(iteration: int, total: int, warmup: int,
                     base_lr: float) -> float:
    """Linear warmup from 0, then cosine decay to 0 at the final iteration."""
    if warmup > 0 and iteration < warmup:
        return base_lr * iteration / warmup
    span = max(total - warmup, 1)
    progress = (iteration - warmup) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], beta1: float, beta2: float,
                 weight_decay: float, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2 = beta1, beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, lr: float):
        self.step_count += 1
        correct1 = 1.0 - self.beta1 ** self.step_count
        correct2 = 1.0 - self.beta2 ** self.step_count
        for name, tensor in self.params.items():
            grad = tensor.grad
            if grad is None:
                grad = np.zeros_like(tensor.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / correct1) / (np.sqrt(v / correct2) + self.eps)
            tensor.data -= lr * (update + self.weight_decay * tensor.data)


# ---------------------------------------------------------------------------
# Vectorized pose helpers (wxyz quaternions as rows)


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((len(q), 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def _quat_power(q: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Fractional rotation q**alpha (slerp from identity along the short arc)."""
    vec_norm = np.linalg.norm(q[:, 1:], axis=1)
    angle = 2.0 * np.arctan2(vec_norm, q[:, 0])
    half = 0.5 * alpha * angle
    out = np.empty_like(q)
    out[:, 0] = np.cos(half)
    safe = np.where(vec_norm > 1e-15, vec_norm, 1.0)
    axis = q[:, 1:] / safe[:, None]
    out[:, 1:] = np.sin(half)[:, None] * axis
    return out


def _uniform_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    u1, u2, u3 = rng.random(n), rng.random(n), rng.random(n)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    q = np.stack([a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                  b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)],
                 axis=1)
    q[q[:, 0] < 0.0] *= -1.0
    return q


# ---------------------------------------------------------------------------
# Batch assembly


@dataclass
class PreparedScene:
    target_points: np.ndarray  # (n, 3) FPS-sampled, own frame
    crop_points: np.ndarray    # (n, 3) FPS-sampled crop, scene frame
    gt_rotation: np.ndarray    # (3, 3)
    gt_translation: np.ndarray  # (3,)
    init_quat: np.ndarray      # (4,)
    init_trans: np.ndarray     # (3,)
    crop_lo: np.ndarray        # full-crop aabb, for perturbation redraws
    crop_hi: np.ndarray


def prepare_scene(scene: SceneRecord, points_per_cloud: int) -> PreparedScene:
    # FPS indices are invariant under rigid motion, so sampling once in the
    # object's own frame covers every pose the scene visits during training.
    target = scene.target_cloud.points
    crop = scene.cropped_base().points
    t_idx = farthest_point_sample(target, points_per_cloud,
                                  fps_start_index(target))
    c_idx = farthest_point_sample(crop, points_per_cloud,
                                  fps_start_index(crop))
    pose = scene.sample.placement_pose
    return PreparedScene(
        target_points=target[t_idx],
        crop_points=crop[c_idx],
        gt_rotation=pose.rotation.to_matrix(),
        gt_translation=pose.translation.copy(),
        init_quat=scene.init_transform.rotation.wxyz.copy(),
        init_trans=scene.init_transform.translation.copy(),
        crop_lo=crop.min(axis=0), crop_hi=crop.max(axis=0))


@dataclass
class Batch:
    cloud_norm: np.ndarray    # (B, n, 3) perturbed target, normalized
    crop_norm: np.ndarray     # (B, n, 3) crop, normalized
    timesteps: np.ndarray     # (B,)
    scales: np.ndarray        # (B,)
    offsets: np.ndarray       # (B, 3)
    gt_rotation: np.ndarray   # (B, 3, 3) step target, scene frame
    gt_translation: np.ndarray  # (B, 3)
    cloud_metric: np.ndarray  # (B, n, 3) perturbed target, scene frame
    scene_indices: np.ndarray


def make_batch(prepared: list[PreparedScene], indices: np.ndarray,
               steps: np.ndarray, schedule_steps: int,
               rng: np.random.Generator | None,
               regression_mode: bool) -> Batch:
    b = len(indices)
    targets = np.stack([prepared[i].target_points for i in indices])
    crops = np.stack([prepared[i].crop_points for i in indices])
    gt_r = np.stack([prepared[i].gt_rotation for i in indices])
    gt_t = np.stack([prepared[i].gt_translation for i in indices])

    if rng is not None:
        init_q = _uniform_quaternions(rng, b)
        lo = np.stack([prepared[i].crop_lo for i in indices])
        hi = np.stack([prepared[i].crop_hi for i in indices])
        init_t = lo + rng.random((b, 3)) * (hi - lo)
    else:
        init_q = np.stack([prepared[i].init_quat for i in indices])
        init_t = np.stack([prepared[i].init_trans for i in indices])

    if regression_mode:
        steps = np.full(b, schedule_steps)
        alpha_lo = np.zeros(b)
    else:
        alpha_lo = (steps - 1) / schedule_steps
    alpha_hi = steps / schedule_steps

    q_hi = _quat_power(init_q, alpha_hi)
    r_hi = _quat_to_matrix(q_hi)
    t_hi = alpha_hi[:, None] * init_t
    q_lo = _quat_power(init_q, alpha_lo)
    r_lo = _quat_to_matrix(q_lo)
    t_lo = alpha_lo[:, None] * init_t

    # Pose of the perturbed cloud: S(k / t_max) composed with the placed pose.
    pose_r = r_hi @ gt_r
    pose_t = np.einsum("bij,bj->bi", r_hi, gt_t) + t_hi
    cloud = np.einsum("bij,bnj->bni", pose_r, targets) + pose_t[:, None, :]

    # Step target: S((k - 1) / t_max) o inverse(S(k / t_max)).
    delta_r = r_lo @ np.swapaxes(r_hi, 1, 2)
    delta_t = t_lo - np.einsum("bij,bj->bi", delta_r, t_hi)

    joint_lo = np.minimum(cloud.min(axis=1), crops.min(axis=1))
    joint_hi = np.maximum(cloud.max(axis=1), crops.max(axis=1))
    offsets = 0.5 * (joint_lo + joint_hi)
    scales = 1.0 / (joint_hi - joint_lo).max(axis=1)

    norm = scales[:, None, None]
    cloud_norm = (cloud - offsets[:, None, :]) * norm
    crop_norm = (crops - offsets[:, None, :]) * norm
    return Batch(cloud_norm=cloud_norm, crop_norm=crop_norm, timesteps=steps,
                 scales=scales, offsets=offsets, gt_rotation=delta_r,
                 gt_translation=delta_t, cloud_metric=cloud,
                 scene_indices=indices)


# ---------------------------------------------------------------------------
# Loss


def batch_loss(refiner: PoseRefiner, batch: Batch) -> tuple[Tensor, dict]:
    """Differentiable mean loss over the batch plus scalar components."""
    rot, t_scene = refiner.forward_deltas(
        Tensor(batch.cloud_norm), Tensor(batch.crop_norm), batch.timesteps,
        batch.scales, batch.offsets)
    b = batch.cloud_norm.shape[0]

    l_translation = (t_scene - Tensor(batch.gt_translation)) \
        .abs().sum(axis=1).mean()

    # trace(R_pred @ R_gt^T) as an elementwise product with the constant gt.
    trace = (rot * Tensor(batch.gt_rotation)).sum(axis=2).sum(axis=1)
    cos = ((trace - 1.0) * 0.5).clip(-1.0 + 1e-9, 1.0 - 1e-9)
    l_rotation = cos.arccos().mean()

    pred_pts = Tensor(batch.cloud_metric) @ rot.swapaxes(1, 2) \
        + t_scene.reshape(b, 1, 3)
    gt_pts = np.einsum("bij,bnj->bni", batch.gt_rotation, batch.cloud_metric) \
        + batch.gt_translation[:, None, :]
    gt_tensor = Tensor(gt_pts)
    pred_sq = (pred_pts * pred_pts).sum(axis=2)
    gt_sq = (gt_pts * gt_pts).sum(axis=1)  # constant, precomputed
    cross = pred_pts @ gt_tensor.swapaxes(1, 2)
    d2 = (pred_sq.reshape(b, -1, 1) + Tensor(gt_sq[:, None, :])
          - 2.0 * cross).relu()
    dist = (d2 + 1e-24).sqrt()
    l_chamfer = dist.amin(axis=2).mean(axis=1).mean() \
        + dist.amin(axis=1).mean(axis=1).mean()

    total = l_translation + l_rotation + l_chamfer
    parts = {"translation": float(l_translation.data),
             "rotation": float(l_rotation.data),
             "chamfer": float(l_chamfer.data),
             "total": float(total.data)}
    return total, parts


# ---------------------------------------------------------------------------
# Training loop


def train(scenes: list[SceneRecord], model_config: ModelConfig,
          train_config: TrainConfig,
          progress=None) -> tuple[PoseRefiner, list[dict]]:
    """Train a fresh refiner; returns it with the per-iteration loss history.

    ``progress(iteration, row)`` is called after each step when provided.
    Deterministic given the seed and scene list.
    """
    if not scenes:
        raise ValueError("no training scenes")
    prepared = [prepare_scene(s, model_config.points_per_cloud)
                for s in scenes]
    refiner = PoseRefiner.create(model_config, seed=train_config.seed)
    optimizer = AdamW(refiner.params, train_config.beta1, train_config.beta2,
                      train_config.weight_decay)
    rng = np.random.default_rng(train_config.seed)
    iters_per_epoch = max(1, math.ceil(len(prepared) / train_config.batch_size))
    warmup = train_config.warmup_epochs * iters_per_epoch
    history: list[dict] = []

    for iteration in range(train_config.total_iterations):
        lr = learning_rate_at(iteration, train_config.total_iterations,
                              warmup, train_config.learning_rate)
        indices = rng.integers(len(prepared), size=train_config.batch_size)
        steps = rng.integers(1, train_config.schedule_steps + 1,
                             size=train_config.batch_size)
        batch = make_batch(
            prepared, indices, steps, train_config.schedule_steps,
            rng if train_config.resample_perturbation else None,
            model_config.regression_mode)
        refiner.zero_grad()
        total, parts = batch_loss(refiner, batch)
        if not np.isfinite(parts["total"]):
            raise TrainAbortError(
                f"non-finite loss at iteration {iteration} "
                f"(batch scenes {batch.scene_indices.tolist()})", iteration)
        total.backward()
        optimizer.step(lr)
        row = {"iteration": iteration, "lr": lr, **parts}
        history.append(row)
        if progress is not None:
            progress(iteration, row)
    return refiner, history


def write_loss_csv(path, history: list[dict]):
    columns = ("iteration", "translation", "rotation", "chamfer", "total", "lr")
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if c != "iteration"
                              else str(row[c]) for c in columns) + "\n")


# ---------------------------------------------------------------------------
# Gradient verification


def grad_check(loss_fn, params: dict[str, Tensor], eps: float = 1e-6,
               entries_per_tensor: int = 2,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error of reverse-mode gradients vs central differences.

    ``loss_fn()`` must rebuild the scalar loss from the current parameter
    values.  Only models under 10k parameters are accepted; double precision
    is assumed throughout.
    """
    total_size = sum(t.data.size for t in params.values())
    if total_size >= 10_000:
        raise ValueError(f"grad_check needs < 10k parameters, got {total_size}")
    rng = rng or np.random.default_rng(0)
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = {name: (t.grad.copy() if t.grad is not None
                    else np.zeros_like(t.data)) for name, t in params.items()}
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(entries_per_tensor, flat.size),
                           replace=False)
        for i in picks:
            original = flat[i]
            flat[i] = original + eps
            hi = float(loss_fn().data)
            flat[i] = original - eps
            lo = float(loss_fn().data)
            flat[i] = original
            fd = (hi - lo) / (2.0 * eps)
            ad = float(grads[name].reshape(-1)[i])
            scale = max(abs(ad) + abs(fd), 1e-8)
            worst = max(worst, abs(ad - fd) / scale)
    return worst
