"""Trainable pose refiner: point-pair attention encoder + timestep-conditioned MLP.

Pipeline per scene: both clouds are FPS-downsampled to a fixed count, jointly
normalized to the unit cube, lifted per point to the feature width, tagged
with a 2-wide one-hot cloud id, passed through per-cloud self-attention blocks
and then cross-attention blocks (shared weights, both directions), mean-pooled
into one joint feature, and decoded by an MLP conditioned on a sinusoidal
timestep embedding into a translation and a 6-value rotation that is
Gram-Schmidt orthonormalized.  The predicted delta lives in the normalized
frame and is mapped back to meters exactly using the normalization record, so
predictions are equivariant to translating the whole scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion import RefinerOutput
from ..geometry import RigidTransform, UnitQuaternion
from ..pointcloud import (InsufficientPointsError, NormalizationRecord,
                          PointCloud, farthest_point_sample, fps_start_index,
                          normalize_unit_cube)
from .autodiff import Tensor, concat, no_grad

LAYERNORM_EPS = 1e-5
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


@dataclass
class ModelConfig:
    points_per_cloud: int = 128
    feature_dim: int = 64
    heads: int = 1
    self_blocks: int = 2
    cross_blocks: int = 2
    decoder_hidden: tuple[int, ...] = (128, 64)
    rotation_parameterization: str = "six_d"
    regression_mode: bool = False

    def __post_init__(self):
        self.decoder_hidden = tuple(int(h) for h in self.decoder_hidden)
        if self.feature_dim % self.heads != 0:
            raise ValueError("feature_dim must be divisible by heads")
        for name in ("points_per_cloud", "feature_dim", "heads",
                     "self_blocks", "cross_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.rotation_parameterization != "six_d":
            raise ValueError("only the six_d rotation parameterization exists")

    @property
    def token_width(self) -> int:
        return self.feature_dim + 2  # one-hot cloud tag

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        base = dict(points_per_cloud=1024, feature_dim=256, heads=1,
                    self_blocks=4, cross_blocks=4, decoder_hidden=(512, 256))
        base.update(overrides)
        return cls(**base)

    def to_json_dict(self) -> dict:
        return {"points_per_cloud": self.points_per_cloud,
                "feature_dim": self.feature_dim, "heads": self.heads,
                "self_blocks": self.self_blocks,
                "cross_blocks": self.cross_blocks,
                "decoder_hidden": list(self.decoder_hidden),
                "rotation_parameterization": self.rotation_parameterization,
                "regression_mode": self.regression_mode}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["decoder_hidden"] = tuple(d["decoder_hidden"])
        return cls(**d)


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard transformer positional embedding of integer timesteps."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if emb.shape[1] < dim:
        emb = np.concatenate([emb, np.zeros((len(t), dim - emb.shape[1]))],
                             axis=1)
    return emb


def gram_schmidt_6d(values: np.ndarray) -> np.ndarray:
    """Orthonormalize 6 values into a rotation matrix (columns b1, b2, b1xb2).

    The degenerate all-zero input maps to the identity, so a zero-initialized
    head predicts the identity rotation.
    """
    values = np.asarray(values, dtype=np.float64).reshape(6)
    a1, a2 = values[:3], values[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-8:
        return np.eye(3)
    b1 = a1 / n1
    u2 = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(u2)
    if n2 < 1e-8:
        return np.eye(3)
    b2 = u2 / n2
    return np.stack([b1, b2, np.cross(b1, b2)], axis=1)


def _cross_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Cross product over the last axis (..., 3)."""
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx],
                  axis=-1)


def gram_schmidt_6d_tensor(values: Tensor) -> Tensor:
    """Differentiable Gram-Schmidt: (B, 6) -> (B, 3, 3), columns b1, b2, b3."""
    a1, a2 = values[:, 0:3], values[:, 3:6]
    n1 = ((a1 * a1).sum(axis=1, keepdims=True) + 1e-24).sqrt()
    b1 = a1 / n1
    u2 = a2 - (b1 * a2).sum(axis=1, keepdims=True) * b1
    n2 = ((u2 * u2).sum(axis=1, keepdims=True) + 1e-24).sqrt()
    b2 = u2 / n2
    b3 = _cross_tensor(b1, b2)
    cols = [v.reshape(v.shape[0], 3, 1) for v in (b1, b2, b3)]
    return concat(cols, axis=2)


@dataclass
class PoseRefiner:
    """Pose-refinement network with its parameters.

    ``refine`` satisfies the refiner contract used by the denoising engine;
    ``encode_pair`` and ``refine_step`` expose the two halves separately.
    """

    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0) -> "PoseRefiner":
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        d, w = config.feature_dim, config.token_width

        def linear(name: str, fan_in: int, fan_out: int,
                   zero: bool = False, bias_init: np.ndarray | None = None):
            if zero:
                weight = np.zeros((fan_in, fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            bias = np.zeros(fan_out) if bias_init is None else bias_init.copy()
            params[f"{name}.w"] = Tensor(weight, requires_grad=True)
            params[f"{name}.b"] = Tensor(bias, requires_grad=True)

        def layernorm(name: str, width: int):
            params[f"{name}.g"] = Tensor(np.ones(width), requires_grad=True)
            params[f"{name}.b"] = Tensor(np.zeros(width), requires_grad=True)

        def block(prefix: str):
            for proj in ("q", "k", "v"):
                linear(f"{prefix}.attn.{proj}", w, d)
            linear(f"{prefix}.attn.o", d, w)
            layernorm(f"{prefix}.ln1", w)
            linear(f"{prefix}.ff.1", w, d)
            linear(f"{prefix}.ff.2", d, w)
            layernorm(f"{prefix}.ln2", w)

        linear("lift", 3, d)
        for i in range(config.self_blocks):
            block(f"enc{i}")
        for i in range(config.cross_blocks):
            block(f"cross{i}")
        linear("pool", w, d)
        in_dim = d if config.regression_mode else 2 * d
        for j, hidden in enumerate(config.decoder_hidden):
            linear(f"dec{j}", in_dim, hidden)
            in_dim = hidden
        # Head starts at the identity increment: zero weights, identity 6D bias.
        linear("head", in_dim, 9, zero=True,
               bias_init=np.concatenate([np.zeros(3), IDENTITY_6D]))
        return cls(config=config, params=params)

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    # -- forward pieces --------------------------------------------------

    def _linear(self, name: str, x: Tensor) -> Tensor:
        return x @ self.params[f"{name}.w"] + self.params[f"{name}.b"]

    def _layernorm(self, name: str, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered / (var + LAYERNORM_EPS).sqrt()
        return normed * self.params[f"{name}.g"] + self.params[f"{name}.b"]

    def _attention(self, prefix: str, queries: Tensor, keys: Tensor) -> Tensor:
        cfg = self.config
        head_dim = cfg.feature_dim // cfg.heads
        b, n = queries.shape[0], queries.shape[1]
        m = keys.shape[1]

        def split_heads(x: Tensor, count: int) -> Tensor:
            return x.reshape(b, count, cfg.heads, head_dim).swapaxes(1, 2)

        q = split_heads(self._linear(f"{prefix}.q", queries), n)
        k = split_heads(self._linear(f"{prefix}.k", keys), m)
        v = split_heads(self._linear(f"{prefix}.v", keys), m)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(head_dim))
        attn = scores.softmax(axis=-1)
        mixed = (attn @ v).swapaxes(1, 2).reshape(b, n, cfg.feature_dim)
        return self._linear(f"{prefix}.o", mixed)

    def _block(self, prefix: str, x: Tensor, context: Tensor) -> Tensor:
        h = self._layernorm(f"{prefix}.ln1",
                            x + self._attention(f"{prefix}.attn", x, context))
        ff = self._linear(f"{prefix}.ff.2",
                          self._linear(f"{prefix}.ff.1", h).relu())
        return self._layernorm(f"{prefix}.ln2", h + ff)

    def encode_tokens(self, xc: Tensor, xb: Tensor) -> Tensor:
        """Normalized clouds (B, N, 3) x2 -> joint feature (B, feature_dim)."""
        b, n = xc.shape[0], xc.shape[1]
        tag_c = Tensor(np.broadcast_to(np.array([1.0, 0.0]), (b, n, 2)).copy())
        tag_b = Tensor(np.broadcast_to(np.array([0.0, 1.0]),
                                       (b, xb.shape[1], 2)).copy())
        tokens_c = concat([self._linear("lift", xc), tag_c], axis=-1)
        tokens_b = concat([self._linear("lift", xb), tag_b], axis=-1)
        for i in range(self.config.self_blocks):
            tokens_c = self._block(f"enc{i}", tokens_c, tokens_c)
            tokens_b = self._block(f"enc{i}", tokens_b, tokens_b)
        for i in range(self.config.cross_blocks):
            new_c = self._block(f"cross{i}", tokens_c, tokens_b)
            new_b = self._block(f"cross{i}", tokens_b, tokens_c)
            tokens_c, tokens_b = new_c, new_b
        pooled = concat([tokens_c, tokens_b], axis=1).mean(axis=1)
        return self._linear("pool", pooled)

    def decode(self, feature: Tensor, t_indices: np.ndarray) -> Tensor:
        """Joint feature + timestep -> raw 9 outputs (normalized frame)."""
        if self.config.regression_mode:
            h = feature
        else:
            emb = sinusoidal_embedding(t_indices, self.config.feature_dim)
            h = concat([feature, Tensor(emb)], axis=-1)
        for j in range(len(self.config.decoder_hidden)):
            h = self._linear(f"dec{j}", h).relu()
        return self._linear("head", h)

    def forward_deltas(self, xc: Tensor, xb: Tensor, t_indices: np.ndarray,
                       scales: np.ndarray,
                       offsets: np.ndarray) -> tuple[Tensor, Tensor]:
        """Full batched forward pass in metric scene coordinates.

        Returns (rotations (B, 3, 3), translations (B, 3)).  The translation
        output of the head lives in the normalized frame; the exact inverse of
        the shared normalization (p' = (p - offset) * scale) maps the delta
        back: t_scene = t_norm / scale + (I - R) @ offset.
        """
        feature = self.encode_tokens(xc, xb)
        raw = self.decode(feature, t_indices)
        t_norm = raw[:, 0:3]
        rot = gram_schmidt_6d_tensor(raw[:, 3:9])
        b = rot.shape[0]
        eye = Tensor(np.broadcast_to(np.eye(3), (b, 3, 3)).copy())
        off = Tensor(offsets.reshape(b, 3, 1))
        correction = ((eye - rot) @ off).reshape(b, 3)
        t_scene = t_norm / Tensor(scales.reshape(b, 1)) + correction
        return rot, t_scene

    # -- single-scene contract surface ------------------------------------

    def _prepare_clouds(self, target: PointCloud,
                        crop: PointCloud) -> tuple[np.ndarray, np.ndarray,
                                                   NormalizationRecord]:
        n = self.config.points_per_cloud
        clouds = []
        for pc in (target, crop):
            if len(pc) < n:
                raise InsufficientPointsError(
                    f"insufficient points: cloud has {len(pc)}, need {n}")
            if len(pc) == n:
                clouds.append(pc)
            else:
                idx = farthest_point_sample(pc, n, fps_start_index(pc.points))
                clouds.append(PointCloud(pc.points[idx], pc.frame_label))
        normalized, record = normalize_unit_cube(clouds)
        return normalized[0].points, normalized[1].points, record

    def encode_pair(self, target: PointCloud, crop: PointCloud) -> np.ndarray:
        """FPS + joint normalization + encoder; returns (feature_dim,)."""
        xc, xb, _ = self._prepare_clouds(target, crop)
        with no_grad():
            feature = self.encode_tokens(Tensor(xc[None]), Tensor(xb[None]))
        return feature.data[0]

    def refine_step(self, feature: np.ndarray, t: int,
                    record: NormalizationRecord | None = None) -> RefinerOutput:
        """Decode one increment from a joint feature at timestep t."""
        if t < 1:
            raise ValueError("timestep must be >= 1")
        with no_grad():
            raw = self.decode(Tensor(np.asarray(feature,
                                                dtype=np.float64)[None]),
                              np.array([t])).data[0]
        if not np.all(np.isfinite(raw)):
            raise FloatingPointError("non-finite activations in decoder head")
        rotation_matrix = gram_schmidt_6d(raw[3:9])
        translation = raw[0:3]
        if record is not None:
            translation = translation / record.scale \
                + (np.eye(3) - rotation_matrix) @ record.offset
        return RefinerOutput(RigidTransform(
            UnitQuaternion.from_matrix(rotation_matrix), translation))

    def refine(self, cloud: PointCloud, crop: PointCloud,
               t: int) -> RefinerOutput:
        """Refiner contract: one metric-frame increment for the pair."""
        xc, xb, record = self._prepare_clouds(cloud, crop)
        with no_grad():
            rot, t_scene = self.forward_deltas(
                Tensor(xc[None]), Tensor(xb[None]), np.array([max(t, 1)]),
                np.array([record.scale]), record.offset[None])
        matrix = rot.data[0]
        if not (np.all(np.isfinite(matrix))
                and np.all(np.isfinite(t_scene.data[0]))):
            raise FloatingPointError("non-finite network output")
        return RefinerOutput(RigidTransform(
            UnitQuaternion.from_matrix(matrix), t_scene.data[0]))
