"""SO(3)/SE(3) primitives: quaternions, rigid transforms, sampling, interpolation.

Conventions
-----------
- Quaternions are stored wxyz, unit norm, with a canonical sign: w >= 0, and
  when w == 0 the first nonzero component is positive.  Canonicalization makes
  equality checks and shorter-arc SLERP deterministic.
- Rotation matrices are 3x3 and act on column vectors from the left.
- A RigidTransform (R, t) acts on points as ``R p + t``; ``compose(A, B)``
  means "B first, then A".
- All angles are radians.  Degrees appear only at CLI boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-9


def _canonicalize(wxyz: np.ndarray) -> np.ndarray:
    """Normalize and flip sign so w >= 0 (ties: first nonzero positive)."""
    norm = float(np.linalg.norm(wxyz))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("quaternion has zero or non-finite norm")
    # Skip the division when already unit: renormalizing a unit quaternion
    # must be idempotent at the ulp level (serialization round-trips).
    q = wxyz if abs(norm - 1.0) < 1e-12 else wxyz / norm
    for component in q:
        if component > 0.0:
            return q
        if component < 0.0:
            return -q
    return q


@dataclass(frozen=True, eq=False)
class UnitQuaternion:
    """Unit quaternion (wxyz) with canonical sign, representing a rotation."""

    wxyz: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.wxyz, dtype=np.float64).reshape(4)
        object.__setattr__(self, "wxyz", _canonicalize(q))

    @property
    def w(self) -> float:
        return float(self.wxyz[0])

    @property
    def vector(self) -> np.ndarray:
        return self.wxyz[1:]

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ValueError("rotation axis must be nonzero")
        half = 0.5 * float(angle)
        return cls(np.concatenate(([np.cos(half)], np.sin(half) * axis / norm)))

    @classmethod
    def from_two_vectors(cls, a, b) -> "UnitQuaternion":
        """Minimal rotation taking direction a onto direction b."""
        a = np.asarray(a, dtype=np.float64).reshape(3)
        b = np.asarray(b, dtype=np.float64).reshape(3)
        a = a / np.linalg.norm(a)
        b = b / np.linalg.norm(b)
        w = 1.0 + float(a @ b)
        if w < 1e-12:
            # Antiparallel: rotate pi about any axis orthogonal to a.
            helper = np.array([1.0, 0.0, 0.0])
            if abs(a[0]) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            axis = np.cross(a, helper)
            return cls.from_axis_angle(axis, np.pi)
        return cls(np.concatenate(([w], np.cross(a, b))))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "UnitQuaternion":
        """Convert a rotation matrix (Shepperd's method, branch on max trace)."""
        m = np.asarray(m, dtype=np.float64).reshape(3, 3)
        t = np.trace(m)
        if t > 0.0:
            s = np.sqrt(t + 1.0) * 2.0
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                          (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
        elif m[1, 1] >= m[2, 2]:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                          0.25 * s, (m[1, 2] + m[2, 1]) / s])
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                          (m[1, 2] + m[2, 1]) / s, 0.25 * s])
        return cls(q)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.wxyz
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.wxyz * np.array([1.0, -1.0, -1.0, -1.0]))

    def compose(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self * other (other applied first)."""
        w1, x1, y1, z1 = self.wxyz
        w2, x2, y2, z2 = other.wxyz
        return UnitQuaternion(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def rotate(self, points: np.ndarray) -> np.ndarray:
        """Rotate a point (3,) or a stack of points (..., 3)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.to_matrix().T

    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        return 2.0 * float(np.arccos(np.clip(abs(self.w), -1.0, 1.0)))

    def __repr__(self):
        w, x, y, z = self.wxyz
        return f"UnitQuaternion(w={w:.6g}, x={x:.6g}, y={y:.6g}, z={z:.6g})"


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rigid motion of 3-space: rotation followed by translation (meters)."""

    rotation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(UnitQuaternion.identity(), np.asarray(t, dtype=np.float64))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: apply(compose(A, B), p) == apply(A, apply(B, p))."""
        return RigidTransform(
            self.rotation.compose(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        inv_rot = self.rotation.conjugate()
        return RigidTransform(inv_rot, -inv_rot.rotate(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a point (3,) or a stack of points (..., 3)."""
        return self.rotation.rotate(points) + self.translation

    def __repr__(self):
        t = self.translation
        return (f"RigidTransform({self.rotation!r}, "
                f"t=({t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}))")


def sample_uniform_rotation(rng: np.random.Generator) -> UnitQuaternion:
    """Draw a Haar-uniform rotation via the subgroup algorithm.

    Three uniform scalars map onto the unit 3-sphere (Shoemake); the resulting
    rotation angle follows the density (1 - cos(theta)) / pi on [0, pi].
    """
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    t2, t3 = 2.0 * np.pi * u2, 2.0 * np.pi * u3
    return UnitQuaternion(np.array([
        a * np.sin(t2), a * np.cos(t2), b * np.sin(t3), b * np.cos(t3),
    ]))


def quaternion_dot(q0: UnitQuaternion, q1: UnitQuaternion) -> float:
    return float(q0.wxyz @ q1.wxyz)


def slerp(q0: UnitQuaternion, q1: UnitQuaternion, alpha: float) -> UnitQuaternion:
    """Constant-angular-velocity interpolation along the shorter arc.

    alpha=0 returns q0 and alpha=1 returns q1 exactly.  When the endpoints are
    exactly on the shorter-arc boundary (dot == 0) the tie is broken toward
    q1's canonical sign, i.e. q1 is not negated.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    dot = quaternion_dot(q0, q1)
    end = q1.wxyz
    if dot < 0.0:
        end = -end
        dot = -dot
    dot = min(dot, 1.0)
    omega = np.arccos(dot)
    if omega < 1e-10:
        # Endpoints (nearly) coincide: nlerp is exact to first order.
        blended = (1.0 - alpha) * q0.wxyz + alpha * end
        return UnitQuaternion(blended)
    s = np.sin(omega)
    blended = (np.sin((1.0 - alpha) * omega) / s) * q0.wxyz \
        + (np.sin(alpha * omega) / s) * end
    return UnitQuaternion(blended)


def geodesic_distance(q0: UnitQuaternion, q1: UnitQuaternion) -> float:
    """Smallest rotation angle taking q0 to q1, in [0, pi].

    Equals 2 * arccos(|<q0, q1>|), evaluated in an atan2 form that stays
    accurate near 0 and pi where arccos of a clamped dot product loses
    precision.
    """
    a = q0.wxyz
    b = q1.wxyz if quaternion_dot(q0, q1) >= 0.0 else -q1.wxyz
    return 4.0 * float(np.arctan2(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def interpolate_transform(ta: RigidTransform, tb: RigidTransform,
                          alpha: float) -> RigidTransform:
    """Lerp the translation, SLERP the rotation."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return RigidTransform(
        slerp(ta.rotation, tb.rotation, alpha),
        (1.0 - alpha) * ta.translation + alpha * tb.translation,
    )


def swing_twist(q: UnitQuaternion, axis) -> tuple[UnitQuaternion, UnitQuaternion]:
    """Split q into swing * twist where twist rotates purely about ``axis``.

    ``axis`` must be unit length.  When q's rotation axis is exactly
    perpendicular to ``axis`` the twist is the identity and the swing is q.
    """
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-6:
        raise ValueError("axis must be unit length")
    projected = (q.vector @ axis) * axis
    raw = np.concatenate(([q.w], projected))
    norm = np.linalg.norm(raw)
    if norm < 1e-12:
        twist = UnitQuaternion.identity()
    else:
        twist = UnitQuaternion(raw)
    swing = q.compose(twist.conjugate())
    return swing, twist


def rotation_angle_about_axis(q: UnitQuaternion, axis) -> float:
    """Signed twist angle of q about ``axis``, in (-pi, pi]."""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    _, twist = swing_twist(q, axis)
    angle = 2.0 * np.arctan2(twist.vector @ axis, twist.w)
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return float(angle)
