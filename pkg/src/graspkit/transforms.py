"""Rigid-body poses and quaternion math.

Conventions used throughout the package:

- Quaternions are unit quaternions in (w, x, y, z) order.
- Positions are 3-vectors in meters.
- Angles are radians.
- A ``Pose`` is the transform of a child frame expressed in its parent
  frame; ``compose`` chains transforms left-to-right (parent first).

All functions return fresh arrays and never mutate their inputs, so poses
can be shared freely across threads.
"""

from __future__ import annotations

import math

import numpy as np

_QUAT_NORM_TOL = 1e-9


def quat_normalize(q):
    """Return q scaled to unit norm. Raises on (near-)zero quaternions."""
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n < 1e-12:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_mul(q1, q2):
    """Hamilton product q1 * q2, both (w, x, y, z)."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q):
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q (expanded sandwich product)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (q_vec x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + q_vec x t
    return np.array(
        [
            vx + w * tx + y * tz - z * ty,
            vy + w * ty + z * tx - x * tz,
            vz + w * tz + x * ty - y * tx,
        ]
    )


def quat_from_axis_angle(axis, angle):
    """Unit quaternion for a rotation of ``angle`` about unit ``axis``."""
    half = 0.5 * angle
    s = math.sin(half)
    ax, ay, az = axis
    return np.array([math.cos(half), ax * s, ay * s, az * s])


def quat_to_axis_angle(q):
    """Rotation vector (axis * angle, angle in [0, pi]) of unit quaternion q."""
    w, x, y, z = q
    if w < 0.0:  # take the short way around
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    if s < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(s, w)
    return np.array([x, y, z]) * (angle / s)


def quat_angle(q1, q2):
    """Geodesic angle between two unit quaternions, in [0, pi].

    Uses the atan2 form of 2*acos(|<q1, q2>|), which stays accurate down to
    machine precision for nearly identical rotations; the absolute values
    handle the double cover (q and -q are the same rotation).
    """
    rel = quat_mul(q1, quat_conj(q2))
    return 2.0 * math.atan2(math.sqrt(rel[1] ** 2 + rel[2] ** 2 + rel[3] ** 2), abs(rel[0]))


def quat_from_z_rotation(angle):
    return np.array([math.cos(0.5 * angle), 0.0, 0.0, math.sin(0.5 * angle)])


def compose_pq(p1, q1, p2, q2):
    """Raw pose composition on (pos, quat) pairs, skipping normalization.

    Unit-quaternion products drift by ~1e-16 per multiply, so callers that
    chain a bounded number of these and normalize once at the end stay well
    inside the 1e-9 norm invariant.
    """
    return p1 + quat_rotate(q1, p2), quat_mul(q1, q2)


def quat_rotate_batch(q, vecs):
    """Rotate a stack of vectors (n, 3) by one unit quaternion."""
    w, x, y, z = q
    qv = np.array([x, y, z])
    t = 2.0 * np.cross(np.broadcast_to(qv, vecs.shape), vecs)
    return vecs + w * t + np.cross(np.broadcast_to(qv, t.shape), t)


def quat_mul_batch(q, quats):
    """Hamilton product q * each row of (n, 4)."""
    w1, x1, y1, z1 = q
    w2, x2, y2, z2 = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=1,
    )


def quat_to_matrix(q):
    """3x3 rotation matrix of unit quaternion q."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


class Pose:
    """Position + unit quaternion rigid transform.

    The quaternion is re-normalized on construction so accumulated error
    from long composition chains stays below 1e-9.
    """

    __slots__ = ("pos", "quat")

    def __init__(self, pos=None, quat=None):
        self.pos = np.zeros(3) if pos is None else np.asarray(pos, dtype=float).copy()
        if quat is None:
            self.quat = np.array([1.0, 0.0, 0.0, 0.0])
        else:
            self.quat = quat_normalize(quat)
        if self.pos.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {self.pos.shape}")

    @staticmethod
    def identity():
        return Pose()

    def compose(self, other: "Pose") -> "Pose":
        """self * other: apply ``other`` in the frame defined by ``self``."""
        return Pose(
            self.pos + quat_rotate(self.quat, other.pos),
            quat_mul(self.quat, other.quat),
        )

    def inverse(self) -> "Pose":
        qc = quat_conj(self.quat)
        return Pose(-quat_rotate(qc, self.pos), qc)

    def transform_point(self, p):
        return self.pos + quat_rotate(self.quat, np.asarray(p, dtype=float))

    def to_matrix(self):
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.quat)
        m[:3, 3] = self.pos
        return m

    def almost_equal(self, other: "Pose", tol_pos=1e-9, tol_rot=1e-9) -> bool:
        return (
            float(np.linalg.norm(self.pos - other.pos)) <= tol_pos
            and quat_angle(self.quat, other.quat) <= tol_rot
        )

    def to_dict(self):
        return {"pos": [float(v) for v in self.pos], "quat": [float(v) for v in self.quat]}

    @staticmethod
    def from_dict(d) -> "Pose":
        return Pose(d["pos"], d["quat"])

    def copy(self) -> "Pose":
        return Pose(self.pos, self.quat)

    def __repr__(self):
        p = ", ".join(f"{v:.4f}" for v in self.pos)
        q = ", ".join(f"{v:.4f}" for v in self.quat)
        return f"Pose(pos=[{p}], quat=[{q}])"


def pose_error(target: Pose, current: Pose):
    """6-vector pose error (linear, angular) used by the IK loop.

    Linear part is the position difference; angular part is the rotation
    vector of target * current^-1, i.e. the world-frame rotation that maps
    ``current`` onto ``target``.
    """
    dq = quat_mul(target.quat, quat_conj(current.quat))
    return np.concatenate([target.pos - current.pos, quat_to_axis_angle(dq)])
