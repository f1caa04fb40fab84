"""World/body frames, yaw-only rigid transforms and anchor layouts.

World frame: z up, ground plane at z = 0. Body frame: x forward, y left, z up;
yaw is positive counter-clockwise seen from above.
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .config import MAX_OFFSET_NORM, RESPONDER_HEIGHT, SINGLE_INITIATOR_OFFSETS


class GeometryError(ValueError):
    """Invalid pose, offset or layout."""


def vec3(x, y=None, z=None):
    """Build a finite float vector of shape (3,) from xyz or any 3-sequence."""
    if y is None and z is None:
        arr = np.array(x, dtype=float).reshape(-1)
    else:
        arr = np.array([x, y, z], dtype=float)
    if arr.shape != (3,):
        raise GeometryError(f"expected 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"non-finite vector {arr.tolist()}")
    return arr


def normalize_angle(theta):
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(float(theta), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation_z(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_z_derivative(theta):
    """d R_z / d theta."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        if not math.isfinite(self.yaw):
            raise GeometryError(f"non-finite yaw {self.yaw}")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))


@dataclass(frozen=True, eq=False)
class RigidOffset:
    body_offset: np.ndarray

    def __post_init__(self):
        offset = vec3(self.body_offset)
        if np.linalg.norm(offset) >= MAX_OFFSET_NORM:
            raise GeometryError(
                f"initiator offset {offset.tolist()} exceeds {MAX_OFFSET_NORM} m"
            )
        object.__setattr__(self, "body_offset", offset)


@dataclass(frozen=True, eq=False)
class TransceiverLayout:
    """Initiator lever arms on the UAV and responder positions in the world."""

    initiators: Tuple[RigidOffset, ...]
    responders: Tuple[np.ndarray, ...]
    _resp_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        initiators = tuple(
            o if isinstance(o, RigidOffset) else RigidOffset(o) for o in self.initiators
        )
        responders = tuple(vec3(q) for q in self.responders)
        if not initiators:
            raise GeometryError("layout needs at least one initiator")
        if not responders:
            raise GeometryError("layout needs at least one responder")
        _check_distinct([q for q in responders], "responder positions")
        if len(initiators) > 1:
            _check_distinct([o.body_offset for o in initiators], "initiator offsets")
        object.__setattr__(self, "initiators", initiators)
        object.__setattr__(self, "responders", responders)
        object.__setattr__(self, "_resp_array", np.array(responders))

    @property
    def n_initiators(self):
        return len(self.initiators)

    @property
    def n_responders(self):
        return len(self.responders)

    def responders_array(self):
        return self._resp_array.copy()

    def initiators_array(self):
        return np.array([o.body_offset for o in self.initiators])

    def to_dict(self):
        return {
            "initiators": [o.body_offset.tolist() for o in self.initiators],
            "responders": [q.tolist() for q in self.responders],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            initiators=tuple(RigidOffset(o) for o in data["initiators"]),
            responders=tuple(vec3(q) for q in data["responders"]),
        )


def _check_distinct(points, what):
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            if np.array_equal(points[a], points[b]):
                raise GeometryError(f"{what} {a} and {b} coincide")


def apply_pose(pose, offset):
    """World position of an initiator: R_z(yaw) * offset + position."""
    body = offset.body_offset if isinstance(offset, RigidOffset) else vec3(offset)
    if not body.any():
        return pose.position.copy()
    return rotation_z(pose.yaw) @ body + pose.position


def square_anchor_layout(separation, height=RESPONDER_HEIGHT):
    """Four responders on the corners of a square of side `separation` centred at the origin."""
    if not separation > 0:
        raise GeometryError(f"anchor separation must be positive, got {separation}")
    h = separation / 2.0
    return [
        vec3(-h, -h, height),
        vec3(h, -h, height),
        vec3(h, h, height),
        vec3(-h, h, height),
    ]


def default_layout(separation, initiator_offsets=SINGLE_INITIATOR_OFFSETS, height=RESPONDER_HEIGHT):
    """Square responder layout with the given initiator lever arms."""
    return TransceiverLayout(
        initiators=tuple(RigidOffset(o) for o in initiator_offsets),
        responders=tuple(square_anchor_layout(separation, height)),
    )
