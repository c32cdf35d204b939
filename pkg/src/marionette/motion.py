"""Pose, mask, motion, and directive types plus the mask/windowing algebra.

A pose is flattened to a vector in the fixed order (theta, theta_dot, v, w, b),
giving 2J+6 entries for a J-joint model.  Masks are binary vectors in the same
layout; masked dimensions of a directive frame are stored as exact zeros.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PATTERNS = ("FULL", "LOCO", "UPPER_STAND", "UPPER_LOCO")

MOTION_DT = 0.02  # 50 Hz frame grid


class MotionFormatError(ValueError):
    """Raised for malformed motion/directive files or dimension mismatches."""


def pose_dim(num_joints: int) -> int:
    """Length of the flattened pose vector: theta, theta_dot, v, w, b."""
    return 2 * num_joints + 6


@dataclass(frozen=True)
class Pose:
    """Single target tuple: joint angles/velocities plus root command channels.

    theta, theta_dot are length J (rad, rad/s); v is the planar root velocity
    (m/s, heading frame); w the turn rate (rad/s); b = (roll, pitch, height).
    """

    theta: np.ndarray
    theta_dot: np.ndarray
    v: np.ndarray
    w: float
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta_dot", np.asarray(self.theta_dot, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.theta.shape != self.theta_dot.shape:
            raise ValueError("theta and theta_dot lengths differ")
        if self.v.shape != (2,) or self.b.shape != (3,):
            raise ValueError("v must have length 2 and b length 3")
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("pose contains non-finite values")

    @property
    def num_joints(self) -> int:
        return self.theta.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.theta_dot, self.v, [self.w], self.b])

    @staticmethod
    def from_vector(vec: np.ndarray, num_joints: int) -> "Pose":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (pose_dim(num_joints),):
            raise ValueError(f"expected vector of length {pose_dim(num_joints)}, got {vec.shape}")
        j = num_joints
        return Pose(
            theta=vec[:j],
            theta_dot=vec[j : 2 * j],
            v=vec[2 * j : 2 * j + 2],
            w=vec[2 * j + 2],
            b=vec[2 * j + 3 :],
        )

    @staticmethod
    def zero(num_joints: int) -> "Pose":
        return Pose.from_vector(np.zeros(pose_dim(num_joints)), num_joints)


@dataclass(frozen=True)
class Mask:
    """Binary selector over a flattened pose vector."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.int8))

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def all_ones(self) -> bool:
        return bool(np.all(self.bits == 1))

    def slice_theta(self, num_joints: int) -> np.ndarray:
        return self.bits[:num_joints]

    def slice_root(self, num_joints: int) -> np.ndarray:
        """The (v, w, b) bits."""
        return self.bits[2 * num_joints :]


def make_mask_pattern(pattern: str, model) -> Mask:
    """Build the mask for one of the four named directive patterns.

    FULL selects everything.  LOCO selects only the root command channels
    (v, w, b).  UPPER_STAND / UPPER_LOCO select the model's upper-body joint
    angles and velocities plus the root channels; they differ only in the
    command content the caller attaches, not in the bits.
    """
    j = model.num_joints
    d = pose_dim(j)
    if pattern == "FULL":
        return Mask(np.ones(d, dtype=np.int8))
    bits = np.zeros(d, dtype=np.int8)
    bits[2 * j :] = 1  # v, w, b
    if pattern == "LOCO":
        return Mask(bits)
    if pattern in ("UPPER_STAND", "UPPER_LOCO"):
        upper = np.asarray(model.upper_joint_indices, dtype=int)
        bits[upper] = 1
        bits[j + upper] = 1  # theta_dot follows theta's bits
        return Mask(bits)
    raise ValueError(f"unknown mask pattern {pattern!r}")


def apply_mask(pose: Pose, mask: Mask) -> Pose:
    """Zero the masked-out dimensions of a pose.  Idempotent."""
    vec = pose.as_vector()
    if len(mask) != vec.shape[0]:
        raise ValueError("mask length does not match pose dimension")
    return Pose.from_vector(vec * mask.bits, pose.num_joints)


@dataclass(frozen=True)
class Motion:
    """Uniformly sampled pose sequence at 50 Hz.

    frames is packed as an (H, 2J+6) array in the canonical flattening order.
    """

    frames: np.ndarray
    num_joints: int
    dt: float = MOTION_DT
    source_tag: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or frames.shape[1] != pose_dim(self.num_joints):
            raise ValueError("frames must be (H, 2J+6)")
        if frames.shape[0] < 2:
            raise ValueError("motion needs at least 2 frames")
        if not np.all(np.isfinite(frames)):
            raise ValueError("motion contains non-finite values")

    @property
    def horizon(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return (self.horizon - 1) * self.dt

    def pose(self, i: int) -> Pose:
        return Pose.from_vector(self.frames[i], self.num_joints)


@dataclass(frozen=True)
class Directive:
    """A masked motion plus its per-frame masks and cycling state."""

    motion: Motion
    masks: np.ndarray  # (H, 2J+6) of 0/1
    pattern: str
    start_offset: int = 0

    def __post_init__(self):
        masks = np.asarray(self.masks)
        if not np.all((masks == 0) | (masks == 1)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "masks", masks.astype(np.int8))
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.masks.shape != self.motion.frames.shape:
            raise ValueError("masks shape must match motion frames")
        if np.any(self.motion.frames[self.masks == 0] != 0.0):
            raise ValueError("masked dimensions must be exactly zero")

    @property
    def horizon(self) -> int:
        return self.motion.horizon

    @property
    def num_joints(self) -> int:
        return self.motion.num_joints


@dataclass(frozen=True)
class DirectiveStep:
    """One frame of a directive, as presented to the controller."""

    pose_hat: Pose
    mask: Mask
    frame_index: int

    @property
    def standing(self) -> bool:
        """True when the root command asks for zero planar velocity.

        A masked-out root command also counts as standing.
        """
        j = self.pose_hat.num_joints
        root_bits = self.mask.slice_root(j)
        if root_bits[0] == 0 and root_bits[1] == 0:
            return True
        return float(np.hypot(*self.pose_hat.v)) == 0.0


def make_directive(motion: Motion, pattern: str, model, start_offset: int = 0) -> Directive:
    """Mask a motion with a named pattern."""
    mask = make_mask_pattern(pattern, model)
    masks = np.tile(mask.bits, (motion.horizon, 1))
    frames = motion.frames * mask.bits
    masked = Motion(frames, motion.num_joints, motion.dt, motion.source_tag)
    return Directive(masked, masks, pattern, start_offset)


def directive_step(directive: Directive, t: int) -> DirectiveStep:
    """Cycle through the directive: frame (t + start_offset) mod H."""
    if t < 0:
        raise ValueError("step index must be non-negative")
    h = directive.horizon
    idx = (t + directive.start_offset) % h
    return DirectiveStep(
        pose_hat=directive.motion.pose(idx),
        mask=Mask(directive.masks[idx]),
        frame_index=idx,
    )


def resample_series(times: np.ndarray, values: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear resampling of a vector series onto a uniform dt grid.

    The grid starts at times[0] and ends at the last multiple of dt that does
    not overshoot times[-1] (within a small epsilon).  Returns (grid, samples).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise ValueError("need at least 2 timestamped frames")
    if np.any(np.diff(times) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if values.shape[0] != times.shape[0]:
        raise ValueError("values and timestamps lengths differ")
    span = times[-1] - times[0]
    steps = int(np.floor(span / dt + 1e-9))
    grid = times[0] + dt * np.arange(steps + 1)
    grid = np.minimum(grid, times[-1])  # guard the last point against roundoff
    out = np.empty((grid.shape[0],) + values.shape[1:])
    for k in range(values.shape[1]):
        out[:, k] = np.interp(grid, times, values[:, k])
    return grid, out


def resample_motion(times: np.ndarray, poses: np.ndarray, num_joints: int, dt: float = MOTION_DT,
                    source_tag: str = "") -> Motion:
    """Resample timestamped pose vectors onto the uniform motion grid."""
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != pose_dim(num_joints):
        raise ValueError("poses must be (N, 2J+6)")
    _, frames = resample_series(times, poses, dt)
    if frames.shape[0] < 2:
        raise ValueError("resampled motion has fewer than 2 frames")
    return Motion(frames, num_joints, dt, source_tag)


# ---------------------------------------------------------------------------
# File formats


def _frames_to_lists(motion: Motion) -> list:
    j = motion.num_joints
    rows = []
    for i in range(motion.horizon):
        p = motion.pose(i)
        rows.append([p.theta.tolist(), p.theta_dot.tolist(), p.v.tolist(), p.w, p.b.tolist()])
    return rows


def _frames_from_lists(rows: list, num_joints: int) -> np.ndarray:
    frames = np.empty((len(rows), pose_dim(num_joints)))
    for i, row in enumerate(rows):
        if len(row) != 5:
            raise MotionFormatError(f"frame {i}: expected [theta, theta_dot, v, w, b]")
        theta, theta_dot, v, w, b = row
        if len(theta) != num_joints or len(theta_dot) != num_joints:
            raise MotionFormatError(
                f"frame {i}: joint count {len(theta)} does not match model ({num_joints})")
        if len(v) != 2 or len(b) != 3:
            raise MotionFormatError(f"frame {i}: bad v/b lengths")
        frames[i] = np.concatenate([theta, theta_dot, v, [float(w)], b])
    return frames


def motion_to_dict(motion: Motion, model_name: str) -> dict:
    return {
        "model": model_name,
        "dt": motion.dt,
        "frames": _frames_to_lists(motion),
        "source_tag": motion.source_tag,
    }


def motion_from_dict(doc: dict, model=None) -> Motion:
    for key in ("model", "dt", "frames"):
        if key not in doc:
            raise MotionFormatError(f"missing field {key!r}")
    rows = doc["frames"]
    if not isinstance(rows, list) or len(rows) < 2:
        raise MotionFormatError("frames must be a list with at least 2 entries")
    try:
        num_joints = len(rows[0][0])
    except (TypeError, IndexError) as exc:
        raise MotionFormatError("malformed frame rows") from exc
    if model is not None:
        if doc["model"] != model.name:
            raise MotionFormatError(f"file is for model {doc['model']!r}, not {model.name!r}")
        if num_joints != model.num_joints:
            raise MotionFormatError(
                f"file has {num_joints} joints, model has {model.num_joints}")
    frames = _frames_from_lists(rows, num_joints)
    return Motion(frames, num_joints, float(doc["dt"]), doc.get("source_tag", ""))


def save_motion(motion: Motion, path, model_name: str) -> None:
    Path(path).write_text(json.dumps(motion_to_dict(motion, model_name)))


def load_motion(path, model=None) -> Motion:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MotionFormatError(f"{path}: not valid JSON ({exc})") from exc
    return motion_from_dict(doc, model)


def save_directive(directive: Directive, path, model_name: str) -> None:
    doc = motion_to_dict(directive.motion, model_name)
    doc["pattern"] = directive.pattern
    doc["start_offset"] = directive.start_offset
    doc["masks"] = directive.masks.tolist()
    Path(path).write_text(json.dumps(doc))


def load_directive(path, model=None) -> Directive:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MotionFormatError(f"{path}: not valid JSON ({exc})") from exc
    if "pattern" not in doc:
        raise MotionFormatError("directive file missing 'pattern'")
    motion = motion_from_dict(doc, model)
    masks = np.asarray(doc.get("masks", []), dtype=np.int8)
    if masks.size == 0:
        raise MotionFormatError("directive file missing 'masks'")
    return Directive(motion, masks, doc["pattern"], int(doc.get("start_offset", 0)))
