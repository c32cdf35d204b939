"""Reduced floating-base humanoid model: bodies, joints, contacts, markers.

The default model has 14 hinge joints (3 per arm, 4 per leg) on a single
merged pelvis-torso base body, z up, x forward.  Every joint owns exactly one
child body.  All quantities are SI.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kinematics

DEFAULT_RANDOMIZATION = {
    "damping": (-0.50, 2.50),
    "mass": (-0.25, 0.25),
    "com": (-0.05, 0.05),
    "spring": (-0.10, 0.10),
    "friction": (-0.20, 0.20),
}


@dataclass(frozen=True)
class HumanoidModel:
    name: str
    body_names: list
    body_mass: np.ndarray          # (B,)
    body_com: np.ndarray           # (B, 3) in body frame
    body_inertia: np.ndarray       # (B, 3, 3) about the com, body frame
    body_parent_joint: np.ndarray  # (B,), -1 for the base
    joint_names: list
    joint_parent: np.ndarray       # (J,) parent body index
    joint_child: np.ndarray        # (J,) child body index
    joint_anchor: np.ndarray       # (J, 3) in parent frame
    joint_axis: np.ndarray         # (J, 3) unit, parent frame
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    joint_damping: np.ndarray
    joint_spring: np.ndarray       # passive stiffness; zero on the default model
    torque_limit: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    upper_joint_indices: np.ndarray
    arm_joint_indices: np.ndarray
    foot_bodies: np.ndarray        # (2,) left, right
    contact_body: np.ndarray       # (P,)
    contact_local: np.ndarray      # (P, 3)
    marker_names: list
    marker_body: np.ndarray
    marker_local: np.ndarray
    nominal_theta: np.ndarray
    nominal_height: float
    contact_stiffness: float = 3.0e4
    contact_damping: float = 300.0
    friction: float = 0.8
    tangential_damping: float = 5.0e4
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        for name in ("body_mass", "body_com", "body_inertia", "body_parent_joint",
                     "joint_parent", "joint_child", "joint_anchor", "joint_axis",
                     "joint_lower", "joint_upper", "joint_damping", "joint_spring",
                     "torque_limit", "kp", "kd", "upper_joint_indices",
                     "arm_joint_indices", "foot_bodies", "contact_body",
                     "contact_local", "marker_body", "marker_local",
                     "nominal_theta", "gravity"):
            arr = np.asarray(getattr(self, name))
            if name.endswith(("_parent", "_child", "_body", "_bodies", "_indices", "_parent_joint")):
                arr = arr.astype(np.int64)
            else:
                arr = arr.astype(np.float64)
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self):
        b, j = self.num_bodies, self.num_joints
        if self.body_mass.shape != (b,) or np.any(self.body_mass <= 0):
            raise ValueError("body masses must be positive")
        if self.joint_parent.shape != (j,) or self.joint_child.shape != (j,):
            raise ValueError("joint parent/child arrays must have length J")
        # children must come after parents so a single forward pass works
        if np.any(self.joint_child <= self.joint_parent):
            raise ValueError("bodies must be topologically ordered")
        norms = np.linalg.norm(self.joint_axis, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("joint axes must be unit vectors")
        if np.any(self.joint_lower >= self.joint_upper):
            raise ValueError("joint limits must satisfy lower < upper")
        if np.any((self.nominal_theta < self.joint_lower) | (self.nominal_theta > self.joint_upper)):
            raise ValueError("nominal pose violates joint limits")

    @property
    def num_bodies(self) -> int:
        return len(self.body_names)

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def num_markers(self) -> int:
        return len(self.marker_names)

    @property
    def lower_joint_indices(self) -> np.ndarray:
        upper = set(self.upper_joint_indices.tolist())
        return np.array([i for i in range(self.num_joints) if i not in upper], dtype=np.int64)

    def marker_chain(self, m: int) -> list:
        """Joints between marker m and the base, outermost first."""
        return kinematics.support_chain(self, int(self.marker_body[m]))

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)


# ---------------------------------------------------------------------------
# Default model construction


def _box_inertia(m, dx, dy, dz):
    return m / 12.0 * np.diag([dy * dy + dz * dz, dx * dx + dz * dz, dx * dx + dy * dy])


def _cylinder_inertia(m, r, length):
    # axis along z
    side = m * (3 * r * r + length * length) / 12.0
    return np.diag([side, side, m * r * r / 2.0])


def _sphere_inertia(m, r):
    return np.eye(3) * (0.4 * m * r * r)


def default_model() -> HumanoidModel:
    """Build the 14-joint reduced humanoid used throughout the package."""
    body_names = [
        "base",
        "l_shoulder_link", "l_upper_arm", "l_forearm",
        "r_shoulder_link", "r_upper_arm", "r_forearm",
        "l_hip_link", "l_thigh", "l_shin", "l_foot",
        "r_hip_link", "r_thigh", "r_shin", "r_foot",
    ]
    joint_names = [
        "l_shoulder_pitch", "l_shoulder_roll", "l_elbow",
        "r_shoulder_pitch", "r_shoulder_roll", "r_elbow",
        "l_hip_pitch", "l_hip_roll", "l_knee", "l_ankle",
        "r_hip_pitch", "r_hip_roll", "r_knee", "r_ankle",
    ]
    nb = len(body_names)
    nj = len(joint_names)

    upper_arm_len, forearm_len = 0.28, 0.26
    thigh_len, shin_len, sole_drop = 0.40, 0.40, 0.06
    shoulder_y, hip_y = 0.22, 0.10
    shoulder_z = 0.42

    mass = np.array([16.0,
                     0.4, 2.0, 1.2,
                     0.4, 2.0, 1.2,
                     0.5, 5.0, 3.0, 1.0,
                     0.5, 5.0, 3.0, 1.0])
    com = np.zeros((nb, 3))
    inertia = np.zeros((nb, 3, 3))
    com[0] = (0.0, 0.0, 0.25)
    inertia[0] = _box_inertia(16.0, 0.20, 0.30, 0.56)
    for side, s0 in (("l", 1), ("r", 4)):
        com[s0 + 1] = (0, 0, -upper_arm_len / 2)
        com[s0 + 2] = (0, 0, -forearm_len / 2)
        inertia[s0] = _sphere_inertia(0.4, 0.05)
        inertia[s0 + 1] = _cylinder_inertia(2.0, 0.04, upper_arm_len)
        inertia[s0 + 2] = _cylinder_inertia(1.2, 0.035, forearm_len)
    for side, s0 in (("l", 7), ("r", 11)):
        com[s0 + 1] = (0, 0, -thigh_len / 2)
        com[s0 + 2] = (0, 0, -shin_len / 2)
        com[s0 + 3] = (0.03, 0, -0.03)
        inertia[s0] = _sphere_inertia(0.5, 0.05)
        inertia[s0 + 1] = _cylinder_inertia(5.0, 0.06, thigh_len)
        inertia[s0 + 2] = _cylinder_inertia(3.0, 0.045, shin_len)
        inertia[s0 + 3] = _box_inertia(1.0, 0.28, 0.09, 0.06)

    x_axis = (1.0, 0.0, 0.0)
    y_axis = (0.0, 1.0, 0.0)
    joint_parent = np.zeros(nj, dtype=int)
    joint_child = np.arange(1, nj + 1)
    anchor = np.zeros((nj, 3))
    axis = np.zeros((nj, 3))

    def set_joint(j, parent, anc, ax):
        joint_parent[j] = parent
        anchor[j] = anc
        axis[j] = ax

    for jj, sy, b0 in ((0, shoulder_y, 1), (3, -shoulder_y, 4)):
        set_joint(jj, 0, (0.0, sy, shoulder_z), y_axis)          # shoulder pitch
        set_joint(jj + 1, b0, (0.0, 0.0, 0.0), x_axis)           # shoulder roll
        set_joint(jj + 2, b0 + 1, (0.0, 0.0, -upper_arm_len), y_axis)  # elbow
    for jj, sy, b0 in ((6, hip_y, 7), (10, -hip_y, 11)):
        set_joint(jj, 0, (0.0, sy, 0.0), y_axis)                 # hip pitch
        set_joint(jj + 1, b0, (0.0, 0.0, 0.0), x_axis)           # hip roll
        set_joint(jj + 2, b0 + 1, (0.0, 0.0, -thigh_len), y_axis)  # knee
        set_joint(jj + 3, b0 + 2, (0.0, 0.0, -shin_len), y_axis)   # ankle

    def per_joint(shoulder_pitch, shoulder_roll, elbow, hip_pitch, hip_roll, knee, ankle):
        arm = [shoulder_pitch, shoulder_roll, elbow]
        leg = [hip_pitch, hip_roll, knee, ankle]
        return np.array(arm + arm + leg + leg, dtype=float)

    lower = per_joint(-3.0, -1.5, -2.4, -1.5, -0.6, -0.05, -1.0)
    upper = per_joint(3.0, 1.5, 0.05, 1.5, 0.6, 2.2, 1.0)
    # the sagittal series stiffness through ankle+knee+hip must clear
    # m*g/h_com (~510 N/m) with margin, or small slopes shift the equilibrium
    # com outside the support polygon and the nominal stance tips over
    kp = per_joint(60, 60, 40, 350, 250, 500, 700)
    kd = per_joint(3, 3, 2, 14, 12, 14, 16)
    torque_limit = per_joint(40, 40, 30, 120, 120, 120, 80)
    damping = per_joint(2.0, 2.0, 2.0, 10.0, 10.0, 10.0, 10.0)

    nominal = np.zeros(nj)
    for hip in (6, 10):
        nominal[hip] = -0.2      # hip pitch
        nominal[hip + 2] = 0.4   # knee
        nominal[hip + 3] = -0.2  # ankle

    foot_bodies = np.array([10, 14])
    corners = [(x, y, -sole_drop) for x in (-0.14, 0.14) for y in (-0.045, 0.045)]
    contact_body = np.repeat(foot_bodies, 4)
    contact_local = np.array(corners * 2)

    marker_names = ["torso",
                    "l_elbow", "l_hand", "r_elbow", "r_hand",
                    "l_knee", "l_foot", "r_knee", "r_foot"]
    marker_body = np.array([0, 3, 3, 6, 6, 9, 10, 13, 14])
    marker_local = np.array([
        (0.0, 0.0, 0.50),
        (0.0, 0.0, 0.0), (0.0, 0.0, -forearm_len),
        (0.0, 0.0, 0.0), (0.0, 0.0, -forearm_len),
        (0.0, 0.0, 0.0), (0.03, 0.0, -sole_drop),
        (0.0, 0.0, 0.0), (0.03, 0.0, -sole_drop),
    ])

    model = HumanoidModel(
        name="reduced_humanoid",
        body_names=body_names,
        body_mass=mass,
        body_com=com,
        body_inertia=inertia,
        body_parent_joint=np.concatenate([[-1], np.arange(nj)]),
        joint_names=joint_names,
        joint_parent=joint_parent,
        joint_child=joint_child,
        joint_anchor=anchor,
        joint_axis=axis,
        joint_lower=lower,
        joint_upper=upper,
        joint_damping=damping,
        joint_spring=np.zeros(nj),
        torque_limit=torque_limit,
        kp=kp,
        kd=kd,
        upper_joint_indices=np.arange(6),
        arm_joint_indices=np.arange(6),
        foot_bodies=foot_bodies,
        contact_body=contact_body,
        contact_local=contact_local,
        marker_names=marker_names,
        marker_body=marker_body,
        marker_local=marker_local,
        nominal_theta=nominal,
        nominal_height=0.0,
    )
    # stand the nominal pose exactly on the ground plane
    fkres = kinematics.fk(model, np.zeros(3), np.array([1.0, 0, 0, 0]), nominal)
    lowest = min(kinematics.body_point(fkres, int(b), p)[2]
                 for b, p in zip(contact_body, contact_local))
    return dataclasses.replace(model, nominal_height=-lowest)


# ---------------------------------------------------------------------------
# Randomization (per training episode)


def randomize_model(model: HumanoidModel, rng: np.random.Generator,
                    ranges: dict | None = None) -> HumanoidModel:
    """Scale physical parameters by uniform fractional offsets.

    Inertia scales with the mass factor of its body.  Spring stiffness is
    randomized for models that have passive springs; on the default model the
    stiffness vector is zero so this is a no-op.
    """
    r = dict(DEFAULT_RANDOMIZATION)
    if ranges:
        r.update(ranges)

    def draw(key, shape=None):
        lo, hi = r[key]
        return rng.uniform(1.0 + lo, 1.0 + hi, size=shape)

    mass_scale = draw("mass", model.num_bodies)
    return dataclasses.replace(
        model,
        body_mass=model.body_mass * mass_scale,
        body_inertia=model.body_inertia * mass_scale[:, None, None],
        body_com=model.body_com * draw("com", (model.num_bodies, 3)),
        joint_damping=model.joint_damping * draw("damping", model.num_joints),
        joint_spring=model.joint_spring * draw("spring", model.num_joints),
        friction=float(model.friction * draw("friction")),
    )


# ---------------------------------------------------------------------------
# Serialization

_LIST_FIELDS = ("body_names", "joint_names", "marker_names")


def model_to_dict(model: HumanoidModel) -> dict:
    doc = {}
    for f in dataclasses.fields(model):
        val = getattr(model, f.name)
        if isinstance(val, np.ndarray):
            doc[f.name] = val.tolist()
        else:
            doc[f.name] = val
    return doc


def model_from_dict(doc: dict) -> HumanoidModel:
    kwargs = dict(doc)
    for f in dataclasses.fields(HumanoidModel):
        if f.name not in kwargs:
            raise ValueError(f"model file missing field {f.name!r}")
        if f.name not in _LIST_FIELDS and f.name != "name" and isinstance(kwargs[f.name], list):
            kwargs[f.name] = np.asarray(kwargs[f.name])
    return HumanoidModel(**kwargs)


def save_model(model: HumanoidModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> HumanoidModel:
    return model_from_dict(json.loads(Path(path).read_text()))
