"""Forward kinematics and point Jacobians for a revolute tree.

Conventions: every joint is a hinge; at zero angle the child frame coincides
in orientation with its parent, with the child origin at the joint anchor.
The joint axis is expressed in the parent frame (equal to the child frame
axis at zero angle).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotations import quat_to_matrix


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues' formula for a unit axis."""
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    return np.array([
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [x * y * t + z * s, c + y * y * t, y * z * t - x * s],
        [x * z * t - y * s, y * z * t + x * s, c + z * z * t],
    ])


@dataclass
class FkResult:
    body_pos: np.ndarray    # (B, 3) world body-frame origins
    body_rot: np.ndarray    # (B, 3, 3) world body-frame rotations
    joint_pos: np.ndarray   # (J, 3) world joint anchors
    joint_axis: np.ndarray  # (J, 3) world joint axes


def fk(model, base_pos: np.ndarray, base_quat: np.ndarray, theta: np.ndarray) -> FkResult:
    """Propagate frames from the floating base through every joint."""
    nb = model.num_bodies
    nj = model.num_joints
    body_pos = np.zeros((nb, 3))
    body_rot = np.zeros((nb, 3, 3))
    joint_pos = np.zeros((nj, 3))
    joint_axis = np.zeros((nj, 3))
    body_pos[0] = base_pos
    body_rot[0] = quat_to_matrix(base_quat)
    for j in range(nj):
        p = model.joint_parent[j]
        child = model.joint_child[j]
        anchor_w = body_pos[p] + body_rot[p] @ model.joint_anchor[j]
        axis_w = body_rot[p] @ model.joint_axis[j]
        joint_pos[j] = anchor_w
        joint_axis[j] = axis_w
        body_rot[child] = body_rot[p] @ axis_angle_matrix(model.joint_axis[j], theta[j])
        body_pos[child] = anchor_w
    return FkResult(body_pos, body_rot, joint_pos, joint_axis)


def body_point(fkres: FkResult, body: int, local: np.ndarray) -> np.ndarray:
    return fkres.body_pos[body] + fkres.body_rot[body] @ local


def marker_positions(model, fkres: FkResult) -> np.ndarray:
    out = np.zeros((len(model.marker_names), 3))
    for m in range(len(model.marker_names)):
        out[m] = body_point(fkres, model.marker_body[m], model.marker_local[m])
    return out


def support_chain(model, body: int) -> list[int]:
    """Joint indices on the path from a body up to the base, outermost first."""
    chain = []
    while body != 0:
        j = int(model.body_parent_joint[body])
        chain.append(j)
        body = int(model.joint_parent[j])
    return chain


def point_jacobian(model, fkres: FkResult, body: int, point_world: np.ndarray) -> np.ndarray:
    """Jacobian of a body-fixed world point w.r.t. (base pos, base rot, theta).

    Base rotation columns use world-frame angular increments, so the result
    maps (dp_base, omega * dt, dtheta) -> dpoint.  Shape (3, 6 + J).
    """
    nj = model.num_joints
    jac = np.zeros((3, 6 + nj))
    jac[:, 0:3] = np.eye(3)
    r = point_world - fkres.body_pos[0]
    for i, e in enumerate(np.eye(3)):
        jac[:, 3 + i] = np.cross(e, r)
    for j in support_chain(model, body):
        jac[:, 6 + j] = np.cross(fkres.joint_axis[j], point_world - fkres.joint_pos[j])
    return jac
