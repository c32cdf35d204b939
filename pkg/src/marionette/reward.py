"""Reward terms for directive tracking: task, style, and regularization rows.

Thirteen named terms with fixed weights.  Style rows are skipped entirely when
the directive mask selects every dimension (a fully specified whole-body
target); they are recorded as absent rather than zero so the total only sums
active terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics
from .model import HumanoidModel
from .motion import DirectiveStep
from .rotations import (matrix_to_quat, quat_from_rpy, rpy_from_quat, yaw_of,
                        yaw_quat)

REWARD_WEIGHTS = {
    "xy_velocity": 0.15,
    "tracking": 0.2,
    "yaw": 0.1,
    "roll_pitch": 0.2,
    "height": 0.05,
    "feet_orientation": 0.05,
    "feet_position": 0.05,
    "feet_airtime": 1.0,
    "feet_contact": 0.1,
    "arm": 0.03,
    "base_acceleration": 0.1,
    "action_difference": 0.02,
    "torque": 0.02,
}

STYLE_TERMS = ("feet_orientation", "feet_position", "feet_airtime",
               "feet_contact", "arm")

# each foot's airtime credit is clipped below; the raw linear penalty
# otherwise dominates every other signal early in training
AIRTIME_TARGET = 0.4
AIRTIME_FLOOR = -0.4

SINGLE_SUPPORT_WINDOW = 0.2  # s of history consulted by the feet-contact term


@dataclass(frozen=True)
class RewardContext:
    """Measurements the reward needs beyond the instantaneous state.

    target_heading is the integral of the commanded turn rate; base_acc the
    finite-difference base acceleration over the control step; touchdown and
    air_at_touchdown come from the contact bookkeeping of the same step;
    single_support_recent says whether exactly one foot was in contact at any
    point in the last 0.2 s; mean_abs_tau is the per-joint mean |torque| over
    the inner steps.
    """

    target_heading: float
    base_acc: np.ndarray
    touchdown: np.ndarray
    air_at_touchdown: np.ndarray
    single_support_recent: bool
    mean_abs_tau: np.ndarray


@dataclass(frozen=True)
class RewardBreakdown:
    """Named term values plus the weights that were in effect."""

    terms: dict
    weights: dict

    @property
    def total(self) -> float:
        return float(sum(self.weights[k] * v for k, v in self.terms.items()))


def quaternion_distance(q1: np.ndarray, q2: np.ndarray) -> float:
    """1 - <q1,q2>^2: zero iff same rotation, 1 at 180 degrees, sign-blind."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    for q in (q1, q2):
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError("quaternion_distance requires unit quaternions")
    dot = float(np.dot(q1, q2))
    return max(0.0, 1.0 - dot * dot)


def tracking_reward(theta: np.ndarray, theta_hat: np.ndarray,
                    mask_theta: np.ndarray) -> float:
    """exp(-1.5 * ||(theta - theta_hat) * mask||); masked joints drop out."""
    err = (np.asarray(theta, float) - np.asarray(theta_hat, float)) \
        * np.asarray(mask_theta, float)
    return float(np.exp(-1.5 * np.linalg.norm(err)))


def root_commands(step: DirectiveStep, model: HumanoidModel):
    """Commanded (v, w, roll, pitch, height) with defaults for masked bits.

    The four named patterns never mask the root channels, but synthetic
    directives may; a masked command falls back to stand-in-place defaults.
    """
    j = step.pose_hat.num_joints
    bits = step.mask.slice_root(j)
    v = np.where(bits[0:2] == 1, step.pose_hat.v, 0.0)
    w = float(step.pose_hat.w) if bits[2] == 1 else 0.0
    roll = float(step.pose_hat.b[0]) if bits[3] == 1 else 0.0
    pitch = float(step.pose_hat.b[1]) if bits[4] == 1 else 0.0
    height = float(step.pose_hat.b[2]) if bits[5] == 1 else model.nominal_height
    return v, w, roll, pitch, height


def default_foot_pose(model: HumanoidModel) -> np.ndarray:
    """Nominal-stance foot positions in the heading frame, (2, 3).

    x, y are offsets from the base's ground-plane position; z is absolute.
    """
    res = kinematics.fk(model, np.zeros(3), np.array([1.0, 0, 0, 0]),
                        model.nominal_theta)
    out = np.empty((2, 3))
    for f, body in enumerate(model.foot_bodies):
        p = res.body_pos[int(body)].copy()
        p[2] += model.nominal_height
        out[f] = p
    return out


def term_rewards(state, step: DirectiveStep, ctx: RewardContext,
                 prev_action: np.ndarray, action: np.ndarray,
                 model: HumanoidModel) -> RewardBreakdown:
    """Evaluate every active term for one control step."""
    terms = {}
    standing = step.standing
    v_cmd, _, roll_cmd, pitch_cmd, height_cmd = root_commands(step, model)
    yaw = yaw_of(state.base_quat)

    # --- task rows ---
    v_xy = state.base_linvel[0:2]
    if standing:
        terms["xy_velocity"] = float(np.exp(-5.0 * float(v_xy @ v_xy)))
    else:
        c, s = np.cos(yaw), np.sin(yaw)
        v_world = np.array([c * v_cmd[0] - s * v_cmd[1],
                            s * v_cmd[0] + c * v_cmd[1]])
        dv = v_xy - v_world
        terms["xy_velocity"] = float(np.exp(-5.0 * float(dv @ dv)))

    j = model.num_joints
    terms["tracking"] = tracking_reward(state.theta, step.pose_hat.theta,
                                        step.mask.slice_theta(j))

    qd_yaw = quaternion_distance(yaw_quat(yaw), yaw_quat(ctx.target_heading))
    terms["yaw"] = float(np.exp(-300.0 * qd_yaw))

    roll, pitch, _ = rpy_from_quat(state.base_quat)
    qd_rp = quaternion_distance(quat_from_rpy(roll, pitch, 0.0),
                                quat_from_rpy(roll_cmd, pitch_cmd, 0.0))
    terms["roll_pitch"] = float(np.exp(-30.0 * qd_rp))

    terms["height"] = float(np.exp(-20.0 * abs(state.base_pos[2] - height_cmd)))

    # --- style rows, skipped for fully specified directives ---
    if not step.mask.all_ones:
        fkres = kinematics.fk(model, state.base_pos, state.base_quat, state.theta)
        c_feet = default_foot_pose(model)
        yaw_rot = np.array([[np.cos(yaw), -np.sin(yaw), 0.0],
                            [np.sin(yaw), np.cos(yaw), 0.0],
                            [0.0, 0.0, 1.0]])

        orient_err = 0.0
        for body in model.foot_bodies:
            rel = yaw_rot.T @ fkres.body_rot[int(body)]
            orient_err += float(np.abs(rpy_from_quat(matrix_to_quat(rel))).sum())
        terms["feet_orientation"] = float(np.exp(-orient_err))

        if standing:
            pos_err = 0.0
            for f, body in enumerate(model.foot_bodies):
                expected = np.array([state.base_pos[0], state.base_pos[1], 0.0]) \
                    + yaw_rot @ np.array([c_feet[f, 0], c_feet[f, 1], 0.0])
                expected[2] = c_feet[f, 2]
                pos_err += float(np.abs(fkres.body_pos[int(body)] - expected).sum())
            terms["feet_position"] = float(np.exp(-3.0 * pos_err))
        else:
            terms["feet_position"] = 1.0

        if standing:
            terms["feet_airtime"] = 1.0
            terms["feet_contact"] = 1.0
        else:
            credit = 0.0
            for f in range(2):
                if ctx.touchdown[f]:
                    credit += max(float(ctx.air_at_touchdown[f]) - AIRTIME_TARGET,
                                  AIRTIME_FLOOR)
            terms["feet_airtime"] = credit
            terms["feet_contact"] = 1.0 if ctx.single_support_recent else 0.0

        arm_theta = state.theta[model.arm_joint_indices]
        terms["arm"] = float(np.exp(-3.0 * np.linalg.norm(arm_theta)))

    # --- regularization rows ---
    terms["base_acceleration"] = float(np.exp(-0.01 * np.abs(ctx.base_acc).sum()))
    terms["action_difference"] = float(
        np.exp(-0.02 * np.abs(np.asarray(action, float)
                              - np.asarray(prev_action, float)).sum()))
    ratio = np.abs(ctx.mean_abs_tau) / model.torque_limit
    terms["torque"] = float(np.exp(-0.02 * float(np.mean(ratio))))

    return RewardBreakdown(terms, dict(REWARD_WEIGHTS))


def total_reward(breakdown: RewardBreakdown, directive_mask) -> float:
    """Weighted sum of the active terms; rejects gating mismatches."""
    has_style = any(k in breakdown.terms for k in STYLE_TERMS)
    if directive_mask.all_ones and has_style:
        raise ValueError("style terms present for a fully specified directive")
    if not directive_mask.all_ones and not has_style:
        raise ValueError("style terms missing for a partial directive")
    return breakdown.total
