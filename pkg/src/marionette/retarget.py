"""Source keypoint clips onto the reduced humanoid via damped-least-squares IK.

Cold frames are bootstrapped analytically: the base pose is fitted from the
torso marker plus limb-length sphere constraints, then each limb is solved in
closed form, and damped least squares polishes the result.  Frames are solved
in order with warm starting from the last converged solution; non-converged
frames are dropped and the survivors are linearly resampled onto the 50 Hz
motion grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kinematics
from .model import HumanoidModel
from .motion import Motion, MotionFormatError, resample_series
from .rotations import (quat_multiply, quat_normalize, quat_to_matrix,
                        rotvec_to_quat, rpy_from_quat)

IK_DAMPING = 1e-2
IK_TOLERANCE = 1e-3     # m, max marker error
IK_MAX_ITERS = 200

STANCE_HEIGHT = 0.05    # m, source foot marker below this may be in stance
STANCE_VSPEED = 0.1     # m/s, and moving vertically slower than this

DEFAULT_MARKER_WEIGHTS = {
    "torso": 1.0,
    "hands": 1.0,
    "elbows": 0.5,
    "knees": 0.5,
    "feet": 1.0,
}
STANCE_WEIGHT = 100.0


@dataclass(frozen=True)
class SourceClip:
    """Timestamped keypoint targets for the model's full marker set."""

    marker_names: list
    frames: np.ndarray       # (N, M, 3)
    timestamps: np.ndarray   # (N,)
    stance_hint: list | None = None   # per-frame "L"/"R"/"both"/"none"
    name: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        times = np.asarray(self.timestamps, dtype=float)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", times)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise MotionFormatError("clip frames must be (N, M, 3)")
        if frames.shape[0] != times.shape[0]:
            raise MotionFormatError("frame count does not match timestamps")
        if frames.shape[1] != len(self.marker_names):
            raise MotionFormatError("marker count does not match names")
        if times.shape[0] >= 2 and np.any(np.diff(times) <= 0):
            raise MotionFormatError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(frames)):
            raise MotionFormatError("clip contains non-finite keypoints")
        if self.stance_hint is not None and len(self.stance_hint) != times.shape[0]:
            raise MotionFormatError("stance_hint length does not match frames")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class IKResult:
    base_pos: np.ndarray
    base_quat: np.ndarray
    theta: np.ndarray
    residual: float          # m, worst marker error
    converged: bool
    iterations: int


def marker_fk(model: HumanoidModel, base_pos, base_quat, theta) -> np.ndarray:
    """World positions of all named markers, (M, 3)."""
    res = kinematics.fk(model, np.asarray(base_pos, float),
                        np.asarray(base_quat, float), np.asarray(theta, float))
    return kinematics.marker_positions(model, res)


def _marker_weight(name: str, weights: dict) -> float:
    if name == "torso":
        return weights["torso"]
    if name.endswith("hand"):
        return weights["hands"]
    if name.endswith("elbow"):
        return weights["elbows"]
    if name.endswith("knee"):
        return weights["knees"]
    if name.endswith("foot"):
        return weights["feet"]
    return 1.0


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _fit_base_pose(model: HumanoidModel, targets: np.ndarray,
                   yaw0: float) -> tuple[np.ndarray, np.ndarray]:
    """Base pose from the torso marker and four limb-length spheres.

    The elbow and knee markers each lie on a sphere of fixed radius around
    their shoulder or hip anchor, which is rigid in the base frame.  Together
    with the torso marker that pins the base up to small residual, leaving a
    yaw ambiguity that the caller resolves by trying several yaw0 seeds.
    """
    names = model.marker_names
    torso_local = model.marker_local[names.index("torso")]
    torso_goal = targets[names.index("torso")]
    refs = []
    for side in ("l", "r"):
        sh = model.joint_anchor[model.joint_index(f"{side}_shoulder_pitch")]
        hip = model.joint_anchor[model.joint_index(f"{side}_hip_pitch")]
        up_len = float(np.linalg.norm(model.joint_anchor[model.joint_index(f"{side}_elbow")]))
        th_len = float(np.linalg.norm(model.joint_anchor[model.joint_index(f"{side}_knee")]))
        refs.append((sh, targets[names.index(f"{side}_elbow")], up_len))
        refs.append((hip, targets[names.index(f"{side}_knee")], th_len))

    def resid(p, q):
        rot = quat_to_matrix(q)
        r = np.empty(3 + len(refs))
        r[0:3] = torso_goal - (p + rot @ torso_local)
        for i, (c, goal, length) in enumerate(refs):
            r[3 + i] = np.linalg.norm(p + rot @ c - goal) - length
        return r

    quat = rotvec_to_quat(np.array([0.0, 0.0, yaw0]))
    pos = torso_goal - quat_to_matrix(quat) @ torso_local
    lam = 1e-3
    r = resid(pos, quat)
    cost = r @ r
    eps = 1e-6
    for _ in range(60):
        if cost < 1e-18:
            break
        jac = np.empty((r.shape[0], 6))
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = eps
            jac[:, k] = (resid(pos + dp, quat) - r) / eps
        for k in range(3):
            dv = np.zeros(3)
            dv[k] = eps
            q2 = quat_normalize(quat_multiply(rotvec_to_quat(dv), quat))
            jac[:, 3 + k] = (resid(pos, q2) - r) / eps
        accepted = False
        for _trial in range(8):
            step = np.linalg.solve(jac.T @ jac + lam * np.eye(6), -jac.T @ r)
            p2 = pos + step[0:3]
            q2 = quat_normalize(quat_multiply(rotvec_to_quat(step[3:6]), quat))
            r2 = resid(p2, q2)
            c2 = r2 @ r2
            if c2 < cost:
                pos, quat, r, cost = p2, q2, r2, c2
                lam = max(lam / 3.0, 1e-9)
                accepted = True
                break
            lam = min(lam * 10.0, 1e7)
        if not accepted:
            break
    return pos, quat


def _two_link_y(w: np.ndarray, l1_len: float, tip_local: np.ndarray,
                lims1: tuple, lims2: tuple) -> tuple[float, float]:
    """Angles (q1, q2) of two y-hinges so that R_y(q1)(l1 + R_y(q2) tip) = w.

    l1 points down the -z axis; tip_local is the end-point offset in the
    distal frame.  Of the two law-of-cosines branches, prefer the one inside
    the joint limits, then the better reconstruction.
    """
    amp = float(np.hypot(tip_local[0], tip_local[2]))
    phi0 = float(np.arctan2(tip_local[0], -tip_local[2]))
    l1 = np.array([0.0, 0.0, -l1_len])
    cc = np.clip((w @ w - (l1_len ** 2 + amp ** 2)) / (2.0 * l1_len * amp), -1.0, 1.0)
    best = None
    for q2 in (phi0 + np.arccos(cc), phi0 - np.arccos(cc)):
        reach = l1 + _rot_y(q2) @ tip_local
        q1 = np.arctan2(reach[0], -reach[2]) - np.arctan2(w[0], -w[2])
        q1 = (q1 + np.pi) % (2.0 * np.pi) - np.pi
        err = float(np.linalg.norm(_rot_y(q1) @ reach - w))
        in_lim = (lims1[0] - 0.05 <= q1 <= lims1[1] + 0.05
                  and lims2[0] - 0.05 <= q2 <= lims2[1] + 0.05)
        score = (0.0 if in_lim else 10.0) + err
        if best is None or score < best[0]:
            best = (score, q1, q2)
    return best[1], best[2]


def _analytic_theta(model: HumanoidModel, pos: np.ndarray, quat: np.ndarray,
                    targets: np.ndarray) -> np.ndarray:
    """Closed-form joint angles for a given base pose.

    Each limb is a pitch-roll pair pointing a fixed-length segment at its
    mid-limb marker, then one or two extra y-hinges reaching the end marker.
    """
    names = model.marker_names
    rot = quat_to_matrix(quat)
    theta = np.zeros(model.num_joints)
    for side in ("l", "r"):
        j0 = model.joint_index(f"{side}_shoulder_pitch")
        anchor = pos + rot @ model.joint_anchor[j0]
        elbow = targets[names.index(f"{side}_elbow")]
        hand = targets[names.index(f"{side}_hand")]
        u = rot.T @ (elbow - anchor)
        u /= max(np.linalg.norm(u), 1e-9)
        q_roll = np.arcsin(np.clip(u[1], -1.0, 1.0))
        q_pitch = np.arctan2(-u[0], -u[2])
        arm_rot = rot @ _rot_y(q_pitch) @ _rot_x(q_roll)
        va = arm_rot.T @ (hand - elbow)
        q_elbow = np.arctan2(-va[0], -va[2])
        theta[j0:j0 + 3] = (q_pitch, q_roll, q_elbow)

        j0 = model.joint_index(f"{side}_hip_pitch")
        j_knee = model.joint_index(f"{side}_knee")
        j_ankle = model.joint_index(f"{side}_ankle")
        anchor = pos + rot @ model.joint_anchor[j0]
        knee = targets[names.index(f"{side}_knee")]
        foot = targets[names.index(f"{side}_foot")]
        u = rot.T @ (knee - anchor)
        u /= max(np.linalg.norm(u), 1e-9)
        q_roll = np.arcsin(np.clip(u[1], -1.0, 1.0))
        q_pitch = np.arctan2(-u[0], -u[2])
        thigh_rot = rot @ _rot_y(q_pitch) @ _rot_x(q_roll)
        w = thigh_rot.T @ (foot - knee)
        shin_len = float(np.linalg.norm(model.joint_anchor[j_ankle]))
        foot_local = model.marker_local[names.index(f"{side}_foot")]
        q_knee, q_ankle = _two_link_y(
            w, shin_len, foot_local,
            (model.joint_lower[j_knee], model.joint_upper[j_knee]),
            (model.joint_lower[j_ankle], model.joint_upper[j_ankle]))
        theta[j0:j0 + 4] = (q_pitch, q_roll, q_knee, q_ankle)
    return np.clip(theta, model.joint_lower, model.joint_upper)


def _bootstrap_starts(model: HumanoidModel, targets: np.ndarray) -> list:
    """Analytic initializations ranked by their marker residual."""
    required = {"torso", "l_elbow", "r_elbow", "l_hand", "r_hand",
                "l_knee", "r_knee", "l_foot", "r_foot"}
    if not required.issubset(model.marker_names):
        return []
    out = []
    for yaw0 in (0.0, np.pi / 2.0, np.pi, -np.pi / 2.0):
        pos, quat = _fit_base_pose(model, targets, yaw0)
        theta = _analytic_theta(model, pos, quat, targets)
        cur = marker_fk(model, pos, quat, theta)
        res = float(np.linalg.norm(targets - cur, axis=1).max())
        out.append((res, pos, quat, theta))
        if res < 1e-8:
            break
    out.sort(key=lambda c: c[0])
    return [(p, q, t) for _, p, q, t in out[:3]]


def _refine(model: HumanoidModel, goal: np.ndarray, row_weight: np.ndarray,
            base_pos: np.ndarray, base_quat: np.ndarray, theta: np.ndarray,
            max_iters: int, tol: float, damping: float):
    """Weighted damped-least-squares polish with an adaptive damping level.

    Steps that do not reduce the weighted cost are rejected and retried with
    a heavier damping term, so far-off starts stay stable while near-converged
    ones take full Gauss-Newton steps.
    """
    nm = model.num_markers
    nv = 6 + model.num_joints
    wrow = np.repeat(row_weight, 3)
    lam = damping ** 2

    def evaluate(p, q, th):
        cur = marker_fk(model, p, q, th)
        err = goal - cur
        flat = err.reshape(-1)
        return err, float(flat * wrow @ flat), float(np.linalg.norm(err, axis=1).max())

    err, cost, residual = evaluate(base_pos, base_quat, theta)
    iterations = 0
    for it in range(1, max_iters + 1):
        if residual <= tol:
            break
        iterations = it
        fkres = kinematics.fk(model, base_pos, base_quat, theta)
        cur = kinematics.marker_positions(model, fkres)
        jac = np.empty((3 * nm, nv))
        for m in range(nm):
            body = int(model.marker_body[m])
            jac[3 * m:3 * m + 3] = kinematics.point_jacobian(model, fkres, body, cur[m])
        jtw = jac.T * wrow
        hess = jtw @ jac
        grad = jtw @ err.reshape(-1)
        accepted = False
        for _trial in range(8):
            step = np.linalg.solve(hess + lam * np.eye(nv), grad)
            p2 = base_pos + step[0:3]
            q2 = quat_normalize(quat_multiply(rotvec_to_quat(step[3:6]), base_quat))
            th2 = np.clip(theta + step[6:], model.joint_lower, model.joint_upper)
            err2, cost2, res2 = evaluate(p2, q2, th2)
            if cost2 < cost:
                base_pos, base_quat, theta = p2, q2, th2
                err, cost, residual = err2, cost2, res2
                lam = max(lam / 3.0, 1e-8)
                accepted = True
                break
            lam = min(lam * 10.0, 1e6)
        if not accepted:
            break   # local minimum at this damping scale
    return base_pos, base_quat, theta, residual, iterations


def retarget_frame(model: HumanoidModel, targets: np.ndarray,
                   warm_start: IKResult | None = None,
                   stance_locks: dict | None = None,
                   weights: dict | None = None,
                   max_iters: int = IK_MAX_ITERS,
                   tol: float = IK_TOLERANCE,
                   damping: float = IK_DAMPING) -> IKResult:
    """Damped-least-squares fit of one frame of marker targets.

    targets is (M, 3) in model marker order.  stance_locks maps a foot marker
    index to its locked world position; locked rows get a hard weight so the
    solution pins the stance foot while the soft markers shape the rest.
    A warm start is tried first; otherwise analytic bootstrap candidates and
    a nominal-pose fallback are polished in turn until one converges.
    """
    w = dict(DEFAULT_MARKER_WEIGHTS)
    if weights:
        w.update(weights)
    stance_locks = stance_locks or {}

    nm = model.num_markers
    row_weight = np.empty(nm)
    goal = np.array(targets, dtype=float, copy=True)
    for m, name in enumerate(model.marker_names):
        row_weight[m] = _marker_weight(name, w)
    for m, lock in stance_locks.items():
        row_weight[m] = STANCE_WEIGHT
        goal[m] = lock

    starts = []
    if warm_start is not None:
        starts.append((warm_start.base_pos.copy(), warm_start.base_quat.copy(),
                       warm_start.theta.copy()))
    starts.extend(_bootstrap_starts(model, targets))
    nominal_pos = np.array([0.0, 0.0, model.nominal_height])
    torso = model.marker_names.index("torso")
    nominal_pos[0:2] = targets[torso, 0:2] - model.marker_local[torso][0:2]
    starts.append((nominal_pos, np.array([1.0, 0.0, 0.0, 0.0]), model.nominal_theta.copy()))
    rng = np.random.default_rng(1234)
    for _ in range(4):
        starts.append((nominal_pos + rng.normal(0.0, 0.3, 3),
                       quat_normalize(rotvec_to_quat(rng.normal(0.0, 0.5, 3))),
                       rng.uniform(model.joint_lower, model.joint_upper)))

    best = None
    total_iters = 0
    for pos0, quat0, theta0 in starts:
        pos, quat, theta, residual, iters = _refine(
            model, goal, row_weight, pos0, quat0, theta0, max_iters, tol, damping)
        total_iters += iters
        if best is None or residual < best[3]:
            best = (pos, quat, theta, residual)
        if residual <= tol:
            break

    pos, quat, theta, residual = best
    return IKResult(pos, quat, theta, residual,
                    converged=residual <= tol, iterations=total_iters)


def detect_stance(clip: SourceClip, model: HumanoidModel) -> np.ndarray:
    """Per-frame stance labels, (N, 2) bool for (left, right).

    A foot is in stance when its source marker is near the ground and barely
    moving vertically; an explicit stance_hint overrides detection.
    """
    n = clip.num_frames
    out = np.zeros((n, 2), dtype=bool)
    if clip.stance_hint is not None:
        for i, h in enumerate(clip.stance_hint):
            out[i, 0] = h in ("L", "both")
            out[i, 1] = h in ("R", "both")
        return out

    for f, name in enumerate(("l_foot", "r_foot")):
        m = clip.marker_names.index(name)
        z = clip.frames[:, m, 2]
        vz = np.gradient(z, clip.timestamps) if n >= 2 else np.zeros(n)
        out[:, f] = (z < STANCE_HEIGHT) & (np.abs(vz) < STANCE_VSPEED)
    return out


def _stance_locks_per_frame(clip: SourceClip, model: HumanoidModel,
                            stance: np.ndarray) -> list:
    """Lock each stance period's foot to the ground point where it began."""
    locks = [dict() for _ in range(clip.num_frames)]
    for f, name in enumerate(("l_foot", "r_foot")):
        m = clip.marker_names.index(name)
        current = None
        for i in range(clip.num_frames):
            if stance[i, f]:
                if current is None:
                    current = np.array([clip.frames[i, m, 0],
                                        clip.frames[i, m, 1], 0.0])
                locks[i][m] = current
            else:
                current = None
    return locks


def retarget_clip(clip: SourceClip, model: HumanoidModel,
                  weights: dict | None = None,
                  max_iters: int = IK_MAX_ITERS) -> Motion:
    """Solve, drop failures, resample to 50 Hz, and differentiate."""
    order = [clip.marker_names.index(n) for n in model.marker_names]
    stance = detect_stance(clip, model)
    locks = _stance_locks_per_frame(clip, model, stance)

    times, sols = [], []
    warm = None
    for i in range(clip.num_frames):
        targets = clip.frames[i][order]
        res = retarget_frame(model, targets, warm_start=warm,
                             stance_locks=locks[i], weights=weights,
                             max_iters=max_iters)
        if res.converged:
            times.append(clip.timestamps[i])
            sols.append(res)
            warm = res

    if len(sols) < 2:
        raise MotionFormatError(
            f"clip {clip.name!r}: only {len(sols)} frames converged")

    j = model.num_joints
    yaw = np.empty(len(sols))
    rows = np.empty((len(sols), j + 5))
    for i, s in enumerate(sols):
        roll, pitch, y = rpy_from_quat(s.base_quat)
        yaw[i] = y
        rows[i, 0:j] = s.theta
        rows[i, j:j + 3] = s.base_pos
        rows[i, j + 3] = roll
        rows[i, j + 4] = pitch
    yaw = np.unwrap(yaw)
    rows = np.concatenate([rows, yaw[:, None]], axis=1)

    grid, vals = resample_series(np.asarray(times), rows, 0.02)
    if grid.shape[0] < 2:
        raise MotionFormatError("resampled clip has fewer than 2 frames")

    theta = vals[:, 0:j]
    base = vals[:, j:j + 3]
    roll, pitch = vals[:, j + 3], vals[:, j + 4]
    yaw_g = vals[:, j + 5]

    theta_dot = np.gradient(theta, 0.02, axis=0)
    base_vel = np.gradient(base, 0.02, axis=0)
    w = np.gradient(yaw_g, 0.02)

    h = grid.shape[0]
    frames = np.zeros((h, 2 * j + 6))
    frames[:, 0:j] = theta
    frames[:, j:2 * j] = theta_dot
    for i in range(h):
        c, s = np.cos(yaw_g[i]), np.sin(yaw_g[i])
        vx, vy = base_vel[i, 0], base_vel[i, 1]
        frames[i, 2 * j + 0] = c * vx + s * vy     # heading frame
        frames[i, 2 * j + 1] = -s * vx + c * vy
    frames[:, 2 * j + 2] = w
    frames[:, 2 * j + 3] = roll
    frames[:, 2 * j + 4] = pitch
    frames[:, 2 * j + 5] = base[:, 2]

    return Motion(frames, j, 0.02, source_tag=clip.name)


# ---------------------------------------------------------------------------
# Clip files


def clip_to_dict(clip: SourceClip) -> dict:
    doc = {
        "markers": list(clip.marker_names),
        "frames": clip.frames.tolist(),
        "timestamps": clip.timestamps.tolist(),
        "name": clip.name,
    }
    if clip.stance_hint is not None:
        doc["stance_hint"] = list(clip.stance_hint)
    return doc


def clip_from_dict(doc: dict) -> SourceClip:
    for key in ("markers", "frames", "timestamps"):
        if key not in doc:
            raise MotionFormatError(f"clip file missing field {key!r}")
    return SourceClip(
        marker_names=list(doc["markers"]),
        frames=np.asarray(doc["frames"], dtype=float),
        timestamps=np.asarray(doc["timestamps"], dtype=float),
        stance_hint=doc.get("stance_hint"),
        name=doc.get("name", ""),
    )


def save_clip(clip: SourceClip, path) -> None:
    Path(path).write_text(json.dumps(clip_to_dict(clip)))


def load_clip(path) -> SourceClip:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MotionFormatError(f"{path}: not valid JSON ({exc})") from exc
    return clip_from_dict(doc)
