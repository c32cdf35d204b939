"""Simulator facade: state container, PD actuation loop, fall detection.

The policy interacts at 50 Hz through control_step; each call runs exactly 40
inner physics steps at 2 kHz with the PD setpoints held constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics, kinematics
from .model import HumanoidModel
from .rotations import quat_to_matrix

DT_INNER = 1.0 / 2000.0
N_INNER = 40
CONTROL_DT = DT_INNER * N_INNER

DIVERGENCE_LIMIT = 1.0e6
FALL_HEIGHT_FRACTION = 0.5
FALL_TILT_COS = 0.5           # cos 60 degrees
GROUND_TOUCH_HEIGHT = 0.05    # m, non-foot link proximity that counts as touching


@dataclass
class SimState:
    base_pos: np.ndarray
    base_quat: np.ndarray
    base_linvel: np.ndarray
    base_angvel: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    contact: np.ndarray         # (2,) uint8, left then right foot
    air_time: np.ndarray        # (2,) seconds since last contact
    time: float = 0.0
    diverged: bool = False

    def qpos(self) -> np.ndarray:
        return np.concatenate([self.base_pos, self.base_quat, self.theta])

    def qvel(self) -> np.ndarray:
        return np.concatenate([self.base_linvel, self.base_angvel, self.theta_dot])

    def copy(self) -> "SimState":
        return SimState(self.base_pos.copy(), self.base_quat.copy(),
                        self.base_linvel.copy(), self.base_angvel.copy(),
                        self.theta.copy(), self.theta_dot.copy(),
                        self.contact.copy(), self.air_time.copy(),
                        self.time, self.diverged)


@dataclass(frozen=True)
class Perturbation:
    """Constant world-frame force applied at the base origin for a window."""

    force: np.ndarray
    start_step: int
    duration_steps: int

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float))
        if self.force.shape != (3,):
            raise ValueError("force must be a 3-vector")
        if self.duration_steps < 1:
            raise ValueError("duration must be at least 1 step")

    def active(self, step: int) -> bool:
        return self.start_step <= step < self.start_step + self.duration_steps


@dataclass
class ControlInfo:
    """Per-control-step measurements consumed by the reward."""

    mean_abs_tau: np.ndarray       # (J,) mean |motor torque| over inner steps
    foot_normal: np.ndarray        # (2,) mean normal force per foot, N
    touchdown: np.ndarray          # (2,) bool, any touchdown within the window
    air_at_touchdown: np.ndarray   # (2,) s, air time at the first touchdown
    base_acc: np.ndarray           # (3,) finite-difference base acceleration


class Simulator:
    """Owns the physics for one rollout; single-threaded, deterministic."""

    def __init__(self, model: HumanoidModel, gravity: np.ndarray | None = None):
        self.model = model
        self.arrays = dynamics.pack_model(model)
        self.gravity = np.asarray(gravity if gravity is not None else model.gravity,
                                  dtype=float)

    def default_state(self) -> SimState:
        m = self.model
        return SimState(
            base_pos=np.array([0.0, 0.0, m.nominal_height]),
            base_quat=np.array([1.0, 0.0, 0.0, 0.0]),
            base_linvel=np.zeros(3),
            base_angvel=np.zeros(3),
            theta=m.nominal_theta.copy(),
            theta_dot=np.zeros(m.num_joints),
            contact=np.zeros(2, dtype=np.uint8),
            air_time=np.zeros(2),
        )

    def pd_torques(self, state: SimState, setpoints: np.ndarray) -> np.ndarray:
        m = self.model
        tau = m.kp * (setpoints - state.theta) - m.kd * state.theta_dot
        return np.clip(tau, -m.torque_limit, m.torque_limit)

    def step_physics(self, state: SimState, torques: np.ndarray,
                     external_force: np.ndarray | None = None,
                     dt_inner: float = DT_INNER) -> SimState:
        """A single inner step with explicit motor torques."""
        out = state.copy()
        qpos, qvel = out.qpos(), out.qvel()
        foot_normal = np.empty(2)
        ext = np.zeros(3) if external_force is None else np.asarray(external_force, float)
        dynamics._inner_step(self.arrays, qpos, qvel, np.asarray(torques, float),
                             ext, self.gravity, dt_inner, foot_normal)
        self._unpack(out, qpos, qvel)
        out.time = state.time + dt_inner
        self._check_divergence(out)
        for f in range(2):
            in_contact = foot_normal[f] > dynamics.CONTACT_FORCE_EPS
            if in_contact and not out.contact[f]:
                out.air_time[f] = 0.0
            elif not in_contact:
                out.air_time[f] += dt_inner
            out.contact[f] = 1 if in_contact else 0
        return out

    def control_step(self, state: SimState, setpoints: np.ndarray,
                     external_force: np.ndarray | None = None) -> tuple[SimState, ControlInfo]:
        out = state.copy()
        qpos, qvel = out.qpos(), out.qvel()
        ext = np.zeros(3) if external_force is None else np.asarray(external_force, float)
        v_before = state.base_linvel.copy()
        mean_tau, mean_fn, touchdown, air_td = dynamics._control_step(
            self.arrays, qpos, qvel, np.asarray(setpoints, float), ext,
            self.gravity, DT_INNER, N_INNER, out.contact, out.air_time)
        self._unpack(out, qpos, qvel)
        out.time = state.time + CONTROL_DT
        self._check_divergence(out)
        info = ControlInfo(
            mean_abs_tau=mean_tau,
            foot_normal=mean_fn,
            touchdown=touchdown.astype(bool),
            air_at_touchdown=air_td,
            base_acc=(out.base_linvel - v_before) / CONTROL_DT,
        )
        return out, info

    def detect_fall(self, state: SimState) -> bool:
        if state.diverged:
            return True
        m = self.model
        if state.base_pos[2] < FALL_HEIGHT_FRACTION * m.nominal_height:
            return True
        rot = quat_to_matrix(state.base_quat)
        if rot[2, 2] < FALL_TILT_COS:
            return True
        fkres = kinematics.fk(m, state.base_pos, state.base_quat, state.theta)
        feet = set(int(b) for b in m.foot_bodies)
        for b in range(1, m.num_bodies):
            if b in feet:
                continue
            if fkres.body_pos[b][2] < GROUND_TOUCH_HEIGHT:
                return True
        for mk in range(m.num_markers):
            if int(m.marker_body[mk]) in feet:
                continue
            if kinematics.body_point(fkres, int(m.marker_body[mk]), m.marker_local[mk])[2] < GROUND_TOUCH_HEIGHT:
                return True
        return False

    def body_kinematics(self, state: SimState) -> kinematics.FkResult:
        return kinematics.fk(self.model, state.base_pos, state.base_quat, state.theta)

    def marker_positions(self, state: SimState) -> np.ndarray:
        return kinematics.marker_positions(self.model, self.body_kinematics(state))

    @staticmethod
    def _unpack(state: SimState, qpos: np.ndarray, qvel: np.ndarray) -> None:
        state.base_pos = qpos[0:3].copy()
        state.base_quat = qpos[3:7].copy()
        state.theta = qpos[7:].copy()
        state.base_linvel = qvel[0:3].copy()
        state.base_angvel = qvel[3:6].copy()
        state.theta_dot = qvel[6:].copy()

    @staticmethod
    def _check_divergence(state: SimState) -> None:
        vals = np.concatenate([state.qpos(), state.qvel()])
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > DIVERGENCE_LIMIT:
            state.diverged = True


def tilted_gravity(slope: float, azimuth: float, g: float = 9.81) -> np.ndarray:
    """Gravity vector for a ground plane tilted by `slope` rad toward `azimuth`."""
    return np.array([
        -g * np.sin(slope) * np.cos(azimuth),
        -g * np.sin(slope) * np.sin(azimuth),
        -g * np.cos(slope),
    ])
