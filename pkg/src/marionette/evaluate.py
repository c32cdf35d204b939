"""Evaluation protocol: failure rate, tracking error, root drift, baselines.

Metrics are computed from aligned (state, directive step) sequences so the
same functions score live rollouts and synthetic oracle trajectories.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kinematics
from .curriculum import with_root_commands
from .model import HumanoidModel
from .motion import Directive, Motion, make_directive
from .policy import MHCPolicy
from .reward import root_commands
from .rollout import EpisodeRunner, episode_environment
from .rotations import quat_to_matrix, yaw_of
from .sim import CONTROL_DT

EVAL_MAX_STEPS = 2500
DIRECTIVE_CYCLES = 3
DIRECTIVE_FORMS = ("FULL", "UPPER_STAND", "UPPER_LOCO")
BASELINES = ("LOCO_PLUS_OFFSETS", "LOCOMOTION_TRAIN")


@dataclass(frozen=True)
class EvalConfig:
    directive: str
    episodes_per_motion: int = 20
    max_steps: int = EVAL_MAX_STEPS
    cycles: int = DIRECTIVE_CYCLES
    seed: int = 0
    randomize: bool = True
    baseline: str | None = None

    def __post_init__(self):
        if self.directive not in DIRECTIVE_FORMS:
            raise ValueError(f"unknown directive form {self.directive!r}")
        if self.baseline is not None and self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.episodes_per_motion < 1:
            raise ValueError("need at least one episode per motion")


def eval_directive(motion: Motion, form: str, model: HumanoidModel,
                   start_offset: int = 0) -> Directive:
    """The directive a motion is evaluated under.

    UPPER_STAND replaces the clip's root channels with stand-in-place
    commands; the other forms keep the clip's own root trajectory.
    """
    if form == "UPPER_STAND":
        motion = with_root_commands(motion, (0.0, 0.0), 0.0,
                                    model.nominal_height)
    return make_directive(motion, form, model, start_offset)


def included_markers(model: HumanoidModel, mask) -> np.ndarray:
    """Markers whose supporting joint chain has at least one unmasked joint."""
    j = model.num_joints
    theta_bits = mask.bits[:j]
    out = np.zeros(len(model.marker_names), dtype=bool)
    for m, body in enumerate(model.marker_body):
        chain = kinematics.support_chain(model, int(body))
        out[m] = any(theta_bits[q] == 1 for q in chain)
    return out


def torso_frame_markers(model: HumanoidModel, base_pos, base_quat,
                        theta) -> np.ndarray:
    fk = kinematics.fk(model, np.asarray(base_pos, float),
                       np.asarray(base_quat, float), np.asarray(theta, float))
    world = kinematics.marker_positions(model, fk)
    rot = quat_to_matrix(np.asarray(base_quat, float))
    return (world - np.asarray(base_pos, float)) @ rot


_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def target_markers(model: HumanoidModel, theta_hat: np.ndarray) -> np.ndarray:
    """Torso-frame marker targets for a directive pose; base placement cancels."""
    return torso_frame_markers(model, np.zeros(3), _IDENTITY_QUAT, theta_hat)


def mpjpe_series(states, steps, model: HumanoidModel) -> np.ndarray | None:
    """Per-step mean marker error in the torso frame; None when every
    marker's joint chain is masked (locomotion-style directives)."""
    out = []
    for state, step in zip(states, steps):
        keep = included_markers(model, step.mask)
        if not keep.any():
            return None
        actual = torso_frame_markers(model, state.base_pos, state.base_quat,
                                     state.theta)
        target = target_markers(model, step.pose_hat.theta)
        err = np.linalg.norm(actual - target, axis=1)
        out.append(err[keep].mean())
    return np.array(out)


def mpjpe(states, steps, model: HumanoidModel) -> float | None:
    series = mpjpe_series(states, steps, model)
    return None if series is None else float(series.mean())


def root_drift_series(states, steps, model: HumanoidModel,
                      dt: float = CONTROL_DT) -> np.ndarray:
    """One-step command-following error of the planar root position.

    The expectation integrates the commanded heading-frame velocity from the
    previous actual root, so long-horizon drift never compounds.
    """
    out = []
    prev_xy = None
    prev_yaw = None
    for state, step in zip(states, steps):
        if prev_xy is not None:
            v_cmd, _, _, _, _ = root_commands(step, model)
            c, s = np.cos(prev_yaw), np.sin(prev_yaw)
            expected = prev_xy + dt * np.array([c * v_cmd[0] - s * v_cmd[1],
                                                s * v_cmd[0] + c * v_cmd[1]])
            out.append(float(np.linalg.norm(state.base_pos[:2] - expected)))
        prev_xy = state.base_pos[:2].copy()
        prev_yaw = yaw_of(state.base_quat)
    return np.array(out)


def root_drift(states, steps, model: HumanoidModel,
               dt: float = CONTROL_DT) -> float:
    series = root_drift_series(states, steps, model, dt)
    return 0.0 if series.size == 0 else float(series.mean())


# -- baseline routing ---------------------------------------------------------

def loco_masked(directive: Directive, model: HumanoidModel) -> Directive:
    """The locomotion-only view of a directive, for the baseline policies."""
    return make_directive(directive.motion, "LOCO", model,
                          directive.start_offset)


def offset_hook(model: HumanoidModel):
    """Setpoint router: unmasked joints come verbatim from the directive."""
    j = model.num_joints

    def hook(setpoints, step):
        bits = step.mask.bits[:j] == 1
        out = setpoints.copy()
        out[bits] = np.clip(step.pose_hat.theta, model.joint_lower,
                            model.joint_upper)[bits]
        return out

    return hook


def check_baseline_policy(mode: str, policy: MHCPolicy) -> None:
    if mode == "LOCOMOTION_TRAIN" and not policy.aux_target_input:
        raise ValueError("LOCOMOTION_TRAIN needs a policy trained with "
                         "joint-target inputs")
    if mode == "LOCO_PLUS_OFFSETS" and policy.aux_target_input:
        raise ValueError("LOCO_PLUS_OFFSETS expects a plain locomotion policy")


def make_runner(model: HumanoidModel, policy: MHCPolicy, directive: Directive,
                gravity=None, baseline: str | None = None) -> EpisodeRunner:
    if baseline is None:
        return EpisodeRunner(model, policy, directive, gravity=gravity,
                             encoder_noise=0.0)
    check_baseline_policy(baseline, policy)
    return EpisodeRunner(model, policy, directive, gravity=gravity,
                         encoder_noise=0.0,
                         policy_directive=loco_masked(directive, model),
                         setpoint_hook=offset_hook(model))


# -- protocol -----------------------------------------------------------------

@dataclass
class EvalReport:
    config: EvalConfig
    per_motion: dict
    aggregate: dict

    def to_dict(self) -> dict:
        return {"version": 1, "config": asdict(self.config),
                "per_motion": self.per_motion, "aggregate": self.aggregate}

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def run_episode_metrics(model: HumanoidModel, policy: MHCPolicy,
                        directive: Directive, steps: int, gravity=None,
                        baseline: str | None = None) -> dict:
    """One deterministic eval episode; metric sums over pre-failure steps."""
    runner = make_runner(model, policy, directive, gravity, baseline)
    states = []
    dsteps = []
    fell = False
    for _ in range(steps):
        task, _ = runner.current_steps()
        res = runner.step(deterministic=True)
        if res.fell:
            fell = True
            break
        states.append(runner.state)
        dsteps.append(task)
    mp = mpjpe_series(states, dsteps, model) if states else None
    rd = root_drift_series(states, dsteps, model) if states else np.array([])
    return {
        "fell": fell,
        "steps": len(states),
        "mpjpe_sum": float(mp.sum()) if mp is not None else None,
        "mpjpe_count": int(mp.size) if mp is not None else 0,
        "drift_sum": float(rd.sum()),
        "drift_count": int(rd.size),
    }


def run_eval(model: HumanoidModel, policy: MHCPolicy, motions: list,
             config: EvalConfig) -> EvalReport:
    """Score every motion under one directive form."""
    if not motions:
        raise ValueError("empty motion set")
    if config.baseline is not None:
        check_baseline_policy(config.baseline, policy)

    per_motion = {}
    totals = {"episodes": 0, "fails": 0, "steps": 0,
              "mpjpe_sum": 0.0, "mpjpe_count": 0,
              "drift_sum": 0.0, "drift_count": 0}
    for m_idx, motion in enumerate(motions):
        stats = {"episodes": 0, "fails": 0, "steps": 0,
                 "mpjpe_sum": 0.0, "mpjpe_count": 0,
                 "drift_sum": 0.0, "drift_count": 0}
        for e_idx in range(config.episodes_per_motion):
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, m_idx, e_idx]))
            offset = int(rng.integers(motion.horizon))
            directive = eval_directive(motion, config.directive, model, offset)
            length = min(config.cycles * motion.horizon, config.max_steps)
            if config.randomize:
                env_model, gravity = episode_environment(
                    model, int(rng.integers(2 ** 31)))
            else:
                env_model, gravity = model, None
            out = run_episode_metrics(env_model, policy, directive, length,
                                      gravity, config.baseline)
            stats["episodes"] += 1
            stats["fails"] += int(out["fell"])
            stats["steps"] += out["steps"]
            if out["mpjpe_sum"] is not None:
                stats["mpjpe_sum"] += out["mpjpe_sum"]
                stats["mpjpe_count"] += out["mpjpe_count"]
            stats["drift_sum"] += out["drift_sum"]
            stats["drift_count"] += out["drift_count"]
        for k in totals:
            totals[k] += stats[k]
        per_motion[motion.source_tag] = _summarize(stats)

    return EvalReport(config=config, per_motion=per_motion,
                      aggregate=_summarize(totals))


def _summarize(stats: dict) -> dict:
    episodes = stats["episodes"]
    return {
        "episodes": episodes,
        "fail_pct": 100.0 * stats["fails"] / episodes,
        "mean_steps": stats["steps"] / episodes,
        "mpjpe": (stats["mpjpe_sum"] / stats["mpjpe_count"]
                  if stats["mpjpe_count"] else None),
        "root_drift": (stats["drift_sum"] / stats["drift_count"]
                       if stats["drift_count"] else 0.0),
    }
