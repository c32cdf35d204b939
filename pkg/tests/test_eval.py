import json
import os
from types import SimpleNamespace

import numpy as np
import pytest

from marionette.evaluate import (
    EvalConfig,
    EvalReport,
    check_baseline_policy,
    eval_directive,
    included_markers,
    loco_masked,
    make_runner,
    mpjpe,
    root_drift,
    run_eval,
    torso_frame_markers,
)
from marionette.model import default_model
from marionette.motion import Motion, directive_step, make_directive, make_mask_pattern
from marionette.policy import MHCPolicy
from marionette.rollout import EpisodeRunner
from marionette.rotations import rotvec_to_quat
from marionette.sim import CONTROL_DT

MODEL = default_model()
J = MODEL.num_joints
IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def make_policy(seed=0, **kw):
    return MHCPolicy(MODEL, np.random.default_rng(seed), **kw)


def make_motion(tag, horizon=10, scale=0.2, seed=0, v=(0.0, 0.0), w=0.0):
    rng = np.random.default_rng(seed)
    frames = np.zeros((horizon, 2 * J + 6))
    frames[:, :J] = np.clip(scale * rng.standard_normal((horizon, J)),
                            MODEL.joint_lower, MODEL.joint_upper)
    frames[:, 2 * J:2 * J + 2] = v
    frames[:, 2 * J + 2] = w
    frames[:, 2 * J + 5] = MODEL.nominal_height
    return Motion(frames, J, 0.02, tag)


def state_at(theta, pos=(0.0, 0.0, 0.0), quat=IDENTITY):
    return SimpleNamespace(base_pos=np.asarray(pos, float),
                           base_quat=np.asarray(quat, float),
                           theta=np.asarray(theta, float))


def directive_steps(directive, n):
    return [directive_step(directive, t) for t in range(n)]


def test_self_tracking_oracle_is_exactly_zero():
    motion = make_motion("oracle", v=(0.5, 0.0))
    directive = make_directive(motion, "FULL", MODEL)
    steps = directive_steps(directive, 12)
    # joints replay the clip exactly
    marker_states = [state_at(s.pose_hat.theta) for s in steps]
    assert mpjpe(marker_states, steps, MODEL) == 0.0
    # root follows the commanded velocity exactly (yaw stays 0)
    root_states = []
    xy = np.zeros(2)
    for s in steps:
        xy = xy + CONTROL_DT * s.pose_hat.v
        root_states.append(state_at(s.pose_hat.theta, pos=(xy[0], xy[1], 0.8)))
    assert root_drift(root_states, steps, MODEL) == 0.0


def test_mpjpe_marker_inclusion_rules():
    full = included_markers(MODEL, make_mask_pattern("FULL", MODEL))
    upper = included_markers(MODEL, make_mask_pattern("UPPER_STAND", MODEL))
    loco = included_markers(MODEL, make_mask_pattern("LOCO", MODEL))
    names = MODEL.marker_names
    # the torso marker hangs off no joint, so no directive can include it
    assert not full[names.index("torso")]
    assert full.sum() == len(names) - 1
    included = {names[i] for i in range(len(names)) if upper[i]}
    assert included == {"l_elbow", "l_hand", "r_elbow", "r_hand"}
    assert not loco.any()


def test_mpjpe_not_applicable_for_loco():
    motion = make_motion("loco")
    directive = make_directive(motion, "LOCO", MODEL)
    steps = directive_steps(directive, 5)
    states = [state_at(s.pose_hat.theta) for s in steps]
    assert mpjpe(states, steps, MODEL) is None


def test_mpjpe_single_offset_hand():
    theta = np.zeros(J)
    elbow = MODEL.joint_names.index("l_elbow")
    # forearm length sets the chord a pure elbow rotation sweeps at the hand
    forearm = 0.26
    dq = 2.0 * np.arcsin(0.05 / forearm)
    target = theta.copy()
    actual = theta.copy()
    actual[elbow] = theta[elbow] + dq

    frames = np.zeros((2, 2 * J + 6))
    frames[:, :J] = target
    frames[:, 2 * J + 5] = MODEL.nominal_height
    directive = make_directive(Motion(frames, J, 0.02, "hand"), "FULL", MODEL)
    steps = directive_steps(directive, 1)
    states = [state_at(actual)]
    included = included_markers(MODEL, steps[0].mask).sum()
    assert mpjpe(states, steps, MODEL) == pytest.approx(0.1 / included,
                                                        abs=1e-12)


def test_torso_frame_cancels_base_placement():
    rng = np.random.default_rng(3)
    theta = rng.uniform(MODEL.joint_lower, MODEL.joint_upper)
    home = torso_frame_markers(MODEL, np.zeros(3), IDENTITY, theta)
    quat = rotvec_to_quat(rng.standard_normal(3))
    moved = torso_frame_markers(MODEL, rng.standard_normal(3) * 2.0, quat,
                                theta)
    assert np.abs(home - moved).max() < 1e-12


def test_root_drift_stationary_under_forward_command():
    motion = make_motion("drift", v=(0.5, 0.0))
    directive = make_directive(motion, "LOCO", MODEL)
    steps = directive_steps(directive, 6)
    states = [state_at(np.zeros(J), pos=(0.0, 0.0, 0.8)) for _ in steps]
    assert root_drift(states, steps, MODEL) == pytest.approx(0.01, abs=1e-15)


def test_root_drift_zero_command_stationary():
    motion = make_motion("still")
    directive = make_directive(motion, "LOCO", MODEL)
    steps = directive_steps(directive, 6)
    states = [state_at(np.zeros(J)) for _ in steps]
    assert root_drift(states, steps, MODEL) == 0.0


def test_root_drift_rotates_command_into_heading():
    # robot facing +y; forward command moves it along +y, which must count
    # as zero drift
    motion = make_motion("turned", v=(0.3, 0.0))
    directive = make_directive(motion, "LOCO", MODEL)
    steps = directive_steps(directive, 4)
    quat = rotvec_to_quat([0.0, 0.0, np.pi / 2])
    states = []
    y = 0.0
    for _ in steps:
        states.append(state_at(np.zeros(J), pos=(0.0, y, 0.8), quat=quat))
        y += 0.3 * CONTROL_DT
    assert root_drift(states, steps, MODEL) < 1e-12


def test_eval_directive_forms():
    motion = make_motion("forms", v=(0.4, 0.1), w=0.2)
    stand = eval_directive(motion, "UPPER_STAND", MODEL)
    for t in range(motion.horizon):
        step = directive_step(stand, t)
        assert step.standing
        assert step.pose_hat.b[2] == MODEL.nominal_height
    full = eval_directive(motion, "FULL", MODEL)
    assert directive_step(full, 0).pose_hat.v[0] == pytest.approx(0.4)
    upper = eval_directive(motion, "UPPER_LOCO", MODEL)
    assert directive_step(upper, 0).pose_hat.v[0] == pytest.approx(0.4)


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(directive="LOCO")
    with pytest.raises(ValueError):
        EvalConfig(directive="FULL", baseline="SOMETHING")
    with pytest.raises(ValueError):
        EvalConfig(directive="FULL", episodes_per_motion=0)


def test_baseline_policy_compatibility():
    plain = make_policy()
    aux = make_policy(aux_target_input=True)
    with pytest.raises(ValueError):
        check_baseline_policy("LOCOMOTION_TRAIN", plain)
    with pytest.raises(ValueError):
        check_baseline_policy("LOCO_PLUS_OFFSETS", aux)
    check_baseline_policy("LOCO_PLUS_OFFSETS", plain)
    check_baseline_policy("LOCOMOTION_TRAIN", aux)


def test_baseline_routing_audit():
    motion = make_motion("audit", scale=0.4)
    directive = eval_directive(motion, "UPPER_STAND", MODEL)
    runner = make_runner(MODEL, make_policy(), directive,
                         baseline="LOCO_PLUS_OFFSETS")
    upper = MODEL.upper_joint_indices
    for _ in range(4):
        task, pol = runner.current_steps()
        res = runner.step(deterministic=True)
        want = np.clip(task.pose_hat.theta, MODEL.joint_lower,
                       MODEL.joint_upper)
        assert np.array_equal(res.setpoints[upper], want[upper])
        assert pol.mask.bits[:J].sum() == 0


def test_baseline_on_loco_directive_matches_plain_policy():
    motion = make_motion("plain", v=(0.2, 0.0))
    directive = make_directive(motion, "LOCO", MODEL)
    a = EpisodeRunner(MODEL, make_policy(), directive, encoder_noise=0.0)
    b = make_runner(MODEL, make_policy(), directive,
                    baseline="LOCO_PLUS_OFFSETS")
    for _ in range(8):
        ra = a.step(deterministic=True)
        rb = b.step(deterministic=True)
        assert np.array_equal(ra.obs, rb.obs)
        assert np.array_equal(ra.setpoints, rb.setpoints)


def eval_over(policy, config, motions=None):
    motions = motions or [make_motion("m0", seed=1), make_motion("m1", seed=2)]
    return run_eval(MODEL, policy, motions, config)


def test_run_eval_report_schema(tmp_path):
    cfg = EvalConfig(directive="UPPER_STAND", episodes_per_motion=2, cycles=1,
                     seed=4)
    report = eval_over(make_policy(), cfg)
    d = report.to_dict()
    assert d["version"] == 1
    assert set(d["per_motion"]) == {"m0", "m1"}
    for stats in d["per_motion"].values():
        assert 0.0 <= stats["fail_pct"] <= 100.0
        assert stats["episodes"] == 2
    agg = d["aggregate"]
    assert agg["episodes"] == 4
    assert agg["mpjpe"] is None or np.isfinite(agg["mpjpe"])
    path = os.path.join(tmp_path, "report.json")
    report.save(path)
    with open(path) as f:
        loaded = json.load(f)
    assert loaded["aggregate"]["episodes"] == 4


def test_run_eval_reproducible():
    cfg = EvalConfig(directive="FULL", episodes_per_motion=2, cycles=1, seed=9)
    a = eval_over(make_policy(seed=3), cfg)
    b = eval_over(make_policy(seed=3), cfg)
    assert json.dumps(a.to_dict(), sort_keys=True) == \
        json.dumps(b.to_dict(), sort_keys=True)


def test_run_eval_rejects_empty_motion_set():
    with pytest.raises(ValueError):
        run_eval(MODEL, make_policy(),
                 [], EvalConfig(directive="FULL"))


def test_collapsing_policy_fails_every_episode():
    policy = make_policy()
    # saturate the actor head so the legs fold immediately
    policy.actor.head.b[:] = 3.0
    cfg = EvalConfig(directive="FULL", episodes_per_motion=2, cycles=3,
                     seed=1, randomize=False)
    report = eval_over(policy, cfg, motions=[make_motion("fall", horizon=40)])
    assert report.aggregate["fail_pct"] == 100.0
    assert report.aggregate["mean_steps"] < 120


def test_loco_masked_keeps_offsets_and_commands():
    motion = make_motion("masked", v=(0.3, 0.1), w=0.2)
    directive = make_directive(motion, "UPPER_LOCO", MODEL, start_offset=3)
    masked = loco_masked(directive, MODEL)
    assert masked.pattern == "LOCO"
    assert masked.start_offset == 3
    step = directive_step(masked, 0)
    assert step.pose_hat.v[0] == pytest.approx(0.3)
    assert step.mask.bits[:J].sum() == 0
