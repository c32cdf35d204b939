import numpy as np
import pytest

from marionette import motion as mo
from marionette import reward as rw
from marionette.model import default_model
from marionette.rotations import quat_from_rpy, rotvec_to_quat
from marionette.sim import Simulator

MODEL = default_model()
J = MODEL.num_joints
SIM = Simulator(MODEL)


def make_step(pattern="FULL", v=(0.0, 0.0), w=0.0, b=None, theta=None):
    bvec = np.array([0.0, 0.0, MODEL.nominal_height]) if b is None else np.asarray(b)
    th = MODEL.nominal_theta.copy() if theta is None else np.asarray(theta)
    pose = mo.Pose(theta=th, theta_dot=np.zeros(J), v=np.asarray(v, float),
                   w=w, b=bvec)
    mask = mo.make_mask_pattern(pattern, MODEL)
    pose = mo.apply_mask(pose, mask)
    return mo.DirectiveStep(pose, mask, 0)


def zero_ctx(**kw):
    base = dict(target_heading=0.0, base_acc=np.zeros(3),
                touchdown=np.zeros(2, dtype=bool), air_at_touchdown=np.zeros(2),
                single_support_recent=False, mean_abs_tau=np.zeros(J))
    base.update(kw)
    return rw.RewardContext(**base)


def nominal_state():
    return SIM.default_state()


# ---------------------------------------------------------------------------
# quaternion distance


def test_quaternion_distance_identity_and_double_cover():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        assert rw.quaternion_distance(q, q) < 1e-12
        assert rw.quaternion_distance(q, -q) < 1e-12


def test_quaternion_distance_quarter_turn():
    q90 = rotvec_to_quat(np.array([0.0, 0.0, np.pi / 2]))
    qi = np.array([1.0, 0.0, 0.0, 0.0])
    assert np.isclose(rw.quaternion_distance(qi, q90), 0.5, atol=1e-12)


def test_quaternion_distance_rejects_non_unit():
    with pytest.raises(ValueError):
        rw.quaternion_distance(np.array([2.0, 0, 0, 0]),
                               np.array([1.0, 0, 0, 0]))


# ---------------------------------------------------------------------------
# tracking


def test_tracking_exact_and_vacuous():
    rng = np.random.default_rng(1)
    th = rng.standard_normal(J)
    assert rw.tracking_reward(th, th, np.ones(J)) == 1.0
    other = rng.standard_normal(J)
    assert rw.tracking_reward(th, other, np.zeros(J)) == 1.0


def test_tracking_single_joint_half_point():
    th = np.zeros(J)
    hat = np.zeros(J)
    hat[4] = 0.462098
    mask = np.zeros(J)
    mask[4] = 1.0
    assert abs(rw.tracking_reward(th, hat, mask) - 0.5) < 1e-4


def test_tracking_formula_on_random_cases():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        th = rng.standard_normal(J)
        hat = rng.standard_normal(J)
        mask = rng.integers(0, 2, J).astype(float)
        want = np.exp(-1.5 * np.linalg.norm((th - hat) * mask))
        assert abs(rw.tracking_reward(th, hat, mask) - want) < 1e-12


def test_tracking_monotone_in_each_unmasked_error():
    mask = np.ones(J)
    th = np.zeros(J)
    prev = 1.0
    for err in (0.1, 0.3, 0.7, 1.5):
        hat = np.zeros(J)
        hat[2] = err
        val = rw.tracking_reward(th, hat, mask)
        assert val < prev
        prev = val


def test_tracking_ignores_masked_joint_errors():
    step = make_step("LOCO")
    st = nominal_state()
    ctx = zero_ctx()
    a = rw.term_rewards(st, step, ctx, np.zeros(J), np.zeros(J), MODEL)
    st2 = st.copy()
    st2.theta = st.theta + np.linspace(0.1, 0.5, J)  # all joints are masked
    b = rw.term_rewards(st2, step, ctx, np.zeros(J), np.zeros(J), MODEL)
    assert a.terms["tracking"] == 1.0
    assert b.terms["tracking"] == 1.0


# ---------------------------------------------------------------------------
# term table


def test_weights_are_the_published_table():
    assert rw.REWARD_WEIGHTS == {
        "xy_velocity": 0.15, "tracking": 0.2, "yaw": 0.1, "roll_pitch": 0.2,
        "height": 0.05, "feet_orientation": 0.05, "feet_position": 0.05,
        "feet_airtime": 1.0, "feet_contact": 0.1, "arm": 0.03,
        "base_acceleration": 0.1, "action_difference": 0.02, "torque": 0.02,
    }
    assert np.isclose(sum(rw.REWARD_WEIGHTS.values()), 2.07)
    style_sum = sum(rw.REWARD_WEIGHTS[k] for k in rw.STYLE_TERMS)
    assert np.isclose(style_sum, 1.23)


def test_standing_at_nominal_scores_one_everywhere():
    # nominal stance, zero velocity, zero commands: every exp-form term is 1,
    # and the standing branch fixes airtime/contact at 1
    st = nominal_state()
    step = make_step("LOCO")
    bd = rw.term_rewards(st, step, zero_ctx(), np.zeros(J), np.zeros(J), MODEL)
    arm_nominal = np.exp(-3.0 * np.linalg.norm(MODEL.nominal_theta[MODEL.arm_joint_indices]))
    for name, val in bd.terms.items():
        if name == "arm":
            assert np.isclose(val, arm_nominal, atol=1e-12)
        else:
            assert val == 1.0, name
    assert np.isclose(bd.total, 2.07, atol=1e-12)  # arms hang at exactly zero


def test_exp_terms_stay_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(20):
        st = nominal_state()
        st.base_pos += rng.normal(0, 0.1, 3)
        st.base_quat = rotvec_to_quat(rng.normal(0, 0.2, 3))
        st.base_linvel = rng.normal(0, 1.0, 3)
        st.theta = np.clip(st.theta + rng.normal(0, 0.5, J),
                           MODEL.joint_lower, MODEL.joint_upper)
        step = make_step("UPPER_LOCO", v=(0.5, 0.0))
        ctx = zero_ctx(base_acc=rng.normal(0, 5, 3),
                       mean_abs_tau=rng.uniform(0, 50, J),
                       target_heading=rng.normal(0, 1))
        bd = rw.term_rewards(st, step, ctx, rng.normal(0, 1, J),
                             rng.normal(0, 1, J), MODEL)
        for name, val in bd.terms.items():
            if name == "feet_airtime":
                assert -0.8 <= val <= 2.0    # walking branch, not exp-form
            elif name == "feet_contact":
                assert val in (0.0, 1.0)
            else:
                assert 0.0 < val <= 1.0, name


def test_height_error_example():
    st = nominal_state()
    st.base_pos[2] += 0.05
    bd = rw.term_rewards(st, make_step("LOCO"), zero_ctx(), np.zeros(J),
                         np.zeros(J), MODEL)
    assert np.isclose(bd.terms["height"], np.exp(-1.0), atol=1e-9)


def test_yaw_term_follows_heading_error():
    st = nominal_state()
    bd = rw.term_rewards(st, make_step("LOCO"), zero_ctx(target_heading=0.0),
                         np.zeros(J), np.zeros(J), MODEL)
    assert bd.terms["yaw"] == 1.0
    bd2 = rw.term_rewards(st, make_step("LOCO"), zero_ctx(target_heading=0.1),
                          np.zeros(J), np.zeros(J), MODEL)
    qd = 1.0 - np.cos(0.05) ** 2
    assert np.isclose(bd2.terms["yaw"], np.exp(-300.0 * qd), atol=1e-12)


def test_roll_pitch_term():
    st = nominal_state()
    st.base_quat = quat_from_rpy(0.1, 0.0, 0.0)
    bd = rw.term_rewards(st, make_step("LOCO"), zero_ctx(), np.zeros(J),
                         np.zeros(J), MODEL)
    qd = 1.0 - np.cos(0.05) ** 2
    assert np.isclose(bd.terms["roll_pitch"], np.exp(-30.0 * qd), atol=1e-10)


def test_xy_velocity_branches():
    st = nominal_state()
    st.base_linvel[0] = 0.3
    standing = rw.term_rewards(st, make_step("LOCO"), zero_ctx(),
                               np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(standing.terms["xy_velocity"], np.exp(-5 * 0.09), atol=1e-12)

    walking_matched = rw.term_rewards(st, make_step("LOCO", v=(0.3, 0.0)),
                                      zero_ctx(), np.zeros(J), np.zeros(J), MODEL)
    assert walking_matched.terms["xy_velocity"] == 1.0

    walking_off = rw.term_rewards(st, make_step("LOCO", v=(0.5, 0.0)),
                                  zero_ctx(), np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(walking_off.terms["xy_velocity"], np.exp(-5 * 0.04), atol=1e-12)


def test_xy_velocity_command_rotates_with_heading():
    # base yawed 90 degrees, moving along world +y, commanded forward 0.3:
    # the command is interpreted in the heading frame, so tracking is perfect
    st = nominal_state()
    st.base_quat = quat_from_rpy(0.0, 0.0, np.pi / 2)
    st.base_linvel[1] = 0.3
    bd = rw.term_rewards(st, make_step("LOCO", v=(0.3, 0.0)), zero_ctx(),
                         np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(bd.terms["xy_velocity"], 1.0, atol=1e-9)


def test_feet_airtime_walking_credit():
    st = nominal_state()
    step = make_step("LOCO", v=(0.4, 0.0))
    ctx = zero_ctx(touchdown=np.array([True, False]),
                   air_at_touchdown=np.array([0.6, 0.0]))
    bd = rw.term_rewards(st, step, ctx, np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(bd.terms["feet_airtime"], 0.2, atol=1e-12)

    ctx2 = zero_ctx(touchdown=np.array([True, True]),
                    air_at_touchdown=np.array([0.1, 0.0]))
    bd2 = rw.term_rewards(st, step, ctx2, np.zeros(J), np.zeros(J), MODEL)
    # -0.3 for the short hop, floor of -0.4 for the instant re-contact
    assert np.isclose(bd2.terms["feet_airtime"], -0.7, atol=1e-12)

    no_td = rw.term_rewards(st, step, zero_ctx(), np.zeros(J), np.zeros(J), MODEL)
    assert no_td.terms["feet_airtime"] == 0.0


def test_feet_contact_single_support_window():
    st = nominal_state()
    step = make_step("LOCO", v=(0.4, 0.0))
    yes = rw.term_rewards(st, step, zero_ctx(single_support_recent=True),
                          np.zeros(J), np.zeros(J), MODEL)
    no = rw.term_rewards(st, step, zero_ctx(single_support_recent=False),
                         np.zeros(J), np.zeros(J), MODEL)
    assert yes.terms["feet_contact"] == 1.0
    assert no.terms["feet_contact"] == 0.0


def test_feet_position_walking_is_constant():
    st = nominal_state()
    # swing one leg forward: its foot leaves the default stance slot
    st.theta = st.theta.copy()
    st.theta[MODEL.joint_index("l_hip_pitch")] = -0.8
    bd = rw.term_rewards(st, make_step("LOCO", v=(0.4, 0.0)), zero_ctx(),
                         np.zeros(J), np.zeros(J), MODEL)
    assert bd.terms["feet_position"] == 1.0
    standing = rw.term_rewards(st, make_step("LOCO"), zero_ctx(),
                               np.zeros(J), np.zeros(J), MODEL)
    assert standing.terms["feet_position"] < 0.5


def test_torque_term():
    st = nominal_state()
    step = make_step("LOCO")
    at_limit = rw.term_rewards(st, step, zero_ctx(mean_abs_tau=MODEL.torque_limit.copy()),
                               np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(at_limit.terms["torque"], np.exp(-0.02), atol=1e-12)


def test_action_difference_term():
    st = nominal_state()
    step = make_step("LOCO")
    a = np.linspace(-1, 1, J)
    same = rw.term_rewards(st, step, zero_ctx(), a, a, MODEL)
    assert same.terms["action_difference"] == 1.0
    moved = rw.term_rewards(st, step, zero_ctx(), a, a + 0.1, MODEL)
    assert np.isclose(moved.terms["action_difference"],
                      np.exp(-0.02 * 0.1 * J), atol=1e-12)


def test_base_acceleration_term():
    st = nominal_state()
    step = make_step("LOCO")
    ctx = zero_ctx(base_acc=np.array([1.0, -2.0, 3.0]))
    bd = rw.term_rewards(st, step, ctx, np.zeros(J), np.zeros(J), MODEL)
    assert np.isclose(bd.terms["base_acceleration"], np.exp(-0.06), atol=1e-12)


# ---------------------------------------------------------------------------
# gating


def test_full_mask_excludes_style_terms():
    st = nominal_state()
    bd = rw.term_rewards(st, make_step("FULL"), zero_ctx(), np.zeros(J),
                         np.zeros(J), MODEL)
    for name in rw.STYLE_TERMS:
        assert name not in bd.terms
    assert len(bd.terms) == 8


def test_full_mask_total_ignores_foot_and_arm_perturbations():
    st = nominal_state()
    step = make_step("FULL", theta=MODEL.nominal_theta)
    bd = rw.term_rewards(st, step, zero_ctx(), np.zeros(J), np.zeros(J), MODEL)

    st2 = st.copy()
    arm = MODEL.arm_joint_indices
    st2.theta = st.theta.copy()
    st2.theta[arm[0]] += 0.8    # swing an arm; tracking changes, style cannot
    step2 = make_step("FULL", theta=st2.theta)
    bd2 = rw.term_rewards(st2, step2, zero_ctx(), np.zeros(J), np.zeros(J), MODEL)
    # both tracked perfectly: identical totals even with different postures
    assert np.isclose(bd.total, bd2.total, atol=1e-12)
    assert np.isclose(bd.total, 2.07 - 1.23, atol=1e-12)


def test_total_reward_linearity_in_tracking():
    st = nominal_state()
    bd = rw.term_rewards(st, make_step("LOCO"), zero_ctx(), np.zeros(J),
                         np.zeros(J), MODEL)
    halved = dict(bd.terms)
    delta = 0.5 * halved["tracking"]
    halved["tracking"] -= delta
    bd2 = rw.RewardBreakdown(halved, bd.weights)
    assert np.isclose(bd.total - bd2.total, 0.2 * delta, atol=1e-12)


def test_total_reward_rejects_gating_mismatch():
    st = nominal_state()
    loco_bd = rw.term_rewards(st, make_step("LOCO"), zero_ctx(), np.zeros(J),
                              np.zeros(J), MODEL)
    full_bd = rw.term_rewards(st, make_step("FULL"), zero_ctx(), np.zeros(J),
                              np.zeros(J), MODEL)
    full_mask = mo.make_mask_pattern("FULL", MODEL)
    loco_mask = mo.make_mask_pattern("LOCO", MODEL)
    assert rw.total_reward(loco_bd, loco_mask) == loco_bd.total
    assert rw.total_reward(full_bd, full_mask) == full_bd.total
    with pytest.raises(ValueError):
        rw.total_reward(loco_bd, full_mask)
    with pytest.raises(ValueError):
        rw.total_reward(full_bd, loco_mask)
