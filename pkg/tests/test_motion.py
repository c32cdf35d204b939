import numpy as np
import pytest

from marionette import motion as mo
from marionette.model import default_model

MODEL = default_model()
J = MODEL.num_joints
D = mo.pose_dim(J)


def random_pose(rng):
    return mo.Pose.from_vector(rng.standard_normal(D), J)


def random_motion(rng, horizon=25):
    return mo.Motion(rng.standard_normal((horizon, D)), J)


def test_pose_vector_layout():
    # the flattening order is part of the file format, freeze it
    p = mo.Pose(theta=np.arange(1, J + 1, dtype=float),
                theta_dot=np.arange(101, 101 + J, dtype=float),
                v=np.array([201.0, 202.0]), w=203.0,
                b=np.array([301.0, 302.0, 303.0]))
    vec = p.as_vector()
    assert vec.shape == (2 * J + 6,)
    assert np.array_equal(vec[:J], np.arange(1, J + 1))
    assert np.array_equal(vec[J:2 * J], np.arange(101, 101 + J))
    assert np.array_equal(vec[2 * J:], [201, 202, 203, 301, 302, 303])


def test_pose_vector_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        vec = rng.standard_normal(D)
        assert np.array_equal(mo.Pose.from_vector(vec, J).as_vector(), vec)


def test_pose_rejects_bad_shapes():
    with pytest.raises(ValueError):
        mo.Pose(np.zeros(J), np.zeros(J - 1), np.zeros(2), 0.0, np.zeros(3))
    with pytest.raises(ValueError):
        mo.Pose(np.zeros(J), np.zeros(J), np.zeros(3), 0.0, np.zeros(3))
    with pytest.raises(ValueError):
        mo.Pose.from_vector(np.zeros(D + 1), J)
    bad = np.zeros(D)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        mo.Pose.from_vector(bad, J)


def test_mask_patterns_select_expected_bits():
    full = mo.make_mask_pattern("FULL", MODEL)
    assert full.all_ones and len(full) == D

    loco = mo.make_mask_pattern("LOCO", MODEL)
    assert np.all(loco.bits[:2 * J] == 0)
    assert np.all(loco.bits[2 * J:] == 1)

    upper = mo.make_mask_pattern("UPPER_STAND", MODEL)
    up = np.asarray(MODEL.upper_joint_indices)
    lo = np.asarray(MODEL.lower_joint_indices)
    assert np.all(upper.bits[up] == 1)
    assert np.all(upper.bits[J + up] == 1)
    assert np.all(upper.bits[lo] == 0)
    assert np.all(upper.bits[J + lo] == 0)
    assert np.all(upper.bits[2 * J:] == 1)

    # the two upper-body patterns share bits; only the command content differs
    assert np.array_equal(upper.bits, mo.make_mask_pattern("UPPER_LOCO", MODEL).bits)

    with pytest.raises(ValueError):
        mo.make_mask_pattern("LOWER", MODEL)


def test_apply_mask_zeroes_and_is_idempotent():
    rng = np.random.default_rng(1)
    for pattern in mo.PATTERNS:
        mask = mo.make_mask_pattern(pattern, MODEL)
        p = random_pose(rng)
        masked = mo.apply_mask(p, mask)
        vec = masked.as_vector()
        assert np.all(vec[mask.bits == 0] == 0.0)
        assert np.array_equal(vec[mask.bits == 1], p.as_vector()[mask.bits == 1])
        again = mo.apply_mask(masked, mask)
        assert np.array_equal(again.as_vector(), vec)


def test_mask_rejects_non_binary():
    with pytest.raises(ValueError):
        mo.Mask(np.full(D, 0.5))


def test_motion_needs_two_frames():
    with pytest.raises(ValueError):
        mo.Motion(np.zeros((1, D)), J)
    m = mo.Motion(np.zeros((2, D)), J)
    assert m.horizon == 2
    assert np.isclose(m.duration, mo.MOTION_DT)


def test_directive_rejects_nonzero_masked_dims():
    rng = np.random.default_rng(2)
    m = random_motion(rng)
    masks = np.tile(mo.make_mask_pattern("LOCO", MODEL).bits, (m.horizon, 1))
    with pytest.raises(ValueError):
        mo.Directive(m, masks, "LOCO")   # joint dims are nonzero but masked out
    ok = mo.make_directive(m, "LOCO", MODEL)
    assert np.all(ok.motion.frames[:, :2 * J] == 0.0)


def test_directive_step_cycles_with_offset():
    rng = np.random.default_rng(3)
    d = mo.make_directive(random_motion(rng, horizon=7), "FULL", MODEL, start_offset=3)
    for t in range(30):
        step = mo.directive_step(d, t)
        assert step.frame_index == (t + 3) % 7
        assert np.array_equal(step.pose_hat.as_vector(), d.motion.frames[(t + 3) % 7])
    with pytest.raises(ValueError):
        mo.directive_step(d, -1)


def test_standing_discriminator():
    vec = np.zeros(D)
    base = mo.Pose.from_vector(vec, J)
    full = mo.make_mask_pattern("FULL", MODEL)
    assert mo.DirectiveStep(base, full, 0).standing

    moving = vec.copy()
    moving[2 * J] = 0.4     # vx
    p = mo.Pose.from_vector(moving, J)
    assert not mo.DirectiveStep(p, full, 0).standing

    # masked-out velocity counts as standing regardless of stored content
    bits = full.bits.copy()
    bits[2 * J:2 * J + 2] = 0
    p0 = mo.Pose.from_vector(moving * bits, J)
    assert mo.DirectiveStep(p0, mo.Mask(bits), 0).standing


def brute_force_interp(times, values, t):
    # independent linear interpolation, one query at a time
    if t <= times[0]:
        return values[0]
    if t >= times[-1]:
        return values[-1]
    for i in range(len(times) - 1):
        if times[i] <= t <= times[i + 1]:
            a = (t - times[i]) / (times[i + 1] - times[i])
            return (1 - a) * values[i] + a * values[i + 1]
    raise AssertionError("unreachable")


def test_resample_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = rng.integers(3, 12)
        times = np.cumsum(rng.uniform(0.01, 0.3, size=n))
        values = rng.standard_normal((n, 5))
        grid, out = mo.resample_series(times, values, 0.02)
        assert np.isclose(grid[0], times[0])
        assert grid[-1] <= times[-1] + 1e-12
        for gi, t in enumerate(grid):
            expected = brute_force_interp(times, values, t)
            assert np.allclose(out[gi], expected, atol=1e-12)


def test_resample_grid_arithmetic():
    # span of exactly k*dt lands the final sample on the last input frame
    times = np.array([0.0, 0.1])
    values = np.zeros((2, 1))
    grid, _ = mo.resample_series(times, values, 0.02)
    assert grid.shape[0] == 6
    assert np.isclose(grid[-1], 0.1)

    # fractional leftover is dropped, not extrapolated
    grid2, _ = mo.resample_series(np.array([0.0, 0.109]), values, 0.02)
    assert grid2.shape[0] == 6
    assert grid2[-1] <= 0.109


def test_resample_preserves_node_values():
    # input frames already on the grid pass through unchanged
    rng = np.random.default_rng(5)
    values = rng.standard_normal((9, D))
    times = np.arange(9) * mo.MOTION_DT
    m = mo.resample_motion(times, values, J)
    assert m.horizon == 9
    assert np.allclose(m.frames, values, atol=1e-12)


def test_resample_rejects_bad_timestamps():
    values = np.zeros((3, 2))
    with pytest.raises(ValueError):
        mo.resample_series(np.array([0.0, 0.1, 0.1]), values, 0.02)
    with pytest.raises(ValueError):
        mo.resample_series(np.array([0.0, 0.2, 0.1]), values, 0.02)
    with pytest.raises(ValueError):
        mo.resample_series(np.array([0.0]), values[:1], 0.02)


def test_motion_json_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(6)
    m = random_motion(rng, horizon=13)
    path = tmp_path / "clip.json"
    mo.save_motion(m, path, MODEL.name)
    back = mo.load_motion(path, MODEL)
    # repr-based JSON floats survive the round trip bit for bit
    assert np.array_equal(back.frames, m.frames)
    assert back.dt == m.dt and back.num_joints == m.num_joints


def test_motion_load_validates_model(tmp_path):
    rng = np.random.default_rng(7)
    m = random_motion(rng)
    path = tmp_path / "clip.json"
    mo.save_motion(m, path, "other_model")
    with pytest.raises(mo.MotionFormatError):
        mo.load_motion(path, MODEL)
    mo.load_motion(path)  # no model given: name goes unchecked


def test_motion_load_rejects_wrong_joint_count(tmp_path):
    doc = mo.motion_to_dict(random_motion(np.random.default_rng(8)), MODEL.name)
    for row in doc["frames"]:
        row[0] = row[0][:-1]
        row[1] = row[1][:-1]
    path = tmp_path / "bad.json"
    path.write_text(__import__("json").dumps(doc))
    with pytest.raises(mo.MotionFormatError):
        mo.load_motion(path, MODEL)


def test_motion_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("not json at all {")
    with pytest.raises(mo.MotionFormatError):
        mo.load_motion(path)
    path.write_text("{\"model\": \"m\", \"dt\": 0.02}")
    with pytest.raises(mo.MotionFormatError):
        mo.load_motion(path)


def test_directive_json_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    d = mo.make_directive(random_motion(rng), "UPPER_LOCO", MODEL, start_offset=5)
    path = tmp_path / "directive.json"
    mo.save_directive(d, path, MODEL.name)
    back = mo.load_directive(path, MODEL)
    assert back.pattern == "UPPER_LOCO"
    assert back.start_offset == 5
    assert np.array_equal(back.masks, d.masks)
    assert np.array_equal(back.motion.frames, d.motion.frames)
