import json
import os

import numpy as np
import pytest

from marionette.curriculum import (
    EpisodeSegment,
    EpisodeSpec,
    StageSpec,
    locomotion_directive,
)
from marionette.model import default_model
from marionette.nets import Adam
from marionette.policy import MHCPolicy
from marionette.ppo import (
    PPOConfig,
    StagePlan,
    buffer_metrics,
    collect_rollouts,
    compute_gae,
    minibatch_update,
    normalize_advantages,
    pack_minibatch,
    ppo_update,
    stage_schedule,
    train,
)
from marionette.rollout import run_episode

MODEL = default_model()
J = MODEL.num_joints

# small, quiet stage so training tests stay fast
TINY_STAGE = StageSpec(stage=1, episode_len=40, window_range=(20, 20),
                       perturbation=None, patterns=("LOCO",),
                       pattern_weights=(1.0,))


def make_policy(seed=0, **kw):
    return MHCPolicy(MODEL, np.random.default_rng(seed), **kw)


def stand_spec(length, dynamics_seed=0):
    d = locomotion_directive((0.0, 0.0), 0.0, MODEL.nominal_height, MODEL)
    return EpisodeSpec([EpisodeSegment(d, length)], [], dynamics_seed)


def brute_force_gae(rewards, values, bootstrap, gamma, lam):
    t_len = len(rewards)
    vnext = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * vnext - values
    adv = np.zeros(t_len)
    for t in range(t_len):
        for l in range(t_len - t):
            adv[t] += (gamma * lam) ** l * deltas[t + l]
    return adv


def test_gae_matches_brute_force():
    rng = np.random.default_rng(0)
    for t_len in range(1, 9):
        for bootstrap in (0.0, float(rng.standard_normal())):
            r = rng.standard_normal(t_len)
            v = rng.standard_normal(t_len)
            adv, ret = compute_gae(r, v, bootstrap, 0.95, 0.95)
            ref = brute_force_gae(r, v, bootstrap, 0.95, 0.95)
            assert np.abs(adv - ref).max() < 1e-12
            assert np.abs(ret - (adv + v)).max() < 1e-12


def test_gae_bootstrap_enters_only_through_tail():
    rng = np.random.default_rng(1)
    r = rng.standard_normal(6)
    v = rng.standard_normal(6)
    a0, _ = compute_gae(r, v, 0.0, 0.9, 0.8)
    a1, _ = compute_gae(r, v, 2.0, 0.9, 0.8)
    diff = a1 - a0
    # each earlier step sees the bootstrap through one extra gamma*lambda
    assert diff[-1] == pytest.approx(0.9 * 2.0)
    for t in range(5):
        assert diff[t] == pytest.approx(diff[t + 1] * 0.9 * 0.8)


def test_advantage_normalization():
    rng = np.random.default_rng(2)
    advs = [rng.standard_normal(n) * 3.0 + 1.5 for n in (5, 17, 9)]
    out = normalize_advantages(advs)
    assert [len(a) for a in out] == [5, 17, 9]
    flat = np.concatenate(out)
    assert abs(flat.mean()) <= 1e-9
    assert abs(flat.std() - 1.0) <= 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(gamma=1.5)
    with pytest.raises(ValueError):
        PPOConfig(buffer_size=0)
    with pytest.raises(ValueError):
        PPOConfig(sigma_start=-0.1)
    with pytest.raises(ValueError):
        PPOConfig(sigma_anneal_iters=0)


def test_scheduled_sigma_log_linear():
    cfg = PPOConfig(sigma_start=0.5, sigma_anneal_iters=4)
    floor = float(np.exp(LOG_STD_FLOOR))
    assert scheduled_sigma(cfg, 0) == pytest.approx(0.5)
    assert scheduled_sigma(cfg, 2) == pytest.approx(np.sqrt(0.5 * floor))
    assert scheduled_sigma(cfg, 4) == pytest.approx(floor)
    assert scheduled_sigma(cfg, 100) == pytest.approx(floor)
    assert scheduled_sigma(PPOConfig(), 0) is None


def test_train_applies_sigma_schedule(tmp_path):
    cfg = PPOConfig(buffer_size=70, epochs=1, episodes_per_batch=2,
                    sigma_start=0.4, sigma_anneal_iters=2)
    policy = make_policy(seed=11)
    schedule = [StagePlan(TINY_STAGE, 3)]
    train(MODEL, policy, [], schedule, cfg, os.path.join(str(tmp_path), "s"),
          run_seed=21, checkpoint_every=5)
    # after the anneal window every iteration re-pins the std at the floor
    assert np.allclose(policy.log_std, LOG_STD_FLOOR)


def test_collect_fills_buffer_minimally():
    cfg = PPOConfig(buffer_size=90)
    records = collect_rollouts(MODEL, make_policy(), TINY_STAGE, [], cfg,
                               run_seed=3, iteration=0)
    total = sum(r.length for r in records)
    assert total >= 90
    assert total - records[-1].length < 90
    assert records[0].seed == (3, 0, 0)


def test_collect_is_deterministic():
    cfg = PPOConfig(buffer_size=90)
    a = collect_rollouts(MODEL, make_policy(), TINY_STAGE, [], cfg, 3, 0)
    b = collect_rollouts(MODEL, make_policy(), TINY_STAGE, [], cfg, 3, 0)
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.obs, rb.obs)
        assert np.array_equal(ra.actions, rb.actions)
        assert np.array_equal(ra.rewards, rb.rewards)


def test_collect_workers_match_serial():
    cfg = PPOConfig(buffer_size=90)
    serial = collect_rollouts(MODEL, make_policy(), TINY_STAGE, [], cfg, 3, 0)
    parallel = collect_rollouts(MODEL, make_policy(), TINY_STAGE, [], cfg, 3, 0,
                                workers=2)
    assert len(serial) == len(parallel)
    for ra, rb in zip(serial, parallel):
        assert np.array_equal(ra.obs, rb.obs)
        assert np.array_equal(ra.actions, rb.actions)


def collect_small(policy, lengths=(12, 9, 15), seed=0):
    records = []
    for i, t_len in enumerate(lengths):
        rng = np.random.default_rng([seed, i])
        records.append(run_episode(MODEL, policy, stand_spec(t_len),
                                   action_rng=rng, randomize=False))
    return records


def test_pack_minibatch_padding():
    policy = make_policy()
    records = collect_small(policy)
    advs = [np.ones(r.length) for r in records]
    rets = [np.zeros(r.length) for r in records]
    batch = pack_minibatch(records, advs, rets)
    assert batch.obs.shape[0] == 15
    assert batch.obs.shape[1] == 3
    assert batch.valid[:12, 0].all() and not batch.valid[12:, 0].any()
    assert batch.valid.sum() == 12 + 9 + 15
    assert not batch.obs[12:, 0].any()


def test_first_update_has_unit_ratios():
    policy = make_policy()
    records = collect_small(policy)
    pairs = [compute_gae(r.rewards, r.values, r.bootstrap_value, 0.95, 0.95)
             for r in records]
    advs = normalize_advantages([p[0] for p in pairs])
    batch = pack_minibatch(records, advs, [p[1] for p in pairs])
    policy.zero_grads()
    stats = minibatch_update(policy, batch, PPOConfig())
    # weights unchanged since collection, so the ratio is 1 everywhere
    assert abs(stats["approx_kl"]) < 1e-9
    assert stats["clip_fraction"] == 0.0
    assert abs(stats["loss_pi"]) < 1e-9


def synthetic_batch(policy, rng, t_len=7, b=3):
    j = policy.num_joints
    obs = rng.standard_normal((t_len, b, policy.obs_dim))
    dirs = rng.standard_normal((t_len, b, policy.dir_dim))
    acts = rng.standard_normal((t_len, b, j)) * 0.2
    means, values, _ = policy.sequence_forward(obs, dirs)
    logp = np.stack([
        np.stack([policy.log_prob(acts[t, k], means[t, k]) for k in range(b)])
        for t in range(t_len)])
    logp_old = logp + rng.uniform(-0.3, 0.3, (t_len, b))
    adv = rng.standard_normal((t_len, b))
    ret = rng.standard_normal((t_len, b))
    valid = np.ones((t_len, b))
    valid[-2:, 0] = 0.0
    from marionette.ppo import Minibatch
    return Minibatch(obs, dirs, acts, logp_old, adv, ret, valid)


def test_surrogate_gradients_match_finite_differences():
    policy = make_policy(seed=4, embed_dim=8, hidden_dim=6)
    rng = np.random.default_rng(5)
    batch = synthetic_batch(policy, rng)
    cfg = PPOConfig(value_coef=0.7, entropy_coef=0.01)

    policy.zero_grads()
    minibatch_update(policy, batch, cfg)
    grads = {k: v.copy() for k, v in policy.grads().items()}
    params = policy.params()

    def loss_now():
        policy.zero_grads()
        return minibatch_update(policy, batch, cfg)["loss"]

    eps = 1e-6
    checked = 0
    for name in ("actor.head.w", "actor.enc.w", "actor.l1.u", "critic.head.w",
                 "critic.l2.w", "log_std"):
        p = params[name]
        flat = p.reshape(-1)
        for idx in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            keep = flat[idx]
            flat[idx] = keep + eps
            up = loss_now()
            flat[idx] = keep - eps
            down = loss_now()
            flat[idx] = keep
            fd = (up - down) / (2.0 * eps)
            got = grads[name].reshape(-1)[idx]
            # absolute floor absorbs finite-difference roundoff on the
            # O(1) loss; a wrong sign or scale still fails by orders
            assert abs(got - fd) <= 1e-4 * abs(fd) + 1e-7, (name, idx)
            checked += 1
    assert checked >= 16


def test_padding_contributes_no_gradient():
    policy = make_policy(seed=6, embed_dim=8, hidden_dim=6)
    rng = np.random.default_rng(7)
    batch = synthetic_batch(policy, rng)
    policy.zero_grads()
    minibatch_update(policy, batch, PPOConfig())
    grads_a = {k: v.copy() for k, v in policy.grads().items()}
    # rewrite the padded tail; gradients must not change
    batch.obs[-2:, 0] = 123.0
    batch.actions[-2:, 0] = -3.0
    batch.advantages[-2:, 0] = 50.0
    policy.zero_grads()
    minibatch_update(policy, batch, PPOConfig())
    grads_b = policy.grads()
    for k in grads_a:
        assert np.array_equal(grads_a[k], grads_b[k]), k


def test_reported_grad_norm_is_pre_clip():
    policy = make_policy(seed=8, embed_dim=8, hidden_dim=6)
    rng = np.random.default_rng(9)
    batch = synthetic_batch(policy, rng)
    policy.zero_grads()
    minibatch_update(policy, batch, PPOConfig())
    grads = policy.grads()
    manual = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    opt = Adam(policy.params(), lr=3e-4)
    reported = opt.step(policy.params(), grads, max_norm=0.05)
    assert reported == pytest.approx(manual, rel=1e-12)


def test_ppo_update_with_zero_lr_keeps_params():
    policy = make_policy()
    records = collect_small(policy)
    before = {k: v.copy() for k, v in policy.params().items()}
    opt = Adam(policy.params(), lr=0.0)
    stats = ppo_update(policy, opt, records, PPOConfig(episodes_per_batch=2),
                       np.random.default_rng(0))
    after = policy.params()
    for k in before:
        assert np.array_equal(before[k], after[k]), k
    assert stats["updates"] == 2 * 5  # ceil(3/2) minibatches x 5 epochs


def test_stage_schedule_ablations():
    its = {1: 4, 2: 5, 3: 6}
    assert [p.stage.stage for p in stage_schedule("full", its)] == [1, 2, 3]
    assert [p.stage.stage for p in stage_schedule("no_curriculum", its)] == [3]
    assert [p.stage.stage for p in stage_schedule("loco_mask", its)] == [1, 3]
    assert [p.iterations for p in stage_schedule("loco_mask", its)] == [4, 6]
    with pytest.raises(ValueError):
        stage_schedule("bogus", its)


def test_buffer_metrics_fields():
    policy = make_policy()
    records = collect_small(policy)
    m = buffer_metrics(records)
    assert m["episodes"] == 3
    assert m["transitions"] == 12 + 9 + 15
    assert 0.0 <= m["failure_rate"] <= 1.0
    assert np.isfinite(m["mean_return"])
    assert "feet_contact" in m["term_means"]


TRAIN_CFG = PPOConfig(buffer_size=70, epochs=2, episodes_per_batch=2)


def run_tiny_train(tmp_path, name, resume_from=None, iterations=2):
    run_dir = os.path.join(tmp_path, name)
    policy = make_policy(seed=11)
    schedule = [StagePlan(TINY_STAGE, iterations)]
    out = train(MODEL, policy, [], schedule, TRAIN_CFG, run_dir, run_seed=21,
                checkpoint_every=1, resume_from=resume_from)
    return run_dir, out


def test_train_writes_artifacts(tmp_path):
    run_dir, out = run_tiny_train(str(tmp_path), "a")
    assert os.path.exists(os.path.join(run_dir, "manifest.json"))
    with open(os.path.join(run_dir, "metrics.ndjson")) as f:
        lines = [json.loads(l) for l in f]
    assert len(lines) == 2
    for i, line in enumerate(lines):
        assert line["iteration"] == i
        assert line["stage"] == 1
        for key in ("mean_return", "mean_length", "failure_rate", "loss_pi",
                    "loss_v", "clip_fraction", "grad_norm", "term_means"):
            assert key in line
    assert os.path.exists(out["final_checkpoint"])
    with open(os.path.join(run_dir, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["stages"] == [1]
    assert manifest["run_seed"] == 21


def test_train_metrics_reproducible(tmp_path):
    dir_a, _ = run_tiny_train(str(tmp_path), "a")
    dir_b, _ = run_tiny_train(str(tmp_path), "b")
    with open(os.path.join(dir_a, "metrics.ndjson"), "rb") as f:
        bytes_a = f.read()
    with open(os.path.join(dir_b, "metrics.ndjson"), "rb") as f:
        bytes_b = f.read()
    assert bytes_a == bytes_b


def test_train_resume_matches_uninterrupted(tmp_path):
    dir_full, _ = run_tiny_train(str(tmp_path), "full", iterations=2)
    dir_half, _ = run_tiny_train(str(tmp_path), "half", iterations=1)
    ckpt = os.path.join(dir_half, "checkpoints", "policy_000001.npz")
    run_tiny_train(str(tmp_path), "half", resume_from=ckpt, iterations=2)

    with open(os.path.join(dir_full, "metrics.ndjson")) as f:
        full_lines = f.read().splitlines()
    with open(os.path.join(dir_half, "metrics.ndjson")) as f:
        half_lines = f.read().splitlines()
    assert half_lines == full_lines

    a = np.load(os.path.join(dir_full, "checkpoints", "policy_000002.npz"))
    b = np.load(os.path.join(dir_half, "checkpoints", "policy_000002.npz"))
    assert set(a.files) == set(b.files)
    for k in a.files:
        assert np.array_equal(a[k], b[k]), k
