"""PPO over whole recurrent episodes, and the staged training loop.

Minibatches are groups of complete episodes replayed from zeroed hidden
state, padded to a common length; padding never contributes gradient.
Each episode's randomness derives from (run_seed, iteration, episode_index)
alone, so a fixed seed reproduces the exact rollout set and metrics log.
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .curriculum import GateConfig, STAGES, StageSpec, sample_episode, stage_gate
from .model import HumanoidModel
from .nets import Adam
from .policy import LOG_STD_FLOOR, MHCPolicy
from .rollout import EpisodeRecord, episode_rngs, run_episode

ABLATIONS = {
    "full": (1, 2, 3),
    "no_curriculum": (3,),
    "loco_mask": (1, 3),
}


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 3e-4
    buffer_size: int = 50000
    epochs: int = 5
    episodes_per_batch: int = 8
    clip_ratio: float = 0.2
    max_grad_norm: float = 0.05
    gamma: float = 0.95
    gae_lambda: float = 0.95
    value_coef: float = 1.0
    entropy_coef: float = 0.0
    sigma_start: float | None = None
    sigma_anneal_iters: int = 1

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("discount factors out of range")
        if self.buffer_size < 1 or self.epochs < 1 or self.episodes_per_batch < 1:
            raise ValueError("buffer, epochs, and batch size must be positive")
        if self.sigma_start is not None and self.sigma_start <= 0.0:
            raise ValueError("sigma_start must be positive")
        if self.sigma_anneal_iters < 1:
            raise ValueError("sigma_anneal_iters must be positive")


def scheduled_sigma(config: PPOConfig, iteration: int) -> float | None:
    """Exploration std for an iteration under the annealing schedule.

    Log-linear from sigma_start down to the policy's std floor over
    sigma_anneal_iters iterations, then pinned at the floor. None when no
    schedule is configured (the std stays a learned parameter).
    """
    if config.sigma_start is None:
        return None
    t = min(iteration / config.sigma_anneal_iters, 1.0)
    log_sigma = (1.0 - t) * np.log(config.sigma_start) + t * LOG_STD_FLOOR
    return float(np.exp(log_sigma))


def compute_gae(rewards: np.ndarray, values: np.ndarray, bootstrap_value: float,
                gamma: float, lam: float):
    """Generalized advantage estimates and value targets for one episode."""
    t_len = len(rewards)
    adv = np.zeros(t_len)
    carry = 0.0
    next_value = bootstrap_value
    for t in range(t_len - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        carry = delta + gamma * lam * carry
        adv[t] = carry
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(advantages: list) -> list:
    """Zero-mean unit-variance scaling across the whole buffer."""
    flat = np.concatenate(advantages)
    mean = flat.mean()
    std = max(flat.std(), 1e-8)
    return [(a - mean) / std for a in advantages]


# -- collection ---------------------------------------------------------------

_WORKER_STATE: dict = {}


def _worker_init(model, policy):
    _WORKER_STATE["model"] = model
    _WORKER_STATE["policy"] = policy


def _worker_episode(args):
    spec, triple = args
    _, noise, action = episode_rngs(*triple)
    return run_episode(_WORKER_STATE["model"], _WORKER_STATE["policy"], spec,
                       noise_rng=noise, action_rng=action, seed=triple)


def collect_rollouts(model: HumanoidModel, policy: MHCPolicy, stage: StageSpec,
                     dataset: list, config: PPOConfig, run_seed: int,
                     iteration: int, workers: int = 1) -> list:
    """Run seeded episodes until the transition buffer is full.

    The episode set depends only on the seeds, not on the worker count: we
    always keep the shortest index-ordered prefix that fills the buffer.
    """
    records: list = []
    total = 0
    index = 0
    if workers <= 1:
        while total < config.buffer_size:
            sample, noise, action = episode_rngs(run_seed, iteration, index)
            spec = sample_episode(stage, dataset, model, sample)
            rec = run_episode(model, policy, spec, noise_rng=noise,
                              action_rng=action,
                              seed=(run_seed, iteration, index))
            records.append(rec)
            total += rec.length
            index += 1
        return records

    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                             initargs=(model, policy)) as pool:
        while total < config.buffer_size:
            tasks = []
            for _ in range(workers):
                sample, _, _ = episode_rngs(run_seed, iteration, index)
                spec = sample_episode(stage, dataset, model, sample)
                tasks.append((spec, (run_seed, iteration, index)))
                index += 1
            for rec in pool.map(_worker_episode, tasks):
                records.append(rec)
                total += rec.length
    while len(records) > 1 and total - records[-1].length >= config.buffer_size:
        total -= records[-1].length
        records.pop()
    return records


# -- update -------------------------------------------------------------------

@dataclass
class Minibatch:
    obs: np.ndarray        # (T, B, obs_dim) raw
    dir_inputs: np.ndarray  # (T, B, dir_dim)
    actions: np.ndarray    # (T, B, J)
    log_probs: np.ndarray  # (T, B)
    advantages: np.ndarray
    returns: np.ndarray
    valid: np.ndarray      # (T, B) 0/1


def pack_minibatch(records: list, advantages: list, returns: list) -> Minibatch:
    t_max = max(r.length for r in records)
    b = len(records)
    obs = np.zeros((t_max, b, records[0].obs.shape[1]))
    dirs = np.zeros((t_max, b, records[0].dir_inputs.shape[1]))
    acts = np.zeros((t_max, b, records[0].actions.shape[1]))
    logp = np.zeros((t_max, b))
    adv = np.zeros((t_max, b))
    ret = np.zeros((t_max, b))
    valid = np.zeros((t_max, b))
    for k, rec in enumerate(records):
        t = rec.length
        obs[:t, k] = rec.obs
        dirs[:t, k] = rec.dir_inputs
        acts[:t, k] = rec.actions
        logp[:t, k] = rec.log_probs
        adv[:t, k] = advantages[k]
        ret[:t, k] = returns[k]
        valid[:t, k] = 1.0
    return Minibatch(obs, dirs, acts, logp, adv, ret, valid)


def minibatch_update(policy: MHCPolicy, batch: Minibatch,
                     config: PPOConfig) -> dict:
    """Accumulate loss gradients for one minibatch into the policy.

    The caller zeroes gradients and applies the optimizer step; this keeps
    the function reusable for finite-difference checks of the objective.
    """
    means, values, caches = policy.sequence_forward(batch.obs, batch.dir_inputs)
    sigma = policy.std()
    n = batch.valid.sum()
    eps = config.clip_ratio

    z = (batch.actions - means) / sigma
    log_prob = (-0.5 * (z * z).sum(axis=-1) - np.log(sigma).sum()
                - 0.5 * sigma.size * np.log(2.0 * np.pi))
    ratio = np.exp(np.clip(log_prob - batch.log_probs, -30.0, 30.0))
    surr1 = ratio * batch.advantages
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * batch.advantages
    objective = np.minimum(surr1, surr2)
    loss_pi = -(objective * batch.valid).sum() / n
    value_err = values - batch.returns
    loss_v = (value_err * value_err * batch.valid).sum() / n
    entropy = policy.entropy()
    loss = loss_pi + config.value_coef * loss_v - config.entropy_coef * entropy

    # gradient flows through the ratio only where the unclipped branch wins
    selected = (surr1 <= surr2) & (batch.valid > 0.0)
    d_log_prob = np.where(selected, -batch.advantages * ratio, 0.0) / n
    d_means = d_log_prob[..., None] * (z / sigma)
    d_values = 2.0 * config.value_coef * value_err * batch.valid / n
    policy.sequence_backward(caches, d_means, d_values)

    # the std floor gates the log-std gradient
    active = (policy.log_std > LOG_STD_FLOOR).astype(float)
    g_ls = (d_log_prob[..., None] * (z * z - 1.0)).sum(axis=(0, 1))
    policy.g_log_std += active * (g_ls - config.entropy_coef)

    clipped = (np.abs(ratio - 1.0) > eps) & (batch.valid > 0.0)
    return {
        "loss": float(loss),
        "loss_pi": float(loss_pi),
        "loss_v": float(loss_v),
        "entropy": float(entropy),
        "clip_fraction": float(clipped.sum() / n),
        "approx_kl": float(((batch.log_probs - log_prob) * batch.valid).sum() / n),
    }


def ppo_update(policy: MHCPolicy, optimizer: Adam, records: list,
               config: PPOConfig, rng: np.random.Generator) -> dict:
    """Epochs of episode minibatches over one collected buffer."""
    pairs = [compute_gae(r.rewards, r.values, r.bootstrap_value,
                         config.gamma, config.gae_lambda) for r in records]
    advantages = normalize_advantages([p[0] for p in pairs])
    returns = [p[1] for p in pairs]

    agg: dict = {}
    grad_norms = []
    updates = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(records))
        for start in range(0, len(order), config.episodes_per_batch):
            idx = order[start:start + config.episodes_per_batch]
            batch = pack_minibatch([records[i] for i in idx],
                                   [advantages[i] for i in idx],
                                   [returns[i] for i in idx])
            policy.zero_grads()
            stats = minibatch_update(policy, batch, config)
            norm = optimizer.step(policy.params(), policy.grads(),
                                  max_norm=config.max_grad_norm)
            grad_norms.append(norm)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            updates += 1
    out = {k: v / updates for k, v in agg.items()}
    out["grad_norm"] = float(np.mean(grad_norms))
    out["updates"] = updates
    return out


# -- training loop ------------------------------------------------------------

@dataclass(frozen=True)
class StagePlan:
    """How long to spend in one curriculum stage."""

    stage: StageSpec
    iterations: int
    use_gate: bool = False
    gate: GateConfig = field(default_factory=GateConfig)


def stage_schedule(ablation: str, iterations: dict) -> list:
    """StagePlans for an ablation mode; iterations maps stage id to count."""
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    plans = []
    for sid in ABLATIONS[ablation]:
        plans.append(StagePlan(STAGES[sid], int(iterations[sid])))
    return plans


def buffer_metrics(records: list) -> dict:
    """Per-iteration aggregates of one collected buffer."""
    lengths = np.array([r.length for r in records], dtype=float)
    returns = np.array([r.rewards.sum() for r in records])
    fails = np.array([r.fell for r in records], dtype=float)
    sums: dict = {}
    counts: dict = {}
    for r in records:
        for name, value in r.term_means().items():
            sums[name] = sums.get(name, 0.0) + value
            counts[name] = counts.get(name, 0) + 1
    return {
        "episodes": len(records),
        "transitions": int(lengths.sum()),
        "mean_return": float(returns.mean()),
        "mean_length": float(lengths.mean()),
        "failure_rate": float(fails.mean()),
        "mean_step_reward": float((returns / lengths).mean()),
        "term_means": {k: sums[k] / counts[k] for k in sorted(sums)},
    }


def save_checkpoint(run_dir: str, iteration: int, policy: MHCPolicy,
                    optimizer: Adam, position: dict) -> str:
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    policy_path = os.path.join(ckpt_dir, f"policy_{iteration:06d}.npz")
    trainer_path = os.path.join(ckpt_dir, f"trainer_{iteration:06d}.npz")
    policy.save(policy_path)
    blob = {k: np.asarray(v) for k, v in optimizer.state_dict().items()}
    blob["position"] = np.frombuffer(
        json.dumps(position, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(trainer_path, **blob)
    return policy_path


def load_trainer_state(trainer_path: str, optimizer: Adam) -> dict:
    with np.load(trainer_path) as data:
        blob = {k: data[k] for k in data.files}
    position = json.loads(bytes(blob.pop("position")).decode())
    optimizer.load_state_dict({k: v for k, v in blob.items()})
    return position


def train(model: HumanoidModel, policy: MHCPolicy, dataset: list,
          schedule: list, config: PPOConfig, run_dir: str, run_seed: int,
          workers: int = 1, checkpoint_every: int = 10,
          extra_manifest: dict | None = None,
          resume_from: str | None = None) -> dict:
    """Alternate collect and update through the staged schedule.

    Writes manifest.json once, appends one JSON line per iteration to
    metrics.ndjson (no wall-clock content, so reruns are byte-identical),
    and drops policy/trainer checkpoint pairs under checkpoints/.
    """
    os.makedirs(run_dir, exist_ok=True)
    optimizer = Adam(policy.params(), lr=config.learning_rate)
    start = {"global_iteration": 0, "plan_index": 0, "plan_iteration": 0,
             "completions": [], "step_rewards": []}
    if resume_from is not None:
        loaded = MHCPolicy.load(resume_from, model)
        policy.__dict__.update(loaded.__dict__)
        trainer_path = resume_from.replace("policy_", "trainer_")
        start = load_trainer_state(trainer_path, optimizer)

    manifest = {
        "run_seed": run_seed,
        "stages": [p.stage.stage for p in schedule],
        "iterations": [p.iterations for p in schedule],
        "ppo": asdict(config),
        "workers": workers,
        "resumed_from": resume_from,
    }
    manifest.update(extra_manifest or {})
    with open(os.path.join(run_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    metrics_path = os.path.join(run_dir, "metrics.ndjson")
    mode = "a" if resume_from is not None else "w"
    global_iter = start["global_iteration"]
    completions = list(start["completions"])
    step_rewards = list(start["step_rewards"])
    position = dict(start)
    last_ckpt = None

    with open(metrics_path, mode) as metrics_file:
        for plan_index in range(start["plan_index"], len(schedule)):
            plan = schedule[plan_index]
            first = start["plan_iteration"] if plan_index == start["plan_index"] else 0
            for it in range(first, plan.iterations):
                sigma = scheduled_sigma(config, global_iter)
                if sigma is not None:
                    policy.log_std[:] = np.log(sigma)
                records = collect_rollouts(model, policy, plan.stage, dataset,
                                           config, run_seed, global_iter,
                                           workers)
                stats = buffer_metrics(records)
                update_rng = np.random.default_rng(
                    np.random.SeedSequence([run_seed, global_iter, 2 ** 20]))
                stats.update(ppo_update(policy, optimizer, records, config,
                                        update_rng))
                for r in records:
                    completions.append(0.0 if r.fell else 1.0)
                    step_rewards.append(float(r.rewards.mean()))
                # normalization stats lag one iteration so the update sees
                # the same normalized observations the rollouts did
                policy.obs_norm.update(np.concatenate([r.obs for r in records]))

                line = {"iteration": global_iter, "stage": plan.stage.stage,
                        "lr": config.learning_rate}
                line.update(stats)
                metrics_file.write(json.dumps(line, sort_keys=True) + "\n")
                metrics_file.flush()

                global_iter += 1
                position = {"global_iteration": global_iter,
                            "plan_index": plan_index,
                            "plan_iteration": it + 1,
                            "completions": completions[-1000:],
                            "step_rewards": step_rewards[-1000:]}
                if global_iter % checkpoint_every == 0:
                    last_ckpt = save_checkpoint(run_dir, global_iter, policy,
                                                optimizer, position)
                if plan.use_gate and stage_gate(completions, step_rewards,
                                                plan.gate):
                    break

    # the position always points at the next iteration to run, so a resumed
    # call with a longer schedule picks up exactly where this one stopped
    last_ckpt = save_checkpoint(run_dir, global_iter, policy, optimizer,
                                position)
    return {"iterations": global_iter, "final_checkpoint": last_ckpt,
            "metrics_path": metrics_path}
