"""The masked-directive controller: actor, critic, and observation pipeline.

Observations are (theta, theta_dot, base quaternion, body-frame angular
velocity); the directive input is the masked pose vector concatenated with
its mask bits.  The actor emits joint-space offsets that compose with the
directive's joint targets into PD setpoints.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .model import HumanoidModel
from .motion import DirectiveStep, pose_dim
from .nets import RecurrentNet
from .rotations import quat_to_matrix

LOG_STD_INIT = float(np.log(0.3))
LOG_STD_FLOOR = float(np.log(0.05))
EMBED_DIM = 160
HIDDEN_DIM = 64
CHECKPOINT_VERSION = 1

LOG_2PI = float(np.log(2.0 * np.pi))


def observation_dim(model: HumanoidModel, aux_target_input: bool = False) -> int:
    j = model.num_joints
    return 2 * j + 7 + (j if aux_target_input else 0)


def build_observation(qpos: np.ndarray, qvel: np.ndarray, model: HumanoidModel,
                      aux_target: np.ndarray | None = None) -> np.ndarray:
    """State observation; aux_target appends the directive's joint targets."""
    j = model.num_joints
    quat = qpos[3:7]
    rot = quat_to_matrix(quat)
    omega_body = rot.T @ qvel[3:6]
    parts = [qpos[7:7 + j], qvel[6:6 + j], quat, omega_body]
    if aux_target is not None:
        parts.append(aux_target)
    return np.concatenate(parts)


def directive_input(step: DirectiveStep) -> np.ndarray:
    """Masked pose and mask bits, concatenated."""
    return np.concatenate([step.pose_hat.as_vector(),
                           step.mask.bits.astype(float)])


def compose_setpoints(offsets: np.ndarray, step: DirectiveStep,
                      model: HumanoidModel) -> np.ndarray:
    """Offsets plus the directive's joint targets, clamped to joint limits.

    Masked joints carry zero targets, so there the offset is the absolute
    setpoint.
    """
    return np.clip(offsets + step.pose_hat.theta,
                   model.joint_lower, model.joint_upper)


class RunningNorm:
    """Per-dimension running mean/variance, freezable for evaluation."""

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, batch: np.ndarray) -> None:
        batch = batch.reshape(-1, self.mean.shape[0])
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta ** 2 * (self.count * n / total)
        self.count = total

    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.sqrt(np.maximum(self.m2 / self.count, 1e-8))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / self.std(), -10.0, 10.0)


class MHCPolicy:
    """Actor-critic pair over directive-conditioned observations."""

    def __init__(self, model: HumanoidModel, rng: np.random.Generator,
                 aux_target_input: bool = False,
                 embed_dim: int = EMBED_DIM, hidden_dim: int = HIDDEN_DIM):
        j = model.num_joints
        self.num_joints = j
        self.aux_target_input = aux_target_input
        self.obs_dim = observation_dim(model, aux_target_input)
        self.dir_dim = 2 * pose_dim(j)
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.actor = RecurrentNet(rng, self.obs_dim, self.dir_dim, j,
                                  embed_dim, hidden_dim, head_scale=0.01)
        self.critic = RecurrentNet(rng, self.obs_dim, self.dir_dim, 1,
                                   embed_dim, hidden_dim)
        self.log_std = np.full(j, LOG_STD_INIT)
        self.g_log_std = np.zeros(j)
        self.obs_norm = RunningNorm(self.obs_dim)

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict:
        out = self.actor.params("actor")
        out.update(self.critic.params("critic"))
        out["log_std"] = self.log_std
        return out

    def grads(self) -> dict:
        out = self.actor.grads("actor")
        out.update(self.critic.grads("critic"))
        out["log_std"] = self.g_log_std
        return out

    def zero_grads(self) -> None:
        self.actor.zero_grads()
        self.critic.zero_grads()
        self.g_log_std[...] = 0.0

    def std(self) -> np.ndarray:
        return np.exp(np.maximum(self.log_std, LOG_STD_FLOOR))

    # -- single-step inference ---------------------------------------------

    def init_hidden(self, batch: int | None = None):
        return (self.actor.init_hidden(batch), self.critic.init_hidden(batch))

    def act(self, obs: np.ndarray, dirvec: np.ndarray, hidden,
            rng: np.random.Generator | None = None,
            deterministic: bool = False):
        """One control step; returns (action, log-prob, value, new hidden)."""
        a_hid, c_hid = hidden
        norm_obs = self.obs_norm.normalize(obs)
        mean, a_hid = self.actor.step(norm_obs, dirvec, a_hid)
        value, c_hid = self.critic.step(norm_obs, dirvec, c_hid)
        if deterministic:
            action = mean.copy()
        else:
            action = mean + self.std() * rng.standard_normal(self.num_joints)
        logp = self.log_prob(action, mean)
        return action, float(logp), float(value[0]), (a_hid, c_hid)

    def log_prob(self, action: np.ndarray, mean: np.ndarray) -> np.ndarray:
        sigma = self.std()
        z = (action - mean) / sigma
        return (-0.5 * (z * z).sum(axis=-1)
                - np.log(sigma).sum()
                - 0.5 * self.num_joints * LOG_2PI)

    def entropy(self) -> float:
        return float(np.sum(np.log(self.std()) + 0.5 * (LOG_2PI + 1.0)))

    # -- sequence interface for the updater ---------------------------------

    def sequence_forward(self, obs_seq: np.ndarray, dir_seq: np.ndarray):
        """Normalized forward over (T, B, .) arrays, with caches for BPTT."""
        norm_obs = self.obs_norm.normalize(obs_seq)
        means, a_caches = self.actor.forward_sequence(norm_obs, dir_seq)
        values, c_caches = self.critic.forward_sequence(norm_obs, dir_seq)
        return means, values[..., 0], (a_caches, c_caches)

    def sequence_backward(self, caches, d_means: np.ndarray,
                          d_values: np.ndarray) -> None:
        a_caches, c_caches = caches
        self.actor.backward_sequence(a_caches, d_means)
        self.critic.backward_sequence(c_caches, d_values[..., None])

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "num_joints": self.num_joints,
            "obs_dim": self.obs_dim,
            "dir_dim": self.dir_dim,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "aux_target_input": self.aux_target_input,
        }
        arrays = {k: v for k, v in self.params().items()}
        arrays["norm.count"] = np.array(self.obs_norm.count)
        arrays["norm.mean"] = self.obs_norm.mean
        arrays["norm.m2"] = self.obs_norm.m2
        arrays["meta"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path, model: HumanoidModel) -> "MHCPolicy":
        data = np.load(Path(path), allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        if meta["num_joints"] != model.num_joints:
            raise ValueError("checkpoint joint count does not match the model")
        policy = cls(model, np.random.default_rng(0),
                     aux_target_input=meta["aux_target_input"],
                     embed_dim=meta["embed_dim"], hidden_dim=meta["hidden_dim"])
        params = policy.params()
        for name, arr in params.items():
            arr[...] = data[name]
        policy.obs_norm.count = float(data["norm.count"])
        policy.obs_norm.mean = np.asarray(data["norm.mean"])
        policy.obs_norm.m2 = np.asarray(data["norm.m2"])
        return policy
