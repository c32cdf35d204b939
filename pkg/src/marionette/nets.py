"""Small recurrent networks with hand-written exact gradients.

Everything is float64 numpy: a linear layer, an LSTM layer, and the
encoder-core-head composition used by both the actor and the critic.
Forward passes record caches; backward passes replay them in reverse and
accumulate parameter gradients that match finite differences to roundoff.
"""

from __future__ import annotations

import numpy as np


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Semi-orthogonal matrix via QR of a Gaussian draw."""
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))     # fix the sign ambiguity
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols])


def scaled_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Linear:
    def __init__(self, rng: np.random.Generator, nin: int, nout: int,
                 scale: float = 1.0):
        self.w = scaled_uniform(rng, nout, nin) * scale
        self.b = np.zeros(nout)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.T + self.b

    def backward(self, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        flat_x = x.reshape(-1, x.shape[-1])
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.gw += flat_dy.T @ flat_x
        self.gb += flat_dy.sum(axis=0)
        return dy @ self.w

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}

    def grads(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.gw, f"{prefix}.b": self.gb}


class LSTMLayer:
    """One LSTM layer; gate rows ordered (input, forget, cell, output)."""

    def __init__(self, rng: np.random.Generator, nin: int, hidden: int):
        self.hidden = hidden
        self.w = scaled_uniform(rng, 4 * hidden, nin)
        self.u = np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(4)])
        self.b = np.zeros(4 * hidden)
        self.b[hidden:2 * hidden] = 1.0     # forget-gate bias keeps memory at init
        self.gw = np.zeros_like(self.w)
        self.gu = np.zeros_like(self.u)
        self.gb = np.zeros_like(self.b)

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        hh = self.hidden
        z = x @ self.w.T + h @ self.u.T + self.b
        i = sigmoid(z[..., 0:hh])
        f = sigmoid(z[..., hh:2 * hh])
        g = np.tanh(z[..., 2 * hh:3 * hh])
        o = sigmoid(z[..., 3 * hh:4 * hh])
        c2 = f * c + i * g
        tc = np.tanh(c2)
        h2 = o * tc
        cache = (x, h, c, i, f, g, o, tc)
        return h2, c2, cache

    def backward_step(self, cache, dh: np.ndarray, dc: np.ndarray):
        """Given d(loss)/d(h2, c2), return d w.r.t. (x, h, c)."""
        x, h, c, i, f, g, o, tc = cache
        do = dh * tc
        dc_total = dc + dh * o * (1.0 - tc * tc)
        di = dc_total * g
        df = dc_total * c
        dg = dc_total * i
        dc_prev = dc_total * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=-1)
        flat_dz = dz.reshape(-1, dz.shape[-1])
        self.gw += flat_dz.T @ x.reshape(-1, x.shape[-1])
        self.gu += flat_dz.T @ h.reshape(-1, h.shape[-1])
        self.gb += flat_dz.sum(axis=0)
        dx = dz @ self.w
        dh_prev = dz @ self.u
        return dx, dh_prev, dc_prev

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.u": self.u, f"{prefix}.b": self.b}

    def grads(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.gw, f"{prefix}.u": self.gu, f"{prefix}.b": self.gb}


class RecurrentNet:
    """tanh directive encoder -> two LSTM layers -> linear head.

    The encoder output is concatenated with the raw observation before the
    first recurrent layer.  head_scale shrinks the head initialization so a
    fresh actor emits near-zero offsets.
    """

    def __init__(self, rng: np.random.Generator, obs_dim: int, dir_dim: int,
                 out_dim: int, embed_dim: int = 160, hidden_dim: int = 64,
                 head_scale: float = 1.0):
        self.obs_dim = obs_dim
        self.dir_dim = dir_dim
        self.out_dim = out_dim
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.encoder = Linear(rng, dir_dim, embed_dim)
        self.l1 = LSTMLayer(rng, embed_dim + obs_dim, hidden_dim)
        self.l2 = LSTMLayer(rng, hidden_dim, hidden_dim)
        self.head = Linear(rng, hidden_dim, out_dim, scale=head_scale)

    def init_hidden(self, batch: int | None = None):
        shape = (self.hidden_dim,) if batch is None else (batch, self.hidden_dim)
        return (np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def step(self, obs: np.ndarray, dirvec: np.ndarray, hidden,
             want_cache: bool = False):
        h1, c1, h2, c2 = hidden
        pre = self.encoder.forward(dirvec)
        emb = np.tanh(pre)
        x1 = np.concatenate([emb, obs], axis=-1)
        nh1, nc1, cache1 = self.l1.step(x1, h1, c1)
        nh2, nc2, cache2 = self.l2.step(nh1, h2, c2)
        out = self.head.forward(nh2)
        new_hidden = (nh1, nc1, nh2, nc2)
        if not want_cache:
            return out, new_hidden
        cache = (dirvec, emb, x1, cache1, cache2, nh2)
        return out, new_hidden, cache

    def forward_sequence(self, obs_seq: np.ndarray, dir_seq: np.ndarray,
                         hidden=None):
        """obs_seq (T, B, obs), dir_seq (T, B, dir) -> (outs, caches)."""
        t_len, batch = obs_seq.shape[0], obs_seq.shape[1]
        if hidden is None:
            hidden = self.init_hidden(batch)
        outs = np.empty((t_len, batch, self.out_dim))
        caches = []
        for t in range(t_len):
            out, hidden, cache = self.step(obs_seq[t], dir_seq[t], hidden,
                                           want_cache=True)
            outs[t] = out
            caches.append(cache)
        return outs, caches

    def backward_sequence(self, caches: list, dout_seq: np.ndarray) -> None:
        """Accumulate parameter gradients for a forward_sequence call."""
        batch = dout_seq.shape[1]
        dh1 = np.zeros((batch, self.hidden_dim))
        dc1 = np.zeros_like(dh1)
        dh2 = np.zeros_like(dh1)
        dc2 = np.zeros_like(dh1)
        for t in range(len(caches) - 1, -1, -1):
            dirvec, emb, x1, cache1, cache2, nh2 = caches[t]
            dh2 = dh2 + self.head.backward(nh2, dout_seq[t])
            dx2, dh2, dc2 = self.l2.backward_step(cache2, dh2, dc2)
            dh1 = dh1 + dx2
            dx1, dh1, dc1 = self.l1.backward_step(cache1, dh1, dc1)
            demb = dx1[..., :self.embed_dim]
            self.encoder.backward(dirvec, demb * (1.0 - emb * emb))

    def params(self, prefix: str) -> dict:
        out = {}
        out.update(self.encoder.params(f"{prefix}.enc"))
        out.update(self.l1.params(f"{prefix}.l1"))
        out.update(self.l2.params(f"{prefix}.l2"))
        out.update(self.head.params(f"{prefix}.head"))
        return out

    def grads(self, prefix: str) -> dict:
        out = {}
        out.update(self.encoder.grads(f"{prefix}.enc"))
        out.update(self.l1.grads(f"{prefix}.l1"))
        out.update(self.l2.grads(f"{prefix}.l2"))
        out.update(self.head.grads(f"{prefix}.head"))
        return out

    def zero_grads(self) -> None:
        for g in self.grads("n").values():
            g[...] = 0.0

    def num_params(self) -> int:
        return sum(p.size for p in self.params("n").values())


def param_count_formula(obs_dim: int, dir_dim: int, out_dim: int,
                        embed_dim: int, hidden_dim: int) -> int:
    """Closed-form parameter count of RecurrentNet for a shape audit."""
    enc = embed_dim * dir_dim + embed_dim
    l1_in = embed_dim + obs_dim
    lstm1 = 4 * hidden_dim * l1_in + 4 * hidden_dim * hidden_dim + 4 * hidden_dim
    lstm2 = 4 * hidden_dim * hidden_dim + 4 * hidden_dim * hidden_dim + 4 * hidden_dim
    head = out_dim * hidden_dim + out_dim
    return enc + lstm1 + lstm2 + head


class Adam:
    """Adam over a name -> array parameter dict, with global norm clipping."""

    def __init__(self, params: dict, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, max_norm: float | None = None) -> float:
        """Apply one update in place; returns the pre-clip global grad norm."""
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = 1.0
        if max_norm is not None and total > max_norm and total > 0.0:
            scale = max_norm / total
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k] * scale
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
        return total

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for k, v in self.m.items():
            out[f"m.{k}"] = v
        for k, v in self.v.items():
            out[f"v.{k}"] = v
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k] = np.asarray(state[f"m.{k}"])
            self.v[k] = np.asarray(state[f"v.{k}"])
