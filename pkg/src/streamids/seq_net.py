"""Single-layer LSTM classifier over short windows of consecutive flows, trained by BPTT + SGD."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

GATES = ("i", "f", "o", "g")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LstmParams:
    """Gate weights act on ``[x_t; h_prev]``; the forget-gate bias starts at 1."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    W_y: np.ndarray
    b_y: np.ndarray
    learning_rate: float = 0.01

    TENSORS = ("W_i", "W_f", "W_o", "W_g", "b_i", "b_f", "b_o", "b_g", "W_y", "b_y")

    def __post_init__(self):
        h = self.hidden_dim
        cols = self.W_i.shape[1]
        for name in ("W_i", "W_f", "W_o", "W_g"):
            if getattr(self, name).shape != (h, cols):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(h, cols)}")
        for name in ("b_i", "b_f", "b_o", "b_g"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"{name} must have shape {(h,)}")
        if cols <= h:
            raise ValueError("gate weights must cover at least one input feature")
        if self.W_y.shape != (self.num_classes, h) or self.b_y.shape != (self.num_classes,):
            raise ValueError("output layer shapes inconsistent with hidden size")

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[1] - self.W_i.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W_y.shape[0]

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.TENSORS}

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.vstack([self.W_i, self.W_f, self.W_o, self.W_g]),
                np.concatenate([self.b_i, self.b_f, self.b_o, self.b_g]))


def init_params(input_dim: int, hidden_dim: int = 32, num_classes: int = 2, seed: int = 0,
                learning_rate: float = 0.01, scale: float = 0.1) -> LstmParams:
    rng = np.random.default_rng(seed)
    cols = input_dim + hidden_dim

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    return LstmParams(
        W_i=u(hidden_dim, cols), W_f=u(hidden_dim, cols), W_o=u(hidden_dim, cols), W_g=u(hidden_dim, cols),
        b_i=np.zeros(hidden_dim), b_f=np.ones(hidden_dim), b_o=np.zeros(hidden_dim), b_g=np.zeros(hidden_dim),
        W_y=u(num_classes, hidden_dim), b_y=np.zeros(num_classes),
        learning_rate=learning_rate,
    )


def lstm_cell(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams):
    z = np.concatenate([x_t, h_prev], axis=-1)
    if z.shape[-1] != params.W_i.shape[1] or h_prev.shape != c_prev.shape:
        raise ValueError("input or state shape does not match the parameters")
    i = expit(z @ params.W_i.T + params.b_i)
    f = expit(z @ params.W_f.T + params.b_f)
    o = expit(z @ params.W_o.T + params.b_o)
    g = np.tanh(z @ params.W_g.T + params.b_g)
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _run(windows: np.ndarray, params: LstmParams):
    """Batched forward pass keeping what backprop needs."""
    b, steps, f = windows.shape
    if f != params.input_dim:
        raise ValueError(f"window has {f} features, network expects {params.input_dim}")
    hd = params.hidden_dim
    w, bias = params.stacked()
    h = np.zeros((b, hd))
    c = np.zeros((b, hd))
    cache = []
    for t in range(steps):
        z = np.concatenate([windows[:, t, :], h], axis=1)
        a = z @ w.T + bias
        i = expit(a[:, :hd])
        fg = expit(a[:, hd:2 * hd])
        o = expit(a[:, 2 * hd:3 * hd])
        g = np.tanh(a[:, 3 * hd:])
        c_prev = c
        c = fg * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.append((z, i, fg, o, g, c_prev, tc))
    logits = h @ params.W_y.T + params.b_y
    return softmax(logits), h, cache


def forward(window: np.ndarray, params: LstmParams) -> np.ndarray:
    """Class probabilities for one (T, F') window, or a (B, T, F') batch."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 2:
        return _run(window[None], params)[0][0]
    return _run(window, params)[0]


def loss_and_grads(windows: np.ndarray, labels: np.ndarray, params: LstmParams):
    """Mean cross-entropy and its gradient for every tensor, by backprop through time."""
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    b = windows.shape[0]
    hd = params.hidden_dim
    probs, h_last, cache = _run(windows, params)
    picked = probs[np.arange(b), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    grads = {"W_y": dlogits.T @ h_last, "b_y": dlogits.sum(axis=0)}
    w, _ = params.stacked()
    dw = np.zeros_like(w)
    db = np.zeros(4 * hd)
    dh = dlogits @ params.W_y
    dc = np.zeros_like(dh)
    for z, i, fg, o, g, c_prev, tc in reversed(cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * fg * (1.0 - fg),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        dw += da.T @ z
        db += da.sum(axis=0)
        dh = (da @ w)[:, params.input_dim:]
        dc = dc * fg
    for k, gate in enumerate(GATES):
        grads[f"W_{gate}"] = dw[k * hd:(k + 1) * hd]
        grads[f"b_{gate}"] = db[k * hd:(k + 1) * hd]
    return loss, grads


def train(batch: Sequence[tuple[np.ndarray, int]], params: LstmParams) -> tuple[LstmParams, float]:
    """One gradient-descent step on the batch mean loss; returns (new params, loss before the step)."""
    if not batch:
        raise ValueError("empty training batch")
    windows = np.stack([np.asarray(w, dtype=np.float64) for w, _ in batch])
    labels = np.array([y for _, y in batch])
    return train_arrays(windows, labels, params)


def train_arrays(windows: np.ndarray, labels: np.ndarray, params: LstmParams) -> tuple[LstmParams, float]:
    loss, grads = loss_and_grads(windows, labels, params)
    if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
        raise TrainingError(f"non-finite loss {loss}")
    lr = params.learning_rate
    updated = {name: getattr(params, name) - lr * grads[name] for name in LstmParams.TENSORS}
    return replace(params, **updated), loss


def fit(params: LstmParams, windows: np.ndarray, labels: np.ndarray, epochs: int = 5,
        batch_size: int = 1, seed: int = 0) -> tuple[LstmParams, list[float]]:
    """Several epochs of SGD in a seed-fixed order; returns the mean loss of each epoch."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            params, loss = train_arrays(windows[idx], labels[idx], params)
            total += loss * len(idx)
        losses.append(total / n)
    return params, losses


def make_window(history: Sequence[np.ndarray], seq_len: int, columns: Optional[np.ndarray] = None) -> np.ndarray:
    """Stack the last ``seq_len`` vectors (oldest first), zero-padding at the front."""
    recent = list(history)[-seq_len:]
    if not recent:
        raise ValueError("window needs at least the current record")
    rows = np.asarray(recent, dtype=np.float64)
    if columns is not None:
        rows = rows[:, columns]
    if len(recent) == seq_len:
        return rows
    out = np.zeros((seq_len, rows.shape[1]))
    out[seq_len - len(recent):] = rows
    return out
