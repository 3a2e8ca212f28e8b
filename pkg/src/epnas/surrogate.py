"""Learned architecture scorer.

A per-token embedding feeds a single-layer LSTM; a linear head with a
sigmoid squashes the last hidden state to a score in (0, 1). Training is
mini-batch Adam on an L1 loss. Everything is plain float64 numpy, written
out explicitly so the gradients can be checked against finite differences.

``forward`` is pure and safe to call concurrently on a shared model.
``train`` mutates the model in place and needs exclusive access.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import space

EMBED_DIM = 100
HIDDEN_DIM = 100

# Parameter tensors in a fixed order; initialization draws follow it, so
# the order is part of seeded reproducibility.
PARAM_ORDER = (
    "embedding",
    "w_i", "b_i",
    "w_f", "b_f",
    "w_g", "b_g",
    "w_o", "b_o",
    "head_w", "head_b",
)
_GATES = ("i", "f", "g", "o")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _stacked_gates(p: dict[str, np.ndarray]):
    """The four gate weight matrices and biases stacked along the output
    axis, so one matmul per step computes every gate preactivation. The
    sigmoid gates (i, f, o) come first so one vectorized sigmoid covers
    them; g (tanh) sits last. Pure reshaping; gradients are split back by
    the same slices.
    """
    w = np.concatenate([p["w_i"], p["w_f"], p["w_o"], p["w_g"]], axis=0)
    b = np.concatenate([p["b_i"], p["b_f"], p["b_o"], p["b_g"]])
    return w, b


_STACK_ORDER = ("i", "f", "o", "g")


class SurrogateModel:
    """Parameter container. Shapes:

    embedding [vocab, d], w_* [h, d+h], b_* [h], head_w [h], head_b [1].
    """

    def __init__(self, params: dict[str, np.ndarray]):
        missing = [k for k in PARAM_ORDER if k not in params]
        if missing:
            raise ValueError(f"missing parameter tensors: {missing}")
        self.params = params

    @property
    def vocab_size(self) -> int:
        return self.params["embedding"].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.params["embedding"].shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.params["head_w"].shape[0]

    def copy(self) -> "SurrogateModel":
        return SurrogateModel({k: v.copy() for k, v in self.params.items()})

    def zeros_like_params(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def init(
    rng_seed,
    vocab_size: int | None = None,
    embed_dim: int = EMBED_DIM,
    hidden_dim: int = HIDDEN_DIM,
) -> SurrogateModel:
    """Fresh model. Embedding and head draw from U[-1, 1]; the recurrent
    weights and biases draw from U[-1/sqrt(h), 1/sqrt(h)] to stay out of
    gate saturation at the start.
    """
    rng = np.random.default_rng(rng_seed)
    v = vocab_size if vocab_size is not None else space.vocab_size()
    d, h = embed_dim, hidden_dim
    bound = 1.0 / math.sqrt(h)
    params: dict[str, np.ndarray] = {}
    for name in PARAM_ORDER:
        if name == "embedding":
            params[name] = rng.uniform(-1.0, 1.0, size=(v, d))
        elif name.startswith("w_"):
            params[name] = rng.uniform(-bound, bound, size=(h, d + h))
        elif name.startswith("b_"):
            params[name] = rng.uniform(-bound, bound, size=(h,))
        elif name == "head_w":
            params[name] = rng.uniform(-1.0, 1.0, size=(h,))
        else:  # head_b
            params[name] = rng.uniform(-1.0, 1.0, size=(1,))
    return SurrogateModel(params)


def _check_tokens(model: SurrogateModel, tokens) -> list[int]:
    toks = [int(t) for t in tokens]
    if not toks:
        raise ValueError("token sequence must be non-empty")
    bad = [t for t in toks if not 0 <= t < model.vocab_size]
    if bad:
        raise ValueError(
            f"tokens {bad} out of vocabulary (size {model.vocab_size})"
        )
    return toks


def _run_group(model: SurrogateModel, tok_matrix: np.ndarray, lengths=None, stacked=None):
    """LSTM over a [n, T] token matrix. Returns per-step activations
    needed for backprop plus the final scores.

    With ``lengths`` given, rows are padded sequences: once a row's length
    is exhausted its hidden and cell state freeze, so the result equals
    native-length processing and the final state is the state at each
    row's true length.
    """
    p = model.params
    n, T = tok_matrix.shape
    d = model.embed_dim
    h_dim = model.hidden_dim
    w_all, b_all = stacked if stacked is not None else _stacked_gates(p)
    x = p["embedding"][tok_matrix]  # [n, T, d]
    # input-to-gate projections for all steps in one matmul
    ax = (x.reshape(n * T, d) @ w_all[:, :d].T).reshape(n, T, 4 * h_dim) + b_all
    w_h = w_all[:, d:]
    h = np.zeros((n, h_dim))
    c = np.zeros((n, h_dim))
    cache = []
    for t in range(T):
        a = ax[:, t, :] + h @ w_h.T  # [n, 4h]
        sig = _sigmoid(a[:, : 3 * h_dim])
        gi = sig[:, :h_dim]
        gf = sig[:, h_dim : 2 * h_dim]
        go = sig[:, 2 * h_dim :]
        gg = np.tanh(a[:, 3 * h_dim :])
        c_prev = c
        c_new = gf * c_prev + gi * gg
        tanh_c = np.tanh(c_new)
        h_prev = h
        h_new = go * tanh_c
        if lengths is None:
            active = None
            c, h = c_new, h_new
        else:
            active = (lengths > t)[:, None]
            c = np.where(active, c_new, c_prev)
            h = np.where(active, h_new, h_prev)
        cache.append((h_prev, (gi, gf, gg, go), c_prev, tanh_c, active))
    u = h @ p["head_w"] + p["head_b"][0]
    scores = _sigmoid(u)
    return scores, h, x, cache


def forward(model: SurrogateModel, tokens) -> float:
    """Score a single token sequence; result strictly inside (0, 1)."""
    toks = _check_tokens(model, tokens)
    scores, _, _, _ = _run_group(model, np.asarray([toks], dtype=np.intp))
    return float(scores[0])


def forward_many(model: SurrogateModel, sequences, chunk: int = 8192) -> np.ndarray:
    """Score many sequences; equal-length groups run as one batch.

    Equivalent to ``[forward(model, s) for s in sequences]`` up to
    last-ulp rounding from batched BLAS kernels, and orders of magnitude
    faster over large candidate pools.
    """
    seqs = [
        _check_tokens(model, s)
        for s in sequences
    ]
    out = np.empty(len(seqs))
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        by_len.setdefault(len(s), []).append(i)
    for length, idxs in by_len.items():
        for lo in range(0, len(idxs), chunk):
            part = idxs[lo : lo + chunk]
            mat = np.asarray([seqs[i] for i in part], dtype=np.intp)
            scores, _, _, _ = _run_group(model, mat)
            out[part] = scores
    return out


def _backward_group(model: SurrogateModel, tok_matrix, targets, grads, lengths=None):
    """Accumulate (summed) gradients of per-sequence L1 losses for one
    (possibly padded) token matrix into ``grads``. Returns (scores,
    losses). Padded steps contribute nothing, so the result equals the
    sum of per-sequence backward passes at native lengths.
    """
    p = model.params
    n, T = tok_matrix.shape
    d = model.embed_dim
    h_dim = model.hidden_dim
    stacked = _stacked_gates(p)
    w_all = stacked[0]
    w_h = w_all[:, d:]
    scores, h_last, x, cache = _run_group(model, tok_matrix, lengths, stacked)
    err = scores - targets
    losses = np.abs(err)
    # d|e|/de with the subgradient at 0 defined as 0
    dscore = np.sign(err)
    du = dscore * scores * (1.0 - scores)  # [n]
    grads["head_w"] += du @ h_last
    grads["head_b"][0] += du.sum()
    dh = du[:, None] * p["head_w"][None, :]
    dc = np.zeros_like(dh)
    da_steps = np.empty((n, T, 4 * h_dim))
    h_prevs = np.empty((n, T, h_dim))
    for t in range(T - 1, -1, -1):
        h_prev, (gi, gf, gg, go), c_prev, tanh_c, active = cache[t]
        dc_cand = dc + dh * go * (1.0 - tanh_c**2)
        da = da_steps[:, t, :]
        da[:, :h_dim] = dc_cand * gg * gi * (1.0 - gi)
        da[:, h_dim : 2 * h_dim] = dc_cand * c_prev * gf * (1.0 - gf)
        da[:, 2 * h_dim : 3 * h_dim] = dh * tanh_c * go * (1.0 - go)
        da[:, 3 * h_dim :] = dc_cand * gi * (1.0 - gg**2)
        h_prevs[:, t, :] = h_prev
        if active is None:
            dh = da @ w_h
            dc = dc_cand * gf
        else:
            # frozen rows pass their gradients through untouched
            da *= active
            dh = np.where(active, da @ w_h, dh)
            dc = np.where(active, dc_cand * gf, dc)
    # fold the per-step pieces into parameter gradients in bulk
    da_flat = da_steps.reshape(n * T, 4 * h_dim)
    dw_all = np.concatenate(
        [da_flat.T @ x.reshape(n * T, d), da_flat.T @ h_prevs.reshape(n * T, h_dim)],
        axis=1,
    )
    db_all = da_flat.sum(axis=0)
    for gidx, gname in enumerate(_STACK_ORDER):
        rows = slice(gidx * h_dim, (gidx + 1) * h_dim)
        grads[f"w_{gname}"] += dw_all[rows]
        grads[f"b_{gname}"] += db_all[rows]
    dx = da_flat @ w_all[:, :d]
    # scatter-add embedding gradients (tokens repeat within a sequence)
    np.add.at(grads["embedding"], tok_matrix.reshape(-1), dx)
    return scores, losses


def backward(model: SurrogateModel, tokens, target: float):
    """Gradients of the L1 loss for one (sequence, target) pair.

    Returns (grads, loss). The gradient of ``|score - target|`` at zero
    loss is defined as zero everywhere.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must lie in [0, 1], got {target}")
    toks = _check_tokens(model, tokens)
    grads = model.zeros_like_params()
    _, losses = _backward_group(
        model, np.asarray([toks], dtype=np.intp), np.asarray([target]), grads
    )
    return grads, float(losses[0])


def _pad_sequences(seqs: list[list[int]]):
    """Right-pad with token 0 (masked out downstream) to a common width."""
    lengths = np.asarray([len(s) for s in seqs], dtype=np.intp)
    width = int(lengths.max())
    mat = np.zeros((len(seqs), width), dtype=np.intp)
    for i, s in enumerate(seqs):
        mat[i, : len(s)] = s
    return mat, lengths


def batch_gradients(model: SurrogateModel, sequences, targets):
    """Summed gradients and per-sequence losses over a mixed-length batch.

    Sequences are padded and masked internally; results are identical to
    summing per-sequence :func:`backward` calls.
    """
    seqs = [_check_tokens(model, s) for s in sequences]
    targets = np.asarray(targets, dtype=float)
    grads = model.zeros_like_params()
    mat, lengths = _pad_sequences(seqs)
    _, losses = _backward_group(model, mat, targets, grads, lengths)
    return grads, losses


@dataclass
class AdamState:
    """Adam accumulator over the model's named parameter tensors."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: SurrogateModel, lr: float = 1e-3, **kw) -> "AdamState":
        st = cls(lr=lr, **kw)
        st.m = model.zeros_like_params()
        st.v = model.zeros_like_params()
        return st

    def apply(self, model: SurrogateModel, grads: dict[str, np.ndarray]) -> None:
        """One Adam update in place; raises if any parameter goes non-finite."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            model.params[name] -= self.lr * update
            if not np.all(np.isfinite(model.params[name])):
                raise FloatingPointError(f"parameter {name!r} became non-finite")


def train(
    model: SurrogateModel,
    dataset,
    adam: AdamState,
    epochs: int,
    batch_size: int,
    rng,
) -> list[float]:
    """Shuffled mini-batch Adam on L1 loss; returns mean loss per epoch.

    ``dataset`` is a sequence of (token sequence, target in [0, 1]) pairs.
    The model is updated in place; with ``epochs == 0`` it is untouched.
    Deterministic for a given rng seed.
    """
    data = list(dataset)
    if not data:
        raise ValueError("training dataset must be non-empty")
    for _, y in data:
        if not 0.0 <= y <= 1.0:
            raise ValueError(f"target must lie in [0, 1], got {y}")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(rng)
    seqs = [_check_tokens(model, s) for s, _ in data]
    targets = np.asarray([y for _, y in data], dtype=float)
    mat, lengths = _pad_sequences(seqs)
    n = len(data)
    trace: list[float] = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = perm[lo : lo + batch_size]
            sub_len = lengths[idx]
            width = int(sub_len.max())
            grads = model.zeros_like_params()
            _, losses = _backward_group(
                model, mat[idx, :width], targets[idx], grads, sub_len
            )
            scale = 1.0 / len(idx)
            for g in grads.values():
                g *= scale
            adam.apply(model, grads)
            total += float(losses.sum())
        trace.append(total / n)
    return trace


# ---------------------------------------------------------------------------
# checkpointing (bit-exact round trip)


def save_checkpoint(model: SurrogateModel, path) -> None:
    """Write all parameter tensors to an .npz archive.

    Opened explicitly so numpy cannot append an extension to the
    caller's path.
    """
    with open(path, "wb") as fh:
        np.savez(fh, **model.params)


def load_checkpoint(path) -> SurrogateModel:
    with np.load(path) as data:
        params = {k: data[k].copy() for k in data.files}
    return SurrogateModel(params)
