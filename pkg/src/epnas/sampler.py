"""Score-proportional candidate sampling with temperature annealing.

Predicted scores become a distribution p_i = s_i / sum(s), which is then
tempered to q_i = p_i^(1/tau) / sum(p_j^(1/tau)). High temperature pushes
q toward uniform (exploration); tau = 1 trusts the scores. Candidates are
drawn without replacement, so one step never trains the same architecture
twice. All functions are pure given an explicit rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probabilities are clamped here before without-replacement draws so a
# saturated scorer can never produce an all-zero weight vector.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TemperatureSchedule:
    """tau(t) = 1 + (tau0 - 1) * decay^t for outer iteration t >= 0.

    Monotonically non-increasing, always >= 1, approaching 1 geometrically.
    """

    tau0: float = 8.0
    decay: float = 0.5

    def __post_init__(self) -> None:
        if self.tau0 < 1.0:
            raise ValueError(f"tau0 must be >= 1, got {self.tau0}")
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")

    def value(self, t: int) -> float:
        if t < 0:
            raise ValueError(f"iteration index must be >= 0, got {t}")
        return 1.0 + (self.tau0 - 1.0) * self.decay**t


def base_probabilities(scores) -> np.ndarray:
    """p_i = s_i / sum(s). Scores must be positive."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("scores must be non-empty")
    if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
        raise ValueError("scores must be finite and strictly positive")
    return s / s.sum()


def temper(p, tau: float) -> np.ndarray:
    """q_i proportional to p_i^(1/tau), computed in log space."""
    if tau < 1.0:
        raise ValueError(f"tau must be >= 1, got {tau}")
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("distribution must be non-empty")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability distribution")
    with np.errstate(divide="ignore"):
        logq = np.log(p) / tau
    m = logq.max()
    logq -= m + np.log(np.exp(logq - m).sum())
    q = np.exp(logq)
    return q / q.sum()


def sample_k(q, k: int, rng: np.random.Generator) -> list[int]:
    """Draw ``k`` distinct indices by iterated draw-and-renormalize.

    Each round draws one index from the remaining weights, then removes
    it. Weights are floored at PROB_FLOOR first so degenerate inputs stay
    sampleable. With ``k == len(q)`` this is a random permutation of all
    indices.
    """
    q = np.asarray(q, dtype=float)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > q.size:
        raise ValueError(f"cannot draw {k} distinct indices from {q.size}")
    weights = np.maximum(q, PROB_FLOOR)
    chosen: list[int] = []
    for _ in range(k):
        cum = np.cumsum(weights)
        u = rng.random() * cum[-1]
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, q.size - 1)
        chosen.append(idx)
        weights[idx] = 0.0
    return chosen


def greedy_top_k(scores, k: int) -> list[int]:
    """Indices of the ``k`` largest scores; ties break by lower index."""
    s = np.asarray(scores, dtype=float)
    if k < 0 or k > s.size:
        raise ValueError(f"cannot take top {k} of {s.size} scores")
    order = np.argsort(-s, kind="stable")
    return [int(i) for i in order[:k]]


def shannon_entropy(q) -> float:
    """Entropy in nats, with 0 * log 0 = 0."""
    q = np.asarray(q, dtype=float)
    nz = q[q > 0.0]
    return float(-(nz * np.log(nz)).sum())
