"""Architecture scoring backends.

The synthetic evaluator is a deterministic benchmark for desk-scale runs:
each architecture has a hidden "base quality" derived from seeded hashes
of its operations and wiring, and the returned accuracy approaches that
base as the architecture's modules accumulate simulated training epochs.
The maturity store plays the role of shared weights: two architectures
that use the same operation at the same position share a counter, so
frequently reused modules look better trained.

External scoring over the wire protocol lives in :mod:`epnas.protocol`;
:func:`external_evaluate` here is the thin adapter the engine calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import protocol
from .hashing import keyed_signed_unit
from .space import ArchDescriptor, Space, to_json_dict

ModuleKey = tuple

EVALUATOR_KINDS = ("synthetic", "external")


@dataclass
class EvaluatorConfig:
    kind: str = "synthetic"
    epochs_per_eval: int = 3
    channels: int = 24
    stack_n: int = 2
    noise_sigma: float = 0.01
    maturity_kappa: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in EVALUATOR_KINDS:
            raise ValueError(f"evaluator kind must be one of {EVALUATOR_KINDS}")
        if self.epochs_per_eval < 1:
            raise ValueError("epochs_per_eval must be >= 1")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.maturity_kappa <= 0.0:
            raise ValueError("maturity_kappa must be > 0")


class MaturityStore:
    """Accumulated training epochs per module key. Counts only grow."""

    def __init__(self) -> None:
        self._counts: dict[ModuleKey, int] = {}

    def add(self, key: ModuleKey, epochs: int) -> None:
        if epochs < 0:
            raise ValueError("epochs must be >= 0")
        self._counts[key] = self._counts.get(key, 0) + epochs

    def count(self, key: ModuleKey) -> int:
        return self._counts.get(key, 0)

    def total(self) -> int:
        return sum(self._counts.values())

    def __len__(self) -> int:
        return len(self._counts)


def module_keys(arch: ArchDescriptor) -> list[ModuleKey]:
    """Weight-sharing granularity: (layer, op) for macro layers and
    (block, slot, op) for micro block operations. Input wiring is
    deliberately not part of the key.
    """
    if arch.space is Space.MACRO:
        return [
            ("macro", idx, int(layer.op))
            for idx, layer in enumerate(arch.body.layers, start=1)
        ]
    keys: list[ModuleKey] = []
    for idx, block in enumerate(arch.body.blocks, start=1):
        keys.append(("micro", idx, 1, int(block.op1)))
        keys.append(("micro", idx, 2, int(block.op2)))
    return keys


def input_edges(arch: ArchDescriptor) -> list[tuple]:
    """Data-dependency edges feeding each layer/block operation.

    A macro layer with no skips reads the stem (source 0). Micro blocks
    contribute one edge per operand.
    """
    if arch.space is Space.MACRO:
        edges = []
        for idx, layer in enumerate(arch.body.layers, start=1):
            for src in layer.skips or (0,):
                edges.append(("macro", src, idx))
        return edges
    return [
        ("micro", ref, idx, slot)
        for idx, block in enumerate(arch.body.blocks, start=1)
        for slot, ref in ((1, block.in1), (2, block.in2))
    ]


def _key_bytes(parts: tuple) -> bytes:
    return "|".join(str(p) for p in parts).encode()


def unit_affinity(key: ModuleKey, seed: int) -> float:
    """Pseudo-random affinity in [-1, 1) of one module under one seed."""
    return keyed_signed_unit(_key_bytes(("unit",) + tuple(key)), seed)


def edge_affinity(edge: tuple, seed: int) -> float:
    return keyed_signed_unit(_key_bytes(("edge",) + tuple(edge)), seed)


def base_quality(arch: ArchDescriptor, seed: int) -> float:
    """Hidden quality of an architecture in (0, 1).

    Logistic of the mean module affinity plus the mean wiring affinity.
    Deterministic in (arch, seed); changing any single operation or skip
    moves the value almost surely. This is the quantity a fully trained,
    noise-free evaluation would report.
    """
    units = [unit_affinity(k, seed) for k in module_keys(arch)]
    edges = [edge_affinity(e, seed) for e in input_edges(arch)]
    x = float(np.mean(units)) + float(np.mean(edges))
    return 1.0 / (1.0 + math.exp(-x))


def evaluate(
    arch: ArchDescriptor,
    store: MaturityStore,
    cfg: EvaluatorConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """Train-then-measure against the synthetic benchmark.

    Every module key of the architecture first receives
    ``cfg.epochs_per_eval`` epochs (the training side effect). The
    returned accuracy is ``base_quality * m + noise`` clamped to [0, 1],
    where m is the mean of 1 - exp(-count / kappa) over the architecture's
    modules using the post-increment counts. Re-evaluating an architecture
    can therefore only improve its noise-free score.
    """
    keys = module_keys(arch)
    for key in keys:
        store.add(key, cfg.epochs_per_eval)
    m = float(
        np.mean([1.0 - math.exp(-store.count(k) / cfg.maturity_kappa) for k in keys])
    )
    value = base_quality(arch, cfg.seed) * m
    if cfg.noise_sigma > 0.0:
        if rng is None:
            raise ValueError("an rng is required when noise_sigma > 0")
        value += rng.normal(0.0, cfg.noise_sigma)
    return min(1.0, max(0.0, float(value)))


def external_evaluate(
    arch: ArchDescriptor, cfg: EvaluatorConfig, client: "protocol.WorkerClient"
) -> float:
    """Score via an external trainer over the wire protocol.

    The client must have completed its handshake. Transport, protocol and
    timeout failures raise and are meant to abort the calling search.
    """
    return client.evaluate(
        to_json_dict(arch),
        epochs=cfg.epochs_per_eval,
        channels=cfg.channels,
        stack_n=cfg.stack_n,
    )
