"""Progressive search engine.

One search run walks complexity levels 1..max_level. The first iteration
evaluates the full level-1 enumeration; every later step extends the
current survivors by all one-level extensions, scores the pool with the
surrogate, draws K survivors from the tempered score distribution, and
evaluates only those. The whole progression repeats for a few outer
iterations while the sampling temperature cools toward 1, with the
maturity store, history and surrogate persisting across iterations.

A run is a pure function of its SearchConfig: every random draw comes
from one of three named seed streams, so identical configs produce
byte-identical history and result files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluators, protocol, sampler, space, surrogate

ENGINE_VERSION = "0.1.0"


@dataclass
class SearchConfig:
    """Every knob of a search run. Field-for-field mirror of the config
    file format; see README for the schema.
    """

    space: str = "macro"
    max_level: int | None = None  # defaults to 12 (macro) / 5 (micro)
    k: int = 25
    outer_iterations: int = 3
    epochs_per_eval: int = 3
    channels: int = 24
    stack_n: int = 2
    tau0: float = 8.0
    tau_decay: float = 0.5
    surrogate_epochs: int = 50
    surrogate_batch_size: int = 32
    surrogate_lr: float = 1e-3
    evaluator: str = "synthetic"
    noise_sigma: float = 0.01
    maturity_kappa: float = 3.0
    candidate_cap: int = 100_000
    greedy_topk: bool = False
    seed_search: int = 0
    seed_surrogate: int = 1
    seed_evaluator: int = 2
    external_cmd: str | None = None
    external_tcp: str | None = None
    external_timeout: float = 3600.0

    def __post_init__(self) -> None:
        if self.space not in ("macro", "micro"):
            raise ValueError(f"space must be 'macro' or 'micro', got {self.space!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.candidate_cap < self.k:
            raise ValueError("candidate_cap must be >= k")
        if self.max_level is not None and self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        if self.evaluator not in evaluators.EVALUATOR_KINDS:
            raise ValueError(
                f"evaluator must be one of {evaluators.EVALUATOR_KINDS}"
            )
        if self.evaluator == "external" and not (self.external_cmd or self.external_tcp):
            raise ValueError("external evaluator needs external_cmd or external_tcp")

    @property
    def space_enum(self) -> space.Space:
        return space.Space(self.space)

    @property
    def resolved_max_level(self) -> int:
        if self.max_level is not None:
            return self.max_level
        return space.max_level_for(self.space_enum)

    @classmethod
    def with_seed(cls, seed: int, **overrides) -> "SearchConfig":
        """Convenience: derive the three seed streams from one base seed."""
        return cls(
            seed_search=seed,
            seed_surrogate=seed + 1,
            seed_evaluator=seed + 2,
            **overrides,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchConfig":
        if not isinstance(doc, dict):
            raise ValueError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**doc)


@dataclass(frozen=True)
class EvalRecord:
    """One measured architecture."""

    arch_hash: str
    arch: dict
    accuracy: float
    epochs_trained: int
    outer_iteration: int
    step: int

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "arch_hash": self.arch_hash,
                "arch": self.arch,
                "accuracy": self.accuracy,
                "epochs_trained": self.epochs_trained,
                "outer_iteration": self.outer_iteration,
                "step": self.step,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "EvalRecord":
        doc = json.loads(line)
        return cls(
            arch_hash=doc["arch_hash"],
            arch=doc["arch"],
            accuracy=float(doc["accuracy"]),
            epochs_trained=int(doc["epochs_trained"]),
            outer_iteration=int(doc["outer_iteration"]),
            step=int(doc["step"]),
        )


@dataclass
class StepInfo:
    """Per-(iteration, level) summary used by reports."""

    step: int
    iteration: int
    level: int
    tau: float
    n_candidates: int
    n_evaluated: int
    entropy: float | None  # None for the exhaustive first step / greedy mode
    best_accuracy: float
    mean_accuracy: float
    cumulative_best: float


class History:
    """Append-only evaluation log with a dedup index.

    The dedup index maps arch hash to the latest record for that
    architecture; later measurements supersede earlier ones because the
    maturity store only makes re-evaluations more faithful.
    """

    def __init__(self) -> None:
        self.records: list[EvalRecord] = []
        self.latest: dict[str, EvalRecord] = {}
        self.first_seen: dict[str, int] = {}
        self.steps: list[StepInfo] = []
        self.iteration_best: list[float] = []

    def add(self, rec: EvalRecord) -> None:
        self.first_seen.setdefault(rec.arch_hash, len(self.records))
        self.records.append(rec)
        self.latest[rec.arch_hash] = rec

    def unique_count(self) -> int:
        return len(self.latest)

    def best(self) -> EvalRecord:
        if not self.latest:
            raise ValueError("history is empty")
        return max(
            self.latest.values(),
            key=lambda r: (r.accuracy, -self.first_seen[r.arch_hash]),
        )

    def surrogate_dataset(self) -> list[tuple[list[int], float]]:
        """(token ids, latest accuracy) per distinct architecture, in
        first-seen order.
        """
        out = []
        for rec in self.latest.values():
            desc = space.from_json_dict(rec.arch)
            out.append((space.surrogate_tokens(desc), rec.accuracy))
        return out

    @classmethod
    def from_jsonl(cls, path) -> "History":
        hist = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    hist.add(EvalRecord.from_json_line(line))
        return hist


@dataclass
class SearchResult:
    best_arch: space.ArchDescriptor
    best_accuracy: float
    history: History
    model: surrogate.SurrogateModel
    config: SearchConfig

    def to_json_dict(self) -> dict:
        return {
            "best_arch": space.to_json_dict(self.best_arch),
            "accuracy": self.best_accuracy,
            "config": self.config.to_dict(),
            "version": ENGINE_VERSION,
        }


class _HistoryWriter:
    """JSON-lines sink, flushed after every record so a crashed run can
    still be inspected.
    """

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8") if path is not None else None

    def write(self, rec: EvalRecord) -> None:
        if self._fh is not None:
            self._fh.write(rec.to_json_line() + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


class _SyntheticBackend:
    def __init__(self, cfg: SearchConfig):
        self.eval_cfg = evaluators.EvaluatorConfig(
            kind="synthetic",
            epochs_per_eval=cfg.epochs_per_eval,
            channels=cfg.channels,
            stack_n=cfg.stack_n,
            noise_sigma=cfg.noise_sigma,
            maturity_kappa=cfg.maturity_kappa,
            seed=cfg.seed_evaluator,
        )
        self.store = evaluators.MaturityStore()
        self.noise_rng = np.random.default_rng([cfg.seed_evaluator, 1])

    def evaluate(self, arch: space.ArchDescriptor) -> float:
        return evaluators.evaluate(arch, self.store, self.eval_cfg, self.noise_rng)

    def close(self) -> None:
        pass


class _ExternalBackend:
    def __init__(self, cfg: SearchConfig):
        self.eval_cfg = evaluators.EvaluatorConfig(
            kind="external",
            epochs_per_eval=cfg.epochs_per_eval,
            channels=cfg.channels,
            stack_n=cfg.stack_n,
            noise_sigma=0.0,
            maturity_kappa=cfg.maturity_kappa,
            seed=cfg.seed_evaluator,
        )
        if cfg.external_cmd:
            self.client = protocol.WorkerClient.spawn(
                cfg.external_cmd, timeout=cfg.external_timeout
            )
        else:
            host, _, port = cfg.external_tcp.rpartition(":")
            self.client = protocol.WorkerClient.connect_tcp(
                host or "127.0.0.1", int(port), timeout=cfg.external_timeout
            )
        self.client.handshake(cfg.space)

    def evaluate(self, arch: space.ArchDescriptor) -> float:
        return evaluators.external_evaluate(arch, self.eval_cfg, self.client)

    def close(self) -> None:
        try:
            self.client.shutdown()
        except protocol.WorkerError:
            self.client.close()


def run_search(
    config: SearchConfig,
    out_dir=None,
    on_eval=None,
) -> SearchResult:
    """Execute the full progressive search described in the module
    docstring and return the best architecture by observed accuracy
    (ties break toward the earliest discovery).

    With ``out_dir`` set, history.jsonl is streamed there during the run;
    on evaluator failure the partial history file survives and the error
    propagates. ``on_eval`` is called with each EvalRecord as it lands.
    """
    sp = config.space_enum
    max_level = config.resolved_max_level
    schedule = sampler.TemperatureSchedule(config.tau0, config.tau_decay)
    search_rng = np.random.default_rng([config.seed_search, 0])

    vocab = space.vocab_size(max(space.MICRO_MAX_LEVEL, max_level)) \
        if sp is space.Space.MICRO else space.vocab_size()
    model = surrogate.init([config.seed_surrogate, 0], vocab_size=vocab)
    adam = surrogate.AdamState.for_model(model, lr=config.surrogate_lr)
    train_rng = np.random.default_rng([config.seed_surrogate, 1])

    backend = (
        _SyntheticBackend(config)
        if config.evaluator == "synthetic"
        else _ExternalBackend(config)
    )
    history = History()
    writer = _HistoryWriter(Path(out_dir) / "history.jsonl" if out_dir else None)

    def evaluate_batch(archs, iteration, step_idx):
        accs = []
        for arch in archs:
            acc = backend.evaluate(arch)
            rec = EvalRecord(
                arch_hash=arch.hash_hex,
                arch=space.to_json_dict(arch),
                accuracy=float(acc),
                epochs_trained=config.epochs_per_eval,
                outer_iteration=iteration,
                step=step_idx,
            )
            history.add(rec)
            writer.write(rec)
            if on_eval is not None:
                on_eval(rec)
            accs.append(float(acc))
        return accs

    def retrain():
        data = history.surrogate_dataset()
        surrogate.train(
            model,
            data,
            adam,
            epochs=config.surrogate_epochs,
            batch_size=config.surrogate_batch_size,
            rng=train_rng,
        )

    def pick_survivors(candidates, tau):
        """Score, temper, draw. Returns (survivors, entropy-or-None)."""
        kk = min(config.k, len(candidates))
        scores = surrogate.forward_many(
            model, [space.surrogate_tokens(a) for a in candidates]
        )
        if config.greedy_topk:
            idx = sampler.greedy_top_k(scores, kk)
            return [candidates[i] for i in idx], None
        q = sampler.temper(sampler.base_probabilities(scores), tau)
        idx = sampler.sample_k(q, kk, search_rng)
        return [candidates[i] for i in idx], sampler.shannon_entropy(q)

    def record_step(step_idx, iteration, level, tau, n_cands, entropy, accs):
        cum_best = max(
            accs + ([history.steps[-1].cumulative_best] if history.steps else [])
        )
        history.steps.append(
            StepInfo(
                step=step_idx,
                iteration=iteration,
                level=level,
                tau=tau,
                n_candidates=n_cands,
                n_evaluated=len(accs),
                entropy=entropy,
                best_accuracy=max(accs),
                mean_accuracy=float(np.mean(accs)),
                cumulative_best=cum_best,
            )
        )

    step_idx = 0
    try:
        for t in range(config.outer_iterations):
            tau = schedule.value(t)
            level1 = [
                space.singleton(sp, ext) for ext in space.enumerate_level(sp, 1, max_level)
            ]
            if t == 0:
                # Step 1: exhaustive pass over the simplest level.
                survivors = level1
                entropy = None
            else:
                # Later iterations re-enter level 1 through the surrogate.
                survivors, entropy = pick_survivors(level1, tau)
            accs = evaluate_batch(survivors, t, step_idx)
            retrain()
            record_step(step_idx, t, 1, tau, len(level1), entropy, accs)
            step_idx += 1

            for level in range(2, max_level + 1):
                exts = space.enumerate_level(sp, level, max_level)
                pool = [space.extend(c, e) for c in survivors for e in exts]
                seen: dict[int, space.ArchDescriptor] = {}
                for cand in pool:
                    seen.setdefault(cand.canonical_hash, cand)
                candidates = list(seen.values())
                if len(candidates) > config.candidate_cap:
                    keep = search_rng.choice(
                        len(candidates), size=config.candidate_cap, replace=False
                    )
                    candidates = [candidates[i] for i in np.sort(keep)]
                survivors, entropy = pick_survivors(candidates, tau)
                accs = evaluate_batch(survivors, t, step_idx)
                retrain()
                record_step(step_idx, t, level, tau, len(candidates), entropy, accs)
                step_idx += 1

            history.iteration_best.append(
                max(r.accuracy for r in history.records if r.outer_iteration == t)
            )
    finally:
        writer.close()
        backend.close()

    best = history.best()
    return SearchResult(
        best_arch=space.from_json_dict(best.arch),
        best_accuracy=best.accuracy,
        history=history,
        model=model,
        config=config,
    )


def run_baseline_onepass(config: SearchConfig, out_dir=None, on_eval=None) -> SearchResult:
    """The same search with a single outer iteration (no annealing loop)."""
    return run_search(replace(config, outer_iterations=1), out_dir=out_dir, on_eval=on_eval)


# ---------------------------------------------------------------------------
# reporting


def report(history: History) -> dict:
    """Deterministic aggregation of a run: per-step best/mean accuracy,
    sampling entropies, unique-architecture counts and the temperature
    trace. Plot-ready JSON.
    """
    if not history.records:
        raise ValueError("cannot report on an empty history")
    steps = [
        {
            "step": s.step,
            "iteration": s.iteration,
            "level": s.level,
            "tau": s.tau,
            "n_candidates": s.n_candidates,
            "n_evaluated": s.n_evaluated,
            "entropy": s.entropy,
            "best_accuracy": s.best_accuracy,
            "mean_accuracy": s.mean_accuracy,
            "cumulative_best": s.cumulative_best,
        }
        for s in history.steps
    ]
    tau_trace = []
    for s in history.steps:
        if s.level == 1:
            tau_trace.append(s.tau)
    best = history.best()
    return {
        "total_evaluations": len(history.records),
        "unique_architectures": history.unique_count(),
        "best_accuracy": best.accuracy,
        "best_arch_hash": best.arch_hash,
        "best_arch": best.arch,
        "tau_trace": tau_trace,
        "iteration_best": list(history.iteration_best),
        "steps": steps,
    }


def report_text(doc: dict) -> str:
    """Fixed-width table rendering of a report document."""
    lines = [
        f"evaluations: {doc['total_evaluations']}   "
        f"unique architectures: {doc['unique_architectures']}   "
        f"best accuracy: {doc['best_accuracy']:.6f}",
        "",
        f"{'step':>4} {'iter':>4} {'lvl':>3} {'tau':>7} {'cands':>7} "
        f"{'evals':>5} {'entropy':>8} {'best':>8} {'mean':>8} {'cum_best':>8}",
    ]
    for s in doc["steps"]:
        ent = f"{s['entropy']:.4f}" if s["entropy"] is not None else "-"
        lines.append(
            f"{s['step']:>4} {s['iteration']:>4} {s['level']:>3} {s['tau']:>7.3f} "
            f"{s['n_candidates']:>7} {s['n_evaluated']:>5} {ent:>8} "
            f"{s['best_accuracy']:>8.4f} {s['mean_accuracy']:>8.4f} "
            f"{s['cumulative_best']:>8.4f}"
        )
    return "\n".join(lines) + "\n"
