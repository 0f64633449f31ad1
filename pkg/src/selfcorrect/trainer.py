"""Self-play PPO training loop.

Each update samples a mini-batch of pseudo-pairs, draws L candidate
corrections per input with nucleus sampling, scores them with the
cluster-consensus reward, refits the value baseline on the batch (it
stays frozen for the rest of the update), and takes K clipped proximal
ascent steps on the surrogate objective with an eta / sqrt(t+1) step
size.  All sampling derives from one master seed, so a run is a pure
function of (config, dataset, seed).

The training log is JSON-lines, one record per update with fields
t, lr, mean_reward, grad_norm, clip_fraction, kl, baseline_bias, wall_ms.
wall_ms is measured wall-clock time and is the only non-deterministic
field in any artifact.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corruptor import ConfusionTables, PseudoPair
from .embedder import NgramEncoder
from .hashing import mix_seed
from .policy import LatticePolicy, PolicyParams, init_params, save_checkpoint
from .reward import RewardConfig, score_candidates
from .value import ValueBaseline


class TrainAbort(RuntimeError):
    """Raised when an update produces a non-finite gradient."""


class _MemoEncoder:
    """Bounded memo around an encoder; references recur every update."""

    _CAP = 16384

    def __init__(self, encoder: NgramEncoder):
        self.dim = encoder.dim
        self._encoder = encoder
        self._memo: dict[str, np.ndarray] = {}

    def encode(self, s: str) -> np.ndarray:
        vec = self._memo.get(s)
        if vec is None:
            vec = self._encoder.encode(s)
            if len(self._memo) >= self._CAP:
                self._memo.clear()
            self._memo[s] = vec
        return vec


@dataclass(frozen=True)
class TrainerConfig:
    eta0: float = 0.5
    decay_exponent: float = 0.5
    clip_epsilon: float = 0.05
    batch_size: int = 96
    candidates: int = 4
    ppo_epochs: int = 2
    total_updates: int = 1000
    top_p: float = 0.95
    temperature: float = 1.0
    advantage_standardize: bool = True
    value_kind: str = "linear"
    feature_buckets: int = 4096

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.decay_exponent != 0.5:
            raise ValueError("decay_exponent is fixed at 0.5")
        if not 0.0 < self.clip_epsilon <= 0.2:
            raise ValueError("clip_epsilon must be in (0, 0.2]")
        for name in ("batch_size", "candidates", "ppo_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_updates < 0:
            raise ValueError("total_updates must be >= 0")


def lr_schedule(cfg: TrainerConfig, t: int) -> float:
    """Step size eta0 / sqrt(t + 1) for update index t >= 0."""
    if t < 0:
        raise ValueError("update index must be >= 0")
    return cfg.eta0 / math.sqrt(t + 1)


@dataclass
class CandidateRollout:
    choices: tuple[int, ...]
    realized: str
    old_logprob: float
    reward: float
    r_pair: float
    r_cons: float
    advantage: float = 0.0


@dataclass
class RolloutRecord:
    x: str
    y: str
    candidates: list[CandidateRollout]


@dataclass
class RolloutBatch:
    records: list[RolloutRecord]

    def flat(self) -> list[tuple[str, CandidateRollout]]:
        return [(rec.x, cand) for rec in self.records for cand in rec.candidates]

    def mean_reward(self) -> float:
        flat = self.flat()
        return sum(c.reward for _, c in flat) / len(flat)


@dataclass
class UpdateStats:
    t: int
    lr: float
    mean_reward: float
    grad_norm: float
    clip_fraction: float
    kl: float
    baseline_bias: float
    wall_ms: float
    # Diagnostics kept out of the persisted log schema.
    initial_ratio_dev: float = 0.0
    max_score_norm: float = 0.0

    def log_record(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "mean_reward": self.mean_reward,
            "grad_norm": self.grad_norm,
            "clip_fraction": self.clip_fraction,
            "kl": self.kl,
            "baseline_bias": self.baseline_bias,
            "wall_ms": self.wall_ms,
        }


@dataclass
class TheoremTelemetry:
    """Empirical check of the sqrt-T stationarity bound.

    The bound 8 (1 - J0) / (eta0 sqrt(T)) + 2 G^2 eps^2 + 4 B^2 is
    evaluated with G = max observed score norm and B = max observed
    |mean advantage|; both are estimates, so a violation is a red
    diagnostic, not a test failure.
    """

    min_grad_norm_sq: float
    bound: float
    within_bound: bool
    grad_norm_bound: float
    advantage_bias_bound: float
    initial_mean_reward: float


@dataclass
class TrainResult:
    params: PolicyParams
    stats: list[UpdateStats] = field(default_factory=list)
    telemetry: TheoremTelemetry | None = None


def collect_rollouts(
    params: PolicyParams,
    policy: LatticePolicy,
    dataset: Sequence[PseudoPair],
    cfg: TrainerConfig,
    reward_cfg: RewardConfig,
    encoder: NgramEncoder,
    master_seed: int,
    t: int,
) -> RolloutBatch:
    """Sample a batch, draw L candidates per input, and score them.

    The batch indices come from stream (seed, t, 0); record i uses stream
    (seed, t, 1 + i), so records are independent and the batch is
    reproducible from (seed, t) alone.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    batch_rng = random.Random(mix_seed(master_seed, t, 0))
    indices = [batch_rng.randrange(len(dataset)) for _ in range(cfg.batch_size)]
    records = []
    for slot, idx in enumerate(indices):
        pair = dataset[idx]
        rec_rng = random.Random(mix_seed(master_seed, t, 1 + slot))
        drawn = [
            policy.sample(
                params.theta, pair.x, rec_rng, top_p=cfg.top_p, temperature=cfg.temperature
            )
            for _ in range(cfg.candidates)
        ]
        realized = [policy.realize(pair.x, choices) for choices, _ in drawn]
        breakdowns = score_candidates(realized, pair.y, reward_cfg, encoder)
        records.append(
            RolloutRecord(
                x=pair.x,
                y=pair.y,
                candidates=[
                    CandidateRollout(
                        choices=choices,
                        realized=sent,
                        old_logprob=lp,
                        reward=b.reward,
                        r_pair=b.r_pair,
                        r_cons=b.r_cons,
                    )
                    for (choices, lp), sent, b in zip(drawn, realized, breakdowns)
                ],
            )
        )
    return RolloutBatch(records=records)


def refit_baseline(batch: RolloutBatch, baseline: ValueBaseline) -> None:
    """Fit V to each input's mean candidate reward; V then stays frozen."""
    inputs = [rec.x for rec in batch.records]
    targets = np.array(
        [np.mean([c.reward for c in rec.candidates]) for rec in batch.records]
    )
    baseline.refit(inputs, targets)


def compute_advantages(
    batch: RolloutBatch, baseline: ValueBaseline, cfg: TrainerConfig
) -> float:
    """Fill advantages R - V(x); returns |mean advantage| before scaling.

    With standardization on, advantages are shifted to zero mean and, when
    their variance exceeds 1e-12, scaled to unit variance.
    """
    values = {rec.x: baseline.predict(rec.x) for rec in batch.records}
    raw = []
    for rec in batch.records:
        for cand in rec.candidates:
            cand.advantage = cand.reward - values[rec.x]
            raw.append(cand.advantage)
    raw = np.array(raw)
    bias = float(abs(raw.mean()))
    if cfg.advantage_standardize:
        centered = raw - raw.mean()
        var = float(centered.var())
        if var >= 1e-12:
            centered = centered / math.sqrt(var)
        flat = batch.flat()
        for (_, cand), a in zip(flat, centered):
            cand.advantage = float(a)
    return bias


def ppo_update(
    params: PolicyParams,
    policy: LatticePolicy,
    batch: RolloutBatch,
    cfg: TrainerConfig,
    t: int,
) -> UpdateStats:
    """K epochs of clipped surrogate ascent on the batch.

    Per sample the objective is min(rho * A, clip(rho, 1-eps, 1+eps) * A);
    where the clipped branch is the active minimum its subgradient is
    zero, otherwise the gradient is A * rho * grad_logprob.  The logged
    grad_norm is the first epoch's batch gradient, i.e. the plain policy
    gradient at rho = 1.
    """
    start = time.monotonic()
    lr = lr_schedule(cfg, t)
    eps = cfg.clip_epsilon
    samples = batch.flat()
    n = len(samples)
    first_grad_norm = 0.0
    initial_ratio_dev = 0.0
    max_score_norm = 0.0
    clip_events = 0
    evaluations = 0
    for epoch in range(cfg.ppo_epochs):
        grad = np.zeros_like(params.theta)
        for x, cand in samples:
            lp_new = policy.logprob(params.theta, x, cand.choices)
            rho = math.exp(lp_new - cand.old_logprob)
            adv = cand.advantage
            unclipped = rho * adv
            clipped = min(max(rho, 1.0 - eps), 1.0 + eps) * adv
            evaluations += 1
            active = unclipped <= clipped
            if not active:
                clip_events += 1
            if epoch == 0:
                initial_ratio_dev = max(initial_ratio_dev, abs(rho - 1.0))
                norm_sq = policy.add_grad_logprob(
                    grad, params.theta, x, cand.choices, adv * rho if active else 0.0
                )
                max_score_norm = max(max_score_norm, math.sqrt(norm_sq))
            elif active:
                policy.add_grad_logprob(grad, params.theta, x, cand.choices, adv * rho)
        grad /= n
        if not np.all(np.isfinite(grad)):
            raise TrainAbort(f"non-finite gradient at update {t}, epoch {epoch}")
        if epoch == 0:
            first_grad_norm = float(np.linalg.norm(grad))
        params.theta = params.theta + lr * grad
    kl = float(
        np.mean(
            [
                cand.old_logprob - policy.logprob(params.theta, x, cand.choices)
                for x, cand in samples
            ]
        )
    )
    return UpdateStats(
        t=t,
        lr=lr,
        mean_reward=batch.mean_reward(),
        grad_norm=first_grad_norm,
        clip_fraction=clip_events / evaluations,
        kl=kl,
        baseline_bias=0.0,
        wall_ms=(time.monotonic() - start) * 1000.0,
        initial_ratio_dev=initial_ratio_dev,
        max_score_norm=max_score_norm,
    )


def train(
    cfg: TrainerConfig,
    dataset: Sequence[PseudoPair],
    tables: ConfusionTables,
    reward_cfg: RewardConfig,
    master_seed: int = 42,
    encoder: NgramEncoder | None = None,
    checkpoint_path: str | None = None,
    log_path: str | None = None,
) -> TrainResult:
    """Run the full loop: collect, refit baseline, advantages, PPO step.

    Deterministic given master_seed (single-threaded, fixed reduction
    order); the only non-deterministic log field is wall_ms.
    """
    if encoder is None:
        encoder = NgramEncoder()
    encoder = _MemoEncoder(encoder)
    policy = LatticePolicy(tables, buckets=cfg.feature_buckets)
    params = init_params(
        buckets=cfg.feature_buckets, value_kind=cfg.value_kind, seed=master_seed
    )
    stats: list[UpdateStats] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for t in range(cfg.total_updates):
            batch = collect_rollouts(
                params, policy, dataset, cfg, reward_cfg, encoder, master_seed, t
            )
            refit_baseline(batch, params.value)
            bias = compute_advantages(batch, params.value, cfg)
            update = ppo_update(params, policy, batch, cfg, t)
            update.baseline_bias = bias
            stats.append(update)
            if log_fh:
                log_fh.write(json.dumps(update.log_record()) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    telemetry = None
    if stats:
        g = max(s.max_score_norm for s in stats)
        b = max(s.baseline_bias for s in stats)
        j0 = stats[0].mean_reward
        bound = (
            8.0 * (1.0 - j0) / (cfg.eta0 * math.sqrt(cfg.total_updates))
            + 2.0 * g**2 * cfg.clip_epsilon**2
            + 4.0 * b**2
        )
        min_sq = min(s.grad_norm**2 for s in stats)
        telemetry = TheoremTelemetry(
            min_grad_norm_sq=min_sq,
            bound=bound,
            within_bound=min_sq <= bound,
            grad_norm_bound=g,
            advantage_bias_bound=b,
            initial_mean_reward=j0,
        )
    if checkpoint_path:
        save_checkpoint(checkpoint_path, params)
    return TrainResult(params=params, stats=stats, telemetry=telemetry)


def evaluate(
    params: PolicyParams, policy: LatticePolicy, test_pairs: Sequence[PseudoPair]
) -> dict:
    """Sentence-level metrics of greedy decoding on held-out pairs.

    flagged = output differs from the input; correct = output equals the
    reference.  Precision is correct-over-flagged, recall is
    correct-flagged-over-errorful, F1 their harmonic mean, exact_match
    the plain accuracy; empty denominators give 0.
    """
    if not test_pairs:
        raise ValueError("empty test set")
    flagged = 0
    flagged_correct = 0
    errorful = 0
    correct = 0
    for pair in test_pairs:
        out = policy.decode(params.theta, pair.x)
        is_flagged = out != pair.x
        is_correct = out == pair.y
        if pair.x != pair.y:
            errorful += 1
        if is_flagged:
            flagged += 1
            if is_correct:
                flagged_correct += 1
        if is_correct:
            correct += 1
    precision = flagged_correct / flagged if flagged else 0.0
    recall = flagged_correct / errorful if errorful else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "exact_match": correct / len(test_pairs),
    }
