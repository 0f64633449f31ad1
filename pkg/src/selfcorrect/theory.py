"""Empirical verification of the framework's theoretical guarantees.

Each check builds a synthetic world where the claim's preconditions hold
by construction, measures the claimed quantity, and emits a
machine-readable pass/fail record.  All checks are deterministic given
their seed.

Checks:

* reward exactness -- in a degenerate margin world (valid candidates at
  cosine exactly 1, invalid ones below every threshold), the computed
  reward must equal the binary validity label exactly.  The reward's
  rescaled pairwise term only saturates at cosine 1, so the margin is
  tested at its degenerate limit; see the generator docstring.
* variance bound -- binary rewards have variance at most 1/4; the
  score-times-reward variance is reported against G^2 / 4.
* clip bias -- for finite ratio distributions with |ratio - 1| <= 3 eps
  and |advantage| <= A_max, the exact surrogate gap between the clipped
  and unclipped objectives is at most 2 eps A_max.  (Beyond 3 eps the
  stated constant is unattainable: a point mass at ratio 1 + c loses
  c - eps, which exceeds 2 eps for c > 3 eps.)
* generalization gap -- the sqrt(log(2/delta) / 2N) deviation bound holds
  at the nominal rate for a fixed policy's bounded rewards.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .hashing import mix_seed
from .policy import LatticePolicy
from .reward import RewardConfig, rewards_from_vectors


@dataclass
class CheckReport:
    check: str
    seed: int
    measured: float
    bound: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "check": self.check,
                "seed": self.seed,
                "measured": self.measured,
                "bound": self.bound,
                "pass": self.passed,
                **self.details,
            }
        )


@dataclass
class MarginWorld:
    """One synthetic reward instance satisfying the margin assumption.

    Valid candidates sit at cosine >= 1 - gamma from the reference,
    invalid ones at cosine <= 1 - delta with delta > gamma; labels mark
    validity.  The degenerate limit gamma -> 0 places valid candidates at
    cosine exactly 1, which is the only point where the rescaled pairwise
    term reaches its claimed value of 1.
    """

    gamma: float
    delta: float
    reference: np.ndarray
    candidates: list[np.ndarray]
    labels: list[int]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def make_margin_world(
    rng: np.random.Generator,
    cfg: RewardConfig,
    dim: int = 8,
    delta: float = 0.4,
    max_valid: int = 6,
) -> MarginWorld:
    """Degenerate margin construction with strictly more valid candidates.

    Valid candidates are exact copies of the reference direction; invalid
    ones are placed at a cosine drawn from [-0.3, min(tau, 1 - delta)].
    Their count stays below the valid count so the valid cluster is
    always the largest, making purity hold by construction.
    """
    ceiling = min(cfg.tau, 1.0 - delta)
    if ceiling >= min(cfg.tau, cfg.beta):
        raise ValueError(
            "invalid-candidate cosine band must stay below both thresholds; "
            f"got ceiling {ceiling} with tau={cfg.tau}, beta={cfg.beta}"
        )
    n_valid = int(rng.integers(cfg.min_pts, max_valid + 1))
    n_invalid = int(rng.integers(0, n_valid))
    ref = _unit(rng.normal(size=dim))
    candidates = [ref.copy() for _ in range(n_valid)]
    labels = [1] * n_valid
    for _ in range(n_invalid):
        c = float(rng.uniform(-0.3, ceiling))
        orth = rng.normal(size=dim)
        orth -= (orth @ ref) * ref
        while np.linalg.norm(orth) < 1e-9:
            orth = rng.normal(size=dim)
            orth -= (orth @ ref) * ref
        candidates.append(c * ref + math.sqrt(1.0 - c * c) * _unit(orth))
        labels.append(0)
    order = rng.permutation(len(candidates))
    return MarginWorld(
        gamma=0.0,
        delta=delta,
        reference=ref,
        candidates=[candidates[i] for i in order],
        labels=[labels[i] for i in order],
    )


def lemma1_check(
    cfg: RewardConfig, trials: int = 1000, seed: int = 42, dim: int = 8
) -> CheckReport:
    """Reward equals the validity label exactly in every margin world.

    Any violation here is a reward-module bug: under the construction's
    preconditions the pairwise and consensus terms both saturate for
    valid candidates and both clamp to zero for invalid ones.
    """
    violations = []
    for trial in range(trials):
        rng = np.random.default_rng(mix_seed(seed, trial))
        world = make_margin_world(rng, cfg, dim=dim)
        scores = rewards_from_vectors(world.candidates, world.reference, cfg)
        for k, (score, z) in enumerate(zip(scores, world.labels)):
            if abs(score.reward - z) > 1e-9:
                violations.append(
                    {
                        "trial": trial,
                        "candidate": k,
                        "label": z,
                        "reward": score.reward,
                        "r_pair": score.r_pair,
                        "r_cons": score.r_cons,
                        "cosine_to_ref": float(
                            world.candidates[k] @ world.reference
                        ),
                    }
                )
    return CheckReport(
        check="reward_exactness",
        seed=seed,
        measured=float(len(violations)),
        bound=0.0,
        passed=not violations,
        details={"trials": trials, "violations": violations[:10]},
    )


def _variance_slack(draws: np.ndarray) -> float:
    """3 sigma of the sample-variance estimator via empirical moments."""
    n = len(draws)
    centered = draws - draws.mean()
    m2 = float(np.mean(centered**2))
    m4 = float(np.mean(centered**4))
    return 3.0 * math.sqrt(max(m4 - m2**2, 0.0) / n)


def variance_check(
    policy: LatticePolicy,
    probabilities: tuple[float, ...] = (1.0, 0.5, 0.9),
    draws: int = 20000,
    seed: int = 42,
    n_sentences: int = 50,
) -> CheckReport:
    """Binary-reward variance stays below 1/4 plus Monte Carlo slack.

    Also reports the total variance of score * reward against G^2 / 4
    with G the maximum observed score norm; that comparison is telemetry
    (G is an estimate), not an assertion.
    """
    worlds = []
    passed = True
    worst_var = 0.0
    worst_bound = 0.25
    alphabet = sorted(
        set(policy.tables.homophone) | set(policy.tables.near_glyph) | {"a", "b"}
    )
    for w_idx, p in enumerate(probabilities):
        rng = np.random.default_rng(mix_seed(seed, w_idx))
        rewards = (rng.random(draws) < p).astype(np.float64)
        var = float(rewards.var())
        bound = 0.25 + _variance_slack(rewards)
        ok = var <= bound
        passed = passed and ok
        if var - bound > worst_var - worst_bound:
            worst_var, worst_bound = var, bound

        # Score-variance telemetry on a small sampled-policy world.
        py_rng = random.Random(mix_seed(seed, w_idx, 1))
        theta = np.random.default_rng(mix_seed(seed, w_idx, 2)).normal(
            0.0, 0.5, size=policy.buckets
        )
        grads = []
        for _ in range(n_sentences):
            x = "".join(py_rng.choice(alphabet) for _ in range(py_rng.randint(4, 8)))
            choices, _ = policy.sample(theta, x, py_rng)
            grads.append(policy.grad_logprob(theta, x, choices))
        grads = np.stack(grads)
        z = (rng.random(n_sentences) < p).astype(np.float64)
        weighted = grads * z[:, None]
        total_var = float(np.sum(weighted.var(axis=0)))
        g_max = float(np.max(np.linalg.norm(grads, axis=1)))
        worlds.append(
            {
                "p": p,
                "reward_variance": var,
                "reward_bound": bound,
                "score_reward_variance": total_var,
                "quarter_g_squared": 0.25 * g_max**2,
                "score_within": total_var <= 0.25 * g_max**2,
            }
        )
    return CheckReport(
        check="reward_variance",
        seed=seed,
        measured=worst_var,
        bound=worst_bound,
        passed=passed,
        details={"worlds": worlds},
    )


def clip_bias_exact(
    ratios: np.ndarray, advantages: np.ndarray, probs: np.ndarray, epsilon: float
) -> float:
    """|E[(rho - 1) A] - E[(clip(rho) - 1) A]| by exact enumeration."""
    unclipped = float(np.sum(probs * (ratios - 1.0) * advantages))
    clipped = float(
        np.sum(probs * (np.clip(ratios, 1.0 - epsilon, 1.0 + epsilon) - 1.0) * advantages)
    )
    return abs(unclipped - clipped)


def clip_bias_check(
    n_distributions: int = 200,
    a_max: float = 2.0,
    epsilon: float = 0.2,
    seed: int = 42,
) -> CheckReport:
    """Exact clipping bias is bounded by 2 eps A_max on random supports.

    Support ratios are drawn within |rho - 1| <= 3 eps, the widest band
    for which the stated constant holds (equality at the band edge).
    """
    worst = 0.0
    bound = 2.0 * epsilon * a_max
    violations = 0
    for d in range(n_distributions):
        rng = np.random.default_rng(mix_seed(seed, d))
        k = int(rng.integers(1, 7))
        ratios = rng.uniform(max(0.01, 1.0 - 3.0 * epsilon), 1.0 + 3.0 * epsilon, size=k)
        advantages = rng.uniform(-a_max, a_max, size=k)
        probs = rng.uniform(0.05, 1.0, size=k)
        probs /= probs.sum()
        bias = clip_bias_exact(ratios, advantages, probs, epsilon)
        worst = max(worst, bias)
        if bias > bound + 1e-12:
            violations += 1
    return CheckReport(
        check="clip_bias",
        seed=seed,
        measured=worst,
        bound=bound,
        passed=violations == 0,
        details={
            "distributions": n_distributions,
            "epsilon": epsilon,
            "a_max": a_max,
            "violations": violations,
        },
    )


def hoeffding_bound(n: int, delta: float) -> float:
    """Deviation bound sqrt(log(2 / delta) / (2 N))."""
    if n < 1 or not 0.0 < delta < 1.0:
        raise ValueError("need N >= 1 and delta in (0, 1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


# Fixed bounded reward distribution used for the resampling experiment;
# true mean is exactly 0.5 by symmetry.
_REWARD_VALUES = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_REWARD_PROBS = np.array([0.15, 0.20, 0.30, 0.20, 0.15])


def hoeffding_check(
    n: int,
    delta: float = 0.05,
    resamples: int = 2000,
    seed: int = 42,
    bound_ceiling: float | None = None,
) -> CheckReport:
    """Empirical violation rate of the deviation bound stays near delta.

    With resamples = 0 only the bound value is computed (optionally
    compared against ``bound_ceiling``); otherwise `resamples` fresh
    N-sized samples from a fixed reward distribution are drawn and the
    fraction whose mean deviates beyond the bound is compared to
    delta + 3 sigma.
    """
    bound_value = hoeffding_bound(n, delta)
    if resamples == 0:
        ceiling = bound_ceiling if bound_ceiling is not None else bound_value
        return CheckReport(
            check="generalization_bound",
            seed=seed,
            measured=bound_value,
            bound=ceiling,
            passed=bound_value <= ceiling,
            details={"n": n, "delta": delta, "resamples": 0},
        )
    rng = np.random.default_rng(mix_seed(seed, n))
    true_mean = float(_REWARD_VALUES @ _REWARD_PROBS)
    draws = rng.choice(_REWARD_VALUES, size=(resamples, n), p=_REWARD_PROBS)
    deviations = np.abs(draws.mean(axis=1) - true_mean)
    rate = float(np.mean(deviations > bound_value))
    slack = 3.0 * math.sqrt(delta * (1.0 - delta) / resamples)
    return CheckReport(
        check="generalization_bound",
        seed=seed,
        measured=rate,
        bound=delta + slack,
        passed=rate <= delta + slack,
        details={"n": n, "delta": delta, "resamples": resamples, "bound_value": bound_value},
    )


def run_all_checks(
    policy: LatticePolicy, reward_cfg: RewardConfig, seed: int = 42
) -> list[CheckReport]:
    """The standard verification suite run by the theory-check CLI."""
    return [
        lemma1_check(reward_cfg, trials=1000, seed=seed),
        variance_check(policy, seed=seed),
        clip_bias_check(n_distributions=200, a_max=2.0, epsilon=0.2, seed=seed),
        hoeffding_check(1000, delta=0.05, resamples=2000, seed=seed),
        hoeffding_check(
            44_000_000, delta=0.05, resamples=0, seed=seed, bound_ceiling=3e-4
        ),
    ]
