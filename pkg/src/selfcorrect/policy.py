"""Log-linear correction policy over a per-position edit lattice.

For an input sentence x, each position carries an ordered candidate list
of edit actions: keep the character, replace it with a confusion-table
alternative, delete it (noise symbols only), or merge it with the next
character back into the composite a split produced.  Merge consumes two
positions, which is how outputs of a different length than the input
arise.  The policy is a per-slot softmax over the actions' hashed
features, so log-probabilities, score gradients, and the full output
distribution are all exact and cheap to enumerate -- every training-time
quantity here can be checked against brute force.

Prepared lattices (feature indices included) are memoized per sentence;
all inner loops run on plain Python floats because slots rarely hold
more than a handful of actions.

Checkpoint layout (little-endian):
    magic ``CECP`` | u32 version = 1 | u32 F | F * f32 theta |
    u8 value kind (0 linear, 1 mlp) | value parameter arrays, each
    prefixed by u32 length, as f32.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .corruptor import ConfusionTables
from .hashing import fnv1a64
from .value import HIDDEN_WIDTH, ValueBaseline

CHECKPOINT_MAGIC = b"CECP"
CHECKPOINT_VERSION = 1

ACTION_KINDS = ("keep", "replace", "delete", "merge")
_BOS = "\x02"

_LATTICE_CACHE_CAP = 8192


@dataclass(frozen=True)
class EditAction:
    kind: str
    emit: str
    width: int = 1


@dataclass
class CandidateLattice:
    x: str
    slots: list[list[EditAction]]


class _Slot:
    """One lattice position with precomputed feature buckets."""

    __slots__ = ("actions", "emits", "widths", "mains", "biases")

    def __init__(self, actions, emits, widths, mains, biases):
        self.actions = actions
        self.emits = emits
        self.widths = widths
        self.mains = mains
        self.biases = biases


class FeatureMap:
    """Hashed sparse features for (action, context) pairs.

    phi(x, i, action) has exactly two unit entries: a hashed bucket for
    (kind, source, emitted text, left-context char) and a reserved
    per-kind bias bucket.  Buckets 0..3 are the biases; hashed features
    land in [4, buckets).  Collisions between hashed features are
    tolerated (hashing trick).
    """

    def __init__(self, buckets: int = 4096):
        if buckets <= len(ACTION_KINDS):
            raise ValueError("bucket count too small for reserved bias buckets")
        self.buckets = buckets

    def feature_pair(self, x: str, i: int, action: EditAction) -> tuple[int, int]:
        src = x[i : i + action.width]
        left = x[i - 1] if i > 0 else _BOS
        main = len(ACTION_KINDS) + fnv1a64(
            f"feat\x1f{action.kind}\x1f{src}\x1f{action.emit}\x1f{left}"
        ) % (self.buckets - len(ACTION_KINDS))
        return main, ACTION_KINDS.index(action.kind)


@dataclass
class PolicyParams:
    theta: np.ndarray
    value: ValueBaseline


def init_params(
    buckets: int = 4096, value_kind: str = "linear", seed: int = 0
) -> PolicyParams:
    """Zero-initialized policy (decode is then the identity) plus baseline."""
    return PolicyParams(
        theta=np.zeros(buckets, dtype=np.float64),
        value=ValueBaseline(kind=value_kind, buckets=buckets, seed=seed),
    )


class LatticePolicy:
    def __init__(self, tables: ConfusionTables, buckets: int = 4096):
        self.tables = tables
        self.features = FeatureMap(buckets)
        self.buckets = buckets
        self._symbols = set(tables.symbols)
        # Reverse split map for merge actions; only 2-char expansions are
        # mergeable because merge consumes exactly two positions.
        self._merge: dict[str, list[str]] = {}
        for composite, expansion in tables.split.items():
            if len(expansion) == 2:
                self._merge.setdefault(expansion, []).append(composite)
        self._prepared: dict[str, list[_Slot]] = {}

    def build_lattice(self, x: str) -> CandidateLattice:
        """Candidate actions per position: keep, replaces, delete, merge."""
        if not x:
            raise ValueError("cannot build a lattice for an empty sentence")
        slots: list[list[EditAction]] = []
        for i, ch in enumerate(x):
            actions = [EditAction("keep", ch)]
            for alt in self.tables.alternatives(ch):
                actions.append(EditAction("replace", alt))
            if ch in self._symbols:
                actions.append(EditAction("delete", ""))
            if i + 1 < len(x):
                for composite in self._merge.get(x[i : i + 2], []):
                    actions.append(EditAction("merge", composite, width=2))
            slots.append(actions)
        return CandidateLattice(x=x, slots=slots)

    def _prepare(self, x: str) -> list[_Slot]:
        prepared = self._prepared.get(x)
        if prepared is not None:
            return prepared
        lattice = self.build_lattice(x)
        prepared = []
        for i, actions in enumerate(lattice.slots):
            pairs = [self.features.feature_pair(x, i, a) for a in actions]
            prepared.append(
                _Slot(
                    actions=tuple(actions),
                    emits=tuple(a.emit for a in actions),
                    widths=tuple(a.width for a in actions),
                    mains=tuple(m for m, _ in pairs),
                    biases=tuple(b for _, b in pairs),
                )
            )
        if len(self._prepared) >= _LATTICE_CACHE_CAP:
            self._prepared.clear()
        self._prepared[x] = prepared
        return prepared

    @staticmethod
    def _slot_logits(theta: np.ndarray, slot: _Slot) -> list[float]:
        return [
            float(theta[m]) + float(theta[b])
            for m, b in zip(slot.mains, slot.biases)
        ]

    def _walk_prepared(
        self, x: str, slots: list[_Slot], choices: Sequence[int]
    ) -> list[tuple[int, int]]:
        visited: list[tuple[int, int]] = []
        pos = 0
        for c in choices:
            if pos >= len(x):
                raise ValueError("more choices than lattice slots")
            slot = slots[pos]
            if not 0 <= c < len(slot.actions):
                raise ValueError(f"choice {c} invalid at position {pos}")
            visited.append((pos, c))
            pos += slot.widths[c]
        if pos != len(x):
            raise ValueError("choices do not consume the whole input")
        return visited

    def walk(
        self, lattice: CandidateLattice, choices: Sequence[int]
    ) -> list[tuple[int, int]]:
        """Resolve choices to (position, action index) slots, validating."""
        return self._walk_prepared(lattice.x, self._prepare(lattice.x), choices)

    def realize(self, x: str, choices: Sequence[int]) -> str:
        slots = self._prepare(x)
        return "".join(
            slots[pos].emits[c] for pos, c in self._walk_prepared(x, slots, choices)
        )

    def logprob(self, theta: np.ndarray, x: str, choices: Sequence[int]) -> float:
        slots = self._prepare(x)
        total = 0.0
        for pos, c in self._walk_prepared(x, slots, choices):
            logits = self._slot_logits(theta, slots[pos])
            mx = max(logits)
            total += logits[c] - mx - math.log(sum(math.exp(z - mx) for z in logits))
        return total

    def sample(
        self,
        theta: np.ndarray,
        x: str,
        rng: random.Random,
        top_p: float = 1.0,
        temperature: float = 1.0,
    ) -> tuple[tuple[int, ...], float]:
        """Nucleus-sample one choice sequence.

        Per slot the temperature-scaled softmax is sorted descending, cut
        at the smallest prefix with cumulative mass >= top_p, and
        renormalized.  The returned log-probability is taken under the
        untruncated temperature-1 policy, which is what importance ratios
        need.
        """
        if not 0.0 < top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {top_p}")
        if temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        slots = self._prepare(x)
        choices: list[int] = []
        logprob = 0.0
        pos = 0
        while pos < len(x):
            slot = slots[pos]
            logits = self._slot_logits(theta, slot)
            mx = max(logits)
            k = len(logits)
            scaled = [math.exp((z - mx) / temperature) for z in logits]
            z_temp = sum(scaled)
            probs = [p / z_temp for p in scaled]
            order = sorted(range(k), key=lambda i: -probs[i])
            kept = []
            mass = 0.0
            for idx in order:
                kept.append(idx)
                mass += probs[idx]
                if mass >= top_p - 1e-12:
                    break
            u = rng.random() * mass
            acc = 0.0
            chosen = kept[-1]
            for idx in kept:
                acc += probs[idx]
                if u < acc:
                    chosen = idx
                    break
            exps = [math.exp(z - mx) for z in logits]
            logprob += logits[chosen] - mx - math.log(sum(exps))
            choices.append(chosen)
            pos += slot.widths[chosen]
        return tuple(choices), logprob

    def grad_logprob(
        self, theta: np.ndarray, x: str, choices: Sequence[int]
    ) -> np.ndarray:
        """Score function: phi(chosen) - E_softmax[phi], summed over slots."""
        grad = np.zeros(self.buckets, dtype=np.float64)
        self.add_grad_logprob(grad, theta, x, choices, 1.0)
        return grad

    def add_grad_logprob(
        self,
        out: np.ndarray,
        theta: np.ndarray,
        x: str,
        choices: Sequence[int],
        scale: float,
    ) -> float:
        """Accumulate scale * grad_logprob into ``out``; returns the exact
        squared norm of the unscaled per-sample score.

        Weights are first summed per bucket (bias buckets are shared
        within a slot, and hashed buckets may collide), so the returned
        norm matches the dense gradient's.
        """
        slots = self._prepare(x)
        acc: dict[int, float] = {}
        for pos, c in self._walk_prepared(x, slots, choices):
            slot = slots[pos]
            logits = self._slot_logits(theta, slot)
            mx = max(logits)
            exps = [math.exp(z - mx) for z in logits]
            total = sum(exps)
            for a_idx in range(len(exps)):
                w = (1.0 if a_idx == c else 0.0) - exps[a_idx] / total
                acc[slot.mains[a_idx]] = acc.get(slot.mains[a_idx], 0.0) + w
                acc[slot.biases[a_idx]] = acc.get(slot.biases[a_idx], 0.0) + w
        norm_sq = 0.0
        for bucket, w in acc.items():
            norm_sq += w * w
            if scale != 0.0:
                out[bucket] += scale * w
        return norm_sq

    def decode(self, theta: np.ndarray, x: str) -> str:
        """Greedy argmax decoding; logit ties resolve to lattice order."""
        slots = self._prepare(x)
        out: list[str] = []
        pos = 0
        while pos < len(x):
            slot = slots[pos]
            logits = self._slot_logits(theta, slot)
            chosen = max(range(len(logits)), key=lambda i: (logits[i], -i))
            out.append(slot.emits[chosen])
            pos += slot.widths[chosen]
        return "".join(out)

    def enumerate_choices(self, x: str) -> Iterator[tuple[int, ...]]:
        """All full choice sequences, in lexicographic lattice order."""
        slots = self._prepare(x)
        n = len(x)

        def rec(pos: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
            if pos == n:
                yield prefix
                return
            for c, width in enumerate(slots[pos].widths):
                if pos + width <= n:
                    yield from rec(pos + width, prefix + (c,))

        return rec(0, ())

    def count_sequences(self, x: str) -> int:
        slots = self._prepare(x)
        n = len(x)
        counts = [0] * (n + 1)
        counts[n] = 1
        for pos in range(n - 1, -1, -1):
            counts[pos] = sum(
                counts[pos + w] for w in slots[pos].widths if pos + w <= n
            )
        return counts[0]


def save_checkpoint(path: str, params: PolicyParams) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        theta32 = np.asarray(params.theta, dtype="<f4")
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, theta32.shape[0]))
        fh.write(theta32.tobytes())
        fh.write(struct.pack("<B", 0 if params.value.kind == "linear" else 1))
        for arr in params.value.param_arrays():
            flat = np.asarray(arr, dtype="<f4").ravel()
            fh.write(struct.pack("<I", flat.shape[0]))
            fh.write(flat.tobytes())


def load_checkpoint(path: str) -> PolicyParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    version, buckets = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    theta = np.frombuffer(raw, dtype="<f4", count=buckets, offset=offset).astype(
        np.float64
    )
    offset += 4 * buckets
    (kind_code,) = struct.unpack_from("<B", raw, offset)
    offset += 1
    kind = "linear" if kind_code == 0 else "mlp"
    arrays = []
    expected = 1 if kind == "linear" else 4
    for _ in range(expected):
        (length,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        arrays.append(
            np.frombuffer(raw, dtype="<f4", count=length, offset=offset).astype(
                np.float64
            )
        )
        offset += 4 * length
    value = ValueBaseline(kind=kind, buckets=buckets)
    if kind == "mlp":
        arrays[0] = arrays[0].reshape(HIDDEN_WIDTH, -1)
    value.load_param_arrays(arrays)
    return PolicyParams(theta=theta, value=value)
