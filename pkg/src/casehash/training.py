"""Optimization of the hash network against pairwise similarity supervision.

The objective over a batch of supervised pairs is

    sum_pairs [ log(1 + e^(alpha * s_hat)) - alpha * s * s_hat ]
        - lambda * sum_cases ||z_out||^2

with s_hat the inner product of the two cases' relaxed outputs. Gradients are
analytic (validated against central finite differences) and reuse the
interaction running sums stored in each forward trace. A hinge-gated variant
of the loss (adaptive_loss) drives the retention-time model update: pairs
whose code similarity already clears the margin r*beta contribute nothing.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .network import (
    DivergenceError,
    ForwardTrace,
    Hyperparams,
    NetworkParams,
    forward,
    init_params,
)


@dataclass
class PairBatch:
    """Supervised (i, j, s) triples referencing positions in a case list.

    i/j index into `cases`; s holds 0/1 similarity labels. Pairs are unordered
    and unique, with i != j everywhere. `unbalanced` marks degenerate batches
    (single-label data) where positive/negative balancing was impossible.
    """

    cases: list
    i: np.ndarray
    j: np.ndarray
    s: np.ndarray
    unbalanced: bool = False

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64)
        self.j = np.asarray(self.j, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if not (self.i.shape == self.j.shape == self.s.shape):
            raise ValueError("i, j, s must have equal length")
        if np.any(self.i == self.j):
            raise ValueError("self-pairs are not allowed")
        keys = {(min(a, b), max(a, b)) for a, b in zip(self.i.tolist(), self.j.tolist())}
        if len(keys) != len(self.i):
            raise ValueError("duplicate unordered pairs in batch")

    def __len__(self) -> int:
        return len(self.i)

    @property
    def n_positive(self) -> int:
        return int(self.s.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def distinct_positions(self) -> np.ndarray:
        if len(self.i) == 0:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate([self.i, self.j]))


@dataclass
class Gradients:
    """Parameter-shaped gradient container (same layout as NetworkParams)."""

    w_p: np.ndarray
    v: np.ndarray
    layers: list  # [(dw, db), ...]

    def arrays(self):
        yield "w_p", self.w_p
        yield "v", self.v
        for i, (dw, db) in enumerate(self.layers, start=1):
            yield f"w{i}", dw
            yield f"b{i}", db

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for _, a in self.arrays())


def zero_gradients(params: NetworkParams) -> Gradients:
    return Gradients(
        w_p=np.zeros_like(params.w_p),
        v=np.zeros_like(params.v),
        layers=[(np.zeros_like(l.w), np.zeros_like(l.b)) for l in params.layers],
    )


def relaxed_similarity(trace_i: ForwardTrace, trace_j: ForwardTrace) -> float:
    """Inner product of two relaxed outputs; the surrogate for code similarity."""
    return float(trace_i.output @ trace_j.output)


def pair_loss(s: float, s_hat: float, alpha: float) -> float:
    """Pairwise cross-entropy term log(1 + e^(alpha*s_hat)) - alpha*s*s_hat.

    Evaluated in the overflow-safe form max(t,0) + log(1 + e^-|t|).
    """
    t = alpha * s_hat
    return float(np.logaddexp(0.0, t) - s * t)


def adaptive_loss(s: float, s_hat: float, alpha: float, beta: float, r: int) -> float:
    """Hinge-gated retention loss; identically zero once the margin r*beta holds.

    s=1: max(0, r*beta - s_hat) * log(1 + e^(-alpha*s_hat))
    s=0: max(0, r*beta + s_hat) * log(1 + e^(+alpha*s_hat))
    """
    margin = r * beta
    if s == 1:
        return max(0.0, margin - s_hat) * float(np.logaddexp(0.0, -alpha * s_hat))
    return max(0.0, margin + s_hat) * float(np.logaddexp(0.0, alpha * s_hat))


def _adaptive_loss_and_dshat(s, s_hat, alpha, beta, r):
    """Vectorized adaptive loss values and their derivative in s_hat."""
    s = np.asarray(s, dtype=float)
    s_hat = np.asarray(s_hat, dtype=float)
    margin = r * beta
    sign = np.where(s == 1, -1.0, 1.0)       # s=1 uses -s_hat inside the softplus
    hinge = np.maximum(0.0, margin + sign * s_hat)
    soft = np.logaddexp(0.0, sign * alpha * s_hat)
    loss = hinge * soft
    dhinge = np.where(hinge > 0.0, sign, 0.0)
    dsoft = sign * alpha * expit(sign * alpha * s_hat)
    dshat = np.where(hinge > 0.0, dhinge * soft + hinge * dsoft, 0.0)
    return loss, dshat


def _forward_distinct(batch: PairBatch, params: NetworkParams):
    """Traces and stacked outputs for the batch's distinct cases."""
    positions = batch.distinct_positions()
    traces = [forward(batch.cases[p], params) for p in positions]
    z = np.stack([t.output for t in traces]) if traces else np.empty((0, params.hyper.r))
    local = {p: k for k, p in enumerate(positions.tolist())}
    return positions, traces, z, local


def _pair_terms(batch: PairBatch, z: np.ndarray, local, alpha: float):
    li = np.array([local[p] for p in batch.i.tolist()], dtype=np.int64)
    lj = np.array([local[p] for p in batch.j.tolist()], dtype=np.int64)
    s_hat = (z[li] * z[lj]).sum(axis=1) if len(li) else np.empty(0)
    losses = np.logaddexp(0.0, alpha * s_hat) - alpha * batch.s * s_hat
    return li, lj, s_hat, losses


def batch_objective(batch: PairBatch, params: NetworkParams) -> float:
    """Pair losses minus lambda times the summed squared output norms."""
    hyper = params.hyper
    _, _, z, local = _forward_distinct(batch, params)
    _, _, _, losses = _pair_terms(batch, z, local, hyper.alpha)
    return float(losses.sum() - hyper.lambda_ * np.square(z).sum())


def _backward(batch: PairBatch, params: NetworkParams, traces, deltas) -> Gradients:
    """Push per-case dL/dz_out back through FC layers, views and embeddings.

    Reuses each trace's stored running sums: for an active feature with value
    x and embedding e, dL/dw_p[:, slot] = g * x * (sum_e - e) where
    g = v @ dL/dz.
    """
    grads = zero_gradients(params)
    for trace, delta in zip(traces, deltas):
        d_out = delta
        for li in reversed(range(len(params.layers))):
            layer = params.layers[li]
            out = trace.outputs[li]
            if layer.activation == "squash":
                d_pre = d_out * (-(1.0 - np.square(out)) / 2.0)
            else:
                d_pre = d_out * (trace.pre[li] > 0.0)
            h_in = trace.outputs[li - 1] if li > 0 else trace.z
            dw, db = grads.layers[li]
            dw += np.outer(d_pre, h_in)
            db += d_pre
            d_out = layer.w.T @ d_pre
        # d_out is now dL/dz (k_v,)
        grads.v += 0.5 * np.outer(np.square(trace.sum_e) - trace.sum_e_sq, d_out)
        if trace.active_indices.size:
            g = params.v @ d_out
            contrib = g[:, None] * (trace.active_values *
                                    (trace.sum_e[:, None] - trace.embeddings))
            grads.w_p[:, trace.active_indices] += contrib
    return grads


def _objective_and_grad(batch: PairBatch, params: NetworkParams):
    hyper = params.hyper
    positions, traces, z, local = _forward_distinct(batch, params)
    li, lj, s_hat, losses = _pair_terms(batch, z, local, hyper.alpha)
    value = float(losses.sum() - hyper.lambda_ * np.square(z).sum())

    deltas = -2.0 * hyper.lambda_ * z
    if len(li):
        coeff = hyper.alpha * (expit(hyper.alpha * s_hat) - batch.s)
        np.add.at(deltas, li, coeff[:, None] * z[lj])
        np.add.at(deltas, lj, coeff[:, None] * z[li])
    return value, _backward(batch, params, traces, deltas)


def grad(batch: PairBatch, params: NetworkParams) -> Gradients:
    """Exact analytic gradient of batch_objective for every parameter."""
    _, gradients = _objective_and_grad(batch, params)
    if not gradients.is_finite():
        raise DivergenceError("non-finite gradient")
    return gradients


def adaptive_objective_and_grad(batch: PairBatch, params: NetworkParams):
    """Summed adaptive loss and its gradient; margin-satisfied pairs are inert."""
    hyper = params.hyper
    positions, traces, z, local = _forward_distinct(batch, params)
    li = np.array([local[p] for p in batch.i.tolist()], dtype=np.int64)
    lj = np.array([local[p] for p in batch.j.tolist()], dtype=np.int64)
    s_hat = (z[li] * z[lj]).sum(axis=1) if len(li) else np.empty(0)
    losses, dshat = _adaptive_loss_and_dshat(batch.s, s_hat, hyper.alpha,
                                             hyper.beta, hyper.r)
    deltas = np.zeros_like(z)
    if len(li):
        np.add.at(deltas, li, dshat[:, None] * z[lj])
        np.add.at(deltas, lj, dshat[:, None] * z[li])
    return float(losses.sum()), _backward(batch, params, traces, deltas)


def finite_diff_grad(batch: PairBatch, params: NetworkParams, eps: float = 1e-5) -> Gradients:
    """Central-difference gradient oracle, one scalar parameter at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = zero_gradients(params)
    for (_, arr), (_, garr) in zip(params.arrays(), out.arrays()):
        flat, gflat = arr.ravel(), garr.ravel()
        for t in range(flat.size):
            orig = flat[t]
            flat[t] = orig + eps
            f_plus = batch_objective(batch, params)
            flat[t] = orig - eps
            f_minus = batch_objective(batch, params)
            flat[t] = orig
            gflat[t] = (f_plus - f_minus) / (2.0 * eps)
    return out


def sample_pairs(cases, batch_size: int, seed: int, neg_ratio: float = 1.0) -> PairBatch:
    """Label-stratified case draw, all within-draw pairs, negatives subsampled.

    Draws up to batch_size cases cycling through the labels, forms every
    unordered pair among them, then keeps all positives and about
    len(positives) * neg_ratio negatives. Single-label (or single-class-pair)
    draws are returned unbalanced with the flag set.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if len(cases) < 2:
        raise ValueError("need at least 2 cases to form pairs")
    rng = np.random.default_rng(seed)

    by_label: dict[int, list[int]] = {}
    for pos, case in enumerate(cases):
        by_label.setdefault(case.label, []).append(pos)
    pools = [list(rng.permutation(by_label[lab])) for lab in sorted(by_label)]
    chosen: list[int] = []
    cursor = 0
    while len(chosen) < min(batch_size, len(cases)):
        pool = pools[cursor % len(pools)]
        if pool:
            chosen.append(int(pool.pop()))
        cursor += 1
        if all(not p for p in pools):
            break
    chosen.sort()

    pos_pairs, neg_pairs = [], []
    for a in range(len(chosen)):
        for b in range(a + 1, len(chosen)):
            p, q = chosen[a], chosen[b]
            if cases[p].label == cases[q].label:
                pos_pairs.append((p, q))
            else:
                neg_pairs.append((p, q))

    unbalanced = not pos_pairs or not neg_pairs
    if unbalanced:
        if not pos_pairs and not neg_pairs:
            raise ValueError("no pairs could be formed")
        warnings.warn("degenerate supervision: batch has a single pair polarity",
                      stacklevel=2)
        kept_neg = neg_pairs
    else:
        target = min(len(neg_pairs), int(round(len(pos_pairs) * neg_ratio)))
        target = max(target, 1)
        keep = rng.choice(len(neg_pairs), size=target, replace=False)
        kept_neg = [neg_pairs[int(k)] for k in sorted(keep)]

    pairs = pos_pairs + kept_neg
    s = np.array([1.0] * len(pos_pairs) + [0.0] * len(kept_neg))
    i = np.array([p for p, _ in pairs], dtype=np.int64)
    j = np.array([q for _, q in pairs], dtype=np.int64)
    return PairBatch(cases=cases, i=i, j=j, s=s, unbalanced=unbalanced)


@dataclass
class OptimizerState:
    """First-order optimizer: adaptive moments ("adam") or plain descent ("sgd")."""

    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def apply(self, params: NetworkParams, grads: Gradients) -> None:
        """One in-place minimization step."""
        self.step += 1
        for (name, arr), (_, g) in zip(params.arrays(), grads.arrays()):
            if self.kind == "sgd":
                arr -= self.lr * g
                continue
            m = self.m.setdefault(name, np.zeros_like(arr))
            v = self.v.setdefault(name, np.zeros_like(arr))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            m_hat = m / (1.0 - self.beta1 ** self.step)
            v_hat = v / (1.0 - self.beta2 ** self.step)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    objective: float
    val_objective: float
    n_positive: int
    n_negative: int
    wall_time_s: float

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "objective": self.objective,
            "val_objective": self.val_objective,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "wall_time_s": self.wall_time_s,
        }


@dataclass
class TrainResult:
    params: NetworkParams
    history: list[EpochRecord]
    stopped_early: bool = False
    diverged: bool = False


def write_train_log(history, csv_path=None, jsonl_path=None) -> None:
    """Write the per-epoch records as CSV and/or JSON lines."""
    fields = ["epoch", "objective", "val_objective",
              "n_positive", "n_negative", "wall_time_s"]
    if csv_path is not None:
        with open(str(csv_path), "w", encoding="utf-8") as fh:
            fh.write(",".join(fields) + "\n")
            for rec in history:
                row = rec.as_dict()
                fh.write(",".join(str(row[f]) for f in fields) + "\n")
    if jsonl_path is not None:
        with open(str(jsonl_path), "w", encoding="utf-8") as fh:
            for rec in history:
                fh.write(json.dumps(rec.as_dict()) + "\n")


def train(
    train_set,
    hyper: Hyperparams,
    epochs: int = 50,
    seed: int = 0,
    batch_size: int = 256,
    optimizer: str = "adam",
    lr: float = 1e-3,
    neg_ratio: float = 1.0,
    patience: int = 5,
    min_delta: float = 1e-4,
) -> TrainResult:
    """Fit the hash network on a labeled case set.

    All randomness (initialization, per-step pair sampling, the fixed
    validation batch) derives from `seed`, so reruns are bit-identical.
    Stops early once the validation objective fails to improve by min_delta
    for `patience` consecutive epochs; on divergence the last finite
    parameters are returned.
    """
    if not train_set:
        raise ValueError("empty training set")
    if len({c.label for c in train_set}) < 2:
        warnings.warn("training set has fewer than 2 labels; pairs will be degenerate",
                      stacklevel=2)

    root = np.random.SeedSequence(seed)
    init_seed, val_seed, sample_seed = (s.generate_state(1)[0] for s in root.spawn(3))
    d = train_set[0].features.dim
    params = init_params(hyper, d, int(init_seed))
    if epochs == 0:
        return TrainResult(params=params, history=[])

    opt = OptimizerState(kind=optimizer, lr=lr)
    val_batch = sample_pairs(train_set, min(batch_size, len(train_set)),
                             int(val_seed), neg_ratio)
    steps_per_epoch = max(1, -(-len(train_set) // batch_size))
    sample_rng = np.random.default_rng(int(sample_seed))

    history: list[EpochRecord] = []
    best_val = np.inf
    stale = 0
    checkpoint = params.copy()
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        totals = np.zeros(3)  # objective sum, positives, negatives
        try:
            for _ in range(steps_per_epoch):
                step_seed = int(sample_rng.integers(0, 2 ** 63 - 1))
                batch = sample_pairs(train_set, min(batch_size, len(train_set)),
                                     step_seed, neg_ratio)
                value, gradients = _objective_and_grad(batch, params)
                if not np.isfinite(value) or not gradients.is_finite():
                    raise DivergenceError("objective diverged")
                opt.apply(params, gradients)
                totals += (value, batch.n_positive, batch.n_negative)
            val_value = batch_objective(val_batch, params)
            if not np.isfinite(val_value):
                raise DivergenceError("validation objective diverged")
        except DivergenceError:
            return TrainResult(params=checkpoint, history=history, diverged=True)

        checkpoint = params.copy()
        history.append(EpochRecord(
            epoch=epoch,
            objective=float(totals[0] / steps_per_epoch),
            val_objective=float(val_value),
            n_positive=int(totals[1]),
            n_negative=int(totals[2]),
            wall_time_s=time.perf_counter() - started,
        ))
        if val_value < best_val - min_delta:
            best_val = val_value
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return TrainResult(params=params, history=history, stopped_early=True)
    return TrainResult(params=params, history=history)
