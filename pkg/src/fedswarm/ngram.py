"""Synthetic bigram substrate: ground truth, node drift, sampling, local fits.

Everything here is closed-form: the ground truth is an explicit logit table,
node models are Laplace-smoothed count tables, and the quality metric is the
exact context-averaged KL divergence (no Monte Carlo estimation anywhere).
Context length is fixed at one, so contexts and tokens share the vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroundTruth",
    "NodeDistribution",
    "Dataset",
    "LocalModel",
    "softmax",
    "log_softmax",
    "generate_ground_truth",
    "perturb_node",
    "sample_dataset",
    "fit_local_mle",
    "expected_kl",
    "per_context_kl",
]

_ROW_SUM_TOL = 1e-12


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis`."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Log of softmax, computed without forming intermediate ratios."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GroundTruth:
    """Target conditional table: one logit row per context.

    `logits` has shape (V, V): row x holds the logits of the next-token
    distribution given context x. `context_marginal` is the distribution the
    KL metric averages over. Instances are immutable and shareable.
    """

    logits: np.ndarray
    context_marginal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "logits", _freeze(np.asarray(self.logits, dtype=np.float64)))
        object.__setattr__(
            self, "context_marginal", _freeze(np.asarray(self.context_marginal, dtype=np.float64))
        )
        if self.logits.ndim != 2 or self.logits.shape[0] != self.logits.shape[1]:
            raise ValueError("logits must be a square (V, V) table")
        if self.context_marginal.shape != (self.logits.shape[0],):
            raise ValueError("context_marginal must have one entry per context")
        if np.any(self.context_marginal < 0):
            raise ValueError("context_marginal entries must be nonnegative")
        if abs(self.context_marginal.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("context_marginal must sum to 1")
        rows = softmax(self.logits, axis=1).sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("softmax rows failed to normalize")

    @property
    def V(self) -> int:
        return self.logits.shape[0]

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)


@dataclass(frozen=True)
class NodeDistribution:
    """A node's private conditional: the ground truth plus Gaussian logit drift."""

    logits: np.ndarray
    drift: float
    kl_to_target: float

    def __post_init__(self):
        object.__setattr__(self, "logits", _freeze(np.asarray(self.logits, dtype=np.float64)))

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)


@dataclass(frozen=True)
class Dataset:
    """Pair counts of one node's private sample: counts[x, y] over n draws."""

    counts: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "counts", _freeze(np.asarray(self.counts, dtype=np.int64)))
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        if int(self.counts.sum()) != self.n:
            raise ValueError("counts must sum to n")


@dataclass(frozen=True)
class LocalModel:
    """Laplace-smoothed conditional fit; `logits` stores log-probabilities."""

    logits: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "logits", _freeze(np.asarray(self.logits, dtype=np.float64)))
        rows = softmax(self.logits, axis=1).sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("softmax rows failed to normalize")

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)


def generate_ground_truth(V: int, seed: int) -> GroundTruth:
    """Draw a ground-truth table: standard-normal logits, uniform context marginal.

    Deterministic in (V, seed); the same arguments always yield a bitwise
    identical table.
    """
    if V < 2:
        raise ValueError(f"vocabulary size must be >= 2, got {V}")
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((V, V))
    marginal = np.full(V, 1.0 / V)
    return GroundTruth(logits=logits, context_marginal=marginal)


def perturb_node(gt: GroundTruth, drift: float, seed: int) -> NodeDistribution:
    """Perturb the ground truth with i.i.d. N(0, 1) logit noise scaled by `drift`.

    drift = 0 returns the ground-truth table unchanged with an exact zero
    divergence; otherwise the divergence to the target is computed in closed
    form under the target's context marginal.
    """
    if drift < 0:
        raise ValueError(f"drift must be nonnegative, got {drift}")
    if drift == 0:
        return NodeDistribution(logits=gt.logits, drift=0.0, kl_to_target=0.0)
    rng = np.random.default_rng(seed)
    logits = gt.logits + drift * rng.standard_normal(gt.logits.shape)
    kl = expected_kl(gt, logits)
    return NodeDistribution(logits=logits, drift=float(drift), kl_to_target=kl)


def sample_dataset(
    dist: NodeDistribution | GroundTruth,
    marginal: np.ndarray,
    n: int,
    seed: int,
) -> Dataset:
    """Sample n (context, token) pairs: context ~ marginal, token ~ dist row.

    Only the pair counts are retained; the joint count law is identical to
    drawing the n pairs one at a time.
    """
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    marginal = np.asarray(marginal, dtype=np.float64)
    V = dist.logits.shape[0]
    if marginal.shape != (V,):
        raise ValueError("marginal shape does not match vocabulary")
    rng = np.random.default_rng(seed)
    if n == 0:
        return Dataset(counts=np.zeros((V, V), dtype=np.int64), n=0)
    row_totals = rng.multinomial(n, marginal)
    counts = rng.multinomial(row_totals, softmax(dist.logits, axis=1))
    return Dataset(counts=counts.astype(np.int64), n=n)


def fit_local_mle(data: Dataset, beta: float) -> LocalModel:
    """Fit the add-beta smoothed conditional table from pair counts.

    beta > 0 is required: unsmoothed rows with zero counts would carry
    -inf log-probabilities. Contexts with no observations get the pure
    smoothing row, i.e. exactly uniform.
    """
    if beta <= 0:
        raise ValueError(f"smoothing constant must be positive, got {beta}")
    counts = data.counts.astype(np.float64)
    V = counts.shape[0]
    probs = (counts + beta) / (counts.sum(axis=1, keepdims=True) + beta * V)
    return LocalModel(logits=np.log(probs), beta=float(beta))


def _model_logits(model) -> np.ndarray:
    if hasattr(model, "logits"):
        return np.asarray(model.logits, dtype=np.float64)
    return np.asarray(model, dtype=np.float64)


def per_context_kl(target: GroundTruth, model) -> np.ndarray:
    """Exact per-context KL(target row || model row), length-V vector.

    A model row with zero mass where the target row has mass yields +inf for
    that context; this is a documented value, not an error.
    """
    logits = _model_logits(model)
    if logits.shape != target.logits.shape:
        raise ValueError("model table shape does not match target")
    p = target.probs
    logp = log_softmax(target.logits, axis=1)
    logq = log_softmax(logits, axis=1)
    diff = logp - logq
    # 0 * inf guard: contexts where the target row has a zero must not poison the sum.
    terms = np.where(p > 0, p * diff, 0.0)
    return terms.sum(axis=1)


def expected_kl(target: GroundTruth, model) -> float:
    """Context-marginal average of the exact per-context KL to `model`."""
    rows = per_context_kl(target, model)
    return float(np.dot(target.context_marginal, rows))
