"""Probe-logit distillation rounds: fit, quantize, uplink, average, broadcast.

Each round every node fits its local table from scratch, evaluates log-prob
rows on the shared probe contexts, quantizes them, and uplinks one payload.
The hub averages the dequantized rows coordinate-wise, writes the averaged
row into the student at each probed context (repeated probes of a context
average with multiplicity), and broadcasts the student. The local fit is
closed form and ignores the broadcast, so every round reproduces the same
student bit for bit; rounds only accumulate uplink charges.

Unprobed contexts fall back to the uniform row. Their contribution to the
evaluation KL is reported separately by the harness rather than silently
mixed into the probed-context error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedswarm import ngram
from fedswarm.ngram import GroundTruth, log_softmax, softmax
from fedswarm.quant import QuantizedPayload, QuantizerConfig, dequantize, quantize
from fedswarm.transport import Bus, ProtocolError

__all__ = [
    "ProbeSet",
    "FpldConfig",
    "Student",
    "draw_probe_set",
    "run_fpld",
    "aggregate_probe_logits",
    "measure_quantization_kl",
]

# Sub-seed roles for the splittable derivation scheme.
_ROLE_DATA = 1
_ROLE_PROBE = 2
_ROLE_DITHER = 3
_ROLE_DRIFT = 4


def child_seed(master: int, *key: int) -> int:
    """Derive an independent stream seed from (master, role, indices...)."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *map(int, key)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ProbeSet:
    """Public probe contexts, drawn i.i.d. from the probe marginal."""

    contexts: np.ndarray
    m: int

    def __post_init__(self):
        ctx = np.asarray(self.contexts, dtype=np.int64)
        object.__setattr__(self, "contexts", ctx)
        if ctx.shape != (self.m,):
            raise ValueError("contexts must be a length-m vector")
        if ctx.size and (ctx.min() < 0):
            raise ValueError("context ids must be nonnegative")


@dataclass(frozen=True)
class FpldConfig:
    """Run parameters: swarm size, data, probes, rounds, channel, smoothing.

    ``local_epochs`` is retained for protocol fidelity but has no effect: the
    local fit is an exact closed-form table, so extra epochs cannot move it.
    """

    K: int
    n: int
    m: int
    T: int
    quantizer: QuantizerConfig
    beta: float = 0.5
    drift: float = 0.0
    seed: int = 0
    local_epochs: int = 1

    def __post_init__(self):
        for name in ("K", "n", "m", "T", "local_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.drift < 0:
            raise ValueError("drift must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass
class Student:
    """Global student table plus the per-context probe-coverage mask."""

    logits: np.ndarray
    covered: np.ndarray

    @property
    def V(self) -> int:
        return self.logits.shape[0]

    def log_probs(self) -> np.ndarray:
        # Uncovered rows hold zero logits; softmax turns them into exact uniform.
        return log_softmax(self.logits, axis=1)


def draw_probe_set(V: int, m: int, seed: int) -> ProbeSet:
    """Draw m probe contexts i.i.d. from the uniform probe marginal."""
    rng = np.random.default_rng(seed)
    return ProbeSet(contexts=rng.integers(0, V, size=m), m=m)


def _assemble_student(mean_rows: np.ndarray, probes: np.ndarray, V: int) -> Student:
    table = np.zeros((V, V))
    np.add.at(table, probes, mean_rows)
    cnt = np.bincount(probes, minlength=V)
    covered = cnt > 0
    table[covered] /= cnt[covered, None]
    return Student(logits=table, covered=covered)


def run_fpld(cfg: FpldConfig, gt: GroundTruth, bus: Bus | None = None):
    """Run T federated distillation rounds; return (student, ledger, diagnostics).

    Per-node data, the probe draw, per-node drift, and per-node dither come
    from independent sub-streams of ``cfg.seed``, so node order and scheduling
    cannot change any result. Dither streams are fixed per node (not per
    round): with the closed-form local fit this makes rounds idempotent, and
    the uplink ledger is the only thing T changes.

    Diagnostics include the per-round mean KL between the softmax of the
    unquantized and the quantized aggregated rows (the bandwidth-induced
    teacher distortion), coverage stats, and the per-node drift penalties.
    """
    V = gt.V
    if bus is None:
        bus = Bus(cfg.K)
    probe = draw_probe_set(V, cfg.m, child_seed(cfg.seed, _ROLE_PROBE))
    probes = probe.contexts

    node_data = []
    drift_terms = []
    for i in range(cfg.K):
        if cfg.drift > 0:
            dist = ngram.perturb_node(gt, cfg.drift, child_seed(cfg.seed, _ROLE_DRIFT, i))
        else:
            dist = ngram.perturb_node(gt, 0.0, 0)
        drift_terms.append(dist.kl_to_target)
        data = ngram.sample_dataset(dist, gt.context_marginal, cfg.n,
                                    child_seed(cfg.seed, _ROLE_DATA, i))
        node_data.append(data)

    shared_mode = cfg.quantizer.mode == "dithered_shared"
    student = None
    quant_kl_rounds = []
    n_saturated = 0
    for t in range(cfg.T):
        sum_raw = np.zeros((cfg.m, V))
        sum_deq = np.zeros((cfg.m, V))
        for i in range(cfg.K):
            rows = ngram.fit_local_mle(node_data[i], cfg.beta).logits[probes]
            sum_raw += rows
            if shared_mode:
                # One dither draw per probe vector: uplink per-probe payloads.
                deq = np.empty_like(rows)
                for l in range(cfg.m):
                    p = quantize(rows[l], cfg.quantizer, child_seed(cfg.seed, _ROLE_DITHER, i, l))
                    bus.uplink(i, "training", p, key=(t, l))
                    n_saturated += p.n_saturated
                    deq[l] = dequantize(p)
            else:
                p = quantize(rows, cfg.quantizer, child_seed(cfg.seed, _ROLE_DITHER, i))
                bus.uplink(i, "training", p, key=t)
                n_saturated += p.n_saturated
                deq = dequantize(p).reshape(cfg.m, V)
            sum_deq += deq
        mean_raw = sum_raw / cfg.K
        mean_deq = sum_deq / cfg.K
        quant_kl_rounds.append(measure_quantization_kl(mean_raw, mean_deq))
        student = _assemble_student(mean_deq, probes, V)
        bus.broadcast(student)

    diagnostics = {
        "covered_fraction": float(student.covered.mean()),
        "probe_multiplicity_mean": float(cfg.m / max(1, int(student.covered.sum()))),
        "quantization_kl_per_round": quant_kl_rounds,
        "n_saturated": n_saturated,
        "drift_terms": drift_terms,
        "drift_term": float(np.mean(drift_terms)),
    }
    return student, bus.ledger, diagnostics


def aggregate_probe_logits(node_payloads: list, row_len: int) -> np.ndarray:
    """Average the dequantized probe rows reported by every node.

    Each entry holds one node's report: either a single payload covering all
    probe rows (row-major) or a list of per-row payloads. A missing node or a
    row-count mismatch is a protocol error; stragglers are out of scope.
    """
    if not node_payloads:
        raise ProtocolError("no node reports")
    rows_per_node = []
    for i, entry in enumerate(node_payloads):
        if entry is None:
            raise ProtocolError(f"node {i} did not report")
        if isinstance(entry, QuantizedPayload):
            flat = dequantize(entry)
            if flat.size % row_len:
                raise ProtocolError(f"node {i} payload is not a whole number of rows")
            rows_per_node.append(flat.reshape(-1, row_len))
        else:
            rows_per_node.append(np.stack([dequantize(p) for p in entry]))
    m = rows_per_node[0].shape[0]
    if any(r.shape[0] != m for r in rows_per_node):
        raise ProtocolError("nodes reported different probe counts")
    return np.mean(rows_per_node, axis=0)


def measure_quantization_kl(raw_rows: np.ndarray, quantized_rows: np.ndarray) -> float:
    """Mean KL between softmax of unquantized and quantized aggregated rows.

    Both aggregates must come from the same round; this isolates the
    bandwidth-induced distortion of the averaged teacher, independent of the
    ground truth.
    """
    raw_rows = np.atleast_2d(np.asarray(raw_rows, dtype=np.float64))
    quantized_rows = np.atleast_2d(np.asarray(quantized_rows, dtype=np.float64))
    if raw_rows.shape != quantized_rows.shape:
        raise ValueError("aggregates must have identical shapes")
    p = softmax(raw_rows, axis=1)
    diff = log_softmax(raw_rows, axis=1) - log_softmax(quantized_rows, axis=1)
    return float(np.sum(p * diff, axis=1).mean())
