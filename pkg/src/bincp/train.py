"""SGD training of CP and binarized CP under logistic loss."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cp import DenseFactors, Hyperparams, PackedFactors, binarize_factors, quantize
from .kg import KnowledgeGraph

logger = logging.getLogger(__name__)

MODES = ("dense-cp", "b-cp")


class TrainingDiverged(RuntimeError):
    pass


def sigmoid(x):
    """Logistic function, stable for large |x| (no overflow in exp)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out[()] if out.ndim == 0 else out


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out[()] if out.ndim == 0 else out


def logistic_loss(theta, label):
    """-x log s(theta) - (1 - x) log(1 - s(theta)) in softplus form."""
    theta = np.asarray(theta, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    return label * softplus(-theta) + (1.0 - label) * softplus(theta)


def _check_rows(factors: DenseFactors, t: Sequence[int]) -> tuple[int, int, int]:
    i, j, k = (int(x) for x in t)
    if not (0 <= i < factors.n_entities and 0 <= j < factors.n_entities and 0 <= k < factors.C.shape[0]):
        raise IndexError(f"triple {tuple(t)} out of range")
    return i, j, k


def example_objective(factors: DenseFactors, t: Sequence[int], label: float, lambdas) -> float:
    """E_ijk for the real-valued model: logistic loss plus the three row penalties."""
    i, j, k = _check_rows(factors, t)
    a, b, c = factors.A[i], factors.B[j], factors.C[k]
    la, lb, lc = lambdas
    theta = float(np.dot(a, b * c))
    return float(logistic_loss(theta, label)) + la * a.dot(a) + lb * b.dot(b) + lc * c.dot(c)


def grad_rows_dense(factors: DenseFactors, t: Sequence[int], label: float, lambdas):
    """Gradients of E_ijk with respect to a_i, b_j and c_k.

    The loss coefficient is written as sigmoid(theta) - label, which equals
    -x exp(-theta) sigmoid(theta) + (1 - x) sigmoid(theta) for x in {0, 1}.
    """
    i, j, k = _check_rows(factors, t)
    a, b, c = (np.asarray(r, dtype=np.float64) for r in (factors.A[i], factors.B[j], factors.C[k]))
    la, lb, lc = lambdas
    g = sigmoid(np.dot(a, b * c)) - label
    return g * b * c + 2 * la * a, g * a * c + 2 * lb * b, g * a * b + 2 * lc * c


def grad_rows_bcp(factors: DenseFactors, t: Sequence[int], label: float, delta: float, lambdas):
    """Straight-through gradients for the binarized model.

    The loss term is evaluated on the quantized rows; the regularizer acts on
    the real rows, which are the ones SGD updates.
    """
    i, j, k = _check_rows(factors, t)
    a, b, c = (np.asarray(r, dtype=np.float64) for r in (factors.A[i], factors.B[j], factors.C[k]))
    qa, qb, qc = quantize(a, delta), quantize(b, delta), quantize(c, delta)
    la, lb, lc = lambdas
    g = sigmoid(np.dot(qa, qb * qc)) - label
    return g * qb * qc + 2 * la * a, g * qa * qc + 2 * lb * b, g * qa * qb + 2 * lc * c


def sample_negatives(t: Sequence[int], n: int, n_entities: int, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """Corrupt the object of ``t`` with ``n`` uniformly drawn entities (no filtering)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    i, _, k = (int(x) for x in t)
    objs = rng.integers(0, n_entities, size=n)
    return [(i, int(o), k) for o in objs]


def init_bound(dim: int) -> float:
    return math.sqrt(6.0) / math.sqrt(2.0 * dim)


def init_factors(n_entities: int, n_relations: int, dim: int, rng: np.random.Generator) -> DenseFactors:
    """Draw A, B (N_e x D) and C (2N_r x D) from U[-sqrt(6)/sqrt(2D), +sqrt(6)/sqrt(2D)]."""
    bound = init_bound(dim)
    A = rng.uniform(-bound, bound, size=(n_entities, dim))
    B = rng.uniform(-bound, bound, size=(n_entities, dim))
    C = rng.uniform(-bound, bound, size=(2 * n_relations, dim))
    return DenseFactors(A, B, C)


@njit(inline="always")
def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(nogil=True)
def _step(A, B, C, i, j, k, label, eta, la, lb, lc, binary, delta, loss_scale):
    dim = A.shape[1]
    theta = 0.0
    reg = 0.0
    for d in range(dim):
        av = A[i, d]
        bv = B[j, d]
        cv = C[k, d]
        reg += la * av * av + lb * bv * bv + lc * cv * cv
        if binary:
            qa = delta if av >= 0 else -delta
            qb = delta if bv >= 0 else -delta
            qc = delta if cv >= 0 else -delta
            theta += qa * qb * qc
        else:
            theta += av * bv * cv
    loss = label * _softplus(-theta) + (1.0 - label) * _softplus(theta)
    g = (_sigmoid(theta) - label) * loss_scale
    for d in range(dim):
        av = A[i, d]
        bv = B[j, d]
        cv = C[k, d]
        if binary:
            qa = delta if av >= 0 else -delta
            qb = delta if bv >= 0 else -delta
            qc = delta if cv >= 0 else -delta
        else:
            qa = av
            qb = bv
            qc = cv
        A[i, d] = av - eta * (g * qb * qc + 2.0 * la * av)
        B[j, d] = bv - eta * (g * qa * qc + 2.0 * lb * bv)
        C[k, d] = cv - eta * (g * qa * qb + 2.0 * lc * cv)
    return loss * loss_scale + reg


@njit(nogil=True)
def _epoch(A, B, C, positives, neg_objects, eta, la, lb, lc, binary, delta):
    total = 0.0
    n_neg = neg_objects.shape[1]
    for p in range(positives.shape[0]):
        i = positives[p, 0]
        j = positives[p, 1]
        k = positives[p, 2]
        total += _step(A, B, C, i, j, k, 1.0, eta, la, lb, lc, binary, delta, 1.0)
        for s in range(n_neg):
            total += _step(A, B, C, i, neg_objects[p, s], k, 0.0, eta, la, lb, lc, binary, delta, 1.0)
    return total


def sgd_step(
    factors: DenseFactors,
    t: Sequence[int],
    label: float,
    hyper: Hyperparams,
    binary: bool,
    loss_scale: float = 1.0,
) -> float:
    """Apply one in-place SGD update for a single example; returns E_ijk before the update.

    ``loss_scale=0`` drops the logistic term and leaves only weight decay.
    """
    i, j, k = _check_rows(factors, t)
    la, lb, lc = hyper.lambdas
    return _step(
        factors.A, factors.B, factors.C, i, j, k, float(label), hyper.eta,
        la, lb, lc, binary, hyper.delta, float(loss_scale),
    )


@dataclass
class TrainConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    mode: str = "b-cp"
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def binary(self) -> bool:
        return self.mode == "b-cp"


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    val_mrr: dict[int, float] = field(default_factory=dict)
    wall_time: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_mrr: float | None = None

    def line(self, idx: int) -> str:
        epoch = self.epochs[idx]
        mrr = self.val_mrr.get(epoch)
        tail = f"\t{mrr:.6f}" if mrr is not None else "\t"
        return f"{epoch}\t{self.losses[idx]:.6f}{tail}"

    def lines(self) -> list[str]:
        return [self.line(n) for n in range(len(self.epochs))]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def train(
    config: TrainConfig,
    graph: KnowledgeGraph,
    on_epoch: Callable[[str], None] | None = None,
) -> tuple[DenseFactors, PackedFactors | None, TrainLog]:
    """Train a model and return the best-validation checkpoint.

    Each epoch shuffles the training triples and, for every positive, takes
    one SGD step on it and one on each freshly drawn negative. Validation
    filtered MRR is computed every ``eval_every`` epochs and after the last
    one; the model with the highest value is returned. Without a validation
    split the final model is returned.

    Raises:
        TrainingDiverged: the epoch loss became non-finite.
    """
    from .evaluate import evaluate, scorer_for

    if not graph.augmented:
        raise ValueError("training expects a graph built with inverse augmentation")
    hyper = config.hyper
    rng = np.random.default_rng(hyper.seed)
    factors = init_factors(graph.n_entities, graph.n_relations, hyper.dim, rng)
    la, lb, lc = hyper.lambdas
    log = TrainLog()
    best = factors.copy()
    best_mrr = None
    start = time.perf_counter()
    positives = graph.train
    has_valid = len(graph.valid) > 0

    for epoch in range(1, hyper.max_epochs + 1):
        order = rng.permutation(len(positives))
        shuffled = np.ascontiguousarray(positives[order])
        negs = rng.integers(0, graph.n_entities, size=(len(positives), hyper.negatives_per_positive))
        loss = _epoch(
            factors.A, factors.B, factors.C, shuffled, negs,
            hyper.eta, la, lb, lc, config.binary, hyper.delta,
        )
        if not math.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite training loss at epoch {epoch}; learning rate {hyper.eta} is likely too high"
            )
        log.epochs.append(epoch)
        log.losses.append(float(loss))
        log.wall_time.append(time.perf_counter() - start)

        if has_valid and (epoch % hyper.eval_every == 0 or epoch == hyper.max_epochs):
            model = binarize_factors(factors, hyper.delta) if config.binary else factors
            report = evaluate(scorer_for(model), graph.valid, graph, threads=config.threads)
            log.val_mrr[epoch] = report.mrr
            if best_mrr is None or report.mrr > best_mrr:
                best_mrr = report.mrr
                best = factors.copy()
                log.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(log.line(len(log.epochs) - 1))

    if not has_valid and hyper.max_epochs > 0:
        best = factors.copy()
        log.best_epoch = hyper.max_epochs
    log.best_mrr = best_mrr
    packed = binarize_factors(best, hyper.delta) if config.binary else None
    return best, packed, log
