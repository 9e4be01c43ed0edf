"""Filtered link-prediction metrics, ensembles and triple classification."""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cp import DenseFactors, PackedFactors
from .kg import KnowledgeGraph

DIRECTIONS = ("object", "subject")


class DenseScorer:
    def __init__(self, factors: DenseFactors):
        self.factors = factors
        self._A = np.asarray(factors.A, dtype=np.float64)
        self._B = np.asarray(factors.B, dtype=np.float64)
        self._C = np.asarray(factors.C, dtype=np.float64)

    @property
    def n_entities(self) -> int:
        return self.factors.n_entities

    @property
    def n_relations(self) -> int:
        return self.factors.n_relations

    def object_scores(self, subjects: np.ndarray, relations: np.ndarray) -> np.ndarray:
        return (self._A[subjects] * self._C[relations]) @ self._B.T

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return np.einsum("nd,nd,nd->n", self._A[t[:, 0]], self._B[t[:, 1]], self._C[t[:, 2]])


class PackedScorer:
    def __init__(self, packed: PackedFactors, kernels=None):
        self.packed = packed
        self.kernels = kernels or _kernels.default_kernels()

    @property
    def n_entities(self) -> int:
        return self.packed.n_entities

    @property
    def n_relations(self) -> int:
        return self.packed.n_relations

    def object_counts(self, subjects: np.ndarray, relations: np.ndarray) -> np.ndarray:
        p = self.packed
        out = np.empty((len(subjects), p.n_entities), dtype=np.int64)
        self.kernels.bitc_all_objects(
            p.A, p.B, p.C,
            np.ascontiguousarray(subjects, dtype=np.int64),
            np.ascontiguousarray(relations, dtype=np.int64),
            p.mask, out,
        )
        return out

    def object_scores(self, subjects: np.ndarray, relations: np.ndarray) -> np.ndarray:
        counts = self.object_counts(subjects, relations)
        return self.packed.coef * (2 * counts - self.packed.dim).astype(np.float64)

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        from .cp import score_packed_batch

        return score_packed_batch(self.packed, triples, self.kernels)


class EnsembleScorer:
    """Sums the scores of its members."""

    def __init__(self, members: Sequence):
        if not members:
            raise ValueError("an ensemble needs at least one model")
        shapes = {(m.n_entities, m.n_relations) for m in members}
        if len(shapes) != 1:
            raise ValueError(f"ensemble members disagree on vocabulary sizes: {sorted(shapes)}")
        self.members = list(members)

    @property
    def n_entities(self) -> int:
        return self.members[0].n_entities

    @property
    def n_relations(self) -> int:
        return self.members[0].n_relations

    def object_scores(self, subjects: np.ndarray, relations: np.ndarray) -> np.ndarray:
        total = self.members[0].object_scores(subjects, relations)
        for m in self.members[1:]:
            total = total + m.object_scores(subjects, relations)
        return total

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        return sum(m.score_triples(triples) for m in self.members)


def scorer_for(model):
    if isinstance(model, (DenseScorer, PackedScorer, EnsembleScorer)):
        return model
    if isinstance(model, PackedFactors):
        return PackedScorer(model)
    if isinstance(model, DenseFactors):
        return DenseScorer(model)
    if isinstance(model, (list, tuple)):
        return EnsembleScorer([scorer_for(m) for m in model])
    raise TypeError(f"cannot score with {type(model).__name__}")


@dataclass
class EvalReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    ranks: np.ndarray
    queries: int

    @classmethod
    def from_ranks(cls, ranks) -> EvalReport:
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size == 0:
            raise ValueError("no queries to evaluate")
        return cls(
            mrr=float(np.mean(1.0 / ranks)),
            hits1=100.0 * float(np.mean(ranks <= 1)),
            hits3=100.0 * float(np.mean(ranks <= 3)),
            hits10=100.0 * float(np.mean(ranks <= 10)),
            ranks=ranks,
            queries=int(ranks.size),
        )

    def as_dict(self) -> dict:
        return {"mrr": self.mrr, "hits1": self.hits1, "hits3": self.hits3, "hits10": self.hits10, "queries": self.queries}

    def to_text(self) -> str:
        return "\n".join(f"{k}\t{v:.6f}" if isinstance(v, float) else f"{k}\t{v}" for k, v in self.as_dict().items())

    def to_table(self) -> str:
        return (
            f"{'MRR':>8} {'Hits@1':>8} {'Hits@3':>8} {'Hits@10':>8} {'queries':>8}\n"
            f"{self.mrr:8.4f} {self.hits1:8.2f} {self.hits3:8.2f} {self.hits10:8.2f} {self.queries:8d}"
        )


def _queries(triples: np.ndarray, graph: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # object side (i, ?, k) then subject side as (j, ?, inverse k), interleaved per triple
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    nr = graph.n_relations
    inv = np.where(t[:, 2] < nr, t[:, 2] + nr, t[:, 2] - nr)
    subj = np.stack([t[:, 0], t[:, 1]], axis=1).ravel()
    rel = np.stack([t[:, 2], inv], axis=1).ravel()
    target = np.stack([t[:, 1], t[:, 0]], axis=1).ravel()
    return subj, rel, target


def _fractional_ranks(scores, subjects, relations, targets, graph) -> np.ndarray:
    ranks = np.empty(len(targets), dtype=np.float64)
    for r in range(len(targets)):
        row = scores[r]
        y = targets[r]
        s = row[y]
        greater = row > s
        equal = row == s
        known = graph.known_objects(subjects[r], relations[r])
        greater[known] = False
        equal[known] = False
        equal[y] = False
        ranks[r] = 1.0 + np.count_nonzero(greater) + 0.5 * np.count_nonzero(equal)
    return ranks


def rank_triple(scorer, t: Sequence[int], graph: KnowledgeGraph, direction: str = "object") -> float:
    """Filtered fractional rank of the true entity of ``t`` in one direction.

    The subject-side query for (i, j, k) is the object-side query (j, ?, k^-1).
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    scorer = scorer_for(scorer)
    graph.check_triple(t)
    i, j, k = (int(x) for x in t)
    if direction == "object":
        s, r, y = i, k, j
    else:
        s, r, y = j, graph.inverse_relation(k), i
    subj = np.array([s])
    rel = np.array([r])
    scores = scorer.object_scores(subj, rel)
    return float(_fractional_ranks(scores, subj, rel, np.array([y]), graph)[0])


def evaluate(scorer, triples, graph: KnowledgeGraph, threads: int = 1, batch_size: int = 256) -> EvalReport:
    """Filtered MRR and Hits@{1,3,10} over both query directions of every triple.

    Raises:
        ValueError: ``triples`` is empty.
    """
    scorer = scorer_for(scorer)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise ValueError("cannot evaluate an empty triple set")
    if scorer.n_entities != graph.n_entities or scorer.n_relations != graph.n_relations:
        raise ValueError(
            f"model shape (N_e={scorer.n_entities}, N_r={scorer.n_relations}) does not match "
            f"graph (N_e={graph.n_entities}, N_r={graph.n_relations})"
        )
    subj, rel, target = _queries(triples, graph)
    bounds = [(lo, min(lo + batch_size, len(target))) for lo in range(0, len(target), batch_size)]

    def run(bound):
        lo, hi = bound
        scores = scorer.object_scores(subj[lo:hi], rel[lo:hi])
        return _fractional_ranks(scores, subj[lo:hi], rel[lo:hi], target[lo:hi], graph)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return EvalReport.from_ranks(np.concatenate(parts))


def evaluate_ensemble(models: Sequence, triples, graph: KnowledgeGraph, threads: int = 1) -> EvalReport:
    return evaluate(EnsembleScorer([scorer_for(m) for m in models]), triples, graph, threads=threads)


def best_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximizing accuracy of ``score >= threshold``; returns (threshold, accuracy).

    Candidates are the midpoints between consecutive distinct scores plus one
    value below the minimum and one above the maximum. Ties go to the lowest
    threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if labels.all() or not labels.any():
        raise ValueError("threshold tuning needs both positive and negative examples")
    uniq, inverse = np.unique(scores, return_inverse=True)
    pos_at = np.bincount(inverse, weights=labels, minlength=len(uniq))
    neg_at = np.bincount(inverse, weights=~labels, minlength=len(uniq))
    # candidate m puts uniq[:m] below the threshold
    neg_below = np.concatenate([[0.0], np.cumsum(neg_at)])
    pos_below = np.concatenate([[0.0], np.cumsum(pos_at)])
    correct = neg_below + (labels.sum() - pos_below)
    m = int(np.argmax(correct))
    if m == 0:
        thr = uniq[0] - 1.0
    elif m == len(uniq):
        thr = uniq[-1] + 1.0
    else:
        thr = 0.5 * (uniq[m - 1] + uniq[m])
    return float(thr), float(correct[m] / len(scores))


def tune_threshold(scorer, triples, labels) -> float:
    scorer = scorer_for(scorer)
    return best_threshold(scorer.score_triples(np.asarray(triples)), labels)[0]


def classify(scorer, triples, labels, threshold: float) -> float:
    """Accuracy (percent) of predicting positive iff score >= threshold."""
    scorer = scorer_for(scorer)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    labels = np.asarray(labels).astype(bool)
    if len(triples) == 0:
        raise ValueError("cannot classify an empty triple set")
    pred = scorer.score_triples(triples) >= threshold
    return 100.0 * float(np.mean(pred == labels))
