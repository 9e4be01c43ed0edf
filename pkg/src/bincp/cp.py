"""CP factor models, the sign quantizer and XNOR/popcount scoring."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import last_word_mask, n_words


@dataclass(frozen=True)
class Hyperparams:
    dim: int = 400
    eta: float = 0.05
    lambda_a: float = 1e-4
    lambda_b: float = 1e-4
    lambda_c: float = 1e-4
    delta: float = 0.5
    negatives_per_positive: int = 5
    max_epochs: int = 1000
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if min(self.lambda_a, self.lambda_b, self.lambda_c) < 0:
            raise ValueError("L2 weights must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.negatives_per_positive < 0:
            raise ValueError("negatives_per_positive must be >= 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_a, self.lambda_b, self.lambda_c)


@dataclass(frozen=True, eq=False)
class DenseFactors:
    """Real factor matrices: A and B are N_e x D, C is 2N_r x D."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A, B, C = self.A, self.B, self.C
        if not (A.ndim == B.ndim == C.ndim == 2):
            raise ValueError("factor matrices must be 2-D")
        if not (A.shape[1] == B.shape[1] == C.shape[1]):
            raise ValueError(f"column counts differ: {A.shape[1]}, {B.shape[1]}, {C.shape[1]}")
        if A.shape[0] != B.shape[0]:
            raise ValueError("A and B must have the same number of rows")
        if C.shape[0] % 2:
            raise ValueError("C must have 2*N_r rows")

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_entities(self) -> int:
        return self.A.shape[0]

    @property
    def n_relations(self) -> int:
        return self.C.shape[0] // 2

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.A).all() and np.isfinite(self.B).all() and np.isfinite(self.C).all())

    def copy(self) -> DenseFactors:
        return DenseFactors(self.A.copy(), self.B.copy(), self.C.copy())

    def astype(self, dtype) -> DenseFactors:
        return DenseFactors(self.A.astype(dtype), self.B.astype(dtype), self.C.astype(dtype))


@dataclass(frozen=True, eq=False)
class PackedFactors:
    """Sign bit-planes of A, B and C with one shared scale.

    Each bit matrix is (rows, ceil(D/64)) uint64. A set bit means +delta.
    ``alphas`` overrides the per-score coefficient with a product of three
    per-matrix scales (used by the VQ baseline); otherwise it is delta**3.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    delta: float
    dim: int
    alphas: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        w = n_words(self.dim)
        for name in "ABC":
            m = getattr(self, name)
            if m.dtype != np.uint64 or m.ndim != 2 or m.shape[1] != w:
                raise ValueError(f"{name} must be a uint64 array with {w} words per row")
        if self.A.shape[0] != self.B.shape[0] or self.C.shape[0] % 2:
            raise ValueError("inconsistent row counts")

    @property
    def n_entities(self) -> int:
        return self.A.shape[0]

    @property
    def n_relations(self) -> int:
        return self.C.shape[0] // 2

    @property
    def words(self) -> int:
        return n_words(self.dim)

    @property
    def mask(self) -> np.uint64:
        return last_word_mask(self.dim)

    @property
    def coef(self) -> float:
        if self.alphas is not None:
            a, b, c = self.alphas
            return a * b * c
        return self.delta * self.delta * self.delta

    def padding_clean(self) -> bool:
        inv = ~self.mask
        return all(not np.any(getattr(self, n)[:, -1] & inv) for n in "ABC")


def _check_ids(n_entities: int, n_relvecs: int, t: Sequence[int]) -> tuple[int, int, int]:
    i, j, k = (int(x) for x in t)
    if not (0 <= i < n_entities and 0 <= j < n_entities and 0 <= k < n_relvecs):
        raise IndexError(f"triple {tuple(t)} out of range (N_e={n_entities}, relation rows={n_relvecs})")
    return i, j, k


def score_dense(factors: DenseFactors, t: Sequence[int]) -> float:
    """CP score sum_d a_id * b_jd * c_kd of one (subject, object, relation) triple.

    The sum is correctly rounded (``math.fsum``), so the result does not depend
    on summation order.
    """
    i, j, k = _check_ids(factors.n_entities, factors.C.shape[0], t)
    a = factors.A[i].astype(np.float64)
    b = factors.B[j].astype(np.float64)
    c = factors.C[k].astype(np.float64)
    return math.fsum((a * b * c).tolist())


def quantize(x, delta: float):
    """+delta where x >= 0, -delta elsewhere. Works on scalars and arrays."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if np.ndim(x) == 0:
        return delta if x >= 0 else -delta
    return np.where(np.asarray(x) >= 0, delta, -delta)


def pack_signs(X: np.ndarray) -> np.ndarray:
    """Pack ``X >= 0`` into rows of little-endian uint64 words, padding zeroed."""
    X = np.asarray(X)
    rows, dim = X.shape
    w = n_words(dim)
    bits = np.zeros((rows, w * 64), dtype=np.uint8)
    bits[:, :dim] = X >= 0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_signs(words: np.ndarray, dim: int) -> np.ndarray:
    """Boolean (rows, dim) matrix of the first ``dim`` bits of each row."""
    as_bytes = np.ascontiguousarray(words.astype("<u8", copy=False)).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, :dim].astype(bool)


def binarize_factors(factors: DenseFactors, delta: float) -> PackedFactors:
    return PackedFactors(
        A=pack_signs(factors.A),
        B=pack_signs(factors.B),
        C=pack_signs(factors.C),
        delta=float(delta),
        dim=factors.dim,
    )


def unpack(packed: PackedFactors) -> DenseFactors:
    """Expand bit-planes back to +-delta real matrices."""
    d = packed.delta

    def expand(words):
        return np.where(unpack_signs(words, packed.dim), d, -d)

    return DenseFactors(expand(packed.A), expand(packed.B), expand(packed.C))


def hamming_kernel(u: np.ndarray, v: np.ndarray, w: np.ndarray, dim: int, kernels=None) -> int:
    """Popcount of XNOR(XNOR(u, v), w) over the first ``dim`` bits."""
    ks = kernels or _kernels.default_kernels()
    if not (u.shape == v.shape == w.shape) or u.shape[0] != n_words(dim):
        raise ValueError("rows must share a word length matching dim")
    return int(ks.bitc(u, v, w, last_word_mask(dim)))


def score_packed(packed: PackedFactors, t: Sequence[int], kernels=None) -> float:
    """Score delta**3 * (2 * BitC - D) from the bit-planes."""
    i, j, k = _check_ids(packed.n_entities, packed.C.shape[0], t)
    bitc = hamming_kernel(packed.A[i], packed.B[j], packed.C[k], packed.dim, kernels)
    return packed.coef * (2 * bitc - packed.dim)


def score_packed_batch(packed: PackedFactors, triples: np.ndarray, kernels=None) -> np.ndarray:
    ks = kernels or _kernels.default_kernels()
    triples = np.ascontiguousarray(triples, dtype=np.int64).reshape(-1, 3)
    bitc = ks.bitc_triples(packed.A, packed.B, packed.C, triples, packed.mask)
    return packed.coef * (2 * bitc - packed.dim).astype(np.float64)


def score_dense_batch(factors: DenseFactors, triples: np.ndarray) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    a = factors.A[triples[:, 0]].astype(np.float64)
    b = factors.B[triples[:, 1]].astype(np.float64)
    c = factors.C[triples[:, 2]].astype(np.float64)
    return np.einsum("nd,nd,nd->n", a, b, c)
