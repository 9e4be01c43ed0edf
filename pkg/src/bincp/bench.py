"""Single-thread throughput of float CP scoring against XNOR/popcount scoring."""

from __future__ import annotations

import contextlib
import os
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cp import pack_signs


@dataclass
class BenchRow:
    dim: int
    float_ns: float
    packed_ns: float
    float_checksum: float
    packed_checksum: int
    checksums_stable: bool = True

    @property
    def speedup(self) -> float:
        return self.float_ns / self.packed_ns

    def tsv(self) -> str:
        return f"{self.dim}\t{self.float_ns:.3f}\t{self.packed_ns:.3f}\t{self.speedup:.3f}"


@dataclass
class BenchResult:
    rows: list[BenchRow]
    repetitions: int
    trials: int
    overhead_ns: float
    kernels: str

    def tsv(self) -> str:
        return "\n".join(["D\tfloat_ns\tpacked_ns\tspeedup"] + [r.tsv() for r in self.rows])

    def csv(self) -> str:
        lines = ["D,float_ns,packed_ns,speedup"]
        lines += [f"{r.dim},{r.float_ns:.3f},{r.packed_ns:.3f},{r.speedup:.3f}" for r in self.rows]
        return "\n".join(lines)

    def max_overhead_fraction(self) -> float:
        """Call overhead as a fraction of the fastest measured trial."""
        fastest = min(min(r.float_ns, r.packed_ns) for r in self.rows) * self.repetitions
        return self.overhead_ns / fastest


@contextlib.contextmanager
def pinned_to_one_cpu():
    """Pin the process to a single CPU while the block runs, where supported."""
    if not hasattr(os, "sched_getaffinity"):
        yield
        return
    before = os.sched_getaffinity(0)
    try:
        os.sched_setaffinity(0, {min(before)})
    except OSError:
        yield
        return
    try:
        yield
    finally:
        os.sched_setaffinity(0, before)


def _median_ns(fn, trials: int) -> tuple[float, list]:
    fn()  # warmup, not counted
    times = []
    results = []
    for _ in range(trials):
        t0 = time.perf_counter_ns()
        results.append(fn())
        times.append(time.perf_counter_ns() - t0)
    return statistics.median(times), results


def measure_overhead(trials: int = 101) -> float:
    """Median wall time of a timed kernel call that does no work."""
    empty = np.zeros((0, 3), dtype=np.int64)
    ns, _ = _median_ns(lambda: _kernels.bench_empty(empty), trials)
    return ns


def bench_scores(
    dims,
    repetitions: int = 100_000,
    trials: int = 5,
    seed: int = 0,
    n_entities: int = 1000,
    n_relations: int = 10,
    kernels=None,
    pin: bool = True,
) -> BenchResult:
    """Time ``repetitions`` score computations per dimension, median of ``trials``.

    Models and query triples are drawn up front from ``seed``. Each kernel
    accumulates the scores it computes and returns the sum, so the work cannot
    be optimized away; the sums double as determinism checksums.
    """
    if trials < 1 or repetitions < 1:
        raise ValueError("trials and repetitions must be positive")
    ks = kernels or _kernels.default_kernels()
    rows = []
    ctx = pinned_to_one_cpu() if pin else contextlib.nullcontext()
    with ctx:
        overhead = measure_overhead()
        for dim in dims:
            rng = np.random.default_rng([seed, dim])
            a = rng.standard_normal((n_entities, dim))
            b = rng.standard_normal((n_entities, dim))
            c = rng.standard_normal((2 * n_relations, dim))
            triples = np.stack(
                [
                    rng.integers(0, n_entities, repetitions),
                    rng.integers(0, n_entities, repetitions),
                    rng.integers(0, 2 * n_relations, repetitions),
                ],
                axis=1,
            )
            pa, pb, pc = pack_signs(a), pack_signs(b), pack_signs(c)
            mask = _kernels.last_word_mask(dim)
            f_ns, f_sums = _median_ns(lambda: _kernels.bench_float(a, b, c, triples), trials)
            p_ns, p_sums = _median_ns(lambda: ks.bench_packed(pa, pb, pc, triples, mask), trials)
            stable = len(set(f_sums)) == 1 and len(set(p_sums)) == 1
            rows.append(
                BenchRow(dim, f_ns / repetitions, p_ns / repetitions, float(f_sums[0]), int(p_sums[0]), stable)
            )
    return BenchResult(rows, repetitions, trials, overhead, ks.name)
