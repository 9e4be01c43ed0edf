import numpy as np
import pytest

from bincp import _kernels
from bincp.bench import bench_scores
from bincp.cp import DenseFactors, binarize_factors


@pytest.fixture(scope="module")
def sweep():
    return bench_scores([8, 64, 128, 512], repetitions=20_000, trials=5, seed=1)


def test_table_shape(sweep):
    lines = sweep.tsv().splitlines()
    assert lines[0] == "D\tfloat_ns\tpacked_ns\tspeedup"
    assert [int(x.split("\t")[0]) for x in lines[1:]] == [8, 64, 128, 512]
    assert sweep.csv().splitlines()[0] == "D,float_ns,packed_ns,speedup"


def test_checksums_stable(sweep):
    assert all(r.checksums_stable for r in sweep.rows)


def test_checksum_matches_model(rng):
    # the packed checksum is the sum of BitC over the query triples
    dim, n = 100, 50
    a, b, c = rng.standard_normal((3, 7, dim))
    triples = np.stack([rng.integers(0, 7, n), rng.integers(0, 7, n), rng.integers(0, 7, n)], axis=1)
    p = binarize_factors(DenseFactors(a, b, c[:6]), 1.0)
    total = _kernels.NATIVE.bench_packed(p.A, p.B, p.C, triples % [7, 7, 6], p.mask)
    expected = sum(_kernels.NATIVE.bitc(p.A[i], p.B[j], p.C[k], p.mask) for i, j, k in triples % [7, 7, 6])
    assert total == expected
    fsum = _kernels.bench_float(a, b, c, triples)
    assert fsum == pytest.approx(sum(float(np.dot(a[i] * b[j], c[k])) for i, j, k in triples), rel=1e-9)


def test_packed_faster_for_wide_rows(sweep):
    for r in sweep.rows:
        if r.dim >= 64:
            assert r.speedup > 1.0, r.tsv()


def test_overhead_small(sweep):
    assert sweep.max_overhead_fraction() < 0.05


def test_rejects_bad_args():
    with pytest.raises(ValueError):
        bench_scores([8], repetitions=0)
