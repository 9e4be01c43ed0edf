import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bincp.cp import DenseFactors, score_packed, unpack_signs
from bincp.vq import DegenerateMatrix, vq_error, vq_factors, vq_quantize


def signs_of(words, shape):
    return np.where(unpack_signs(words, shape[1]), 1.0, -1.0)


def test_worked_example():
    X = np.array([[1.0, -3.0], [2.0, -2.0]])
    words, alpha = vq_quantize(X)
    assert alpha == 2.0
    S = signs_of(words, X.shape)
    np.testing.assert_array_equal(S, [[1, -1], [1, -1]])
    best = vq_error(X, S, alpha)
    assert best == 2.0
    # brute force: every sign pattern and a fine alpha grid
    for pattern in itertools.product([-1.0, 1.0], repeat=4):
        P = np.array(pattern).reshape(2, 2)
        for a in np.linspace(0.0, 4.0, 401):
            assert vq_error(X, P, a) >= best - 1e-12


def test_exactly_representable():
    S = np.array([[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]])
    X = 0.75 * S
    words, alpha = vq_quantize(X)
    assert alpha == 0.75
    assert vq_error(X, signs_of(words, X.shape), alpha) == 0.0


def test_zero_entries_map_to_plus():
    words, alpha = vq_quantize(np.array([[0.0, -2.0]]))
    assert alpha == 1.0
    np.testing.assert_array_equal(signs_of(words, (1, 2)), [[1.0, -1.0]])


def test_degenerate():
    with pytest.raises(DegenerateMatrix):
        vq_quantize(np.zeros((3, 4)))


@settings(max_examples=60, deadline=None)
@given(
    X=arrays(np.float64, (3, 5), elements=st.floats(-10, 10)).filter(lambda a: np.abs(a).sum() > 1e-3),
    c=st.sampled_from([0.25, 0.5, 2.0, 4.0]),
)
def test_homogeneous(X, c):
    w1, a1 = vq_quantize(X)
    w2, a2 = vq_quantize(c * X)
    np.testing.assert_array_equal(w1, w2)
    assert a2 == pytest.approx(c * a1, rel=1e-12)


def test_vq_factors_scores(rng):
    f = DenseFactors(rng.normal(size=(4, 70)), rng.normal(size=(4, 70)), 3 * rng.normal(size=(2, 70)))
    p = vq_factors(f)
    aa, ab, ac = (vq_quantize(m)[1] for m in (f.A, f.B, f.C))
    assert p.alphas == (aa, ab, ac)
    sa, sb, sc = (signs_of(vq_quantize(m)[0], m.shape) for m in (f.A, f.B, f.C))
    for t in [(0, 1, 0), (3, 2, 1)]:
        expected = aa * ab * ac * float(np.sum(sa[t[0]] * sb[t[1]] * sc[t[2]]))
        assert score_packed(p, t) == pytest.approx(expected, rel=1e-12)
