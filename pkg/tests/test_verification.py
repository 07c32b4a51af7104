import numpy as np
import pytest
from hypothesis import given, strategies as st

from probvote.verification import RatioTestVerifier, ratio_test_matches, verify_stub


def mutual_nn_count(Q, C):
    d = ((Q[:, None] - C[None]) ** 2).sum(-1)
    fwd = d.argmin(1)
    back = d.argmin(0)
    return int(np.sum(back[fwd] == np.arange(len(Q))))


def test_self_match_accepted():
    X = np.random.default_rng(0).normal(size=(40, 10))
    res = verify_stub(X, X.copy())
    assert res.accepted and res.inlier_count == 40 and res.method == "ratio-test"


def test_random_sets_rejected():
    # Monte-Carlo over 100 seeds, 20 x 20 descriptors in 10-D; measured mean 2.14, max 6
    counts = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        res = verify_stub(rng.normal(size=(20, 10)), rng.normal(size=(20, 10)))
        assert not res.accepted
        counts.append(res.inlier_count)
    assert np.mean(counts) == pytest.approx(2.14)
    assert max(counts) == 6


def test_ratio_one_keeps_every_mutual_match():
    rng = np.random.default_rng(1)
    Q, C = rng.normal(size=(30, 10)), rng.normal(size=(25, 10))
    assert len(ratio_test_matches(Q, C, 1.0)) == mutual_nn_count(Q, C)


@pytest.mark.parametrize("ratio", [0.0, -0.5, 1.5])
def test_ratio_domain(ratio):
    with pytest.raises(ValueError):
        verify_stub(np.zeros((2, 3)), np.ones((2, 3)), ratio)


def test_empty_inputs():
    assert verify_stub(np.zeros((0, 10)), np.ones((5, 10))).inlier_count == 0
    assert not verify_stub(np.ones((5, 10)), np.zeros((0, 10))).accepted


def test_single_candidate_has_no_second_neighbour():
    assert verify_stub(np.zeros((3, 2)), np.zeros((1, 2)), min_matches=1).inlier_count == 0


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_monotone_in_ratio(seed, r1, r2):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(30, 10))
    Q = base + rng.normal(scale=0.3, size=base.shape)
    lo, hi = sorted((r1, r2))
    a = set(ratio_test_matches(Q, base, lo).tolist())
    b = set(ratio_test_matches(Q, base, hi).tolist())
    assert a <= b


def test_deterministic():
    rng = np.random.default_rng(2)
    Q, C = rng.normal(size=(50, 10)), rng.normal(size=(60, 10))
    v = RatioTestVerifier()
    assert v(0, Q, C) == v(0, Q.copy(), C.copy())


def test_large_sets_chunked():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(3000, 10))
    assert verify_stub(X + 1e-6, X).inlier_count == 3000
