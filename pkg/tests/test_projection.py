import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from probvote.projection import fit_projection, pack_bits, project, unpack_bits


def bits(rng, n, d=64):
    return (rng.random((n, d)) < rng.random(d)).astype(np.uint8)


class TestFit:
    def test_rank_two_data_preserved(self):
        rng = np.random.default_rng(0)
        X = np.zeros((200, 5))
        X[:, :2] = rng.normal(size=(200, 2))
        m = fit_projection(X, 2)
        Y = project(m, X)
        recon = Y @ m.basis.T + m.mean
        assert np.max(np.abs(recon - X)) <= 1e-9

    def test_isotropic_variance_fraction(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20000, 5))
        m = fit_projection(X, 2)
        # independent oracle: singular values of the centred sample
        s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
        ref = s**2 / (len(X) - 1)
        assert np.allclose(m.explained_variance, ref[:2], rtol=1e-9)
        assert abs(ref[:2].sum() / ref.sum() - 0.4) < 0.02

    def test_full_dimension_is_isometry(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 6))
        m = fit_projection(X, 6)
        Y = project(m, X)
        dx = np.linalg.norm(X[:, None] - X[None], axis=-1)
        dy = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
        assert np.max(np.abs(dx - dy)) <= 1e-9

    def test_orthonormal_and_sorted(self):
        m = fit_projection(bits(np.random.default_rng(3), 2000, 96), 10)
        assert np.max(np.abs(m.basis.T @ m.basis - np.eye(10))) <= 1e-9
        assert np.all(np.diff(m.explained_variance) <= 0)

    def test_sign_convention(self):
        m = fit_projection(bits(np.random.default_rng(4), 500), 10)
        piv = np.argmax(np.abs(m.basis), axis=0)
        assert np.all(m.basis[piv, np.arange(10)] > 0)

    def test_deterministic(self):
        X = bits(np.random.default_rng(5), 800)
        a, b = fit_projection(X, 10), fit_projection(X.copy(), 10)
        assert np.array_equal(a.basis, b.basis) and np.array_equal(a.mean, b.mean)

    def test_rank_deficient(self):
        X = np.zeros((100, 8))
        X[:, 0] = np.arange(100)
        with pytest.raises(ValueError, match="rank"):
            fit_projection(X, 2)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_projection(np.eye(4), 4)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            fit_projection(np.eye(20, 4), 5)

    def test_whitening_unit_variance(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(5000, 6)) * np.arange(1, 7)
        Y = project(fit_projection(X, 3, whiten=True), X)
        assert np.allclose(np.var(Y, axis=0, ddof=1), 1.0, atol=1e-9)


class TestProject:
    def test_mean_maps_to_zero(self):
        m = fit_projection(bits(np.random.default_rng(7), 300), 10)
        assert np.allclose(project(m, m.mean), 0.0, atol=1e-12)

    def test_training_covariance_diagonal(self):
        X = bits(np.random.default_rng(8), 3000, 48)
        m = fit_projection(X, 10)
        C = np.cov(project(m, X), rowvar=False)
        assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 1e-6
        assert np.all(np.diff(np.diag(C)) <= 1e-6)

    def test_identical_inputs_identical_outputs(self):
        rng = np.random.default_rng(9)
        X = bits(rng, 300)
        m = fit_projection(X, 10)
        a = project(m, X[5])
        b = project(m, X[5].copy())
        assert a.tobytes() == b.tobytes()

    def test_dimension_mismatch(self):
        m = fit_projection(bits(np.random.default_rng(10), 300), 10)
        with pytest.raises(ValueError):
            project(m, np.zeros(63))

    @given(arrays(np.uint8, (2, 64), elements=st.integers(0, 1)))
    def test_never_expands_distances(self, pair):
        m = fit_projection(bits(np.random.default_rng(11), 400), 10)
        a, b = pair.astype(float)
        assert np.linalg.norm(project(m, a) - project(m, b)) <= np.linalg.norm(a - b) + 1e-9


@given(arrays(np.uint8, (5, 24), elements=st.integers(0, 1)))
def test_pack_roundtrip(b):
    assert np.array_equal(unpack_bits(pack_bits(b), 24), b)
