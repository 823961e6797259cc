import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targeted_design.errors import (
    FactorizationError,
    ParameterError,
    ShapeError,
    SingularExtensionError,
)
from targeted_design.kernels import (
    JITTER_BASE,
    JITTER_MAX,
    CholeskyFactor,
    Kernel,
    extend_factorization,
    factorize_spd,
    gram_matrix,
    jitter_ladder,
    kernel_cross,
    kernel_diag,
    kernel_eval,
)


class TestKernelEval:
    def test_rbf_same_point_is_one(self):
        x = np.array([0.3, -1.2, 4.0])
        assert kernel_eval(x, x, Kernel.rbf(1.0)) == 1.0
        assert kernel_eval(x, x, Kernel.rbf(0.37)) == 1.0

    def test_rbf_unit_squared_distance(self):
        # ||x - x'||^2 = 2 with omega = 1 gives exp(-1)
        x, x2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert kernel_eval(x, x2, Kernel.rbf(1.0)) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_dot_product_value(self):
        x, x2 = np.array([1.0, 2.0]), np.array([1.0, 0.0])
        assert kernel_eval(x, x2, Kernel.dot_product(1.0)) == 2.0

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            kernel_eval(np.zeros(2), np.zeros(3), Kernel.rbf())

    def test_exact_symmetry_random_pairs(self):
        rng = np.random.default_rng(5)
        kernels = [Kernel.rbf(0.7), Kernel.dot_product(0.3)]
        for _ in range(1000):
            d = int(rng.integers(1, 6))
            x, x2 = rng.standard_normal(d), rng.standard_normal(d)
            for k in kernels:
                assert kernel_eval(x, x2, k) == kernel_eval(x2, x, k)


@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=5),
    st.lists(st.floats(-50, 50), min_size=1, max_size=5),
    st.sampled_from(["rbf", "dot-product"]),
)
def test_symmetry_property(a, b, variant):
    d = min(len(a), len(b))
    x, x2 = np.array(a[:d]), np.array(b[:d])
    k = Kernel(variant, 1.3)
    assert kernel_eval(x, x2, k) == kernel_eval(x2, x, k)


class TestKernelValidation:
    def test_rbf_requires_positive_omega(self):
        with pytest.raises(ParameterError):
            Kernel.rbf(0.0)
        with pytest.raises(ParameterError):
            Kernel.rbf(-1.0)

    def test_dot_product_allows_any_finite_omega(self):
        Kernel.dot_product(0.0)
        Kernel.dot_product(-2.0)

    def test_unknown_variant(self):
        with pytest.raises(ParameterError):
            Kernel("matern", 1.0)


class TestGram:
    @pytest.mark.parametrize("kernel", [Kernel.rbf(0.9), Kernel.dot_product(0.4)])
    def test_entries_match_pairwise_eval(self, kernel):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((12, 4))
        G = gram_matrix(X, kernel)
        for i in range(12):
            for j in range(12):
                assert G[i, j] == pytest.approx(kernel_eval(X[i], X[j], kernel), rel=1e-12)

    @pytest.mark.parametrize("kernel", [Kernel.rbf(1.0), Kernel.dot_product(1.0)])
    def test_exactly_symmetric(self, kernel):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((40, 6))
        G = gram_matrix(X, kernel)
        assert np.array_equal(G, G.T)

    @pytest.mark.parametrize("kernel", [Kernel.rbf(1.0), Kernel.dot_product(1.0)])
    def test_positive_semidefinite(self, kernel):
        # eigendecomposition is the independent PSD oracle
        rng = np.random.default_rng(9)
        X = rng.standard_normal((30, 5))
        eigs = np.linalg.eigvalsh(gram_matrix(X, kernel))
        assert eigs.min() >= -1e-8 * max(1.0, eigs.max())

    def test_diag_matches_gram_diagonal(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((9, 3))
        for kernel in (Kernel.rbf(0.6), Kernel.dot_product(-0.2)):
            np.testing.assert_allclose(
                kernel_diag(X, kernel), np.diag(gram_matrix(X, kernel)), rtol=1e-14
            )

    def test_cross_shape_and_values(self):
        rng = np.random.default_rng(11)
        X, X2 = rng.standard_normal((5, 3)), rng.standard_normal((7, 3))
        C = kernel_cross(X, X2, Kernel.rbf(1.0))
        assert C.shape == (5, 7)
        assert C[2, 4] == pytest.approx(kernel_eval(X[2], X2[4], Kernel.rbf(1.0)), rel=1e-14)


class TestFactorizeSpd:
    def test_identity(self):
        F = factorize_spd(np.eye(3))
        assert np.array_equal(F.lower, np.eye(3))
        assert F.jitter == 0.0

    def test_diagonal(self):
        F = factorize_spd(np.diag([4.0, 4.0]))
        assert np.array_equal(F.lower, np.diag([2.0, 2.0]))
        assert F.jitter == 0.0

    def test_rank_one_needs_first_jitter_rung(self):
        F = factorize_spd(np.ones((3, 3)))
        assert F.jitter == JITTER_BASE
        target = np.ones((3, 3)) + F.jitter * np.eye(3)
        np.testing.assert_allclose(F.lower @ F.lower.T, target, atol=1e-12)

    def test_round_trip_within_1e10(self):
        rng = np.random.default_rng(21)
        A = rng.standard_normal((15, 15))
        K = A @ A.T + 15 * np.eye(15)
        F = factorize_spd(K)
        assert F.jitter == 0.0
        err = np.abs(F.lower @ F.lower.T - K).max()
        assert err <= 1e-10 * np.abs(K).max()

    def test_indefinite_exhausts_ladder(self):
        with pytest.raises(FactorizationError) as exc:
            factorize_spd(np.diag([1.0, -1.0]))
        assert "0.0001" in str(exc.value)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            factorize_spd(np.zeros((2, 3)))

    def test_ladder_shape(self):
        ladder = jitter_ladder()
        assert ladder[0] == 0.0
        assert ladder[1] == JITTER_BASE
        assert ladder[-1] <= JITTER_MAX
        ratios = [b / a for a, b in zip(ladder[1:], ladder[2:])]
        assert all(r == pytest.approx(10.0) for r in ratios)


class TestExtendFactorization:
    def test_leading_block_is_bitwise_identical(self):
        rng = np.random.default_rng(31)
        X = rng.standard_normal((6, 2))
        K = gram_matrix(X, Kernel.rbf(1.0)) + np.eye(6)
        F = factorize_spd(K)
        x_new = rng.standard_normal(2)
        c = kernel_cross(X, x_new, Kernel.rbf(1.0)).ravel()
        F2 = extend_factorization(F, c, 2.0)
        assert F2.n == 7
        assert np.array_equal(F2.lower[:6, :6], F.lower)
        assert F2.jitter == F.jitter

    def test_chained_extensions_match_one_shot(self):
        # 50 appends from a 1x1 factor vs a single factorization of the
        # full matrix; entries agree to 1e-8 relative.
        rng = np.random.default_rng(8)
        kernel = Kernel.rbf(1.0)
        X = rng.standard_normal((50, 3))
        K = gram_matrix(X, kernel) + np.eye(50)
        F = factorize_spd(K[:1, :1])
        for n in range(1, 50):
            F = extend_factorization(F, K[:n, n], K[n, n])
        full = factorize_spd(K)
        assert full.jitter == 0.0 == F.jitter
        scale = np.abs(full.lower).max()
        assert np.abs(F.lower - full.lower).max() <= 1e-8 * scale
        np.testing.assert_allclose(F.lower @ F.lower.T, K, atol=1e-10 * np.abs(K).max())

    def test_extension_from_empty(self):
        F = extend_factorization(CholeskyFactor.empty(), np.zeros(0), 4.0)
        assert F.n == 1
        assert F.lower[0, 0] == 2.0

    def test_singular_extension_raises(self):
        # bordered matrix [[I2, c], [c^T, 1]] with c = e1 has zero Schur
        # complement
        F = factorize_spd(np.eye(2))
        with pytest.raises(SingularExtensionError):
            extend_factorization(F, np.array([1.0, 0.0]), 1.0)

    def test_wrong_column_length(self):
        F = factorize_spd(np.eye(2))
        with pytest.raises(ShapeError):
            extend_factorization(F, np.zeros(3), 1.0)

    def test_jitter_carried_into_new_diagonal(self):
        # factor of ones(2) lives at jitter 1e-10; the extension must add the
        # same jitter to the new diagonal entry so the represented matrix
        # stays (M + jI)
        M = np.ones((2, 2))
        F = factorize_spd(M)
        assert F.jitter > 0.0
        F3 = extend_factorization(F, np.ones(2), 1.0)
        target = np.ones((3, 3)) + F.jitter * np.eye(3)
        np.testing.assert_allclose(F3.lower @ F3.lower.T, target, atol=1e-12)


@settings(deadline=None, max_examples=40)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_gram_factor_round_trip_property(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3))
    for kernel in (Kernel.rbf(1.0), Kernel.dot_product(1.0)):
        K = gram_matrix(X, kernel) + np.eye(n)  # noise diagonal keeps it SPD
        F = factorize_spd(K)
        recon = F.lower @ F.lower.T - F.jitter * np.eye(n)
        assert np.abs(recon - K).max() <= 1e-10 * max(1.0, np.abs(K).max())
