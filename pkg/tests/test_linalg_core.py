import cmath
import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from schlesinger_lab.errors import SingularMatrix, ZeroBase
from schlesinger_lab.linalg_core import (
    LogBranch,
    MatrixKind,
    NearDefectiveWarning,
    PRINCIPAL,
    classify_product,
    cmatrix,
    commutator,
    eig2,
    expm2,
    from_pair,
    mat_power,
    matrix_from_nested,
    matrix_to_nested,
    norm,
    to_pair,
)

from conftest import random_matrix

finite = st.floats(-3, 3, allow_nan=False)
complexes = st.builds(complex, finite, finite)
matrices = st.lists(complexes, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))

E12 = np.array([[0, 1], [0, 0]], dtype=complex)
E21 = E12.T.copy()


class TestCommutator:
    def test_diagonal_commute(self):
        assert norm(commutator(np.diag([1, 2]), np.diag([3, 4]))) == 0

    def test_elementary(self):
        np.testing.assert_array_equal(commutator(E12, E21), np.diag([1, -1]))

    @given(matrices, matrices)
    def test_entrywise_expansion(self, a, b):
        c = commutator(a, b)
        ref = [[sum(a[i, k] * b[k, j] - b[i, k] * a[k, j] for k in range(2)) for j in range(2)] for i in range(2)]
        assert norm(c - np.array(ref)) <= 1e-12 * max(1, norm(a) * norm(b))

    @given(matrices, matrices)
    def test_antisymmetric_traceless(self, a, b):
        c = commutator(a, b)
        assert norm(c + commutator(b, a)) == 0
        assert abs(np.trace(c)) <= 1e-12 * max(1, norm(a) * norm(b))


class TestEig2:
    def test_diagonal(self):
        es = eig2(np.diag([2, 3]))
        assert es.kind is MatrixKind.DIAGONALIZABLE
        assert sorted(v.real for v in es.eigenvalues) == [2, 3]

    def test_jordan(self):
        es = eig2([[1, 1], [0, 1]])
        assert es.kind is MatrixKind.JORDAN
        assert es.eigenvalues == (1, 1)
        p = es.jordan_basis
        np.testing.assert_allclose(np.linalg.inv(p) @ np.array([[1, 1], [0, 1]]) @ p, [[1, 1], [0, 1]], atol=1e-14)

    def test_scalar(self):
        es = eig2(np.eye(2))
        assert es.kind is MatrixKind.SCALAR
        assert es.eigenvalues == (1, 1)

    def test_near_defective_warns(self):
        with pytest.warns(NearDefectiveWarning):
            es = eig2([[1, 1], [0, 1 + 1e-7]])
        assert es.kind is MatrixKind.DIAGONALIZABLE and es.near_defective

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            eig2(np.eye(2), tol=0)

    @settings(max_examples=200)
    @given(matrices)
    def test_eigenpairs(self, a):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearDefectiveWarning)
            es = eig2(a)
        ref = np.linalg.eigvals(a)
        got = np.array(es.eigenvalues)
        err = min(np.max(np.abs(ref - got)), np.max(np.abs(ref[::-1] - got)))
        assert err <= 1e-6 * max(1, norm(a))
        if es.kind is MatrixKind.DIAGONALIZABLE and es.condition < 1e6:
            v = es.eigenvectors
            assert norm(a @ v - v * np.array(es.eigenvalues)) <= 1e-10 * max(1, norm(a))


class TestMatPower:
    def test_diagonal(self):
        t = 0.3 - 0.7j
        got = mat_power(np.diag([0.4, -1.3 + 0.2j]), t)
        np.testing.assert_allclose(got, np.diag([t ** 0.4, t ** (-1.3 + 0.2j)]), rtol=1e-14)

    def test_jordan_block(self):
        lam, t = 0.25 + 0.5j, 2.5 - 1j
        ref = t ** lam * np.array([[1, cmath.log(t)], [0, 1]])
        np.testing.assert_allclose(mat_power([[lam, 1], [0, lam]], t), ref, rtol=1e-14)

    @given(matrices)
    def test_unit_base(self, a):
        np.testing.assert_allclose(mat_power(a, 1.0), np.eye(2), atol=1e-14)

    def test_zero_base(self):
        with pytest.raises(ZeroBase):
            mat_power(np.eye(2), 0)

    def test_branch_shift(self):
        a = np.diag([0.3, -0.3])
        up = mat_power(a, -1 + 1e-300j, LogBranch(1))
        np.testing.assert_allclose(up, np.diag([cmath.exp(0.3 * 3j * math.pi), cmath.exp(-0.9j * math.pi)]), atol=1e-14)

    def test_branch_reference(self):
        b = LogBranch(0, math.pi)
        assert b.arg(-1j) == pytest.approx(1.5 * math.pi)
        assert PRINCIPAL.arg(-1j) == pytest.approx(-0.5 * math.pi)

    @settings(max_examples=200)
    @given(matrices)
    def test_expm_agrees_with_pade(self, a):
        # scipy's scaling-and-squaring Pade is an independent route
        ref = scipy.linalg.expm(a)
        assert norm(expm2(a) - ref) <= 1e-11 * max(1, norm(ref))

    def test_group_law(self, rng):
        for _ in range(20):
            a = random_matrix(rng)
            s, t = 0.4 + 0.3j, 1.7 - 0.2j
            np.testing.assert_allclose(mat_power(a, s) @ mat_power(a, t), mat_power(a, s * t), rtol=1e-11, atol=1e-12)


class TestClassifyProduct:
    @pytest.mark.parametrize("m, kind", [
        (np.diag([2, 0.5]), MatrixKind.DIAGONALIZABLE),
        ([[1, 1], [0, 1]], MatrixKind.JORDAN),
        (-np.eye(2), MatrixKind.SCALAR),
    ])
    def test_examples(self, m, kind):
        assert classify_product(m) is kind

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            classify_product(np.diag([1, 0]))

    def test_similarity_invariant(self, rng):
        for _ in range(10):
            p = random_matrix(rng)
            m = p @ np.array([[1, 1], [0, 1]]) @ np.linalg.inv(p)
            assert classify_product(m, 1e-6) is MatrixKind.JORDAN


class TestSerialization:
    @given(complexes)
    def test_pair_roundtrip(self, z):
        assert from_pair(to_pair(z)) == z

    @given(matrices)
    def test_matrix_roundtrip(self, a):
        np.testing.assert_array_equal(matrix_from_nested(matrix_to_nested(a)), a)

    def test_bad_pair(self):
        with pytest.raises(ValueError):
            from_pair([1, 2, 3])

    def test_cmatrix_rejects(self):
        with pytest.raises(ValueError):
            cmatrix(np.ones(3))
        with pytest.raises(ValueError):
            cmatrix([[np.nan, 0], [0, 0]])
