import numpy as np
import pytest

from tarif.errors import DegenerateInputError, NumericalError, ShapeError
from tarif.linalg import (
    from_json_dict,
    load_csv,
    matmul,
    numerical_rank,
    row_normalize,
    save_csv,
    scatter_trace,
    to_json_dict,
)


def triple_loop_matmul(a, b):
    """Scalar reference implementation."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def gaussian_elimination_rank(m, tol=1e-10):
    """Row-echelon pivot count with partial pivoting."""
    a = np.array(m, dtype=float)
    rows, cols = a.shape
    rank = 0
    row = 0
    for col in range(cols):
        if row >= rows:
            break
        pivot = row + np.argmax(np.abs(a[row:, col]))
        if abs(a[pivot, col]) <= tol:
            continue
        a[[row, pivot]] = a[[pivot, row]]
        a[row] = a[row] / a[row, col]
        for r in range(rows):
            if r != row:
                a[r] -= a[r, col] * a[row]
        row += 1
        rank += 1
    return rank


class TestMatmul:
    def test_identity(self):
        a = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(matmul(np.eye(3), a), a)

    def test_hand_checked(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
        assert np.array_equal(out, np.array([[2.0], [4.0]]))

    def test_matches_triple_loop(self):
        rg = np.random.default_rng(3)
        a = rg.standard_normal((5, 3))
        b = rg.standard_normal((3, 7))
        assert np.abs(matmul(a, b) - triple_loop_matmul(a, b)).max() < 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match="2x3.*4x2"):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_associativity(self):
        rg = np.random.default_rng(11)
        for _ in range(10):
            a = rg.standard_normal((6, 4))
            b = rg.standard_normal((4, 5))
            c = rg.standard_normal((5, 3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            scale = max(np.abs(left).max(), 1.0)
            assert np.abs(left - right).max() / scale < 1e-9


class TestNumericalRank:
    def test_identity_full_rank(self):
        assert numerical_rank(np.eye(8)).numerical_rank == 8

    def test_outer_product_rank_one(self):
        rg = np.random.default_rng(5)
        u, v = rg.standard_normal(8) + 0.1, rg.standard_normal(8) + 0.1
        est = numerical_rank(np.outer(u, v))
        assert est.numerical_rank == 1

    def test_kernelized_product_rank_matches_elimination_oracle(self):
        rg = np.random.default_rng(7)
        q = 1.0 / (1.0 + np.exp(-rg.standard_normal((8, 2))))
        k = 1.0 / (1.0 + np.exp(-rg.standard_normal((8, 2))))
        product = q @ k.T
        est = numerical_rank(product)
        assert est.numerical_rank == gaussian_elimination_rank(product) == 2

    def test_rank_bounded_by_min_dim(self):
        rg = np.random.default_rng(13)
        for _ in range(20):
            m = rg.standard_normal((9, 4)) @ rg.standard_normal((4, 9))
            assert numerical_rank(m).numerical_rank <= 4

    def test_spectrum_sorted_descending(self):
        rg = np.random.default_rng(17)
        est = numerical_rank(rg.standard_normal((6, 6)))
        s = est.singular_values
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        assert est.numerical_rank == int((s > est.tolerance).sum())

    def test_empty_and_bad_tol(self):
        with pytest.raises(DegenerateInputError):
            numerical_rank(np.zeros((0, 3)))
        with pytest.raises(DegenerateInputError):
            numerical_rank(np.eye(2), rel_tol=2.0)


class TestRowNormalize:
    def test_hand_checked(self):
        out = row_normalize(np.array([[2.0, 2.0], [1.0, 3.0]]))
        assert np.allclose(out, [[0.5, 0.5], [0.25, 0.75]], atol=1e-15)

    def test_idempotent(self):
        rg = np.random.default_rng(23)
        m = row_normalize(rg.random((6, 6)) + 0.01)
        again = row_normalize(m)
        assert np.abs(again - m).max() < 1e-12
        assert np.abs(m.sum(axis=1) - 1.0).max() < 1e-12

    def test_row_sums_one(self):
        rg = np.random.default_rng(29)
        m = row_normalize(rg.random((6, 6)))
        assert np.abs(m.sum(axis=1) - 1.0).max() < 1e-12

    def test_zero_row_reports_index(self):
        m = np.array([[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(DegenerateInputError, match="row 1"):
            row_normalize(m)


class TestScatterTrace:
    def scatter_oracle(self, features, labels):
        """Term-by-term evaluation of the between-class scatter trace."""
        classes = sorted(set(labels.tolist()))
        mu = features.mean(axis=0)
        total = 0.0
        for c in classes:
            mu_c = features[labels == c].mean(axis=0)
            for j in range(features.shape[1]):
                total += (mu_c[j] - mu[j]) ** 2
        return total / len(classes)

    def test_identical_rows_zero(self):
        features = np.ones((6, 3))
        labels = np.array([0, 0, 1, 1, 2, 2])
        assert scatter_trace(features, labels) == 0.0

    def test_symmetric_two_point(self):
        features = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0], [2.0, 0.0]])
        labels = np.array([0, 0, 1, 1])
        assert scatter_trace(features, labels) == pytest.approx(1.0, abs=1e-12)

    def test_matches_term_by_term_oracle(self):
        rg = np.random.default_rng(31)
        features = rg.standard_normal((20, 3))
        labels = rg.integers(0, 4, size=20)
        labels[:4] = [0, 1, 2, 3]  # every class populated
        assert scatter_trace(features, labels) == pytest.approx(
            self.scatter_oracle(features, labels), abs=1e-10)

    def test_translation_invariance(self):
        rg = np.random.default_rng(37)
        features = rg.standard_normal((15, 4))
        labels = rg.integers(0, 3, size=15)
        labels[:3] = [0, 1, 2]
        shifted = features + rg.standard_normal((1, 4))
        assert scatter_trace(features, labels) == pytest.approx(
            scatter_trace(shifted, labels), abs=1e-10)

    def test_empty_input(self):
        with pytest.raises(DegenerateInputError):
            scatter_trace(np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            scatter_trace(np.zeros((3, 2)), np.zeros(2, dtype=int))


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        rg = np.random.default_rng(41)
        m = rg.standard_normal((4, 3))
        path = tmp_path / "m.csv"
        save_csv(m, path)
        assert np.array_equal(load_csv(path), m)

    def test_json_round_trip(self):
        rg = np.random.default_rng(43)
        m = rg.standard_normal((3, 5))
        d = to_json_dict(m)
        assert d["rows"] == 3 and d["cols"] == 5
        assert np.array_equal(from_json_dict(d), m)

    def test_ragged_csv_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(ShapeError, match=":2"):
            load_csv(path)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            matmul(np.array([[np.inf, 1.0]]), np.ones((2, 1)))
