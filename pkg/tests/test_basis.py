import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import BSpline

from fplsda.basis import (
    CurveDataset,
    build_basis,
    design_matrix,
    difference_penalty,
    factor_metric,
    fit_regression_splines,
    read_curve_csv,
    write_curve_csv,
)
from fplsda.errors import FitError, NumericalError, ParameterError, RangeError, StructuralError
from fplsda.sim import SimConfig, generate


def _dataset(t, curves_by_key):
    subjects = tuple(dict.fromkeys(s for s, _ in curves_by_key))
    conds = tuple(dict.fromkeys(c for _, c in curves_by_key))
    return CurveDataset(subjects, conds, {k: (np.asarray(t, float), np.asarray(v, float)) for k, v in curves_by_key.items()})


class TestBuildBasis:
    def test_hat_function_gram(self):
        b = build_basis(degree=1, interior_knots=0, domain=(0, 1), penalty_order=1)
        assert b.p == 2
        np.testing.assert_allclose(b.gram, [[1 / 3, 1 / 6], [1 / 6, 1 / 3]], atol=1e-15)

    def test_second_difference_penalty_p4(self):
        expected = [[1, -2, 1, 0], [-2, 5, -4, 1], [1, -4, 5, -2], [0, 1, -2, 1]]
        np.testing.assert_array_equal(difference_penalty(4, 2), expected)

    def test_cubic_dimension(self):
        b = build_basis(3, 15)
        assert b.p == 19
        assert b.gram.shape == b.penalty.shape == (19, 19)

    def test_gram_matches_adaptive_quadrature(self):
        # independent route: scipy.integrate.quad on products of single basis elements
        b = build_basis(3, 5, (0.0, 2.0))
        k = b.degree
        elems = [BSpline.basis_element(b.knots[j : j + k + 2], extrapolate=False) for j in range(b.p)]

        def prod(i, j):
            lo = max(b.knots[i], b.knots[j])
            hi = min(b.knots[i + k + 1], b.knots[j + k + 1])
            if hi <= lo:
                return 0.0
            pts = [x for x in np.unique(b.knots) if lo < x < hi]
            f = lambda x: np.nan_to_num(elems[i](x)) * np.nan_to_num(elems[j](x))  # noqa: E731
            return integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-13)[0]

        for i, j in [(0, 0), (0, 1), (2, 4), (4, 4), (5, 8), (8, 8), (1, 6)]:
            assert b.gram[i, j] == pytest.approx(prod(i, j), abs=1e-13)

    def test_gram_is_spd(self):
        b = build_basis(3, 15)
        np.testing.assert_array_equal(b.gram, b.gram.T)
        assert np.linalg.eigvalsh(b.gram).min() > 0

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_penalty_rank_and_null_space(self, d):
        b = build_basis(3, 10, penalty_order=d)
        assert np.linalg.matrix_rank(b.penalty) == b.p - d
        np.testing.assert_allclose(b.penalty @ np.ones(b.p), 0, atol=1e-12)
        if d >= 2:
            np.testing.assert_allclose(b.penalty @ np.arange(1, b.p + 1), 0, atol=1e-10)
        assert np.linalg.eigvalsh(b.penalty).min() > -1e-10

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(degree=0),
            dict(interior_knots=-1),
            dict(domain=(1.0, 1.0)),
            dict(domain=(2.0, 1.0)),
            dict(penalty_order=0),
            dict(degree=1, interior_knots=0, penalty_order=2),
        ],
    )
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ParameterError):
            build_basis(**kwargs)


class TestDesignMatrix:
    def test_hat_midpoint(self):
        b = build_basis(1, 0, (0, 1), 1)
        np.testing.assert_allclose(design_matrix(b, [0.5]), [[0.5, 0.5]])

    def test_left_boundary_interpolates(self):
        b = build_basis(3, 7, (-1.0, 3.0))
        row = design_matrix(b, [-1.0])[0]
        expected = np.zeros(b.p)
        expected[0] = 1
        np.testing.assert_array_equal(row, expected)

    def test_partition_of_unity_random_points(self):
        rng = np.random.default_rng(5)
        b = build_basis(3, 15, (0.0, 100.0))
        t = np.concatenate([rng.uniform(0, 100, 100), [0.0, 100.0]])
        B = design_matrix(b, t)
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)
        assert ((B != 0).sum(axis=1) <= b.degree + 1).all()

    def test_outside_domain(self):
        b = build_basis(3, 4)
        with pytest.raises(RangeError):
            design_matrix(b, [0.5, 1.0000001])


class TestRegressionSplines:
    def test_recovers_in_span_coefficients(self):
        rng = np.random.default_rng(0)
        b = build_basis(3, 8)
        a = rng.normal(size=b.p)
        t = np.sort(rng.uniform(0, 1, 40))
        data = _dataset(t, {("s1", "x"): design_matrix(b, t) @ a, ("s1", "y"): design_matrix(b, t) @ (2 * a)})
        coefs = fit_regression_splines(b, data)
        np.testing.assert_allclose(coefs.A[0], a, atol=1e-10)
        np.testing.assert_allclose(coefs.A[1], 2 * a, atol=1e-10)

    def test_constant_curve(self):
        b = build_basis(3, 6)
        t = np.linspace(0, 1, 30)
        coefs = fit_regression_splines(b, _dataset(t, {("s", "a"): np.full(30, 2.5), ("s", "b"): np.full(30, -1.0)}))
        np.testing.assert_allclose(coefs.A[0], 2.5, atol=1e-12)
        np.testing.assert_allclose(coefs.A[1], -1.0, atol=1e-12)

    def test_per_curve_grids(self):
        rng = np.random.default_rng(1)
        b = build_basis(2, 4)
        a = rng.normal(size=b.p)
        curves = {}
        for s in ("s1", "s2"):
            for c in ("a", "b"):
                t = np.sort(rng.uniform(0, 1, 25))
                curves[s, c] = (t, design_matrix(b, t) @ a)
        coefs = fit_regression_splines(b, CurveDataset(("s1", "s2"), ("a", "b"), curves))
        np.testing.assert_allclose(coefs.A, np.tile(a, (4, 1)), atol=1e-10)
        assert coefs.y.tolist() == [1, 2, 1, 2]

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
    def test_linearity(self, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        b = build_basis(3, 6)
        t = np.linspace(0, 1, 31)
        x1, x2 = rng.normal(size=31), rng.normal(size=31)
        c = fit_regression_splines(b, _dataset(t, {("s", "1"): x1, ("s", "2"): x2, ("s", "3"): alpha * x1 + beta * x2})).A
        np.testing.assert_allclose(c[2], alpha * c[0] + beta * c[1], atol=1e-10)

    def test_too_few_points(self):
        b = build_basis(3, 10)
        t = np.linspace(0, 1, 10)
        with pytest.raises(FitError, match="s1"):
            fit_regression_splines(b, _dataset(t, {("s1", "a"): t, ("s1", "b"): t}))

    def test_rank_deficient_design(self):
        # enough points, but all in the first knot span
        b = build_basis(3, 9)
        t = np.linspace(0, 0.09, 30)
        with pytest.raises(FitError, match="rank"):
            fit_regression_splines(b, _dataset(t, {("s1", "a"): t, ("s1", "b"): t}))

    def test_dummy_reference_coding(self):
        b = build_basis(3, 4)
        t = np.linspace(0, 1, 20)
        data = _dataset(t, {(s, c): t for s in ("u", "v") for c in ("a", "b", "c")})
        Y = fit_regression_splines(b, data).Ytilde
        np.testing.assert_array_equal(Y, [[1, 0], [0, 1], [0, 0], [1, 0], [0, 1], [0, 0]])

    def test_residual_rms_tracks_noise(self):
        # Monte Carlo over 100 simulated datasets; least-squares residual RMS vs sigma
        b = build_basis(3, 15)
        rms = {}
        for sigma in (0.2, 0.05, 0.0):
            vals = []
            for rep in range(100):
                data = generate(SimConfig(n_subjects=4, train_subjects=4, test_subjects=0, sigma_eps=sigma, seed=rep))
                A = fit_regression_splines(b, data).A
                t = data.curves[data.keys()[0]][0]
                fitted = A @ design_matrix(b, t).T
                X = np.vstack([data.curves[k][1] for k in data.keys()])
                vals.append(np.sqrt(np.mean((X - fitted) ** 2)))
            rms[sigma] = float(np.mean(vals))
        assert abs(rms[0.2] - 0.2) < 0.2 * 0.2
        assert rms[0.2] > rms[0.05] > rms[0.0]


class TestFactorMetric:
    def test_identity(self):
        b = build_basis(1, 0, (0, 1), 1)
        object.__setattr__(b, "gram", np.eye(2))
        np.testing.assert_array_equal(factor_metric(b, 0.0), np.eye(2))

    def test_hat_round_trip(self):
        b = build_basis(1, 0, (0, 1), 1)
        L = factor_metric(b, 0.0)
        assert np.allclose(np.triu(L, 1), 0)
        np.testing.assert_allclose(L @ L.T, [[1 / 3, 1 / 6], [1 / 6, 1 / 3]], atol=1e-14)

    @pytest.mark.parametrize("lam", [0.0, 0.41, 2.87, 1e4])
    def test_round_trip(self, lam):
        b = build_basis(3, 15)
        L = factor_metric(b, lam)
        M = b.gram + lam * b.penalty
        # 1e-12 in units of the largest entry; at lam=1e4 one ulp of an entry is ~7e-12
        assert np.abs(L @ L.T - M).max() < 1e-12 * max(1.0, np.abs(M).max())

    def test_negative_lambda(self):
        with pytest.raises(ParameterError):
            factor_metric(build_basis(), -1.0)

    def test_not_positive_definite(self):
        b = build_basis(3, 4)
        object.__setattr__(b, "gram", -np.eye(b.p))
        with pytest.raises(NumericalError):
            factor_metric(b, 0.0)


class TestCurveData:
    def test_incomplete_subject_rejected(self):
        t = np.linspace(0, 1, 5)
        with pytest.raises(StructuralError, match="s2"):
            CurveDataset(("s1", "s2"), ("a", "b"), {("s1", "a"): (t, t), ("s1", "b"): (t, t), ("s2", "a"): (t, t)})

    def test_csv_round_trip(self, tmp_path):
        data = generate(SimConfig(n_subjects=4, train_subjects=3, test_subjects=1, seed=3))
        path = tmp_path / "d.csv"
        write_curve_csv(data, path)
        back = read_curve_csv(path)
        assert back.subjects == data.subjects and back.conditions == data.conditions
        for k in data.keys():
            np.testing.assert_array_equal(back.curves[k][0], data.curves[k][0])
            np.testing.assert_array_equal(back.curves[k][1], data.curves[k][1])
        assert back.grid_shared

    def test_condition_order_is_first_appearance(self, tmp_path):
        path = tmp_path / "d.csv"
        rows = ["subject,condition,t,value"]
        for s in ("a", "b"):
            for c in ("walk", "bag", "trolley"):
                rows += [f"{s},{c},{t},{t * 2}" for t in (0.0, 0.5, 1.0)]
        path.write_text("\n".join(rows) + "\n")
        assert read_curve_csv(path).conditions == ("walk", "bag", "trolley")
