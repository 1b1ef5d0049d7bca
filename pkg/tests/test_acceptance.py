"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary)."""

import filecmp
import os

import numpy as np
import pytest

from fplsda.basis import build_basis, dummy_matrix, factor_metric
from fplsda.cli import main
from fplsda.flda import fit_classifier
from fplsda.modelselect import DEFAULT_LAMBDAS, DEFAULT_Q, CvGrid, cross_validate, holdout_evaluate
from fplsda.mpls import fit_pls, transform_features
from fplsda.sim import METHODS, SimConfig, run_benchmark
from fplsda.variation import split, within

N_REPLICATES = 100
N_BOOT = 100
BOOT_REQUIRED = 90


def _cli(*argv):
    assert main([str(a) for a in argv]) == 0


# -- 1. algebraic identities --------------------------------------------------


def test_1_split_reconstruction(acceptance):
    rng = np.random.default_rng(0)
    worst = 0.0
    for K in (2, 3, 5):
        X = rng.normal(scale=10.0, size=(K * 9, 19))
        sv = split(X, K)
        worst = max(worst, np.abs(sv.X_o + sv.X_b + sv.X_w - X).max() / np.abs(X).max())
    acceptance("1a split reconstruction", worst <= 1e-12, f"max relative error {worst:.2e} (tol 1e-12)")


def test_1_cholesky_round_trip(acceptance):
    b = build_basis(3, 15)
    errs = {}
    for lam in (0.0, 0.41, 2.87, 1e4):
        M = b.gram + lam * b.penalty
        L = factor_metric(b, lam)
        errs[lam] = (np.abs(L @ L.T - M).max(), np.abs(M).max())
    ok = all(e <= 1e-12 * max(1.0, scale) for e, scale in errs.values())
    detail = ", ".join(f"lam={lam:g}: {e:.1e} (max entry {s:.1e})" for lam, (e, s) in errs.items())
    acceptance("1b LL' round-trip", ok, detail + "; tol 1e-12 times max(1, max entry)")


@pytest.mark.parametrize("lam", [0.0, 0.41, 2.87])
def test_1_projection_identity(acceptance, sim_data, lam):
    d = sim_data(seed=0)
    coefs, basis = d["train"], d["basis"]
    model = fit_classifier(coefs, basis, "penfpls" if lam else "fpls", lam, 3)
    A_w = within(coefs.A, coefs.K)
    lhs = (A_w - A_w.mean(0)) @ basis.gram @ model.beta_basis
    err = np.abs(lhs - model.pls.T[:, : model.q] @ model.beta_pls).max()
    acceptance(f"1c projection identity (lam={lam:g})", err <= 1e-10, f"max abs error {err:.2e} (tol 1e-10)")


def test_1_lambda_to_zero(acceptance, sim_data):
    d = sim_data(seed=0)
    A_w = within(d["train"].A, 3)
    Yt = dummy_matrix(d["train"].y, 3)
    t0 = fit_pls(transform_features(A_w, d["basis"], 0.0), Yt, 5).T
    t1 = fit_pls(transform_features(A_w, d["basis"], 1e-12), Yt, 5).T
    err = np.abs(t0 - t1).max()
    acceptance("1d lambda->0 score equivalence", err <= 1e-6, f"max abs score difference {err:.2e} (tol 1e-6)")


# -- 2. oracle equivalence ----------------------------------------------------


def test_2_first_weight_oracle(acceptance):
    rng = np.random.default_rng(1)
    worst = 1.0
    for _ in range(50):
        X, Y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
        M = (X - X.mean(0)).T @ (Y - Y.mean(0))
        v = np.linalg.eigh(M @ M.T)[1][:, -1]
        worst = min(worst, abs(fit_pls(X, Y, 1).W[:, 0] @ v))
    acceptance("2a first PLS weight vs dense eigendecomposition", worst > 1 - 1e-10,
               f"min |cos| over 50 instances = 1 - {1 - worst:.1e} (need > 1 - 1e-10)")


def test_2_full_rank_deflation(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for r in (1, 2, 3, 5):
        X = rng.normal(size=(30, r)) @ rng.normal(size=(r, 10))
        m = fit_pls(X, rng.normal(size=(30, 2)), r)
        Xc = X - X.mean(0)
        worst = max(worst, np.linalg.norm(Xc - m.T @ m.P_load.T) / np.linalg.norm(Xc))
    acceptance("2b full-rank deflation residual", worst < 1e-10, f"max relative residual {worst:.2e} (tol 1e-10)")


# -- 3. simulation benchmark --------------------------------------------------


@pytest.fixture(scope="module")
def bench_records():
    records = run_benchmark(SimConfig(seed=2024), N_REPLICATES, n_jobs=os.cpu_count() or 1)
    by_method = {m: [r for r in records if r["method"] == m] for m in METHODS}
    for m, recs in by_method.items():
        assert len(recs) == N_REPLICATES
    return by_method


def _stat(values, what):
    if what == "median":
        return np.median(values)
    q1, q3 = np.percentile(values, [25, 75])
    return q3 - q1


def _bootstrap(by_method, predicate):
    """Count of bootstrap resamples (of replicate indices) on which ``predicate`` holds."""
    rng = np.random.default_rng(7)
    arrays = {m: {k: np.array([r[k] for r in recs]) for k in ("ccr_cv", "ccr_test")} for m, recs in by_method.items()}
    hits = 0
    for _ in range(N_BOOT):
        idx = rng.integers(0, N_REPLICATES, N_REPLICATES)
        hits += bool(predicate({m: {k: v[idx] for k, v in a.items()} for m, a in arrays.items()}))
    return hits


@pytest.mark.slow
def test_3a_multivariate_cv_ccr(acceptance, bench_records):
    med = _stat([r["ccr_cv"] for r in bench_records["LDA-MPLS"]], "median")
    hits = _bootstrap(bench_records, lambda s: _stat(s["LDA-MPLS"]["ccr_cv"], "median") >= 0.95)
    acceptance("3a median CCR_cv of LDA-MPLS >= 0.95", hits >= BOOT_REQUIRED,
               f"median {med:.4f}; holds on {hits}/{N_BOOT} bootstrap resamples (need {BOOT_REQUIRED})")


@pytest.mark.slow
def test_3b_test_ccr_ordering(acceptance, bench_records):
    meds = {m: _stat([r["ccr_test"] for r in bench_records[m]], "median") for m in METHODS}

    def ordered(s):
        pen, mf, mv = (_stat(s[m]["ccr_test"], "median") for m in ("FLDA-PenMFPLS", "FLDA-MFPLS", "LDA-MPLS"))
        return pen >= mf >= mv

    hits = _bootstrap(bench_records, ordered)
    detail = ", ".join(f"{m} {v:.4f}" for m, v in meds.items())
    acceptance("3b median CCR_test PenMFPLS >= MFPLS >= MPLS", hits >= BOOT_REQUIRED,
               f"medians {detail}; holds on {hits}/{N_BOOT} resamples (need {BOOT_REQUIRED})")


@pytest.mark.slow
def test_3c_penalized_smallest_iqr(acceptance, bench_records):
    iqr = {m: _stat([r["ccr_test"] for r in bench_records[m]], "iqr") for m in METHODS}

    def smallest(s):
        pen = _stat(s["FLDA-PenMFPLS"]["ccr_test"], "iqr")
        return all(pen <= _stat(s[m]["ccr_test"], "iqr") for m in ("FLDA-MFPLS", "LDA-MPLS"))

    hits = _bootstrap(bench_records, smallest)
    detail = ", ".join(f"{m} {v:.4f}" for m, v in iqr.items())
    acceptance("3c FLDA-PenMFPLS has the smallest CCR_test IQR", hits >= BOOT_REQUIRED,
               f"IQRs {detail}; holds on {hits}/{N_BOOT} resamples (need {BOOT_REQUIRED})")


# -- 4. noise-free limit ------------------------------------------------------


@pytest.mark.parametrize("variant", ["fpls", "penfpls"])
def test_4_noise_free(acceptance, sim_data, variant):
    d = sim_data(seed=4, sigma_eps=0.0)
    lambdas = () if variant == "fpls" else DEFAULT_LAMBDAS
    cv = cross_validate(d["train"], d["basis"], CvGrid(lambdas, DEFAULT_Q))
    lam, q, _ = cv.best
    ccr, _, model = holdout_evaluate(d["train"], d["test"], d["basis"], lam, q, variant)
    acceptance(f"4 noise-free limit ({variant})", ccr == 1.0 and model.q <= 2,
               f"CCR_test {ccr!r}, selected q {model.q}, lambda {lam!r} (need CCR 1 and q <= 2)")


# -- 5. smoothing behavior ----------------------------------------------------


def test_5_smoothing(acceptance, tmp_path):
    _cli("simulate", "--seed", 5, "--out", tmp_path / "all.csv", "--train-out", tmp_path / "train.csv")
    energy = {}
    for lam in (0.0, 1e4):
        _cli("fit", "--in", tmp_path / "train.csv", "--out", tmp_path / f"m{lam}.json", "--lambda", lam, "--q", 2)
        _cli("export-beta", "--model", tmp_path / f"m{lam}.json", "--out", tmp_path / f"b{lam}.csv")
        B = np.loadtxt(tmp_path / f"b{lam}.csv", delimiter=",", skiprows=1)[:, 1:]
        # the overall scale of each discriminant function is arbitrary, so energies are taken per unit norm
        energy[lam] = np.sum(np.diff(B, n=2, axis=0) ** 2, axis=0) / np.sum(B**2, axis=0)
    ratio = np.min(energy[0.0] / energy[1e4])
    acceptance("5 beta second-difference energy at lambda=1e4 vs 0", ratio >= 10,
               f"energy ratio (min over functions) {ratio:.1f} (need >= 10)")


# -- 6. determinism -----------------------------------------------------------


def test_6_determinism(acceptance, tmp_path):
    for threads in (1, 2):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        _cli("--threads", threads, "simulate", "--seed", 11, "--out", d / "data.csv", "--train-out", d / "train.csv")
        _cli("--threads", threads, "fit", "--in", d / "train.csv", "--out", d / "model.json")
        _cli("--threads", threads, "bench", "--replicates", 2, "--seed", 11, "--out-dir", d / "bench")
    names = ["data.csv", "train.csv", "model.json", "bench/bench.csv", "bench/summary.csv", "bench/boxplots.svg"]
    diff = [n for n in names if not filecmp.cmp(tmp_path / "t1" / n, tmp_path / "t2" / n, shallow=False)]
    acceptance("6 byte-identical outputs across thread counts", not diff,
               f"compared {len(names)} files; differing: {diff or 'none'}")
