"""Command-line interface.

Exit codes: 0 success, 2 usage or parameter error, 3 data error, 4 numerical
error. Set ``FPLS_LOG`` (e.g. ``DEBUG``) to change the log level.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .basis import (
    CurveDataset,
    build_basis,
    fit_regression_splines,
    read_curve_csv,
    sample_matrix,
    write_curve_csv,
)
from .errors import DataError, FplsdaError, ParameterError
from .flda import DiscriminantModel, classify_subjects, confusion_and_ccr, fit_classifier
from .modelselect import DEFAULT_LAMBDAS, DEFAULT_Q, CvGrid, cross_validate, holdout_evaluate, write_selection
from .sim import (
    METHODS,
    BenchSettings,
    SimConfig,
    generate,
    run_benchmark,
    summarize,
    train_test_split,
    write_records,
    write_summary,
)
from .svgplot import write_boxplots

log = logging.getLogger("fplsda")

VARIANT_ALIASES = {
    "mpls": "mpls",
    "multivariate": "mpls",
    "fpls": "fpls",
    "nonpenalized": "fpls",
    "penfpls": "penfpls",
    "penalized": "penfpls",
}


def parse_lambda_grid(text: str) -> tuple[float, ...]:
    if text.strip().lower() == "default":
        return DEFAULT_LAMBDAS
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda grid {text!r}") from exc
    if not vals or any(not v >= 0 for v in vals):
        raise argparse.ArgumentTypeError("lambda grid needs nonnegative values")
    return vals


def parse_q_grid(text: str) -> tuple[int, ...]:
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad q grid {text!r}") from exc
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("q grid needs positive integers")
    return tuple(sorted(set(out)))


def parse_variant(text: str) -> str:
    try:
        return VARIANT_ALIASES[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown variant {text!r}") from None


def _check_in(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input file not found: {p}")
    return p


def _check_out(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise DataError(f"output directory does not exist: {parent}")
    return p


def _domain_of(data: CurveDataset) -> tuple[float, float]:
    ts = [t for t, _ in data.curves.values()]
    return float(min(t.min() for t in ts)), float(max(t.max() for t in ts))


def _features(data: CurveDataset, variant: str, args, basis=None):
    if variant == "mpls":
        coefs, grid = sample_matrix(data)
        return coefs, None, grid
    if basis is None:
        domain = tuple(args.domain) if args.domain else _domain_of(data)
        basis = build_basis(args.degree, args.knots, domain, args.penalty_order)
    return fit_regression_splines(basis, data), basis, None


def _print_confusion(cm: np.ndarray, labels, title: str) -> None:
    width = max(6, *(len(str(lbl)) for lbl in labels))
    print(f"{title} (rows actual, columns predicted)")
    print(" " * width + "".join(f"{str(lbl):>{width + 1}}" for lbl in labels))
    for lbl, row in zip(labels, cm):
        print(f"{str(lbl):>{width}}" + "".join(f"{v:>{width + 1}d}" for v in row))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = _check_out(args.out)
    n = args.subjects
    train_n = args.train_subjects if args.train_subjects is not None else (3 * n) // 4
    cfg = SimConfig(
        n_subjects=n,
        K=args.classes,
        grid_size=args.grid_size,
        sigma_eps=args.sigma_eps,
        sigma_s=args.sigma_s,
        train_subjects=train_n,
        test_subjects=n - train_n,
        seed=args.seed,
        subject_effect=not args.no_subject_effect,
    )
    for p in (args.train_out, args.test_out):
        if p:
            _check_out(p)
    data = generate(cfg)
    write_curve_csv(data, out)
    train, test = train_test_split(data, cfg)
    if args.train_out:
        write_curve_csv(train, args.train_out)
    if args.test_out and test is not None:
        write_curve_csv(test, args.test_out)
    print(f"subjects: {data.n_subjects} (train {cfg.train_subjects}, test {cfg.test_subjects})")
    print(f"conditions: {data.K}")
    print(f"grid size: {cfg.grid_size}")
    print(f"curves: {data.n_subjects * data.K}, data rows: {data.n_subjects * data.K * cfg.grid_size}")
    return 0


def _select(coefs, basis, variant, args, lambdas=None):
    if variant != "penfpls":
        lambdas = ()
    elif lambdas is None:
        lambdas = args.lambda_grid
    return cross_validate(coefs, basis, CvGrid(lambdas, args.q_grid), n_jobs=args.threads)


def cmd_fit(args) -> int:
    src = _check_in(args.input)
    out = _check_out(args.out)
    variant = args.variant
    lam = args.lam if args.lam is not None else 0.0
    if variant != "penfpls" and args.lam not in (None, 0.0):
        raise ParameterError(f"--lambda only applies to the penfpls variant, not {variant}")
    data = read_curve_csv(src)
    coefs, basis, grid = _features(data, variant, args)
    q = args.q
    if q is None or (variant == "penfpls" and args.lam is None):
        cv = _select(coefs, basis, variant, args, None if args.lam is None else (lam,))
        lam_cv, q_cv, ccr_cv = cv.best
        if args.lam is None and variant == "penfpls":
            lam = lam_cv
        if q is None:
            q = q_cv
        print(f"cross-validation: lambda={lam_cv!r} q={q_cv} ccr_cv={ccr_cv:.4f}")
    model = fit_classifier(coefs, basis, variant, lam, q, grid)
    model.save(out)
    pred = classify_subjects(model, coefs)
    cm, ccr = confusion_and_ccr(pred, coefs.y, coefs.K)
    print(f"variant: {variant}, lambda: {lam!r}, q: {model.q}")
    _print_confusion(cm, coefs.class_labels, "training confusion matrix")
    print(f"resubstitution CCR: {ccr!r}")
    return 0


def _coefs_for_model(model: DiscriminantModel, data: CurveDataset):
    if model.basis is None:
        coefs, grid = sample_matrix(data)
        if model.grid is not None and (len(grid) != len(model.grid) or not np.allclose(grid, model.grid)):
            raise DataError("prediction grid differs from the grid the model was fitted on")
        return coefs
    return fit_regression_splines(model.basis, data)


def cmd_predict(args) -> int:
    model = DiscriminantModel.load(_check_in(args.model))
    src = _check_in(args.input)
    out = _check_out(args.out) if args.out else None
    data = read_curve_csv(src, conditions=model.class_labels)
    coefs = _coefs_for_model(model, data)
    pred = classify_subjects(model, coefs)
    cm, ccr = confusion_and_ccr(pred, coefs.y, coefs.K)
    if out is not None:
        try:
            with out.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("subject", "condition", "predicted"))
                for (s, c), p in zip(data.keys(), pred):
                    w.writerow((s, c, model.class_labels[p - 1]))
        except OSError as exc:
            raise DataError(f"cannot write {out}: {exc.strerror}") from exc
    _print_confusion(cm, model.class_labels, "confusion matrix")
    print(f"CCR: {ccr!r}")
    return 0


def cmd_cv(args) -> int:
    if args.folds != "subject":
        raise ParameterError("only --folds subject is supported")
    src = _check_in(args.input)
    out = _check_out(args.out)
    sel = _check_out(args.selection_out) if args.selection_out else None
    test_path = _check_in(args.test) if args.test else None
    variant = args.variant
    data = read_curve_csv(src)
    coefs, basis, _ = _features(data, variant, args)
    cv = _select(coefs, basis, variant, args)
    cv.write_report(out)
    lam, q, ccr_cv = cv.best
    ccr_test = None
    if test_path is not None:
        test_data = read_curve_csv(test_path, conditions=data.conditions)
        test_coefs, _, _ = _features(test_data, variant, args, basis)
        ccr_test, cm, _ = holdout_evaluate(coefs, test_coefs, basis, lam, q, variant)
        _print_confusion(cm, data.conditions, "test confusion matrix")
    if sel is not None:
        write_selection(sel, variant, cv.best, ccr_test)
    print(f"selected lambda={lam!r} q={q} ccr_cv={ccr_cv!r}" + ("" if ccr_test is None else f" ccr_test={ccr_test!r}"))
    return 0


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = tuple(args.methods.split(",")) if args.methods else METHODS
    n = args.subjects
    train_n = args.train_subjects if args.train_subjects is not None else (3 * n) // 4
    cfg = SimConfig(
        n_subjects=n,
        K=args.classes,
        grid_size=args.grid_size,
        sigma_eps=args.sigma_eps,
        sigma_s=args.sigma_s,
        train_subjects=train_n,
        test_subjects=n - train_n,
        seed=args.seed,
        subject_effect=not args.no_subject_effect,
    )
    settings = BenchSettings(args.degree, args.knots, args.penalty_order, args.lambda_grid, args.q_grid)
    records = run_benchmark(cfg, args.replicates, methods, settings, n_jobs=args.threads)
    summary = summarize(records)
    write_records(records, out_dir / "bench.csv")
    write_summary(summary, out_dir / "summary.csv")
    write_boxplots(summary, out_dir / "boxplots.svg")
    failed = sum(1 for r in records if r["ccr_test"] != r["ccr_test"])
    for row in summary:
        if row["metric"] == "ccr_test":
            print(f"{row['method']}: median CCR_test {row['median']:.4f} (IQR {row['q1']:.4f}-{row['q3']:.4f})")
    if failed:
        print(f"{failed} method fit(s) failed; see log")
    print(f"wrote {out_dir / 'bench.csv'}, {out_dir / 'summary.csv'}, {out_dir / 'boxplots.svg'}")
    return 0


def cmd_export_beta(args) -> int:
    model = DiscriminantModel.load(_check_in(args.model))
    out = _check_out(args.out)
    if model.basis is None:
        raise ParameterError("export-beta needs a functional model (fpls or penfpls)")
    if args.resolution < 2:
        raise ParameterError("--resolution must be at least 2")
    t_min, t_max = model.basis.domain
    grid = np.linspace(t_min, t_max, args.resolution)
    values = model.discriminant_functions(grid)
    try:
        with out.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"beta_{i}" for i in range(1, values.shape[1] + 1)])
            for ti, row in zip(grid, values):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise DataError(f"cannot write {out}: {exc.strerror}") from exc
    print(f"wrote {values.shape[1]} discriminant function(s) at {len(grid)} points to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_basis(p):
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--knots", type=int, default=15, help="number of interior knots")
    p.add_argument("--penalty-order", type=int, default=2)
    p.add_argument("--domain", type=float, nargs=2, metavar=("T_MIN", "T_MAX"),
                   help="basis domain (default: range of the observation points)")


def _add_grids(p):
    p.add_argument("--lambda-grid", type=parse_lambda_grid, default=DEFAULT_LAMBDAS,
                   help="comma-separated lambdas or 'default' (0 plus 17 log-spaced values in 1e-4..1e4)")
    p.add_argument("--q-grid", type=parse_q_grid, default=DEFAULT_Q, help="e.g. 1-10 or 1,2,3")


def _add_sim(p):
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--train-subjects", type=int, default=None)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--grid-size", type=int, default=101)
    p.add_argument("--sigma-eps", type=float, default=0.2)
    p.add_argument("--sigma-s", type=float, default=0.02)
    p.add_argument("--no-subject-effect", action="store_true")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fplsda", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated curve CSV")
    _add_sim(p)
    p.add_argument("--out", required=True)
    p.add_argument("--train-out")
    p.add_argument("--test-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a classifier and write the model JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", type=parse_variant, default="penfpls")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="smoothing parameter (penfpls); chosen by CV when omitted")
    p.add_argument("--q", type=int, default=None, help="PLS components; chosen by CV when omitted")
    _add_basis(p)
    _add_grids(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="classify curves with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="leave-one-subject-out grid search")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="CV report CSV")
    p.add_argument("--selection-out", help="selection summary JSON")
    p.add_argument("--test", help="optional test CSV for CCR_test")
    p.add_argument("--variant", type=parse_variant, default="penfpls")
    p.add_argument("--folds", default="subject", help="fold mode; only 'subject' is supported")
    _add_basis(p)
    _add_grids(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="simulation benchmark of the three methods")
    _add_sim(p)
    p.add_argument("--replicates", type=int, default=500)
    p.add_argument("--methods", default=None, help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--out-dir", "--out", dest="out_dir", default="bench_out")
    _add_basis(p)
    _add_grids(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-beta", help="discriminant functions on a grid as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=101)
    p.set_defaults(func=cmd_export_beta)

    # allow --threads after the subcommand too
    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("FPLS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except FplsdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
