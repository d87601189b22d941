"""
Command-line workflows.

Subcommands: ``fit``, ``compare``, ``test-mean``, ``density``, ``sample``,
``validate``.  A text report goes to stdout; ``--json PATH`` also writes the
machine-readable sidecar.  Exit codes: 0 success, 1 usage, 2 data,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .geometry import angles_to_shape
from .inference import Dataset, FitResult, evidence_grade, fit_mle, lrt_equal_mean
from .io import DataError, RunReport, ingest, write_landmarks
from .mc import SamplerConfig, empirical_vs_analytic, normalization_check, sample_landmarks, sample_reduced
from .models import VARIANTS, ModelParams, QuadratureError, log_isotropic_density_batch, variant_spec
from .zonal import SeriesControl, SeriesConvergenceError

__all__ = ["main", "run_compare", "run_test_mean", "run_fit"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _ctl_dict(ctl: SeriesControl) -> dict:
    return {"max_degree": ctl.max_degree, "rel_tol": ctl.rel_tol, "consecutive_small": ctl.consecutive_small}


def _as_dataset(group, Theta=None) -> Dataset:
    if isinstance(group, Dataset):
        return group
    if isinstance(group, (str, Path)):
        group = ingest(group)
    return Dataset.from_landmarks(group, Theta)


def _rank(report: RunReport, group: str, fits: dict) -> None:
    models = list(fits)
    bic = {m: fits[m]["bic_star"] for m in models}
    best = min(models, key=lambda m: (bic[m], models.index(m)))
    report.best[group] = best
    report.delta_bic[group] = {a: {b: bic[b] - bic[a] for b in models} for a in models}
    report.grades[group] = {m: evidence_grade(bic[m] - bic[best]).value for m in models}


def run_fit(group, model: str, ctl: SeriesControl = SeriesControl(), seed: int = 0,
            name: str = "group1", Theta=None) -> RunReport:
    """Fit one model to one group."""
    data = _as_dataset(group, Theta)
    report = RunReport(command="fit", seed=seed, series_control=_ctl_dict(ctl))
    fit = fit_mle(data, model, ctl=ctl, seed=seed)
    report.fits.append({"group": name, "model": model, "fit": fit.to_dict()})
    report.best[name] = model
    return report


def run_compare(groups, models: Sequence[str] = VARIANTS, ctl: SeriesControl = SeriesControl(),
                seed: int = 0, Theta=None) -> RunReport:
    """Fit every (group, model) pair and rank models by BIC* within each group.

    ``groups`` maps names to landmark files, landmark lists or datasets (a
    plain sequence is named ``group1, group2, ...``).  A failing pair is
    recorded in the report and the run continues.
    """
    if not isinstance(groups, dict):
        groups = {f"group{i + 1}": g for i, g in enumerate(groups)}
    report = RunReport(command="compare", seed=seed, series_control=_ctl_dict(ctl))
    for gi, (name, group) in enumerate(groups.items()):
        data = _as_dataset(group, Theta)
        fits = {}
        for model in models:
            try:
                fit = fit_mle(data, model, ctl=ctl, seed=seed + gi)
            except (SeriesConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
                report.fits.append({"group": name, "model": model, "error": str(exc)})
                continue
            fits[model] = fit.to_dict()
            report.fits.append({"group": name, "model": model, "fit": fits[model]})
        if fits:
            _rank(report, name, fits)
        if len(fits) < 2:
            report.notes.append(f"group {name}: fewer than two fitted models, no BIC* comparison")
    return report


def run_test_mean(group1, group2, model_choice: str = "best", ctl: SeriesControl = SeriesControl(),
                  seed: int = 0, h0_sigma: str = "per-group", Theta=None,
                  names=("group1", "group2")) -> RunReport:
    """Likelihood-ratio test of equal mean shape between two groups.

    ``model_choice="best"`` fits all variants per group and tests under each
    group's lowest-BIC* model; otherwise the named variant is used for both.
    """
    d1, d2 = _as_dataset(group1, Theta), _as_dataset(group2, Theta)
    models = VARIANTS if model_choice == "best" else (model_choice,)
    report = run_compare({names[0]: d1, names[1]: d2}, models, ctl, seed)
    report.command = "test-mean"
    if any(n not in report.best for n in names):
        raise SeriesConvergenceError("no model could be fitted to one of the groups")
    m1, m2 = report.best[names[0]], report.best[names[1]]
    lrt = lrt_equal_mean(d1, d2, (m1, m2), ctl=ctl, h0_sigma=h0_sigma, seed=seed)
    report.lrt = {
        "models": [m1, m2],
        "h0_sigma": h0_sigma,
        "stat": lrt.stat,
        "df": lrt.df,
        "p_value": lrt.p_value,
        "effective_df": lrt.effective_df,
        "p_value_effective": lrt.p_value_effective,
        "loglik_h0": lrt.loglik_h0,
        "loglik_ha": lrt.loglik_ha,
    }
    return report


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _landmark_list(text: str) -> list:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated landmark indices, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty landmark selection")
    return out


def _matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
        M = np.array(rows, dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected rows 'a,b;c,d', got {text!r}") from None
    if M.ndim != 2:
        raise argparse.ArgumentTypeError("matrix rows must have equal length")
    return M


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-degree", type=int, default=SeriesControl.max_degree,
                   help="series truncation cap (default %(default)s)")
    p.add_argument("--rel-tol", type=float, default=SeriesControl.rel_tol,
                   help="relative size of negligible series terms (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default %(default)s)")
    p.add_argument("--json", metavar="PATH", help="also write the report as JSON")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--select-landmarks", type=_landmark_list, metavar="I,J,...",
                   help="1-based landmark indices to keep, e.g. 1,2,6")


def _model_args(p: argparse.ArgumentParser, default="gaussian") -> None:
    p.add_argument("--model", choices=VARIANTS, default=default)
    p.add_argument("--mu", type=_matrix, required=True, metavar="ROWS",
                   help="reduced mean, rows separated by ';', e.g. '2,0.5;0.4,1.5'")
    p.add_argument("--sigma2", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polarshape", description="Noncentral elliptical polar shape models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one model to a landmark file")
    p.add_argument("file")
    p.add_argument("--model", choices=VARIANTS, default="gaussian")
    _data_args(p)
    _common(p)

    p = sub.add_parser("compare", help="fit several models per group and rank them by BIC*")
    p.add_argument("files", nargs="+")
    p.add_argument("--model", choices=VARIANTS, action="append", dest="models",
                   help="model to include (repeatable; default: all three)")
    _data_args(p)
    _common(p)

    p = sub.add_parser("test-mean", help="likelihood-ratio test of equal mean shape")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("--model", choices=("best",) + VARIANTS, default="best")
    p.add_argument("--h0-sigma", choices=("per-group", "pooled"), default="per-group")
    _data_args(p)
    _common(p)

    p = sub.add_parser("density", help="tabulate a shape density on the angle grid (N = 3)")
    _model_args(p)
    p.add_argument("--grid", type=int, default=40, help="points per angle (default %(default)s)")
    p.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")
    _common(p)

    p = sub.add_parser("sample", help="simulate landmark configurations")
    _model_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", metavar="PATH", required=True)
    _common(p)

    p = sub.add_parser("validate", help="normalization and simulation checks of a model (N = 3)")
    _model_args(p)
    p.add_argument("--n", type=int, default=20000)
    _common(p)
    return parser


def _density_fn(args, ctl):
    return lambda U: np.exp(log_isotropic_density_batch(
        angles_to_shape(U, check=False), U, args.mu, args.sigma2, args.model, ctl))


def _check_mu(args) -> None:
    n, K = args.mu.shape
    if n != 2:
        raise DataError("density, sample and validate take a 2 x K reduced mean (N = 3 landmarks)")
    if K < n:
        raise DataError("the reduced mean needs K >= N - 1 columns")


def _dispatch(args, ctl: SeriesControl) -> Optional[RunReport]:
    sel = getattr(args, "select_landmarks", None)
    if args.command == "fit":
        return run_fit(ingest(args.file, sel), args.model, ctl, args.seed, name=Path(args.file).stem)
    if args.command == "compare":
        groups = {}
        for f in args.files:
            key = Path(f).stem
            while key in groups:
                key += "'"
            groups[key] = ingest(f, sel)
        return run_compare(groups, args.models or VARIANTS, ctl, args.seed)
    if args.command == "test-mean":
        names = (Path(args.file1).stem, Path(args.file2).stem)
        if names[0] == names[1]:
            names = (names[0] + "_1", names[1] + "_2")
        return run_test_mean(ingest(args.file1, sel), ingest(args.file2, sel), args.model, ctl,
                             args.seed, args.h0_sigma, names=names)
    _check_mu(args)
    if args.command == "density":
        g = args.grid
        t2 = (np.arange(g) + 0.5) * np.pi / g
        s = (np.arange(g) + 0.5) / g
        from .geometry import theta1_max
        T2, S = np.meshgrid(t2, s, indexing="ij")
        U = np.stack([S * theta1_max(T2), T2], axis=-1).reshape(-1, 2)
        vals = _density_fn(args, ctl)(U)
        lines = ["theta1,theta2,density"] + [f"{a:.10g},{b:.10g},{v:.10g}" for (a, b), v in zip(U, vals)]
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return None
    spec = variant_spec(args.model, 3, args.mu.shape[1])
    cfg = SamplerConfig(spec, ModelParams(args.mu, args.sigma2), args.n, args.seed)
    if args.command == "sample":
        write_landmarks(args.out, sample_landmarks(cfg))
        return None
    report = RunReport(command="validate", seed=args.seed, series_control=_ctl_dict(ctl))
    dens = _density_fn(args, ctl)
    total = normalization_check(dens, (3, args.mu.shape[1]))
    gof = empirical_vs_analytic(sample_reduced(cfg), dens)
    report.notes.append(f"{args.model}: integral over the angle region = {total:.8f}")
    report.notes.append(f"{args.model}: chi-square GOF on {args.n} samples: stat={gof.statistic:.4f} "
                        f"df={gof.df} p={gof.p_value:.4g}")
    return report


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        ctl = SeriesControl(max_degree=args.max_degree, rel_tol=args.rel_tol)
    except ValueError as exc:
        print(f"polarshape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = _dispatch(args, ctl)
    except (SeriesConvergenceError, QuadratureError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"polarshape: numerical failure: {exc}", file=sys.stderr)
        if isinstance(exc, SeriesConvergenceError):
            print("polarshape: hint: raise --max-degree for strongly concentrated data", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError) as exc:
        print(f"polarshape: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if report is not None:
        sys.stdout.write(report.to_text())
        if args.json:
            report.write(args.json)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
