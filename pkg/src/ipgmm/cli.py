"""Command-line interface.

Subcommands: ``classify-cov``, ``cluster``, ``da``, ``sweep``, ``simulate``
and ``preprocess``. Results are printed and, with ``--out DIR``, written as
JSON (plus CSV/text side files). Exit status is 0 on success, 2 on an input
error and 3 when a fit fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .covclass import classify_covariances
from .discriminant import cv_error, fit_da, loo_error, match_clusters, mm_error
from .errors import (
    EmptyGroupError,
    InputError,
    InvalidGError,
    InvalidMatrixError,
    IpgmmError,
    TooFewObservationsError,
)
from .mixture import e_step, fit_clustering, hard_assign
from .selection import Context, sweep, sweep_json, sweep_table
from .simulate import illustration_scatters, recovery_experiment, win_table
from .spectral import FamilyKind, IntermediateFamily

INPUT_ERRORS = (InputError, InvalidGError, InvalidMatrixError, TooFewObservationsError, EmptyGroupError)


def _ratio(text: str) -> float:
    try:
        v = math.inf if text.strip().lower() == "inf" else float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 1:
        raise argparse.ArgumentTypeError("constraint constants must be >= 1")
    return v


def _common(p, csh_default="inf"):
    p.add_argument("--family", choices=["cpc", "prop"], default="prop")
    p.add_argument("--G", type=int, default=1)
    p.add_argument("--csh", type=_ratio, default=_ratio(csh_default), help='shape ratio bound, or "inf"')
    p.add_argument("--cvol", type=_ratio, default=_ratio(csh_default), help='size ratio bound, or "inf"')
    p.add_argument("--nstart1", type=int, default=8, help="random starts of the covariance classification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipgmm", description="Intermediate parsimonious Gaussian models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify-cov", help="group covariance matrices into G-CPC / G-PROP classes")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help='JSON array of {"n": ..., "S": [[...]]}')
    src.add_argument("--data", help="dataset name or CSV; group scatters are formed by --label")
    src.add_argument("--illustration", action="store_true", help="100 random 2x2 sample covariances")
    p.add_argument("--label")
    _common(p)

    p = sub.add_parser("cluster", help="constrained EM clustering")
    p.add_argument("--data", required=True)
    p.add_argument("--label", help="reference labels (excluded from the features)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--nstart2", type=int, default=32, help="EM starts")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--ellipses", help="variable pair VAR1,VAR2 for contour export")
    _common(p)

    p = sub.add_parser("da", help="discriminant analysis")
    p.add_argument("--data", required=True)
    p.add_argument("--label")
    p.add_argument("--loo", action="store_true", help="leave-one-out error")
    p.add_argument("--cv", metavar="K,P", help="repeated cross validation, e.g. 300,0.8")
    p.add_argument("--cold", action="store_true", help="fresh random starts in every refit")
    p.add_argument("--ellipses")
    _common(p)

    p = sub.add_parser("sweep", help="fit several candidates and rank them by BIC")
    p.add_argument("--data", required=True)
    p.add_argument("--label")
    p.add_argument("--k", type=int)
    p.add_argument("--context", choices=["clustering", "discriminant"], default="clustering")
    p.add_argument("--candidates", default="prop:1,prop:2,cpc:1,cpc:2,VVV", help="comma list of kind:G or level codes")
    p.add_argument("--nstart2", type=int, default=32)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    _common(p)

    p = sub.add_parser("simulate", help="model-recovery experiment")
    p.add_argument("--design", default="default-2prop", help="packaged design name or JSON file")
    p.add_argument("--setting", choices=["clustering", "discriminant"], default="clustering")
    p.add_argument("--n", type=int, default=200, help="points per group")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--nstart2", type=int, default=8)
    p.add_argument("--csh", type=_ratio, default=math.inf)
    p.add_argument("--cvol", type=_ratio, default=math.inf)
    p.add_argument("--nstart1", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("preprocess", help="drop near-constant columns and project on principal components")
    p.add_argument("--data", required=True)
    p.add_argument("--label")
    p.add_argument("--pca", type=int, required=True, help="number of components kept")
    p.add_argument("--min-ss", type=float, default=1e-5, help="columns with a smaller sum of squares are dropped")
    p.add_argument("--out", type=Path, required=True, help="output CSV file")
    return parser


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _pair(text: str, columns):
    names = [s.strip() for s in text.split(",")]
    if len(names) != 2 or any(n not in columns for n in names):
        raise InputError(f"--ellipses needs two of {columns}, got {text!r}")
    return columns.index(names[0]), columns.index(names[1])


def _family(args) -> IntermediateFamily:
    return IntermediateFamily(FamilyKind(args.family), args.G)


def cmd_classify_cov(args) -> int:
    if args.input is not None:
        scatters, sizes = dataio.load_scatters(args.input)
        names = [str(i) for i in range(len(sizes))]
    elif args.illustration:
        scatters, sizes = illustration_scatters(100, 200, seed=args.seed)
        names = [str(i) for i in range(len(sizes))]
    else:
        ds = dataio.load_dataset(args.data, args.label)
        if ds.labels is None:
            raise InputError("--data needs --label to form group scatters")
        scatters, sizes, classes = dataio.group_scatters(ds.X, ds.labels)
        names = [str(c) for c in classes]
    model = classify_covariances(
        scatters, sizes, _family(args), c_sh=args.csh, c_vol=args.cvol,
        nstart1=args.nstart1, seed=args.seed, threads=args.threads,
    )
    table = "\n".join(f"{name}\t{g}" for name, g in zip(names, model.partition))
    print(f"{model.family.name}: objective {model.objective:.6f}")
    print(table)
    _write(args.out, "covclass.json", dataio.dumps({"items": names, "model": dataio.cov_to_dict(model)}))
    _write(args.out, "partition.tsv", "item\tclass\n" + table + "\n")
    return 0


def _report_dict(rep) -> dict:
    return {
        "loglik": rep.loglik,
        "df": rep.df,
        "bic": rep.bic,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "restarts": rep.restarts,
        "objective_trace": rep.trace,
    }


def cmd_cluster(args) -> int:
    ds = dataio.load_dataset(args.data, args.label)
    model, rep = fit_clustering(
        ds.X, args.k, _family(args), c_sh=args.csh, c_vol=args.cvol, nstart1=args.nstart1,
        nstart2=args.nstart2, tol=args.tol, max_iter=args.max_iter, seed=args.seed, threads=args.threads,
    )
    assign = hard_assign(e_step(ds.X, model))
    payload = {"command": "cluster", "family": model.family.name, "k": args.k, "report": _report_dict(rep)}
    line = f"{model.family.name}: loglik {rep.loglik:.3f}  df {rep.df}  BIC {rep.bic:.3f}"
    if ds.labels is not None:
        wrong, mapping = match_clusters(assign, ds.labels)
        payload["cross_assigned"] = wrong
        payload["matching"] = {str(k): str(v) for k, v in mapping.items()}
        line += f"  cross-assigned {wrong}/{len(assign)}"
    print(line)
    _write(args.out, "report.json", dataio.dumps(payload))
    _write(args.out, "model.json", dataio.dumps({"model": dataio.mixture_to_dict(model)}))
    _write(args.out, "assignments.csv", "row,cluster\n" + "".join(f"{i},{c}\n" for i, c in enumerate(assign)))
    if args.ellipses:
        _write(args.out, "ellipses.csv", dataio.ellipses_csv(model, _pair(args.ellipses, ds.columns), ds.columns))
    return 0


def cmd_da(args) -> int:
    ds = dataio.load_dataset(args.data, args.label)
    if ds.labels is None:
        raise InputError("da needs a label column (--label)")
    fam = _family(args)
    opts = dict(c_sh=args.csh, c_vol=args.cvol, nstart1=args.nstart1)
    model, rep = fit_da(ds.X, ds.labels, fam, seed=args.seed, **opts)
    N = len(ds.labels)
    mm = mm_error(ds.X, ds.labels, model)
    payload = {
        "command": "da",
        "family": fam.name,
        "report": _report_dict(rep),
        "complete_loglik": model.complete_loglik,
        "mm": mm,
        "partition": {str(c): int(g) for c, g in zip(model.classes, model.mixture.cov.partition)},
    }
    line = f"{fam.name}: loglik {rep.loglik:.3f}  df {rep.df}  BIC {rep.bic:.3f}  MM {round(mm * N)}/{N}"
    if args.loo:
        loo = loo_error(ds.X, ds.labels, fam, seed=args.seed, warm=not args.cold, threads=args.threads, **opts)
        payload["loo"] = loo
        payload["loo_mode"] = "cold" if args.cold else "warm"
        line += f"  LOO {round(loo * N)}/{N}"
    if args.cv:
        try:
            K, p = args.cv.split(",")
            K, p = int(K), float(p)
        except ValueError:
            raise InputError(f"--cv expects K,P, got {args.cv!r}") from None
        cv, redraws = cv_error(
            ds.X, ds.labels, fam, K=K, p=p, seed=args.seed, warm=not args.cold, threads=args.threads, **opts
        )
        payload["cv"] = {"K": K, "p": p, "error": cv, "redraws": redraws}
        line += f"  CV({K},{p}) {cv:.4f}"
    print(line)
    _write(args.out, "report.json", dataio.dumps(payload))
    _write(args.out, "model.json", dataio.dumps({"model": dataio.mixture_to_dict(model.mixture, model.classes)}))
    if args.ellipses:
        _write(args.out, "ellipses.csv", dataio.ellipses_csv(model.mixture, _pair(args.ellipses, ds.columns), ds.columns))
    return 0


def _candidate(text: str):
    text = text.strip()
    if ":" in text:
        kind, G = text.split(":")
        try:
            return IntermediateFamily(FamilyKind(kind.lower()), int(G))
        except ValueError:
            raise InputError(f"bad candidate {text!r}") from None
    return text.upper()


def cmd_sweep(args) -> int:
    ds = dataio.load_dataset(args.data, args.label)
    context = Context(args.context)
    if context is Context.DISCRIMINANT:
        if ds.labels is None:
            raise InputError("a discriminant sweep needs --label")
        k = len(np.unique(ds.labels))
        opts = dict(c_sh=args.csh, c_vol=args.cvol, nstart1=args.nstart1, seed=args.seed)
    else:
        if args.k is None:
            raise InputError("a clustering sweep needs --k")
        k = args.k
        opts = dict(
            c_sh=args.csh, c_vol=args.cvol, nstart1=args.nstart1, nstart2=args.nstart2,
            tol=args.tol, max_iter=args.max_iter, seed=args.seed,
        )
    cands = [_candidate(c) for c in args.candidates.split(",") if c.strip()]
    rows = sweep(ds.X, k, cands, context, labels=ds.labels, threads=args.threads, **opts)
    print(sweep_table(rows))
    _write(args.out, "sweep.json", dataio.dumps({"command": "sweep", "rows": json.loads(sweep_json(rows))}))
    _write(args.out, "sweep.txt", sweep_table(rows) + "\n")
    return 0


def cmd_simulate(args) -> int:
    opts = dict(c_sh=args.csh, c_vol=args.cvol, nstart1=args.nstart1)
    if args.setting == "clustering":
        opts["nstart2"] = args.nstart2
    try:
        res = recovery_experiment(
            args.design, args.setting, n=args.n, replicates=args.reps, seed=args.seed, threads=args.threads, **opts
        )
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"design {args.design!r}: {exc}") from None
    print(win_table(res))
    _write(args.out, "simulate.json", dataio.dumps({"command": "simulate", **res}))
    _write(args.out, "simulate.txt", win_table(res) + "\n")
    return 0


def cmd_preprocess(args) -> int:
    ds = dataio.load_dataset(args.data, args.label)
    keep = np.sum(ds.X**2, axis=0) >= args.min_ss
    X = ds.X[:, keep]
    if not 1 <= args.pca <= min(X.shape):
        raise InputError(f"--pca must be between 1 and {min(X.shape)}")
    centered = X - X.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    scores = u[:, : args.pca] * s[: args.pca]
    header = [f"PC{j + 1}" for j in range(args.pca)] + ([ds.label_column] if ds.labels is not None else [])
    lines = [",".join(header)]
    for i, row in enumerate(scores):
        cells = [format(v, ".17g") for v in row] + ([str(ds.labels[i])] if ds.labels is not None else [])
        lines.append(",".join(cells))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"kept {int(keep.sum())} of {len(keep)} columns; wrote {args.pca} components to {args.out}")
    return 0


COMMANDS = {
    "classify-cov": cmd_classify_cov,
    "cluster": cmd_cluster,
    "da": cmd_da,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IpgmmError as exc:
        print(f"fit error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
