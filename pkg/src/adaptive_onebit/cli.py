"""Command-line front end.

Exit status: 0 on success, 1 on a usage error, 2 on a runtime failure
(unreadable or inconsistent files, failed recovery stages, solver errors).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .core import RNG_ALGORITHM, RngStream, as_matrix
from .dictionaries import KINDS, Dictionary, dictionary_from_kind, export_dictionary, import_dictionary
from .experiments import (
    ExperimentConfig,
    ImageExperimentConfig,
    block_stats_csv,
    fit_log2_slope,
    load_config,
    run_error_vs_m,
    run_error_vs_T,
    run_image_experiment,
    summarize,
    summary_csv,
    trials_csv,
    write_pgm,
)
from .pipeline import MeasurementEnsemble, adaptive_recover, adaptive_sample, load_record, save_record
from .solvers import SolverParams
from .textio import read_matrix, read_vector, write_matrix


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _solver_flags(p):
    p.add_argument("--solver", choices=("lp", "admm"), default="lp", help="stage solver backend")
    p.add_argument("--max-iterations", type=int, default=SolverParams.max_iterations)


def _params(args) -> SolverParams:
    return SolverParams(method=args.solver, max_iterations=args.max_iterations)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaptive-onebit", description="Adaptive one-bit compressed sensing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage diagnostics")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="take adaptive one-bit measurements of a signal")
    p.add_argument("--A", required=True, dest="A", help="measurement matrix file (m x n)")
    p.add_argument("--D", required=True, dest="D", help="dictionary file (n x N)")
    p.add_argument("--f", required=True, dest="f", help="signal vector file")
    p.add_argument("--r", required=True, type=float, help="bound on ||f||_2")
    p.add_argument("--s", required=True, type=float, help="sparsity level")
    p.add_argument("--stages", required=True, type=int, dest="T")
    p.add_argument("--seed", required=True, type=int, help="dither seed")
    p.add_argument("--dither-scale", type=float, default=1.0)
    p.add_argument("--out", required=True, help="record file to write")
    _solver_flags(p)

    p = sub.add_parser("recover", help="reconstruct a signal from a record file")
    p.add_argument("--A", required=True, dest="A")
    p.add_argument("--D", required=True, dest="D")
    p.add_argument("--record", required=True)
    p.add_argument("--out", required=True, help="estimate vector file to write")
    p.add_argument("--trace", help="per-stage CSV to write")
    p.add_argument("--truth", help="true signal file, adds an error column to the trace")
    _solver_flags(p)

    p = sub.add_parser("experiment", help="Monte Carlo experiments")
    esub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in ("error-vs-m", "error-vs-T"):
        e = esub.add_parser(name)
        e.add_argument("--config", required=True)
        e.add_argument("--trials-csv", required=True)
        e.add_argument("--summary-csv", required=True)
        e.add_argument("--workers", type=int, help="override the config's worker count")
    e = esub.add_parser("image")
    e.add_argument("--config", required=True)
    e.add_argument("--pgm", required=True, help="reconstruction image to write")
    e.add_argument("--blocks-csv", help="per-block statistics to write")
    e.add_argument("--workers", type=int)

    p = sub.add_parser("dict", help="dictionary files")
    dsub = p.add_subparsers(dest="dict_command", required=True, parser_class=_Parser)
    d = dsub.add_parser("export", help="generate a dictionary and write it")
    d.add_argument("--kind", required=True, choices=[k for k in KINDS if k != "custom"])
    d.add_argument("--n", required=True, type=int)
    d.add_argument("--N", required=True, type=int, dest="N")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d = dsub.add_parser("import", help="validate a dictionary file and print its properties")
    d.add_argument("path")

    sub.add_parser("version", help="print version and RNG algorithm")
    return parser


def _cmd_sample(args):
    A = as_matrix(read_matrix(args.A)[0], "A")
    D = import_dictionary(args.D)
    f = read_vector(args.f)
    record, trace = adaptive_sample(
        MeasurementEnsemble(A, args.T), f, D, args.r, args.s, args.T, RngStream(args.seed), _params(args),
        args.dither_scale,
    )  # fmt: skip
    save_record(args.out, record)
    print(f"wrote {args.T} stages x {record.q} bits to {args.out}")
    return 2 if trace.failed else 0


def _cmd_recover(args):
    A = as_matrix(read_matrix(args.A)[0], "A")
    D = import_dictionary(args.D)
    record = load_record(args.record)
    f_hat, trace = adaptive_recover(MeasurementEnsemble(A, record.T), D, record, record.r, record.s, record.T,
                                    _params(args))  # fmt: skip
    write_matrix(args.out, f_hat)
    truth = read_vector(args.truth) if args.truth else None
    if args.trace:
        errors = trace.errors(truth) if truth is not None else None
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "error", "solver_iterations", "violation", "failed"])
            for k, st in enumerate(trace.stages):
                iters = (st.solve.iterations if st.solve else 0) + (st.projection.iterations if st.projection else 0)
                viol = repr(st.solve.violation) if st.solve else ""
                err = repr(float(errors[k])) if errors is not None else ""
                w.writerow([st.stage, err, iters, viol, int(st.failed)])
    if trace.failed:
        bad = [st.stage for st in trace.stages if st.failed]
        print(f"error: recovery stages {bad} failed; estimate written anyway", file=sys.stderr)
        return 2
    return 0


def _cmd_experiment(args):
    if args.experiment == "image":
        cfg = load_config(args.config, ImageExperimentConfig)
        if args.workers:
            cfg = replace(cfg, workers=args.workers)
        result = run_image_experiment(cfg)
        write_pgm(args.pgm, result.reconstruction)
        if args.blocks_csv:
            with open(args.blocks_csv, "w", newline="") as fh:
                fh.write(block_stats_csv(result.blocks))
        print(f"PSNR {result.psnr:.2f} dB over {len(result.blocks)} blocks")
        return 2 if any(b.failed for b in result.blocks) else 0

    cfg: ExperimentConfig = load_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    run = run_error_vs_m if args.experiment == "error-vs-m" else run_error_vs_T
    results = run(cfg)
    rows = summarize(results)
    with open(args.trials_csv, "w", newline="") as fh:
        fh.write(trials_csv(results))
    with open(args.summary_csv, "w", newline="") as fh:
        fh.write(summary_csv(rows, cfg.mean_in_db))
    for row in rows:
        print(f"m={row.m} T={row.T} mean={row.mean_norm_error:.4g} median={row.median_norm_error:.4g} "
              f"failed={row.failed}/{row.trials}")  # fmt: skip
    if args.experiment == "error-vs-T" and len(rows) > 1:
        print(f"slope of log2(mean error) vs T: {fit_log2_slope([r.T for r in rows], [r.mean_norm_error for r in rows]):.3f}")
    return 0


def _cmd_dict(args):
    if args.dict_command == "export":
        D = dictionary_from_kind(args.kind, args.n, args.N, RngStream(args.seed))
        export_dictionary(args.out, D)
        print(f"wrote {D.kind} dictionary {D.n}x{D.N} to {args.out}")
        return 0
    D: Dictionary = import_dictionary(args.path)
    gap = float(np.max(np.abs(D.matrix @ D.matrix.T - np.eye(D.n))))
    print(f"kind={D.kind} n={D.n} N={D.N} max|DD^T - I|={gap:.3g}")
    return 0


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "version":
            print(f"adaptive-onebit {__version__}")
            print(f"rng {RNG_ALGORITHM}")
            return 0
        handler = {"sample": _cmd_sample, "recover": _cmd_recover, "experiment": _cmd_experiment, "dict": _cmd_dict}
        return handler[args.command](args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
