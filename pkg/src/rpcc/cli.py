"""Command-line entry point: ``rpcc {decompose,synth-bench,eval,generate}``.

Exit codes: 0 on success, 2 on I/O, format or configuration errors, 3 when the
solver hits a numerical failure. Errors are reported on stderr as a single
line starting with ``error:``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .metrics import auc, f1_fa, iou, threshold_sweep
from .solver import NumericalError, run
from .synth import GRID_HEADER, generate_instance, run_grid
from .tensor import BlockLayout, DimensionMismatch

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def cmd_decompose(args) -> int:
    values, hp = fileio.load_decompose_config(args.config)
    Y = fileio.read_tensor(values["input"])
    try:
        layout = BlockLayout.from_dims(Y.shape, values["block_dims"])
    except DimensionMismatch as exc:
        raise CliError(f"config key 'block_dims': {exc}") from None
    try:
        res = run(Y, layout, hp)
    except NumericalError as exc:
        raise CliError(f"solver failed: {exc} {exc.diagnostics}", EXIT_NUMERIC) from None

    out = Path(values["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_tensor(out / "Lhat.tnsr", res.Lhat)
    fileio.write_tensor(out / "Shat.tnsr", res.Shat)
    fileio.write_mask(out / "mask.txt", res.support)
    fileio.write_scores(out / "zbar.txt", res.zbar)
    summary = {
        "iterations": res.iterations,
        "converged": res.converged,
        "hardness": res.hardness,
        "support_size": len(res.support),
        "blocks": layout.K,
        "seconds": res.seconds,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"support {len(res.support)}/{layout.K} blocks, {res.iterations} iterations, converged={res.converged}")
    return EXIT_OK


def cmd_synth(args) -> int:
    values, hp = fileio.load_synth_config(args.config)
    rows = run_grid(
        values["R0"],
        values["rho"],
        values["trials"],
        hp,
        dims=values["dims"],
        block_dims=values["block_dims"],
        seed=hp.seed,
        rank_factor=values["rank_factor"],
    )
    if not values["timing"]:
        for row in rows:
            row["seconds"] = 0.0
    Path(values["output"]).parent.mkdir(parents=True, exist_ok=True)
    fileio.write_table(values["output"], GRID_HEADER, rows)
    print(f"wrote {len(rows)} rows to {values['output']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    K = args.blocks
    pred = fileio.read_mask(args.pred, K)
    truth = fileio.read_mask(args.truth, K)
    f1, fa, counts = f1_fa(pred, truth, K)
    print(f"f1 = {f1!r}")
    print(f"iou = {iou(pred, truth)!r}")
    print(f"fa = {fa!r}")
    print(f"tp = {counts.tp}, fp = {counts.fp}, fn = {counts.fn}, tn = {counts.tn}")
    if args.scores:
        scores = fileio.read_scores(args.scores)
        if scores.size != K:
            raise CliError(f"score file has {scores.size} entries, expected {K}")
        try:
            curves = threshold_sweep(scores, truth, np.linspace(0.0, 1.0, args.grid))
        except ValueError as exc:
            raise CliError(str(exc)) from None
        names = ("f1", "iou", "fa")
        rows = [
            {"tau": float(t), **{n: float(c.values[i]) for n, c in zip(names, curves)}}
            for i, t in enumerate(curves[0].tau)
        ]
        curves_path = Path(args.curves or Path(args.scores).with_suffix(".curves.csv"))
        fileio.write_table(curves_path, ("tau",) + names, rows)
        auc_path = curves_path.with_name(curves_path.stem + "_auc.csv")
        fileio.write_table(auc_path, ("metric", "auc"), [{"metric": n, "auc": auc(c)} for n, c in zip(names, curves)])
        for n, c in zip(names, curves):
            print(f"auc_{n} = {auc(c)!r}")
    return EXIT_OK


def cmd_generate(args) -> int:
    dims = fileio.int_list(args.dims)
    try:
        layout = BlockLayout.from_dims(dims, fileio.int_list(args.block_dims))
    except DimensionMismatch as exc:
        raise CliError(f"--block-dims: {exc}") from None
    inst = generate_instance(dims, layout, args.rank, args.rho, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_tensor(out / "Y.tnsr", inst.Y)
    fileio.write_tensor(out / "L.tnsr", inst.L)
    fileio.write_tensor(out / "S.tnsr", inst.S)
    fileio.write_mask(out / "truth_mask.txt", inst.support)
    print(f"{layout.K} blocks, {len(inst.support)} in the foreground support")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpcc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="split a tensor into low-rank background and block foreground")
    d.add_argument("--config", required=True)
    d.set_defaults(func=cmd_decompose)

    s = sub.add_parser("synth-bench", help="run the synthetic identifiability grid")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score a predicted block mask against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--blocks", "-K", type=int, required=True, help="total number of blocks")
    e.add_argument("--scores", help="per-block scores in [0, 1], one per line")
    e.add_argument("--curves", help="output CSV for threshold curves")
    e.add_argument("--grid", type=int, default=1001, help="number of thresholds on [0, 1]")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("--dims", required=True)
    g.add_argument("--block-dims", required=True)
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--rho", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (fileio.FormatError, fileio.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
