"""Command line entry point ``qci``.

Subcommands::

    qci spectrum CONFIG     build and export the joint spectrum table
    qci geometry CONFIG     rank scan of the moment map, exported as a grid table
    qci verify CONFIG       run the configured sweep and write a report
    qci report REPORT...    one summary row per report

Exit codes: 0 on success or a passing verification, 2 when a verification
misses its exponent threshold, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import QCIError
from .experiments import build_setup
from .geometry import PhaseGrid, scan_regions
from .spectrum import build_sor_spectrum, torus_box_spectrum
from .weyl import summary_rows, verify

log = logging.getLogger("qcilab")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _outdir(cfg: ExperimentConfig, override: str | None) -> Path:
    out = Path(override or cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise QCIError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise QCIError(f"output directory {out} is not writable")
    return out


def _attach_log(out: Path, name: str) -> logging.Handler:
    handler = logging.FileHandler(out / f"{name}.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg, args.output)
    handler = _attach_log(out, cfg.name)
    try:
        sysd = cfg.system
        lam_max = float(sysd.get("lam_max", max(cfg.lambdas) if cfg.lambdas else 10.0))
        if sysd["kind"] == "torus":
            spec = torus_box_spectrum(int(sysd.get("dim", 2)), int(np.floor(lam_max)))
        else:
            setup = build_setup(cfg)
            prof = setup.system.profile
            spec = build_sor_spectrum(prof, lam_max, prof.grid_size, threads=cfg.threads)
        path = spec.export(out / f"{cfg.name}_spectrum.csv")
        log.info("wrote %d joint eigenvalues to %s", len(spec), path)
        print(path)
    finally:
        log.removeHandler(handler)
        handler.close()
    return EXIT_OK


def cmd_geometry(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg, args.output)
    handler = _attach_log(out, cfg.name)
    try:
        setup = build_setup(cfg)
        g = cfg.geometry
        if setup.system.kind == "torus":
            pts = tuple(map(tuple, setup.points))
        else:
            L = setup.system.profile.L
            pts = tuple(np.linspace(0.0, L, int(g.get("n_sigma", 41)))[1:-1])
        rep = scan_regions(setup.system, PhaseGrid(pts, int(g.get("n_angles", 64))))
        path = rep.export(out / f"{cfg.name}_geometry.csv")
        log.info("rank scan: %d cells, %d degenerate, critical meridians %s",
                 rep.rank.size, int(rep.degenerate.sum()), rep.critical_meridians)
        print(path)
    finally:
        log.removeHandler(handler)
        handler.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg, args.output)
    handler = _attach_log(out, cfg.name)
    try:
        log.info("verify %s target=%s lambdas=%s", cfg.name, cfg.target, list(cfg.lambdas))
        rep = verify(cfg)
        rpath, tpath = rep.write(out)
        status = "PASS" if rep.passed else "FAIL"
        log.info("%s beta=%.4f threshold=%.3f (%s) in %.1fs",
                 status, rep.beta, rep.threshold, rep.exponent_sense, rep.runtime_s)
        print(f"{status} {cfg.name}: beta={rep.beta:.4f} threshold={rep.threshold:g} "
              f"report={rpath} table={tpath}")
    finally:
        log.removeHandler(handler)
        handler.close()
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report(args) -> int:
    rows = summary_rows(args.reports)
    fields = ["experiment", "target", "beta", "threshold", "passed", "runtime_s"]
    sink = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        w = csv.DictWriter(sink, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    finally:
        if args.output:
            sink.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qci", description="Joint spectral asymptotics verification lab")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (falls back to QCI_THREADS)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, helptext in (("spectrum", cmd_spectrum, "build and export a joint spectrum"),
                               ("geometry", cmd_geometry, "rank scan of the moment map"),
                               ("verify", cmd_verify, "run a verification sweep")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
        sp.add_argument("-o", "--output", default=None, help="override the output directory")
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        sp.set_defaults(func=fn)
    rp = sub.add_parser("report", help="summarise report files")
    rp.add_argument("reports", nargs="+")
    rp.add_argument("-o", "--output", default=None, help="write the summary table here")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QCIError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"qci: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
