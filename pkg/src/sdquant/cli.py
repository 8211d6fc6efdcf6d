"""Command line front end.

    sdq quantize --mode {msq|msq-dither|sd1d|sd2d} --bits D --order R
                 [--patch RxC] [--seed S] [--fine-tail] IN.pgm OUT.sdq
    sdq reconstruct --class {naive|c1|c2|c3} [--beta B] [--config solver.cfg]
                 [--truth IN.pgm --report REPORT.json] [--brighten]
                 [--workers W] IN.sdq OUT.pgm
    sdq experiment NAME [--seed S] [--outdir DIR]

Exit codes: 0 success, 2 format or usage error, 3 solver non-convergence,
4 encoder instability.
"""

import argparse
import json
import sys

from .container import ContainerFormatError, read_image, write_image
from .decoder import SolverConfig, SolverDivergenceError, load_solver_config
from .encoder import EncoderInstabilityError
from .experiments import EXPERIMENTS, run_experiment
from .pipeline import PatchLayout, quantize_image, reconstruct_image

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_SOLVER = 3
EXIT_ENCODER = 4


def _parse_patch(text):
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("patch must look like 16x16") from exc


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sdq",
        description="Adaptive sigma-delta quantization of images with "
        "TV-regularized decoding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    quant = sub.add_parser("quantize", help="encode an image to an .sdq container")
    quant.add_argument("input")
    quant.add_argument("output")
    quant.add_argument(
        "--mode",
        choices=["msq", "msq-dither", "sd1d", "sd2d"],
        default="sd2d",
    )
    quant.add_argument("--bits", type=int, default=3, help="bit depth d")
    quant.add_argument("--order", type=int, default=1, help="feedback order r")
    quant.add_argument(
        "--patch",
        type=_parse_patch,
        default=(0, 0),
        help="patch size RxC (0x0 = whole image)",
    )
    quant.add_argument("--remainder", choices=["ragged", "pad-reflect"], default="ragged")
    quant.add_argument("--seed", type=int, default=0)
    quant.add_argument(
        "--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"),
        help="signal range the alphabet covers",
    )
    quant.add_argument(
        "--margin", type=int, default=None,
        help="extra alphabet levels per side (default: what the order needs)",
    )
    quant.add_argument(
        "--fine-tail", action="store_true",
        help="re-encode the last r samples of each column on the fine grid",
    )

    rec = sub.add_parser("reconstruct", help="decode an .sdq container to an image")
    rec.add_argument("input")
    rec.add_argument("output")
    rec.add_argument(
        "--class", dest="klass", choices=["naive", "c1", "c2", "c3"], default="naive"
    )
    rec.add_argument("--beta", type=int, default=1, help="TV order")
    rec.add_argument("--config", default=None, help="solver config file (key = value)")
    rec.add_argument("--truth", default=None, help="ground-truth image for scoring")
    rec.add_argument("--report", default=None, help="write a JSON quality report here")
    rec.add_argument(
        "--brighten", action="store_true",
        help="apply the cube-root brightness stretch before writing/scoring",
    )
    rec.add_argument("--workers", type=int, default=1)
    for name, kind in (
        ("tau", float),
        ("sigma", float),
        ("theta", float),
        ("outer-tol", float),
        ("outer-max-iters", int),
        ("admm-rho", float),
        ("admm-iters", int),
        ("feasibility-tol", float),
    ):
        rec.add_argument(f"--{name}", type=kind, default=None)

    exp = sub.add_parser("experiment", help="run a named study, emit CSV artifacts")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--outdir", default=".")
    return parser


def _solver_config(args) -> SolverConfig:
    cfg = SolverConfig()
    if args.config:
        cfg = load_solver_config(args.config, cfg)
    overrides = {}
    for field in (
        "tau",
        "sigma",
        "theta",
        "outer_tol",
        "outer_max_iters",
        "admm_rho",
        "admm_iters",
        "feasibility_tol",
    ):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _cmd_quantize(args):
    img = read_image(args.input)
    layout = PatchLayout(args.patch[0], args.patch[1], args.remainder)
    blob = quantize_image(
        img,
        args.mode,
        bits=args.bits,
        order=args.order,
        layout=layout,
        seed=args.seed,
        value_range=tuple(args.range),
        margin_levels=args.margin,
        fine_tail=args.fine_tail,
    )
    with open(args.output, "wb") as fh:
        fh.write(blob)
    return EXIT_OK


def _cmd_reconstruct(args):
    with open(args.input, "rb") as fh:
        blob = fh.read()
    cfg = _solver_config(args)
    truth = read_image(args.truth) if args.truth else None
    img, info = reconstruct_image(
        blob,
        klass=args.klass,
        beta=args.beta,
        cfg=cfg,
        truth=truth,
        apply_brighten=args.brighten,
        workers=args.workers,
    )
    write_image(args.output, img.clip(0.0, 1.0))
    if args.report:
        payload = {
            "decoder_class": args.klass,
            "beta": args.beta,
            "mode": info["mode"],
            "converged": info["converged"],
            "feasible": info["feasible"],
        }
        if "report" in info:
            payload["quality"] = info["report"].as_dict()
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if not info["converged"]:
        bad = sum(1 for r in info["results"] if not r.converged)
        print(
            f"warning: {bad} patch problem(s) stopped at the iteration cap",
            file=sys.stderr,
        )
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_experiment(args):
    summary = run_experiment(args.name, seed=args.seed, outdir=args.outdir)
    for key, value in sorted(summary.items()):
        if isinstance(value, dict):
            continue
        print(f"{args.name}: {key} = {value}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "quantize":
            return _cmd_quantize(args)
        if args.command == "reconstruct":
            return _cmd_reconstruct(args)
        return _cmd_experiment(args)
    except ContainerFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except EncoderInstabilityError as exc:
        print(f"error: encoder instability: {exc}", file=sys.stderr)
        return EXIT_ENCODER
    except SolverDivergenceError as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
