"""Command-line entry point.

Exit codes: 0 success, 1 I/O or input error, 2 dimension error,
3 non-finite values inside the solver.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .bicubic import bicubic_upscale
from .image import DimensionError, downsample, read_image, write_image
from .metrics import psnr, ssim
from .numerics import NonFiniteError
from .solver import SolverAbort, SolverConfig, interpolate

EXIT_IO, EXIT_DIMS, EXIT_NAN = 1, 2, 3

# flag name -> SolverConfig field
FLAG_FIELDS = {
    "iterations": "iterations",
    "gamma": "gamma",
    "mu": "mu_init",
    "rho": "rho",
    "c1": "c1",
    "patch-size": "patch_size",
    "nlr-neighbors": "nlr_neighbors",
    "prior-neighbors": "prior_neighbors",
    "window": "window",
}


class ConfigError(ValueError):
    pass


def _field_types():
    defaults = SolverConfig()
    types = {}
    for f in dataclasses.fields(SolverConfig):
        value = getattr(defaults, f.name)
        types[f.name] = type(value) if value is not None else float
    return types


def _convert(field, text, types):
    kind = types[field]
    if text.lower() == "none" and field in ("k2", "h1"):
        return None
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field}: expected a boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{field}: cannot parse {text!r} as {kind.__name__}") from None


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; keys are flag names or field names."""
    types = _field_types()
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        field = FLAG_FIELDS.get(key, key.replace("-", "_"))
        if field not in types:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[field] = _convert(field, value, types)
    return out


def build_config(args) -> SolverConfig:
    """Defaults, then the config file, then explicit flags."""
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for flag, field in FLAG_FIELDS.items():
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            values[field] = v
    return SolverConfig(**values)


def _add_solver_flags(p):
    p.add_argument("--iterations", type=int, metavar="T")
    p.add_argument("--gamma", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--nlr-neighbors", type=int)
    p.add_argument("--prior-neighbors", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--config", help="flat key=value file; flags take precedence")


def _factor(p):
    p.add_argument("--factor", type=int, choices=(2, 3), required=True)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="nlrinterp",
        description="Image interpolation with weighted encoding and nonlocal regression.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("downsample", help="keep every l-th pixel from the origin")
    p.add_argument("input")
    p.add_argument("output")
    _factor(p)

    p = sub.add_parser("upscale-bicubic", help="bicubic baseline")
    p.add_argument("input")
    p.add_argument("output")
    _factor(p)

    p = sub.add_parser("interpolate", help="run the reconstruction on an LR image")
    p.add_argument("input")
    p.add_argument("output")
    _factor(p)
    _add_solver_flags(p)
    p.add_argument("--report", help="convergence report path "
                                    "(default: <output>.report.txt)")

    p = sub.add_parser("evaluate", help="PSNR and SSIM of an image against a reference")
    p.add_argument("reference")
    p.add_argument("test")

    p = sub.add_parser("benchmark", help="score methods over a directory of images")
    p.add_argument("dataset")
    p.add_argument("--factors", default="2", help="comma-separated, e.g. 2,3")
    p.add_argument("--methods", default="bicubic,nlr")
    p.add_argument("--output", required=True, help="text table path")
    p.add_argument("--csv", help="CSV path (default: output with .csv suffix)")
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p)
    return parser


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_downsample(args):
    img = read_image(args.input)
    lr = downsample(img, args.factor)
    write_image(args.output, lr)
    print(f"{img.shape[0]}x{img.shape[1]} -> {lr.shape[0]}x{lr.shape[1]}")
    return 0


def cmd_upscale(args):
    lr = read_image(args.input)
    hr = bicubic_upscale(lr, args.factor)
    write_image(args.output, hr)
    print(f"{lr.shape[0]}x{lr.shape[1]} -> {hr.shape[0]}x{hr.shape[1]}")
    return 0


def cmd_interpolate(args):
    cfg = build_config(args)
    y = read_image(args.input)
    x, report = interpolate(y, args.factor, cfg)
    write_image(args.output, x)
    report_path = args.report or f"{args.output}.report.txt"
    report.write(report_path)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    cons = np.max(np.abs(y - downsample(x, args.factor)))
    print(f"wrote {args.output} ({x.shape[0]}x{x.shape[1]}); |y - Dx|inf = {cons:.4e}")
    return 0


def cmd_evaluate(args):
    ref, test = read_image(args.reference), read_image(args.test)
    print(f"psnr {psnr(ref, test):.4f} dB")
    print(f"ssim {ssim(ref, test):.5f}")
    return 0


def cmd_benchmark(args):
    cfg = build_config(args)
    try:
        factors = tuple(int(f) for f in args.factors.split(","))
    except ValueError:
        raise ConfigError(f"bad --factors {args.factors!r}") from None
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    records = bm.run_benchmark(args.dataset, factors, methods, cfg, args.workers)
    bm.write_outputs(records, args.output, args.csv)
    print(bm.format_table(records), end="")
    print(f"config fingerprint {bm.config_fingerprint(cfg)}")
    return 0 if any(r.ok for r in records) else EXIT_IO


COMMANDS = {
    "downsample": cmd_downsample,
    "upscale-bicubic": cmd_upscale,
    "interpolate": cmd_interpolate,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DimensionError as exc:
        return _fail(EXIT_DIMS, str(exc))
    except (SolverAbort, NonFiniteError) as exc:
        return _fail(EXIT_NAN, str(exc))
    except (OSError, ValueError) as exc:
        # unreadable files, malformed images and bad config values
        return _fail(EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
