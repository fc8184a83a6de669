"""Command-line surface.

Subcommands cover the whole pipeline: correct / deblur / defringe an image,
estimate-kernel for a single patch, degrade for dataset generation, calibrate
for the affine blur coefficients, eval for TSV metrics, fit-psf for empirical
PSF grids, and serve to run the HTTP service.  The correction commands accept
--server URL to delegate to a running service instead of working in-process.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical or validation
error; every failure prints a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .estimation import (
    JPEG_MODEL,
    LINEAR_MODEL,
    AffineBlurModel,
    calibrate,
    load_calibration_corpus,
    save_model,
)
from .deblur import InversePolynomial
from .fringe_net import WeightFormatError
from .image import GAMMA22, PlanarImage
from .imageio import ImageIoError, read_image, write_image
from .pipeline import (
    FRINGE_METHODS,
    PipelineConfig,
    correct,
    deblur_only,
    default_threads,
    defringe_only,
    estimate_patch_kernel,
)
from .psf import fit_gaussian, rasterize, read_epsf, write_epsf, EmpiricalPsf


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we reserve 2 for I/O
        raise UsageError(message)


def _parse_coeffs(text: str) -> str | AffineBlurModel:
    if text in ("auto", "linear", "jpeg"):
        return {"auto": "auto", "linear": LINEAR_MODEL, "jpeg": JPEG_MODEL}[text]
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"--coeffs expects 'linear', 'jpeg' or 'C,SIGMA_B', got {text!r}")
    try:
        return AffineBlurModel(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise UsageError(f"bad --coeffs value: {exc}") from exc


def _parse_poly(text: str) -> InversePolynomial:
    try:
        return InversePolynomial(tuple(float(p) for p in text.split(",")))
    except ValueError as exc:
        raise UsageError(f"bad --poly value: {exc}") from exc


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise UsageError(f"{path}: expected key=value, got {line!r}")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ImageIoError(f"{path}: {exc}") from exc
    return values


_CONFIG_KEYS = ("patch", "overlap", "coeffs", "poly", "fringe_method", "weights", "threads", "jpeg")


def _build_config(args) -> tuple[PipelineConfig, bool]:
    """Merge config-file values with flags (flags win); returns (config, jpeg)."""
    merged = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
        unknown = set(file_values) - set(_CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_values)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value
    jpeg = str(merged.get("jpeg", "")).lower() in ("1", "true", "yes")
    try:
        config = PipelineConfig(
            patch_size=int(merged.get("patch", 400)),
            overlap=float(merged.get("overlap", 0.25)),
            coefficients=_parse_coeffs(merged["coeffs"]) if isinstance(merged.get("coeffs"), str)
            else merged.get("coeffs", "auto"),
            polynomial=_parse_poly(merged["poly"]) if isinstance(merged.get("poly"), str)
            else merged.get("poly", InversePolynomial()),
            fringe_method=str(merged.get("fringe_method", "cnn")),
            weights_path=merged.get("weights"),
            threads=int(merged.get("threads", default_threads())),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return config, jpeg


def _load_input(path: str, jpeg: bool) -> PlanarImage:
    image = read_image(path)
    return PlanarImage(image.data, GAMMA22) if jpeg else image


def _add_pipeline_flags(sub, io: bool = True):
    if io:
        sub.add_argument("input")
        sub.add_argument("output")
    sub.add_argument("--patch", type=int, default=None, help="patch size (default 400)")
    sub.add_argument("--overlap", type=float, default=None, help="overlap ratio (default 0.25)")
    sub.add_argument("--coeffs", default=None, help="'linear', 'jpeg' or 'C,SIGMA_B'")
    sub.add_argument("--poly", default=None, help="inverse polynomial a0,a1,a2[,a3]")
    sub.add_argument("--fringe-method", dest="fringe_method", choices=FRINGE_METHODS, default=None)
    sub.add_argument("--weights", default=os.environ.get("ABERREX_WEIGHTS") or None)
    sub.add_argument("--jpeg", action="store_true", help="treat the input as gamma-encoded JPEG")
    sub.add_argument("--threads", type=int, default=None)
    sub.add_argument("--config", default=None, help="key=value config file; flags override")
    sub.add_argument("--server", default=None, help="delegate to a running aberrex service")
    sub.add_argument("--bits", type=int, default=8, help="output bit depth for PNG/PPM")


def _remote(args, endpoint: str) -> int:
    import httpx

    payload = {
        "input_path": os.path.abspath(args.input),
        "output_path": os.path.abspath(args.output),
        "options": {
            k: v
            for k, v in {
                "patch": args.patch,
                "overlap": args.overlap,
                "coeffs": args.coeffs,
                "poly": args.poly,
                "fringe_method": args.fringe_method,
                "weights": args.weights,
                "jpeg": bool(args.jpeg),
                "threads": args.threads,
            }.items()
            if v is not None
        },
    }
    reply = httpx.post(f"{args.server.rstrip('/')}{endpoint}", json=payload, timeout=3600.0)
    if reply.status_code != 200:
        raise ValueError(f"service error {reply.status_code}: {reply.text}")
    body = reply.json()
    print(f"{body['output_path']}  ({body['seconds']:.2f}s, {body['patches']} patches)")
    return 0


def _cmd_stage(args, runner, endpoint: str) -> int:
    if args.server:
        return _remote(args, endpoint)
    config, jpeg = _build_config(args)
    image = _load_input(args.input, jpeg)
    result = runner(image, config)
    write_image(result, args.output, bits=args.bits)
    return 0


def _cmd_estimate_kernel(args) -> int:
    config, jpeg = _build_config(args)
    image = _load_input(args.input, jpeg)
    try:
        row, col = (int(p) for p in args.patch_origin.split(","))
    except ValueError as exc:
        raise UsageError(f"--patch-origin expects 'row,col', got {args.patch_origin!r}") from exc
    est = estimate_patch_kernel(image, (row, col), config)
    print(f"theta_deg\t{math.degrees(est.theta):.3f}")
    for c, name in enumerate("RGB"):
        flat = " (flat)" if est.flat[c] else ""
        print(f"{name}\tsigma={est.sigma[c]:.4f}\trho={est.rho[c]:.4f}{flat}")
    if args.write_kernels:
        kernels = [rasterize(est.theta, est.sigma[c], est.rho[c]) for c in range(3)]
        side = max(k.side for k in kernels)
        taps = np.zeros((3, side, side))
        for c, k in enumerate(kernels):  # center each kernel on the common grid
            r = (side - k.side) // 2
            taps[c, r : r + k.side, r : r + k.side] = k.taps
        write_epsf([EmpiricalPsf(taps)], args.write_kernels)
        print(f"kernels written to {args.write_kernels}")
    return 0


def _parse_range(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"{flag} expects 'LO,HI', got {text!r}")
    return float(parts[0]), float(parts[1])


def _cmd_degrade(args) -> int:
    from .simulate import DatasetConfig, generate_dataset

    defaults = DatasetConfig()
    config = DatasetConfig(
        crop=args.crop,
        std_range=_parse_range(args.std_range, "--std-range") if args.std_range
        else defaults.std_range,
        shift_limit=args.shift_limit if args.shift_limit is not None else defaults.shift_limit,
        alpha_range=_parse_range(args.alpha_range, "--alpha-range") if args.alpha_range
        else defaults.alpha_range,
        beta_range=_parse_range(args.beta_range, "--beta-range") if args.beta_range
        else defaults.beta_range,
    )
    manifest = generate_dataset(args.source, args.count, args.out_dir, config, seed=args.seed)
    print(manifest)
    return 0


def _cmd_calibrate(args) -> int:
    pairs = load_calibration_corpus(args.corpus)
    model = calibrate(pairs)
    print(f"C={model.slope:.6f}")
    print(f"sigma_b={model.intercept:.6f}")
    if args.out:
        save_model(model, args.out)
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import evaluate_pairs

    rows = evaluate_pairs(
        args.pairs, fringe_method=args.fringe_method or "cnn", weights_path=args.weights
    )
    print("id\tR\tE_before\tE_after\tssim_blurry\tssim_deblurred")
    for sample_id, *scores in rows:
        print(str(sample_id) + "\t" + "\t".join(f"{v:.6f}" for v in scores))
    return 0


def _cmd_fit_psf(args) -> int:
    records = read_epsf(args.epsf)
    print("record\tchannel\ttheta_deg\tsigma\trho")
    for i, rec in enumerate(records):
        for c in range(rec.channels):
            theta, sigma, rho = fit_gaussian(rec.taps[c])
            print(f"{i}\t{c}\t{math.degrees(theta):.3f}\t{sigma:.4f}\t{rho:.4f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="aberrex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aberrex {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("correct", "full two-stage correction"),
        ("deblur", "stage 1 only: blind Gaussian deblurring"),
        ("defringe", "stage 2 only: red/blue fringe correction"),
    ):
        sub = subs.add_parser(name, help=helptext)
        _add_pipeline_flags(sub)

    est = subs.add_parser("estimate-kernel", help="print the blur estimate for one patch")
    est.add_argument("input")
    est.add_argument("--patch-origin", default="0,0", help="row,col of the patch anchor")
    est.add_argument("--write-kernels", default=None, help="write rasterized kernels (EPSF)")
    _add_pipeline_flags(est, io=False)

    deg = subs.add_parser("degrade", help="generate synthetic (clean, aberrated) pairs")
    deg.add_argument("source", help="directory of source images")
    deg.add_argument("out_dir")
    deg.add_argument("--count", type=int, required=True)
    deg.add_argument("--seed", type=int, default=0)
    deg.add_argument("--crop", type=int, default=128)
    deg.add_argument("--std-range", dest="std_range", default=None, help="'LO,HI' blur stds")
    deg.add_argument("--shift-limit", dest="shift_limit", type=float, default=None)
    deg.add_argument("--alpha-range", dest="alpha_range", default=None, help="'LO,HI' shot noise")
    deg.add_argument("--beta-range", dest="beta_range", default=None, help="'LO,HI' read noise")

    cal = subs.add_parser("calibrate", help="fit affine blur coefficients from a corpus")
    cal.add_argument("corpus", help="directory of (pfm, txt) pairs")
    cal.add_argument("--out", default=None, help="write the model file here")

    ev = subs.add_parser("eval", help="TSV metrics over a degraded-pairs directory")
    ev.add_argument("pairs", help="directory produced by degrade")
    ev.add_argument("--fringe-method", dest="fringe_method", choices=FRINGE_METHODS, default=None)
    ev.add_argument("--weights", default=os.environ.get("ABERREX_WEIGHTS") or None)

    fp = subs.add_parser("fit-psf", help="Gaussian fits of an empirical PSF grid file")
    fp.add_argument("epsf")

    srv = subs.add_parser("serve", help="run the HTTP correction service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8023)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "correct":
            return _cmd_stage(args, correct, "/v1/correct")
        if args.command == "deblur":
            return _cmd_stage(args, deblur_only, "/v1/deblur")
        if args.command == "defringe":
            return _cmd_stage(args, defringe_only, "/v1/defringe")
        if args.command == "estimate-kernel":
            return _cmd_estimate_kernel(args)
        if args.command == "degrade":
            return _cmd_degrade(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "fit-psf":
            return _cmd_fit_psf(args)
        if args.command == "serve":
            return _cmd_serve(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"aberrex: usage error: {exc}", file=sys.stderr)
        return 1
    except (ImageIoError, WeightFormatError, OSError) as exc:
        print(f"aberrex: i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"aberrex: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
