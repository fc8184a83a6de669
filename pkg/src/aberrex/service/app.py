"""HTTP face of the correction engine.

A long-running service keeps the fringe network weights loaded and serves
repeated corrections; the CLI subcommands double as thin clients.  Images are
exchanged by filesystem path, which is the natural unit for multi-megapixel
work on the same host.
"""

from __future__ import annotations

import math
import time

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..cli import UsageError, _parse_coeffs, _parse_poly
from ..fringe_net import WeightFormatError
from ..image import GAMMA22, PlanarImage
from ..imageio import ImageIoError, read_image, write_image
from ..pipeline import (
    PipelineConfig,
    correct,
    deblur_only,
    defringe_only,
    estimate_patch_kernel,
    packaged_weights_path,
    tile,
)
from ..psf import fit_gaussian, read_epsf
from .schemas import (
    ChannelEstimate,
    CorrectOptions,
    FitPsfRequest,
    FitPsfResponse,
    HealthResponse,
    KernelEstimateRequest,
    KernelEstimateResponse,
    PsfFit,
    StageRequest,
    StageResponse,
)


def _config_from_options(options: CorrectOptions) -> PipelineConfig:
    try:
        return PipelineConfig(
            patch_size=options.patch,
            overlap=options.overlap,
            coefficients=_parse_coeffs(options.coeffs) if options.coeffs else "auto",
            polynomial=_parse_poly(options.poly) if options.poly else PipelineConfig().polynomial,
            fringe_method=options.fringe_method,
            weights_path=options.weights,
            threads=options.threads,
        )
    except (UsageError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _load(path: str, jpeg: bool) -> PlanarImage:
    try:
        image = read_image(path)
    except ImageIoError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    return PlanarImage(image.data, GAMMA22) if jpeg else image


def create_app() -> FastAPI:
    app = FastAPI(title="aberrex", version=__version__)

    def _run_stage(request: StageRequest, runner) -> StageResponse:
        config = _config_from_options(request.options)
        image = _load(request.input_path, request.options.jpeg)
        started = time.perf_counter()
        try:
            result = runner(image, config)
        except WeightFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            write_image(result, request.output_path, bits=request.options.bits)
        except (ImageIoError, OSError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        grid = tile(image, config.patch_size, config.overlap)
        return StageResponse(
            output_path=request.output_path,
            seconds=time.perf_counter() - started,
            patches=len(grid.origins),
            height=image.height,
            width=image.width,
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            version=__version__,
            default_weights=packaged_weights_path() is not None,
        )

    @app.post("/v1/correct", response_model=StageResponse)
    def correct_endpoint(request: StageRequest) -> StageResponse:
        return _run_stage(request, correct)

    @app.post("/v1/deblur", response_model=StageResponse)
    def deblur_endpoint(request: StageRequest) -> StageResponse:
        return _run_stage(request, deblur_only)

    @app.post("/v1/defringe", response_model=StageResponse)
    def defringe_endpoint(request: StageRequest) -> StageResponse:
        return _run_stage(request, defringe_only)

    @app.post("/v1/estimate-kernel", response_model=KernelEstimateResponse)
    def estimate_endpoint(request: KernelEstimateRequest) -> KernelEstimateResponse:
        config = _config_from_options(request.options)
        image = _load(request.input_path, request.options.jpeg)
        try:
            est = estimate_patch_kernel(image, (request.origin_row, request.origin_col), config)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return KernelEstimateResponse(
            theta_radians=est.theta,
            theta_degrees=math.degrees(est.theta),
            channels=[
                ChannelEstimate(
                    channel=name, sigma=est.sigma[c], rho=est.rho[c], flat=est.flat[c]
                )
                for c, name in enumerate("RGB")
            ],
        )

    @app.post("/v1/fit-psf", response_model=FitPsfResponse)
    def fit_psf_endpoint(request: FitPsfRequest) -> FitPsfResponse:
        try:
            records = read_epsf(request.epsf_path)
        except ImageIoError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        fits = []
        for i, rec in enumerate(records):
            for c in range(rec.channels):
                theta, sigma, rho = fit_gaussian(rec.taps[c])
                fits.append(
                    PsfFit(
                        record=i,
                        channel=c,
                        theta_degrees=math.degrees(theta),
                        sigma=sigma,
                        rho=rho,
                    )
                )
        return FitPsfResponse(fits=fits)

    return app


app = create_app()
