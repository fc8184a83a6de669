"""Request/response models for the correction service.

The service runs next to the files it touches, so images travel by path; the
CLI thin client sends absolute paths.
"""

from __future__ import annotations

from pydantic import BaseModel, Field, field_validator

from ..pipeline import FRINGE_METHODS


class CorrectOptions(BaseModel):
    patch: int = Field(400, ge=100)
    overlap: float = 0.25
    coeffs: str | None = None  # 'linear', 'jpeg' or 'C,SIGMA_B'
    poly: str | None = None  # 'a0,a1,a2[,a3]'
    fringe_method: str = "cnn"
    weights: str | None = None
    jpeg: bool = False
    threads: int = Field(1, ge=1)
    bits: int = 8

    @field_validator("overlap")
    @classmethod
    def _overlap_allowed(cls, value: float) -> float:
        if value not in (0.0, 0.25, 0.5):
            raise ValueError("overlap must be 0, 0.25 or 0.5")
        return value

    @field_validator("fringe_method")
    @classmethod
    def _method_known(cls, value: str) -> str:
        if value not in FRINGE_METHODS:
            raise ValueError(f"fringe_method must be one of {FRINGE_METHODS}")
        return value


class StageRequest(BaseModel):
    input_path: str
    output_path: str
    options: CorrectOptions = CorrectOptions()


class StageResponse(BaseModel):
    output_path: str
    seconds: float
    patches: int
    height: int
    width: int


class KernelEstimateRequest(BaseModel):
    input_path: str
    origin_row: int = 0
    origin_col: int = 0
    options: CorrectOptions = CorrectOptions()


class ChannelEstimate(BaseModel):
    channel: str
    sigma: float
    rho: float
    flat: bool


class KernelEstimateResponse(BaseModel):
    theta_radians: float
    theta_degrees: float
    channels: list[ChannelEstimate]


class FitPsfRequest(BaseModel):
    epsf_path: str


class PsfFit(BaseModel):
    record: int
    channel: int
    theta_degrees: float
    sigma: float
    rho: float


class FitPsfResponse(BaseModel):
    fits: list[PsfFit]


class HealthResponse(BaseModel):
    status: str
    version: str
    default_weights: bool
