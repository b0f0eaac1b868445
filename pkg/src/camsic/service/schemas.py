"""Request/response models for the codec service.

All image/container/weight references are filesystem paths: the service
is a local engine front end (the CLI talks to it in-process by default),
not a blob store.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorDetail(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorDetail


class EncodeRequest(BaseModel):
    left: str
    right: str
    out: str
    weights: str | None = None
    steps: int | None = Field(default=None, ge=1)
    log: str | None = None
    mode: str = "content"


class ViewBits(BaseModel):
    hyper_bits: int
    main_bits: int


class EncodeResponse(BaseModel):
    out: str
    container_bytes: int
    bpp: float
    bits_actual: int
    bits_estimated: float
    gap_bits: float
    views: list[ViewBits]
    saturated: int
    steps: int


class DecodeRequest(BaseModel):
    stream: str
    out_left: str
    out_right: str
    weights: str | None = None
    ref_left: str | None = None
    ref_right: str | None = None


class DecodeResponse(BaseModel):
    out_left: str
    out_right: str
    psnr_left: float | None = None
    psnr_right: float | None = None


class InspectRequest(BaseModel):
    stream: str


class InspectResponse(BaseModel):
    version: int
    steps: int
    mode: str
    config_digest: str
    extents: list[list[int]]
    hyper_bytes: list[int]
    main_bytes: list[int]
    total_bytes: int
    bpp: float


class RdReportRequest(BaseModel):
    points: str
    anchor: str
    csv_out: str | None = None


class RdReportResponse(BaseModel):
    bd_rate_percent: float
    bd_psnr_db: float
    csv: str
    csv_out: str | None = None


class CheckItem(BaseModel):
    name: str
    passed: bool
    detail: str


class SelftestResponse(BaseModel):
    ok: bool
    checks: list[CheckItem]
