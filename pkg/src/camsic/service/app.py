"""FastAPI application exposing the codec engine.

Weights are resolved per request (explicit path, else the CAMSIC_WEIGHTS
environment variable) and cached by (path, mtime, size) so a long-lived
server does not reload them for every call.
"""

from __future__ import annotations

import json
import os

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, codec, metrics, ppm
from ..errors import CamsicError, FormatError
from ..selftest import run_selftest
from ..weights_io import (WEIGHTS_ENV_VAR, WeightStore, load_weights_file,
                          validate_manifest)
from . import schemas

_STATUS_BY_CODE = {
    "io_format": 400,
    "weights_manifest": 400,
    "digest_mismatch": 409,
    "corrupt": 422,
    "insufficient_points": 400,
    "internal": 500,
}


def _load_curve(path: str) -> list[tuple[float, float]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict):
        data = data.get("points")
    if not isinstance(data, list):
        raise FormatError(f"{path}: expected a list of RD points")
    curve = []
    for item in data:
        if isinstance(item, dict):
            try:
                curve.append((float(item["bpp"]), float(item["psnr"])))
            except (KeyError, TypeError, ValueError):
                raise FormatError(f"{path}: point needs bpp and psnr") from None
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            curve.append((float(item[0]), float(item[1])))
        else:
            raise FormatError(f"{path}: unrecognized RD point {item!r}")
    return curve


def _rate_log(result: codec.EncodeResult) -> dict:
    views = []
    for v in range(2):
        views.append({
            "hyper_bits": result.hyper_bits[v],
            "main_bits": result.main_bits[v],
            "iterations": [
                {"step": l.step, "tokens": int(l.positions.size),
                 "positions": [int(p) for p in l.positions],
                 "estimated_bits": l.estimated_bits,
                 "quantized_bits": l.quantized_bits}
                for l in result.logs[v]],
        })
    return {"views": views, "bits_actual": result.bits_actual,
            "bits_estimated": result.estimated_bits}


def create_app() -> FastAPI:
    app = FastAPI(title="camsic codec service", version=__version__)
    cache: dict[tuple[str, float, int], WeightStore] = {}

    def resolve_store(explicit: str | None) -> WeightStore:
        path = explicit or os.environ.get(WEIGHTS_ENV_VAR)
        if not path:
            raise FormatError("no weights given: pass a path or set "
                              f"{WEIGHTS_ENV_VAR}")
        try:
            st = os.stat(path)
        except OSError as exc:
            raise FormatError(f"cannot read weights {path}: {exc}") from None
        key = (os.path.abspath(path), st.st_mtime, st.st_size)
        if key not in cache:
            store = load_weights_file(path)
            validate_manifest(store)
            cache.clear()
            cache[key] = store
        return cache[key]

    @app.exception_handler(CamsicError)
    async def camsic_error_handler(_, exc: CamsicError):
        status = _STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse(status_code=status, content={
            "error": {"code": exc.code, "message": str(exc)}})

    @app.exception_handler(OSError)
    async def os_error_handler(_, exc: OSError):
        return JSONResponse(status_code=400, content={
            "error": {"code": "io_format", "message": str(exc)}})

    @app.get("/healthz", response_model=schemas.HealthResponse)
    async def healthz():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/encode", response_model=schemas.EncodeResponse)
    async def encode(req: schemas.EncodeRequest):
        store = resolve_store(req.weights)
        left = ppm.read_ppm(req.left)
        right = ppm.read_ppm(req.right)
        result = codec.encode_pair(left, right, store, steps=req.steps,
                                   mode=req.mode)
        with open(req.out, "wb") as fh:
            fh.write(result.stream)
        if req.log:
            with open(req.log, "w", encoding="utf-8") as fh:
                json.dump(_rate_log(result), fh, indent=1)
        box = codec.parse_container(result.stream)
        return schemas.EncodeResponse(
            out=req.out, container_bytes=len(result.stream),
            bpp=result.bpp(), bits_actual=result.bits_actual,
            bits_estimated=result.estimated_bits,
            gap_bits=result.bits_actual - result.estimated_bits,
            views=[schemas.ViewBits(hyper_bits=result.hyper_bits[v],
                                    main_bits=result.main_bits[v])
                   for v in range(2)],
            saturated=result.saturated, steps=box.steps)

    @app.post("/v1/decode", response_model=schemas.DecodeResponse)
    async def decode(req: schemas.DecodeRequest):
        store = resolve_store(req.weights)
        with open(req.stream, "rb") as fh:
            stream = fh.read()
        result = codec.decode_pair(stream, store)
        ppm.write_ppm(req.out_left, result.images[0])
        ppm.write_ppm(req.out_right, result.images[1])
        resp = schemas.DecodeResponse(out_left=req.out_left,
                                      out_right=req.out_right)
        if req.ref_left:
            resp.psnr_left = metrics.psnr(ppm.read_ppm(req.ref_left),
                                          result.images[0])
        if req.ref_right:
            resp.psnr_right = metrics.psnr(ppm.read_ppm(req.ref_right),
                                           result.images[1])
        return resp

    @app.post("/v1/inspect", response_model=schemas.InspectResponse)
    async def inspect(req: schemas.InspectRequest):
        with open(req.stream, "rb") as fh:
            stream = fh.read()
        box = codec.parse_container(stream)
        (h1, w1), (h2, w2) = box.extents
        return schemas.InspectResponse(
            version=box.version, steps=box.steps, mode=box.mode,
            config_digest=f"{box.digest:#010x}",
            extents=[[h1, w1], [h2, w2]],
            hyper_bytes=[len(p) for p in box.hyper_payloads],
            main_bytes=[len(p) for p in box.main_payloads],
            total_bytes=len(stream),
            bpp=8.0 * len(stream) / (2.0 * h1 * w1))

    @app.post("/v1/rd-report", response_model=schemas.RdReportResponse)
    async def rd_report(req: schemas.RdReportRequest):
        points = _load_curve(req.points)
        anchor = _load_curve(req.anchor)
        rate = metrics.bd_rate(points, anchor)
        quality = metrics.bd_psnr(points, anchor)
        lines = ["curve,bpp,psnr"]
        lines += [f"points,{r},{p}" for r, p in points]
        lines += [f"anchor,{r},{p}" for r, p in anchor]
        csv = "\n".join(lines) + "\n"
        if req.csv_out:
            with open(req.csv_out, "w", encoding="utf-8") as fh:
                fh.write(csv)
        return schemas.RdReportResponse(bd_rate_percent=rate,
                                        bd_psnr_db=quality, csv=csv,
                                        csv_out=req.csv_out)

    @app.post("/v1/selftest", response_model=schemas.SelftestResponse)
    async def selftest():
        results = run_selftest()
        return schemas.SelftestResponse(
            ok=all(r.passed for r in results),
            checks=[schemas.CheckItem(name=r.name, passed=r.passed,
                                      detail=r.detail) for r in results])

    return app
