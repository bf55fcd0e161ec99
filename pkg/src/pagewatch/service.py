"""Loopback JSON service consumed by the review UI.

Endpoints:
  POST /scan {domain, png_base64[, tab_id]}  -> verdict
  GET  /verdicts?since=<epoch>               -> verdicts (override embedded)
  POST /override {verdict_id, choice}        -> override record
  GET  /metrics                              -> per-stage P50/P95 + raw samples
  GET  /screenshot/{verdict_id}              -> PNG
"""

from __future__ import annotations

import base64
import binascii
import io
import math
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel

from .errors import InvalidInputError, NotFoundError, OcrEngineError
from .imaging import RawScreenshot
from .logbuffer import LogBuffer, flush_logs
from .pipeline import OVERRIDE_CHOICES, ScanEngine

SCHEMA_VERSION = 1


class ScanRequest(BaseModel):
    domain: str
    png_base64: str
    tab_id: Optional[str] = None


class OverrideRequest(BaseModel):
    verdict_id: str
    choice: str


def percentile(samples: list[float], q: float) -> float:
    """Nearest-rank percentile (q in [0, 100]); empty input -> nan."""
    if not samples:
        return float("nan")
    ordered = sorted(samples)
    idx = max(0, math.ceil(q / 100.0 * len(ordered)) - 1)
    return ordered[idx]


def _verdict_json(engine: ScanEngine, v) -> dict:
    d = v.to_dict()
    d["schema_version"] = SCHEMA_VERSION
    override = engine.override_for(v.verdict_id)
    d["override"] = override.to_dict() if override else None
    return d


def metrics_summary(engine: ScanEngine, max_samples: int = 1000) -> dict:
    samples = engine.latency_samples()
    stages = {}
    for stage in ("normalize", "phash", "ocr", "model"):
        vals = [s[stage] for s in samples if stage in s]
        stages[stage] = {
            "count": len(vals),
            "p50": percentile(vals, 50) if vals else None,
            "p95": percentile(vals, 95) if vals else None,
        }
    totals = [sum(s.values()) for s in samples if "model" in s]
    return {
        "schema_version": SCHEMA_VERSION,
        "scan_count": len(samples),
        "inference_count": len(totals),
        "stages": stages,
        "total_ms": {
            "p50": percentile(totals, 50) if totals else None,
            "p95": percentile(totals, 95) if totals else None,
        },
        "samples": {"total_ms": totals[-max_samples:]},
    }


def create_app(engine: ScanEngine, log_buffer: Optional[LogBuffer] = None) -> FastAPI:
    app = FastAPI(title="pagewatch", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.log_buffer = log_buffer
    tab_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def tab_lock(tab_id: str) -> threading.Lock:
        with locks_guard:
            if tab_id not in tab_locks:
                tab_locks[tab_id] = threading.Lock()
            return tab_locks[tab_id]

    @app.get("/health")
    def health():
        return {"status": "ok", "schema_version": SCHEMA_VERSION}

    @app.post("/scan")
    def scan(req: ScanRequest):
        try:
            raw_bytes = base64.b64decode(req.png_base64, validate=True)
            with Image.open(io.BytesIO(raw_bytes)) as im:
                px = np.asarray(im.convert("RGB"))
        except (binascii.Error, ValueError, UnidentifiedImageError) as exc:
            raise HTTPException(status_code=400, detail=f"bad png_base64: {exc}")
        if not req.domain.strip():
            raise HTTPException(status_code=400, detail="domain must be non-empty")
        tab_id = req.tab_id or req.domain
        screenshot = RawScreenshot.from_array(px, source_domain=req.domain)
        try:
            with tab_lock(tab_id):
                verdict = engine.run_scan_cycle(tab_id, screenshot, domain=req.domain)
        except OcrEngineError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        except InvalidInputError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if log_buffer is not None:
            flush_logs(log_buffer)
        return _verdict_json(engine, verdict)

    @app.get("/verdicts")
    def verdicts(since: float = 0.0):
        return {
            "schema_version": SCHEMA_VERSION,
            "verdicts": [_verdict_json(engine, v) for v in engine.verdicts_since(since)],
        }

    @app.post("/override")
    def override(req: OverrideRequest):
        if req.choice not in OVERRIDE_CHOICES:
            raise HTTPException(
                status_code=400,
                detail=f"choice must be one of {list(OVERRIDE_CHOICES)}")
        try:
            record = engine.record_override(req.verdict_id, req.choice)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return record.to_dict()

    @app.get("/metrics")
    def metrics():
        return metrics_summary(engine)

    @app.get("/screenshot/{verdict_id}")
    def screenshot(verdict_id: str):
        try:
            png = engine.get_screenshot(verdict_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=png, media_type="image/png")

    return app
