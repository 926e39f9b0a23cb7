"""HTTP wire layer: a FastAPI app exposing the controller to PCA clients.

All request bodies are plain JSON; unknown fields are ignored on input and
never emitted on output. Responses are serialized with canonical_json so the
byte layout is stable across runs (sorted keys, compact separators). Every
error, including framework-level validation failures, is shaped as
{"error": string}.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Literal

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from pydantic import BaseModel, ConfigDict
from starlette.exceptions import HTTPException as StarletteHTTPException

from .controller import ConflictError, Controller, StaleAckError, UnknownPcaError
from .model import ValidationError, canonical_json


class WireModel(BaseModel):
    model_config = ConfigDict(extra="ignore")


class MetricSpecIn(WireModel):
    name: str
    direction: Literal["maximize", "minimize", "auxiliary"]
    lower_threshold: float | None = None
    upper_threshold: float | None = None
    weight: float | None = None
    unit: str | None = None


class ParamSpecIn(WireModel):
    name: str
    min: float
    max: float
    step: float
    changeability: Literal["online", "offline"] = "online"
    initial: float | None = None


class ManifestIn(WireModel):
    name: str
    layer: str = ""
    metrics: list[MetricSpecIn] = []
    parameters: list[ParamSpecIn] = []


class MetricValueIn(WireModel):
    name: str
    value: float


class ReportIn(WireModel):
    pca_id: str | None = None
    epoch: int
    metrics: list[MetricValueIn]
    timestamp: str


class AckIn(WireModel):
    epoch: int


def _json(payload: dict | list, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(payload), status_code=status_code, media_type="application/json"
    )


def _error(status_code: int, message: str) -> Response:
    return _json({"error": message}, status_code)


def create_app(controller: Controller, *, run_loop: bool = True) -> FastAPI:
    """Wrap a controller in the HTTP protocol.

    run_loop=False leaves clock ticks to the caller (tests drive them by hand).
    """

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        thread = None
        if run_loop:
            thread = threading.Thread(target=controller.run, name="rc-loop", daemon=True)
            thread.start()
        try:
            yield
        finally:
            controller.stop()
            if thread is not None:
                thread.join(timeout=5.0)
            else:
                controller.close()

    app = FastAPI(lifespan=lifespan, docs_url=None, redoc_url=None, openapi_url=None)
    app.state.controller = controller

    @app.exception_handler(RequestValidationError)
    async def on_request_invalid(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()) if part != "body")
        msg = first.get("msg", "invalid request")
        return _error(422, f"{where}: {msg}" if where else msg)

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, str(exc.detail))

    @app.exception_handler(ValidationError)
    async def on_domain_invalid(request: Request, exc: ValidationError):
        return _error(422, str(exc))

    @app.exception_handler(ConflictError)
    async def on_conflict(request: Request, exc: ConflictError):
        return _error(409, str(exc))

    @app.exception_handler(StaleAckError)
    async def on_stale_ack(request: Request, exc: StaleAckError):
        return _error(409, str(exc))

    @app.exception_handler(UnknownPcaError)
    async def on_unknown(request: Request, exc: UnknownPcaError):
        # KeyError reprs with quotes; unwrap to the bare id
        return _error(404, f"unknown pca {exc.args[0]!r}" if exc.args else "unknown pca")

    @app.post("/v1/pcas")
    def register(manifest: ManifestIn) -> Response:
        pca_id, epoch = controller.register(manifest.model_dump(exclude_none=True))
        return _json({"pca_id": pca_id, "epoch": epoch})

    @app.post("/v1/pcas/{pca_id}/state")
    def submit_state(pca_id: str, report: ReportIn) -> Response:
        if report.pca_id is not None and report.pca_id != pca_id:
            raise ValidationError(f"body pca_id {report.pca_id!r} does not match path")
        values: dict[str, float] = {}
        for m in report.metrics:
            if m.name in values:
                raise ValidationError(f"duplicate metric {m.name!r} in report")
            values[m.name] = m.value
        accepted, current = controller.submit_report(pca_id, report.epoch, values, report.timestamp)
        return _json({"accepted": accepted, "current_epoch": current})

    @app.get("/v1/pcas/{pca_id}/config")
    def get_config(pca_id: str, wait_epoch: int | None = Query(default=None)) -> Response:
        if wait_epoch is None:
            view = controller.view(pca_id)
        else:
            view = controller.wait_view(pca_id, wait_epoch)
        return _json(view)

    @app.post("/v1/pcas/{pca_id}/ack")
    def ack(pca_id: str, body: AckIn) -> Response:
        controller.ack(pca_id, body.epoch)
        return _json({"ok": True})

    @app.get("/v1/stats")
    def stats() -> Response:
        return _json(controller.stats())

    @app.get("/v1/history")
    def history(from_step: int = Query(default=0, alias="from", ge=0)) -> Response:
        lines = controller.history_lines(from_step)
        body = "".join(line + "\n" for line in lines)
        return Response(content=body, media_type="application/x-ndjson")

    return app
