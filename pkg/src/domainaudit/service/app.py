"""FastAPI application factory wrapping the core package."""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from ..annotation import AnnotationSession
from ..errors import MethodError, UsageError
from . import annotation_api, pipeline

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>domainaudit</title></head>
<body>
<h1>domainaudit annotation server</h1>
<p>No labeling UI bundle is installed. The JSON API is live:
GET /api/batch?offset=N, POST /api/labels, GET /api/progress.</p>
</body></html>
"""


def create_app(
    annotation: AnnotationSession | None = None,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    app = FastAPI(title="domainaudit", version="0.1.0")
    app.state.annotation = annotation

    @app.exception_handler(UsageError)
    async def usage_error(request: Request, exc: UsageError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"kind": "usage", "message": str(exc)})

    @app.exception_handler(MethodError)
    async def method_error(request: Request, exc: MethodError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"kind": "method", "message": str(exc)})

    app.include_router(pipeline.router)
    app.include_router(annotation_api.router)

    ui_path = Path(ui_dir) if ui_dir else None
    if ui_path and ui_path.is_dir():
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return _FALLBACK_PAGE

    return app
