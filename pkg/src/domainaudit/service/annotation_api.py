"""HTTP surface of the labeling workflow.

GET  /api/batch?offset=N   batch of <= 25 items with pre-labels
POST /api/labels           persist label records, all-or-nothing
GET  /api/progress         labeled/total and per-class counts
GET  /img/{id}             raw image bytes for a corpus record
"""
from __future__ import annotations

import mimetypes

from fastapi import APIRouter, HTTPException, Query, Request
from fastapi.responses import FileResponse

from ..annotation import AnnotationSession, LabelRecord
from ..labels import label_from_name
from . import schemas as s

router = APIRouter(tags=["annotation"])


def _session(request: Request) -> AnnotationSession:
    session = getattr(request.app.state, "annotation", None)
    if session is None:
        raise HTTPException(
            status_code=503, detail="annotation session not configured on this server"
        )
    return session


@router.get("/api/batch", response_model=s.BatchModel)
def get_batch(
    request: Request,
    offset: int = Query(0, ge=0),
    annotator: str | None = None,
) -> s.BatchModel:
    batch = _session(request).get_batch(offset, annotator=annotator)
    return s.BatchModel(**batch.to_dict())


@router.post("/api/labels", response_model=s.SubmitResponse)
def submit_labels(request: Request, records: list[s.LabelRecordModel]) -> s.SubmitResponse:
    session = _session(request)
    parsed = [
        LabelRecord(
            id=r.id,
            label=label_from_name(r.label),
            annotator=r.annotator,
            timestamp=r.timestamp,
        )
        for r in records
    ]
    return s.SubmitResponse(persisted=session.submit_labels(parsed))


@router.get("/api/progress", response_model=s.ProgressResponse)
def progress(request: Request, annotator: str | None = None) -> s.ProgressResponse:
    return s.ProgressResponse(**_session(request).progress(annotator))


@router.get("/img/{rec_id}")
def image(request: Request, rec_id: int) -> FileResponse:
    session = _session(request)
    path = session.image_path(rec_id)
    if path is None:
        raise HTTPException(status_code=404, detail=f"no image for id {rec_id}")
    media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    return FileResponse(path, media_type=media_type)
