"""HTTP front of the campaign engine.

JSON API:

* ``POST /campaigns`` — body ``{campaign_id?, manifest_path, config?}``
* ``GET /campaigns/{id}/progress``
* ``POST /campaigns/{id}/sessions`` — body ``{subject_id}``
* ``GET /sessions/{id}/current`` — item metadata plus image URLs
* ``POST /sessions/{id}/ratings`` — one ratings-schema row
* ``GET /campaigns/{id}/export`` — NDJSON ratings, ``X-Partial`` header
* ``GET /images/{item_id}/{source|edited}`` — read-only image bytes
* ``GET /health``

Configuration comes from a JSON file; ``TIEBENCH_PORT`` and
``TIEBENCH_DATA_DIR`` environment variables override it.
"""

from __future__ import annotations

import json
import os
import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

from . import errors
from .campaign import CampaignConfig, CampaignStore
from .dataset import load_manifest, rating_to_row

__all__ = ["create_app", "ServiceConfig", "load_service_config"]

_STATUS_BY_ERROR = {
    errors.UnknownCampaign: 404,
    errors.UnknownSession: 404,
    errors.UnknownItem: 404,
    errors.Conflict: 409,
    errors.DuplicateRating: 409,
    errors.OutOfOrderSubmission: 409,
    errors.NothingToAssign: 409,
    errors.CampaignComplete: 409,
    errors.SessionExpired: 410,
}


class ServiceConfig(BaseModel):
    host: str = "127.0.0.1"
    port: int = 8700
    data_dir: str = "./campaign-data"
    fsync: bool = True
    snapshot_every: int = 100


def load_service_config(path: str | Path) -> ServiceConfig:
    """Load the JSON config file and apply environment overrides."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise errors.InvalidConfig("service config must be a JSON object")
    unknown = set(raw) - set(ServiceConfig.model_fields)
    if unknown:
        raise errors.InvalidConfig(f"unknown config keys {sorted(unknown)}")
    try:
        config = ServiceConfig(**raw)
    except Exception as exc:
        raise errors.InvalidConfig(f"bad service config: {exc}") from exc
    if "TIEBENCH_PORT" in os.environ:
        config = config.model_copy(update={"port": int(os.environ["TIEBENCH_PORT"])})
    if "TIEBENCH_DATA_DIR" in os.environ:
        config = config.model_copy(update={"data_dir": os.environ["TIEBENCH_DATA_DIR"]})
    return config


class CreateCampaignBody(BaseModel):
    manifest_path: str
    campaign_id: Optional[str] = None
    config: dict = {}


class StartSessionBody(BaseModel):
    subject_id: str


def _error_response(exc: errors.TiebenchError) -> JSONResponse:
    status = 422 if isinstance(exc, errors.ValidationFailure) else 500
    for klass, code in _STATUS_BY_ERROR.items():
        if isinstance(exc, klass):
            status = code
            break
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


def create_app(store: CampaignStore) -> FastAPI:
    app = FastAPI(title="tiebench campaign service")

    @app.exception_handler(errors.TiebenchError)
    async def _handle(request: Request, exc: errors.TiebenchError):
        return _error_response(exc)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/campaigns")
    def create_campaign(body: CreateCampaignBody):
        try:
            config = CampaignConfig(**body.config)
        except TypeError as exc:
            raise errors.InvalidConfig(f"bad campaign config: {exc}") from exc
        manifest_path = Path(body.manifest_path)
        if not manifest_path.exists():
            raise errors.InvalidConfig(f"manifest {body.manifest_path!r} not found")
        items = load_manifest(manifest_path)
        campaign_id = body.campaign_id or uuid.uuid4().hex
        store.create_campaign(
            campaign_id, items, config, manifest_path=str(manifest_path)
        )
        return {"campaign_id": campaign_id, "n_items": len(items)}

    @app.get("/campaigns/{campaign_id}/progress")
    def progress(campaign_id: str):
        return store.progress(campaign_id)

    @app.post("/campaigns/{campaign_id}/sessions")
    def start_session(campaign_id: str, body: StartSessionBody):
        session = store.next_session(campaign_id, body.subject_id)
        return {
            "session_id": session.session_id,
            "subject_id": session.subject_id,
            "total": len(session.items),
            "answered": session.cursor,
            "state": session.state,
        }

    @app.get("/sessions/{session_id}/current")
    def current(session_id: str):
        payload = store.current_item(session_id)
        if "item" in payload:
            item_id = payload["item"]["item_id"]
            payload["item"]["source_url"] = f"/images/{item_id}/source"
            payload["item"]["edited_url"] = f"/images/{item_id}/edited"
        return payload

    @app.post("/sessions/{session_id}/ratings")
    async def submit(session_id: str, request: Request):
        try:
            row = await request.json()
        except json.JSONDecodeError as exc:
            raise errors.ValidationFailure(f"body is not valid JSON: {exc}") from exc
        if not isinstance(row, dict):
            raise errors.ValidationFailure("rating body must be a JSON object")
        return store.submit_rating(session_id, row)

    @app.get("/campaigns/{campaign_id}/export")
    def export(campaign_id: str):
        records, partial = store.export_ratings(campaign_id)
        body = "".join(json.dumps(rating_to_row(r)) + "\n" for r in records)
        return PlainTextResponse(
            content=body,
            media_type="application/x-ndjson",
            headers={"X-Partial": "true" if partial else "false"},
        )

    @app.get("/images/{item_id}/{role}")
    def image(item_id: str, role: str):
        path = store.find_image(item_id, role)
        if not path.exists():
            raise errors.UnknownItem(f"image file for {item_id!r}/{role} missing")
        media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return FileResponse(path, media_type=media)

    return app
