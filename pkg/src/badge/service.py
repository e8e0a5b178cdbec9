"""HTTP service for the blind evaluation study.

Serves blinded sessions to the browser form and accepts submitted
responses. Every error body is machine-readable JSON with a code from
ERROR_CODES; authorship never leaves the server.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .evaluation import CRITERIA
from .human_eval import (
    EvalSession,
    ResponseStore,
    response_from_dict,
    validate_response,
)

ERROR_CODES = (
    "unknown_session",
    "invalid_json",
    "unsupported_media_type",
    "incomplete_response",
    "score_out_of_range",
    "invalid_field",
)


def wire_session(session: EvalSession) -> dict:
    """The blinded payload raters see: labels and texts, never authors."""
    return {
        "session_id": session.session_id,
        "items": [
            {"blind_label": item.blind_label, "report_text": item.report_text}
            for item in session.items
        ],
        "criteria": [
            {
                "name": c.name,
                "definition": c.definition,
                "scale_min": c.scale_min,
                "scale_max": c.scale_max,
            }
            for c in CRITERIA
        ],
    }


def _error(status: int, code: str, message: str, fields: list[dict] | None = None) -> JSONResponse:
    assert code in ERROR_CODES
    body = {"error": {"code": code, "message": message}}
    if fields:
        body["error"]["fields"] = fields
    return JSONResponse(status_code=status, content=body)


def load_response_schema() -> dict:
    return json.loads(
        (resources.files("badge") / "schema" / "human_response.schema.json").read_text(encoding="utf-8")
    )


def _schema_problem_code(err: jsonschema.ValidationError) -> str:
    if err.validator in ("minimum", "maximum"):
        return "score_out_of_range"
    if err.validator in ("required", "minProperties"):
        return "incomplete_response"
    return "invalid_field"


def create_app(
    store: ResponseStore,
    *,
    ui_dir: str | Path | None = None,
    allow_cors: bool = False,
) -> FastAPI:
    app = FastAPI(title="badge annotation service", version=__version__)
    schema = load_response_schema()
    validator = jsonschema.Draft202012Validator(schema)

    if allow_cors:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            session = store.load_session(session_id)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return wire_session(session)

    @app.post("/api/sessions/{session_id}/responses")
    async def post_response(session_id: str, request: Request):
        content_type = request.headers.get("content-type", "")
        if not content_type.startswith("application/json"):
            return _error(415, "unsupported_media_type", "POST bodies must be application/json")
        try:
            session = store.load_session(session_id)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError as e:
            return _error(400, "invalid_json", f"body is not valid JSON: {e}")

        schema_errors = sorted(validator.iter_errors(body), key=lambda e: list(e.absolute_path))
        if schema_errors:
            fields = [
                {
                    "field": ".".join(str(p) for p in err.absolute_path),
                    "code": _schema_problem_code(err),
                    "message": err.message,
                }
                for err in schema_errors
            ]
            return _error(400, fields[0]["code"], "response body failed schema validation", fields)

        response = response_from_dict(body)
        problems = validate_response(session, response)
        if problems:
            fields = [{"field": path, "code": code, "message": msg} for path, code, msg in problems]
            return _error(400, fields[0]["code"], "response failed validation", fields)

        stored, superseded = store.record_response(session, response)
        return JSONResponse(
            status_code=201,
            content={
                "response_id": f"{session_id}/{stored.rater_id}",
                "superseded": superseded,
                "submitted_at": stored.submitted_at,
            },
        )

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
