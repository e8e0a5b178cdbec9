import json

import pytest
from fastapi.testclient import TestClient

import badge
from badge.human_eval import ResponseStore, create_session
from badge.service import ERROR_CODES, create_app, load_response_schema

from .test_human_eval import REPORTS, full_response


@pytest.fixture
def store(tmp_path):
    store = ResponseStore(tmp_path / "human")
    session = create_session(REPORTS, seed=11, match_id="m1", session_id="demo-session")
    store.save_session(session)
    return store


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def response_body(store, rater="rater-1", score=7):
    session = store.load_session("demo-session")
    response = full_response(session, rater=rater, score=score)
    from badge.human_eval import response_to_dict

    body = response_to_dict(response)
    body.pop("submitted_at")
    return body


class TestHealth:
    def test_ok_with_version(self, client):
        response = client.get("/api/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["version"] == badge.__version__

    def test_idempotent(self, client):
        assert client.get("/api/health").json() == client.get("/api/health").json()


class TestGetSession:
    def test_existing_session(self, client):
        response = client.get("/api/sessions/demo-session")
        assert response.status_code == 200
        body = response.json()
        assert len(body["items"]) == 3
        assert len(body["criteria"]) == 4
        assert {c["name"] for c in body["criteria"]} == {"coherence", "consistency", "excitement", "fluency"}

    def test_unknown_session_404(self, client):
        response = client.get("/api/sessions/nope")
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "unknown_session"

    def test_no_author_keys_on_the_wire(self, client):
        raw = client.get("/api/sessions/demo-session").text
        assert "author" not in raw
        for author, _ in REPORTS:
            assert author not in raw


class TestPostResponse:
    def test_valid_body_created(self, client, store):
        response = client.post("/api/sessions/demo-session/responses", json=response_body(store))
        assert response.status_code == 201
        body = response.json()
        assert body["superseded"] is False
        assert store.load_responses("demo-session")

    def test_score_zero_rejected_with_field_pointer(self, client, store):
        bad = response_body(store)
        bad["items"]["Report 2"]["scores"]["excitement"] = 0
        response = client.post("/api/sessions/demo-session/responses", json=bad)
        assert response.status_code == 400
        error = response.json()["error"]
        assert error["code"] == "score_out_of_range"
        assert any("Report 2" in f["field"] and "excitement" in f["field"] for f in error["fields"])

    def test_missing_item_rejected(self, client, store):
        bad = response_body(store)
        del bad["items"]["Report 3"]
        response = client.post("/api/sessions/demo-session/responses", json=bad)
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "incomplete_response"

    def test_resubmission_notes_supersession(self, client, store):
        client.post("/api/sessions/demo-session/responses", json=response_body(store, score=5))
        response = client.post("/api/sessions/demo-session/responses", json=response_body(store, score=9))
        assert response.status_code == 201
        assert response.json()["superseded"] is True
        assert len(store.load_responses("demo-session")) == 1

    def test_unknown_session_404(self, client, store):
        response = client.post("/api/sessions/ghost/responses", json=response_body(store))
        assert response.status_code == 404

    def test_wrong_content_type_rejected(self, client, store):
        response = client.post(
            "/api/sessions/demo-session/responses",
            content="rater=joe",
            headers={"content-type": "text/plain"},
        )
        assert response.status_code == 415
        assert response.json()["error"]["code"] == "unsupported_media_type"

    def test_invalid_json_rejected(self, client):
        response = client.post(
            "/api/sessions/demo-session/responses",
            content="{not json",
            headers={"content-type": "application/json"},
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_json"

    def test_bad_guess_rejected(self, client, store):
        bad = response_body(store)
        bad["items"]["Report 1"]["author_guess"] = "martian"
        response = client.post("/api/sessions/demo-session/responses", json=bad)
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_field"

    def test_error_codes_are_from_the_closed_enum(self, client, store):
        probes = [
            client.get("/api/sessions/nope"),
            client.post("/api/sessions/demo-session/responses", content="x", headers={"content-type": "text/plain"}),
            client.post("/api/sessions/demo-session/responses", content="{", headers={"content-type": "application/json"}),
        ]
        for response in probes:
            assert response.json()["error"]["code"] in ERROR_CODES


class TestSchema:
    def test_valid_body_passes_shared_schema(self, store):
        import jsonschema

        jsonschema.validate(response_body(store), load_response_schema())

    def test_schema_rejects_extra_keys(self, store):
        import jsonschema

        body = response_body(store)
        body["surprise"] = 1
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(body, load_response_schema())


class TestStaticHosting:
    def test_ui_served_from_root(self, store, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<html><body>annotation form</body></html>", encoding="utf-8")
        client = TestClient(create_app(store, ui_dir=ui))
        response = client.get("/")
        assert response.status_code == 200
        assert "annotation form" in response.text
        # API routes still take precedence
        assert client.get("/api/health").status_code == 200
