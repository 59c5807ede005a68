import pytest
from fastapi.testclient import TestClient

from fracpoin.main import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as client:
        yield client


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_constants(client):
    response = client.get("/api/constants", params={"n": 2, "K": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["N"] == 144
    assert body["total"] == pytest.approx(2 * body["C0"] * body["C1"])


def test_cube_constants(client):
    body = client.get("/api/constants", params={"variant": "cube", "tau": 0.5}).json()
    assert body["m"] == 5
    assert body["N"] == 4


@pytest.mark.parametrize("params", [{"s": 1.5}, {"variant": "hexagon"}, {"p": 1.0}, {"n": "two"}])
def test_constants_rejects(client, params):
    assert client.get("/api/constants", params=params).status_code == 400


def test_whitney(client):
    response = client.post("/api/whitney", json={"gen": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["report"]["passed"] is True
    assert len(body["cubes"]) == 16


def test_whitney_rejects(client):
    assert client.post("/api/whitney", json={"gen": 11}).status_code == 400
    assert client.post("/api/whitney", json={"domain": "triangle"}).status_code == 400


def test_cover_cube(client):
    body = client.post("/api/cover/cube", json={"m": 2}).json()
    assert body["m"] == 2
    assert body["report"]["passed"] is True
    assert body["nodes"][0]["parent"] is None


def test_cover_cube_rejects(client):
    assert client.post("/api/cover/cube", json={"n": 5}).status_code == 400
    assert client.post("/api/cover/cube", json={"tau": 1.5}).status_code == 400


def test_cover_john(client):
    response = client.post("/api/cover/john", json={"gen": 3, "include_cubes": False})
    assert response.status_code == 200
    body = response.json()
    assert body["K"] >= 41 / 8
    assert body["nodes"] is None
    assert body["report"]["passed"] is True
    assert body["side_vs_distance"]["passed"] is True


def test_verify(client):
    payload = {"depth": 2, "kernel": "classical", "fields": "random:2", "seed": 4}
    response = client.post("/api/verify", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["seed"] == 4
    assert body["K"] is None
    assert body["passed"] is True
    assert [r["field_id"] for r in body["records"]] == ["random-0", "random-1"]


@pytest.mark.parametrize(
    "payload",
    [
        {"depth": 6},
        {"kernel": "gaussian"},
        {"fields": "random:500"},
        {"depth": 1, "kernel": "classical", "s": 1.5},
    ],
)
def test_verify_rejects(client, payload):
    assert client.post("/api/verify", json=payload).status_code == 400
