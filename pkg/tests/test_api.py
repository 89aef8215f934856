"""Test evaluation endpoints."""

import math

import pytest
from httpx import AsyncClient

LAPLACIAN = {"n": 2, "m": 2, "terms": [{"alpha": [2, 0], "coeff": "1"}, {"alpha": [0, 2], "coeff": "1"}]}
MIXED = {
    "n": 2,
    "m": 4,
    "terms": [
        {"alpha": [4, 0], "coeff": 1},
        {"alpha": [2, 2], "coeff": 2},
        {"alpha": [0, 4], "coeff": 1},
        {"alpha": [2, 0], "coeff": 1},
        {"alpha": [0, 2], "coeff": 1},
    ],
}


@pytest.mark.asyncio
async def test_certify_inline_symbol(test_client: AsyncClient):
    response = await test_client.post("/api/certify", json={"symbol": LAPLACIAN})

    # Check status code
    assert response.status_code == 200

    # Check certificate
    data = response.json()
    assert data["passed"] is True


@pytest.mark.asyncio
async def test_certify_symbol_file(test_client: AsyncClient, symbols_dir):
    response = await test_client.post("/api/certify", json={"symbol_file": str(symbols_dir / "mixed.toml")})
    assert response.status_code == 200
    assert response.json()["passed"] is True


@pytest.mark.asyncio
async def test_certify_missing_file(test_client: AsyncClient, tmp_path):
    response = await test_client.post("/api/certify", json={"symbol_file": str(tmp_path / "absent.toml")})
    assert response.status_code == 404


@pytest.mark.asyncio
async def test_certify_without_symbol(test_client: AsyncClient):
    response = await test_client.post("/api/certify", json={})
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_certify_rejects_unknown_fields(test_client: AsyncClient):
    response = await test_client.post("/api/certify", json={"symbol": LAPLACIAN, "color": "blue"})
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_rho_endpoint(test_client: AsyncClient):
    response = await test_client.post("/api/rho", json={"symbol": MIXED, "s": 100, "omega": [2, 0]})

    # Check status code
    assert response.status_code == 200

    # Check root, omega is normalized
    data = response.json()
    assert data["rho"] == pytest.approx(math.sqrt((math.sqrt(401.0) - 1.0) / 2.0), rel=1e-9)
    assert data["omega"] == pytest.approx([1.0, 0.0])


@pytest.mark.asyncio
async def test_rho_below_threshold(test_client: AsyncClient):
    response = await test_client.post("/api/rho", json={"symbol": MIXED, "s": 0, "omega": [1, 0]})
    assert response.status_code == 422
    assert "LevelSetError" in response.json()["detail"]


@pytest.mark.asyncio
async def test_rho_bad_direction(test_client: AsyncClient):
    response = await test_client.post("/api/rho", json={"symbol": MIXED, "s": 10, "omega": [0, 0]})
    assert response.status_code == 422

    response = await test_client.post("/api/rho", json={"symbol": MIXED, "s": 10, "omega": [1, 0, 0]})
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_kernel_endpoint(test_client: AsyncClient):
    payload = {"symbol": LAPLACIAN, "t": 1.0, "x": [[0.0, 0.0], [1.0, 0.5]], "strategy": "fft"}
    response = await test_client.post("/api/kernel", json=payload)

    # Check status code
    assert response.status_code == 200

    # Check values against |I(1, x)| = 1/(4 pi) for P = |xi|^2
    data = response.json()
    assert len(data) == 2
    for item in data:
        assert item["method"] == "fft"
        assert item["error_estimate"] >= 0.0
        assert math.hypot(item["value"]["re"], item["value"]["im"]) == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-2)


@pytest.mark.asyncio
async def test_kernel_wrong_dimension(test_client: AsyncClient):
    payload = {"symbol": LAPLACIAN, "t": 1.0, "x": [[0.0, 0.0, 0.0]]}
    response = await test_client.post("/api/kernel", json=payload)
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_admissible_endpoint(test_client: AsyncClient):
    response = await test_client.get("/api/admissible", params={"p": "1", "q": "inf", "m": 4})

    # Check status code
    assert response.status_code == 200

    # Check classification
    data = response.json()
    assert data["classification"] == "edge"
    assert data["admissible"] is True
    assert data["q"] == "inf"


@pytest.mark.asyncio
async def test_admissible_apex(test_client: AsyncClient):
    response = await test_client.get("/api/admissible", params={"p": "2", "q": "2", "m": 4})
    assert response.status_code == 200
    assert response.json()["classification"] == "apex_A_excluded"
    assert response.json()["admissible"] is False


@pytest.mark.asyncio
async def test_admissible_rejects_odd_order(test_client: AsyncClient):
    response = await test_client.get("/api/admissible", params={"p": "1", "q": "inf", "m": 3})
    assert response.status_code == 422


@pytest.mark.asyncio
async def test_envelope_endpoint(test_client: AsyncClient):
    response = await test_client.get("/api/envelope", params={"regime": "small_t", "m": 4, "n": 2, "t": 1})

    # Check status code
    assert response.status_code == 200

    # Check value and exponents
    data = response.json()
    assert data["value"] == pytest.approx(1.0)
    assert data["mu"] == pytest.approx(2.0 / 3.0)
    assert data["nu"] == pytest.approx(1.0 / 3.0)


@pytest.mark.asyncio
async def test_envelope_outside_regime(test_client: AsyncClient):
    response = await test_client.get("/api/envelope", params={"regime": "small_t", "m": 4, "n": 2, "t": 5})
    assert response.status_code == 422
