"""Shared test fixtures and utilities."""

from collections.abc import AsyncGenerator
from pathlib import Path

import pytest
import pytest_asyncio
from httpx import ASGITransport, AsyncClient

from fundsol.main import app
from fundsol.symbol import PolynomialSymbol, load_symbol, radial_symbol

SYMBOLS_DIR = Path(__file__).resolve().parent.parent / "symbols"


@pytest.fixture
def symbols_dir() -> Path:
    return SYMBOLS_DIR


@pytest.fixture
def laplacian() -> PolynomialSymbol:
    """P = |xi|^2 in two dimensions."""
    return radial_symbol(2, {2: 1})


@pytest.fixture
def biharmonic() -> PolynomialSymbol:
    """P = |xi|^4 in two dimensions."""
    return radial_symbol(2, {4: 1})


@pytest.fixture
def mixed() -> PolynomialSymbol:
    """P = |xi|^4 + |xi|^2 in two dimensions."""
    return radial_symbol(2, {4: 1, 2: 1})


@pytest.fixture
def anisotropic() -> PolynomialSymbol:
    """xi1^4 + xi1^2 xi2^2 + 2 xi2^4 + xi2^2, read from the bundled symbol file."""
    return load_symbol(SYMBOLS_DIR / "anisotropic.toml")


@pytest_asyncio.fixture
async def test_client() -> AsyncGenerator[AsyncClient, None]:
    """Create a test client over the ASGI app."""
    transport = ASGITransport(app=app)
    async with AsyncClient(transport=transport, base_url="http://test") as client:
        yield client
