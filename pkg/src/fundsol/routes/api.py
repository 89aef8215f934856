"""Evaluation endpoints: certificates, level-set radii, kernel values and decay envelopes."""

from pathlib import Path
from typing import Literal

from fastapi import APIRouter, HTTPException, status
from fastapi.responses import JSONResponse
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from fundsol.decay import Envelope
from fundsol.errors import FundsolError
from fundsol.kernel import kernel_eval_many
from fundsol.levelset import solve_rho
from fundsol.propagator import admissible
from fundsol.symbol import PolynomialSymbol, certify, load_symbol, symbol_from_dict

router = APIRouter(tags=["fundsol"])


class TermPayload(BaseModel):
    alpha: list[int]
    coeff: str | int | float


class SymbolPayload(BaseModel):
    """Inline symbol, same layout as a symbol file."""

    n: int
    m: int | None = None
    terms: list[TermPayload]


class SymbolRequest(BaseModel):
    """Either an inline symbol or the path of a symbol file readable by the service."""

    model_config = ConfigDict(extra="forbid")

    symbol: SymbolPayload | None = None
    symbol_file: str | None = None


class CertifyRequest(SymbolRequest):
    sphere_density: int | None = Field(default=None, ge=8)


class RhoRequest(SymbolRequest):
    s: float
    omega: list[float]


class KernelRequest(SymbolRequest):
    t: float
    x: list[list[float]] = Field(min_length=1)
    strategy: Literal["auto", "fft", "split"] = "auto"


def _resolve_symbol(request: SymbolRequest) -> PolynomialSymbol:
    if request.symbol_file is not None:
        if not Path(request.symbol_file).is_file():
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Symbol file {request.symbol_file} not found")
        return load_symbol(request.symbol_file)
    if request.symbol is not None:
        return symbol_from_dict(request.symbol.model_dump(exclude_none=True))
    raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail="Provide symbol or symbol_file")


def _unprocessable(e: Exception) -> HTTPException:
    logger.warning(f"Rejected request: {e}")
    return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=f"{type(e).__name__}: {e}")


@router.post("/certify", status_code=status.HTTP_200_OK)
def certify_symbol(request: CertifyRequest) -> JSONResponse:
    """Certify ellipticity and non-degeneracy of the principal part.

    Returns:
        200 OK with the certificate and its overall `passed` flag
        404 Not Found if symbol_file does not exist
        422 Unprocessable Entity for malformed symbols
    """
    try:
        certificate = certify(_resolve_symbol(request), request.sphere_density)
    except (FundsolError, ValueError) as e:
        raise _unprocessable(e) from e
    content = {**certificate.model_dump(mode="json"), "passed": certificate.passed}
    return JSONResponse(content=content, status_code=status.HTTP_200_OK)


@router.post("/rho", status_code=status.HTTP_200_OK)
def level_set_radius(request: RhoRequest) -> JSONResponse:
    """Level-set radius rho(s, omega); omega is normalized before solving.

    Returns:
        200 OK with the radial root
        422 Unprocessable Entity if s is below the threshold or omega is invalid
    """
    try:
        p = _resolve_symbol(request)
        if len(request.omega) != p.n:
            raise ValueError(f"omega has {len(request.omega)} components, the symbol has n = {p.n}")
        norm = sum(w * w for w in request.omega) ** 0.5
        if norm == 0.0:
            raise ValueError("omega must be nonzero")
        root = solve_rho(p, request.s, [w / norm for w in request.omega])
    except (FundsolError, ValueError) as e:
        raise _unprocessable(e) from e
    return JSONResponse(content=root.model_dump(mode="json"), status_code=status.HTTP_200_OK)


@router.post("/kernel", status_code=status.HTTP_200_OK)
def kernel_values(request: KernelRequest) -> JSONResponse:
    """Evaluate I(t, x) at every requested point.

    Returns:
        200 OK with a list of kernel values, each with method and error estimate
        422 Unprocessable Entity if the points cannot be resolved within budget
    """
    try:
        p = _resolve_symbol(request)
        if any(len(x) != p.n for x in request.x):
            raise ValueError(f"Every point needs n = {p.n} coordinates")
        values = kernel_eval_many(p, request.t, request.x, request.strategy)
    except (FundsolError, ValueError) as e:
        raise _unprocessable(e) from e
    logger.info(f"Evaluated {len(values)} kernel values at t={request.t:g}")
    return JSONResponse(content=[v.model_dump(mode="json") for v in values], status_code=status.HTTP_200_OK)


@router.get("/admissible", status_code=status.HTTP_200_OK)
async def admissible_pair(p: str, q: str, m: int) -> JSONResponse:
    """Classify (1/p, 1/q) against the admissible quadrilateral of order m; p and q accept `inf`.

    Returns:
        200 OK with the classified pair
        422 Unprocessable Entity for exponents outside [1, inf] or m < 2
    """
    try:
        pair = admissible(float(p), float(q), m)
    except ValueError as e:
        raise _unprocessable(e) from e
    return JSONResponse(content={**pair.model_dump(mode="json"), "admissible": pair.admissible}, status_code=status.HTTP_200_OK)


@router.get("/envelope", status_code=status.HTTP_200_OK)
async def envelope_value(regime: Literal["small_t", "large_t"], m: int, n: int, t: float, x: float = 0.0) -> JSONResponse:
    """Unit-constant envelope at time t and radius |x| = x.

    Returns:
        200 OK with the value and the exponents mu and nu
        422 Unprocessable Entity if t lies outside the regime
    """
    try:
        env = Envelope(regime, m, n)
        value = float(env(t, abs(x)))
    except (FundsolError, ValueError) as e:
        raise _unprocessable(e) from e
    return JSONResponse(content={"regime": regime, "m": m, "n": n, "t": t, "x": x, "value": value, "mu": env.mu, "nu": env.nu})
