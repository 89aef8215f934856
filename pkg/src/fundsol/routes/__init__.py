"""Routes package."""

from fastapi import APIRouter

from .api import router as api_router
from .health import router as health_router

# Create main router without prefix
api = APIRouter()
api.include_router(api_router)

# Create health router without prefix
health = APIRouter()
health.include_router(health_router)

# Export both routers
__all__ = ["api", "health"]
