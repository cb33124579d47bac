"""
FastAPI REST API for the FTP lab
"""
import time
import logging
from contextlib import asynccontextmanager
from typing import Any, Dict

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from ..utils.config import configure_logging, settings
from .routers import cost_api, experiment_api, theory_api


configure_logging()
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"FTP lab API starting, data root {settings.data_root}, outputs in {settings.output_dir}")
    yield
    logger.info("Application shutdown")


app = FastAPI(
    title="FTP Lab",
    description="Forward Target Propagation training, cost model and theory checks",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/")
async def root() -> Dict[str, Any]:
    """Root endpoint with API information"""
    return {
        "name": "FTP Lab",
        "version": "1.0.0",
        "routers": {
            "cost": "/cost - MAC counts per rule",
            "theory": "/theory - linear-network theory verification",
            "experiment": "/experiment - background training runs",
        },
        "docs": "/docs",
        "timestamp": time.time(),
    }


@app.get("/health")
async def health() -> Dict[str, str]:
    return {"status": "healthy"}


app.include_router(cost_api.router)
app.include_router(theory_api.router)
app.include_router(experiment_api.router)
