"""
Experiment Router
Submits training runs to the background and reports their status
"""
import logging
from typing import List

from fastapi import APIRouter, BackgroundTasks, HTTPException, status

from src.models.schemas import RunConfig, RunStatus
from src.services.experiment_service import experiment_service
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/experiment",
    tags=["Experiments"],
    responses={404: {"description": "Not found"}},
)


######################## 1.Submit
@router.post("/run", response_model=RunStatus, status_code=status.HTTP_202_ACCEPTED)
async def submit_run(cfg: RunConfig, background_tasks: BackgroundTasks) -> RunStatus:
    """
    1.Submit: validate the configuration and start the run in the background
    """
    try:
        job = experiment_service.submit(cfg)
    except ConfigurationError as e:
        logger.error(f"Rejected experiment: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    background_tasks.add_task(experiment_service.execute, job.run_id, cfg)
    return job
########################


######################## 2.Status
@router.get("/", response_model=List[RunStatus])
async def list_runs() -> List[RunStatus]:
    """2.Status: every submitted run"""
    return experiment_service.jobs()


@router.get("/{job_id}", response_model=RunStatus)
async def get_run(job_id: str) -> RunStatus:
    """2.Status: one run"""
    job = experiment_service.status(job_id)
    if job is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown run {job_id}")
    return job
########################
