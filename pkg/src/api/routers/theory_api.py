"""
Theory Router
Monte Carlo check of the linear two-hidden-layer analysis
"""
import logging

from fastapi import APIRouter, HTTPException, status

from src.models.schemas import TheoryRequest, TheoryResponse
from src.services.theory_service import theory_service
from src.utils.errors import FTPLabError

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/theory",
    tags=["Theory verification"],
    responses={404: {"description": "Not found"}},
)


@router.post("/verify", response_model=TheoryResponse)
def verify(request: TheoryRequest) -> TheoryResponse:
    """Closed-form deviation, inner-product positivity and Gauss-Newton residual"""
    if len(request.dims) != 4:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_CONTENT,
                            detail="dims must list d0, d1, d2 and dy")
    try:
        return TheoryResponse(**theory_service.verify(request.seeds, request.steps, request.dims))
    except FTPLabError as e:
        logger.error(f"Theory verification failed: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
