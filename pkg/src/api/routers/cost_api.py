"""
Cost Model Router
MAC counts per training step for the three learning rules
"""
import logging
from typing import Any, Dict, List

from fastapi import APIRouter, HTTPException, status

from src.models.schemas import MacRequest, MacResponse
from src.services.cost_service import cost_service
from src.utils.errors import FTPLabError

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/cost",
    tags=["Cost model"],
    responses={404: {"description": "Not found"}},
)


######################## 1.MAC table
@router.get("/table")
async def get_mac_table() -> List[Dict[str, Any]]:
    """
    1.MAC table: BP, FTP and PEPITA on the MNIST, CIFAR-10 and CIFAR-100 FC nets
    """
    return cost_service.table().to_dict(orient="records")
########################


######################## 2.Single report
@router.post("/macs", response_model=MacResponse)
async def count_rule_macs(request: MacRequest) -> MacResponse:
    """
    2.Single report: per-phase MACs of one rule, with the change relative to BP
    """
    try:
        return MacResponse(**cost_service.report(request.dataset, request.rule, request.arch.value))
    except FTPLabError as e:
        logger.error(f"MAC count failed: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
########################
