"""
Cost Model Service for the FTP lab
Per-example multiply-accumulate counts of one training step, split by phase
"""
import logging
from typing import Dict, List, Sequence

import pandas as pd

from ..models.network_model import LayerKind, LayerSpec, Stage
from ..models.report_model import MacReport
from ..models.schemas import Algorithm
from ..utils.errors import ConfigurationError
from .network_service import architecture_for, build_stages

logger = logging.getLogger(__name__)

TABLE_DATASETS = ("mnist", "cifar10", "cifar100")
TABLE_COLUMNS = ["dataset", "rule", "first_forward", "transport", "second_forward", "weight_update",
                 "total", "millions", "percent_vs_bp"]


def stage_macs(stage: Stage) -> int:
    """fan_in * fan_out * output positions (1 for dense layers)"""
    if stage.kind == LayerKind.CONV2D:
        oh, ow = stage.conv_hw
        return stage.patch_dim * stage.out_channels * oh * ow
    return stage.in_dim * stage.out_dim


def count_macs(arch: Sequence[LayerSpec], rule: Algorithm) -> MacReport:
    try:
        rule = Algorithm(rule)
    except ValueError:
        raise ConfigurationError(f"Unsupported rule for MAC counting: {rule}")
    stages, family = build_stages(arch)
    if family == "rnn":
        raise ConfigurationError("MAC counting covers feed-forward architectures only")

    per_layer = [stage_macs(st) for st in stages]
    forward = sum(per_layer)
    if rule == Algorithm.BP:
        transport, second = sum(per_layer[1:]), 0
    elif rule == Algorithm.FTP:
        # two projections through G, then the target pass over layers 2..L-1
        d1, dy = stages[0].out_dim, stages[-1].out_dim
        transport, second = 2 * d1 * dy, sum(per_layer[1:-1])
    else:
        transport, second = stages[-1].out_dim * stages[0].in_dim, forward
    return MacReport(rule=rule.value, first_forward=forward, transport=transport, second_forward=second,
                     weight_update=forward)


def mac_percent_delta(report: MacReport, baseline: MacReport) -> int:
    if baseline.total == 0:
        raise ConfigurationError("baseline MAC count is zero")
    return int(round(100.0 * (report.total - baseline.total) / baseline.total))


def mac_table(datasets: Sequence[str] = TABLE_DATASETS,
              rules: Sequence[Algorithm] = (Algorithm.BP, Algorithm.FTP, Algorithm.PEPITA),
              family: str = "fc") -> pd.DataFrame:
    rows: List[dict] = []
    for dataset in datasets:
        arch = architecture_for(family, dataset)
        baseline = count_macs(arch, Algorithm.BP)
        for rule in rules:
            report = count_macs(arch, rule)
            rows.append({"dataset": dataset, **report.phases, "rule": report.rule, "total": report.total,
                         "millions": report.millions, "percent_vs_bp": mac_percent_delta(report, baseline)})
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def render_text(table: pd.DataFrame) -> str:
    """Aligned text table of the headline columns"""
    view = table[["dataset", "rule", "millions", "percent_vs_bp"]].rename(
        columns={"millions": "MACs (M)", "percent_vs_bp": "vs BP (%)"})
    return view.to_string(index=False, float_format=lambda v: f"{v:.2f}")


class CostService:
    """MAC reports for the CLI and the REST API"""

    def table(self, datasets: Sequence[str] = TABLE_DATASETS) -> pd.DataFrame:
        return mac_table(datasets)

    def report(self, dataset: str, rule: Algorithm, family: str = "fc") -> Dict[str, object]:
        """Per-phase counts of one rule with the change relative to BP"""
        arch = architecture_for(family, dataset)
        report = count_macs(arch, rule)
        delta = mac_percent_delta(report, count_macs(arch, Algorithm.BP))
        logger.info(f"MACs {report.rule} on {family}/{dataset}: {report.millions}M ({delta:+d}% vs bp)")
        return {"rule": report.rule, "dataset": dataset, "phases": report.phases, "total": report.total,
                "millions": report.millions, "percent_vs_bp": delta}


# Global cost service instance
cost_service = CostService()
