import pytest

from src.models.schemas import Algorithm
from src.services.cost_service import (
    TABLE_COLUMNS, cost_service, count_macs, mac_percent_delta, mac_table, render_text, stage_macs,
)
from src.services.network_service import architecture_for, build_stages, cnn_architecture, fc_architecture, rnn_architecture
from src.utils.errors import ConfigurationError


@pytest.mark.parametrize("dataset, rule, millions", [
    ("mnist", Algorithm.BP, 2.00),
    ("mnist", Algorithm.FTP, 2.02),
    ("cifar10", Algorithm.BP, 6.69),
    ("cifar10", Algorithm.FTP, 6.71),
    ("cifar100", Algorithm.BP, 6.72),
])
def test_reported_cells(dataset, rule, millions):
    assert count_macs(architecture_for("fc", dataset), rule).millions == millions


def test_cifar100_ftp_cell_is_close():
    assert count_macs(architecture_for("fc", "cifar100"), Algorithm.FTP).millions == pytest.approx(6.93, rel=0.015)


@pytest.mark.parametrize("dataset, delta", [("mnist", 1), ("cifar10", 0), ("cifar100", 3)])
def test_percent_change_against_bp(dataset, delta):
    arch = architecture_for("fc", dataset)
    assert mac_percent_delta(count_macs(arch, Algorithm.FTP), count_macs(arch, Algorithm.BP)) == delta


def test_phase_breakdown_mnist():
    report = count_macs(fc_architecture(), Algorithm.FTP)
    assert report.phases == {"first_forward": 935168, "transport": 20480, "second_forward": 131072,
                             "weight_update": 935168}
    assert report.total == 2021888


@pytest.mark.parametrize("hidden", [(16,), (32, 8), (64, 32, 16)])
def test_ftp_minus_bp_identity(hidden):
    arch = fc_architecture(20, hidden, 5, dropout=0.0)
    layers = [stage_macs(st) for st in build_stages(arch)[0]]
    ftp, bp = count_macs(arch, Algorithm.FTP), count_macs(arch, Algorithm.BP)
    assert ftp.total - bp.total == 2 * hidden[0] * 5 + sum(layers[1:-1]) - sum(layers[1:])


def test_pepita_second_pass_is_a_full_forward():
    report = count_macs(fc_architecture(), Algorithm.PEPITA)
    assert report.second_forward == report.first_forward
    assert report.transport == 784 * 10


def test_conv_counts_output_positions():
    stage = build_stages(cnn_architecture())[0][0]
    assert stage_macs(stage) == 25 * 32 * 24 * 24


def test_recurrent_nets_are_rejected():
    with pytest.raises(ConfigurationError):
        count_macs(rnn_architecture(3, hidden=8), Algorithm.BP)


def test_unknown_rule():
    with pytest.raises(ConfigurationError):
        count_macs(fc_architecture(), "dtp")


def test_table_layout():
    table = mac_table()
    assert list(table.columns) == TABLE_COLUMNS
    assert len(table) == 9
    bp = table[table.rule == "bp"]
    assert (bp.percent_vs_bp == 0).all()
    assert "vs BP (%)" in render_text(table)


def test_cost_service_report():
    body = cost_service.report("cifar10", Algorithm.FTP)
    assert body["millions"] == 6.71
    assert body["percent_vs_bp"] == 0
    assert body["total"] == sum(body["phases"].values())
    assert len(cost_service.table(["mnist"])) == 3
