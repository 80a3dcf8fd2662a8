import csv
import io
import json
import math

import pytest

from recoil.atoms import lookup_species
from recoil.cli import (
    EXIT_OK,
    EXIT_QUADRATURE,
    EXIT_USAGE,
    EXIT_WRITE,
    main,
)
from recoil.herald import HeraldChannel
from recoil.output import sweep_label


def link(eta_emit=0.0, eta_exc=0.0, nbar=0.0, frequency_khz=2000, **sections):
    raw = {
        "emitters": {
            "A": {
                "species": "171Yb+@369",
                "modes": [
                    {
                        "frequency_khz": frequency_khz,
                        "frequency_unit": "Hz_linear",
                        "nbar": nbar,
                        "eta_emit": eta_emit,
                        "eta_exc": eta_exc,
                    }
                ],
            }
        },
        "protocol": {"timebin_ns": 40},
        "windows": {"w": 2.0},
    }
    raw.update(sections)
    return raw


STRONG = {"eta_emit": 0.3, "eta_exc": 0.1, "nbar": 2.0}


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_table1_markdown(capsys):
    code, out, _ = run(capsys, "table1")
    assert code == EXIT_OK
    rows = [line for line in out.splitlines() if line.startswith("| ") and "@" in line]
    assert len(rows) == 12
    assert "| 171Yb+@369 | 8.6 | 0.58 | 0.008 |" in out
    assert "| 9Be+@313 | 226 | 5.14 | 0.218 |" in out
    assert "kappa convention: table" in out


def test_table1_printed_convention(capsys):
    code, out, _ = run(capsys, "table1", "--kappa", "printed-eq37")
    assert code == EXIT_OK
    assert "| 171Yb+@369 | 8.6 | 0.58 | 0.033 |" in out


def test_table1_zero_window(capsys):
    _, out, _ = run(capsys, "table1", "--w", "0")
    assert "| 171Yb+@369 | 8.6 | 0.58 | 0.000 |" in out


def test_table1_csv_file(tmp_path, capsys):
    path = tmp_path / "out" / "table.csv"
    code, out, _ = run(capsys, "table1", "--format", "csv", "--out", str(path))
    assert code == EXIT_OK
    assert out == ""
    data = path.read_bytes()
    assert b"\r" not in data
    rows = list(csv.DictReader(io.StringIO(data.decode())))
    assert len(rows) == 12
    assert rows[0]["species"] == "9Be+@313"
    assert float(rows[9]["recoil_kHz"]) == pytest.approx(8.569, rel=1e-3)


def test_table1_json(capsys):
    _, out, _ = run(capsys, "table1", "--format", "json", "--kappa", "oracle")
    record = json.loads(out)
    assert record["kappa_dimless"] == 1.0
    assert record["W_dimless"] == pytest.approx(0.373929, rel=1e-5)
    assert len(record["rows"]) == 12


def test_table1_is_deterministic(tmp_path, capsys):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "table1", "--format", "json", "--out", str(first))
    run(capsys, "table1", "--format", "json", "--out", str(second))
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["table1", "--bogus"],
        ["table1", "--kappa", "half"],
        ["table1", "--w", "-1"],
        [],
        ["fidelity"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == EXIT_OK
    assert "table1" in out


def test_unwritable_output(tmp_path, capsys):
    code, _, err = run(capsys, "table1", "--out", str(tmp_path))
    assert code == EXIT_WRITE
    assert "cannot write" in err


def test_missing_config(tmp_path, capsys):
    code, _, err = run(capsys, "fidelity", "--config", str(tmp_path / "nope.json"))
    assert code == EXIT_USAGE
    assert "ERROR" in err


def test_invalid_config(write_config, capsys):
    raw = link()
    raw["windows"]["size"] = 3
    code, _, err = run(capsys, "fidelity", "--config", str(write_config(raw)))
    assert code == EXIT_USAGE
    assert "windows.size" in err


def test_fidelity_without_recoil(write_config, capsys):
    code, out, _ = run(capsys, "fidelity", "--config", str(write_config(link())))
    assert code == EXIT_OK
    record = json.loads(out)
    assert record["yield_prob"] == pytest.approx(1 - math.exp(-2))
    assert record["warnings"] == []
    for channel in HeraldChannel:
        assert record["channels"][channel.value]["fidelity_prob"] == pytest.approx(1.0, abs=1e-12)


def test_fidelity_with_rewind_section(write_config, capsys):
    raw = link(**STRONG, rewind={"efficiency": 1.0})
    code, out, _ = run(capsys, "fidelity", "--config", str(write_config(raw)))
    assert code == EXIT_OK
    record = json.loads(out)
    plain = record["channels"]["same_1100"]["fidelity_prob"]
    rewound = record["channels_with_rewind"]["same_1100"]["fidelity_prob"]
    assert plain < 1 - 1e-4
    assert rewound == pytest.approx(1.0, abs=1e-10)


def test_fidelity_reports_unconverged_quadrature(write_config, capsys):
    raw = link(**STRONG, quadrature={"nodes": 2, "max_nodes": 4})
    code, out, _ = run(capsys, "fidelity", "--config", str(write_config(raw)))
    assert code == EXIT_QUADRATURE
    record = json.loads(out)
    assert any("not converged" in warning for warning in record["warnings"])


def test_sweep_window(write_config, capsys):
    raw = link(**STRONG, sweep={"name": "windows.w", "values": [1.0, 2.0, 4.0]})
    code, out, _ = run(capsys, "sweep", "--config", str(write_config(raw)), "--workers", "2")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(row["windows.w_dimless"]) for row in rows] == [1.0, 2.0, 4.0]
    for row in rows:
        w = float(row["windows.w_dimless"])
        assert float(row["yield_prob"]) == pytest.approx(1 - math.exp(-w))
    fidelities = [float(row["opposite_1001_fidelity_prob"]) for row in rows]
    assert fidelities == sorted(fidelities, reverse=True)


@pytest.mark.parametrize(
    "name, label",
    [
        ("windows.w", "windows.w_dimless"),
        ("windows.detector_window_ns", "windows.detector_window_ns"),
        ("protocol.detector_efficiency", "protocol.detector_efficiency_prob"),
        ("mc.samples", "mc.samples_count"),
    ],
)
def test_sweep_label_carries_unit(name, label):
    assert sweep_label(name) == label


def test_sweep_imbalance_leaves_same_channels(write_config, capsys):
    raw = link(**STRONG, sweep={"name": "protocol.beamsplitter.imbalance", "values": [0.0, 0.2]})
    _, out, _ = run(capsys, "sweep", "--config", str(write_config(raw)))
    rows = list(csv.DictReader(io.StringIO(out)))
    same = [float(row["same_1100_fidelity_prob"]) for row in rows]
    assert same[0] == pytest.approx(same[1], abs=1e-8)


def test_sweep_empty_grid(write_config, capsys):
    raw = link(sweep={"name": "windows.w", "values": []})
    code, out, _ = run(capsys, "sweep", "--config", str(write_config(raw)))
    assert code == EXIT_OK
    assert out.splitlines()[0].startswith("windows.w_dimless,")
    assert len(out.splitlines()) == 1


def test_sweep_invalid_point_fails_before_computing(write_config, capsys):
    raw = link(sweep={"name": "windows.w", "values": [2.0, -1.0]})
    code, out, _ = run(capsys, "sweep", "--config", str(write_config(raw)))
    assert code == EXIT_USAGE
    assert out == ""


def test_sweep_requires_section(write_config, capsys):
    code, _, _ = run(capsys, "sweep", "--config", str(write_config(link())))
    assert code == EXIT_USAGE


def test_oracle_compare_agrees(write_config, capsys):
    raw = link(**STRONG)
    code, out, _ = run(
        capsys, "oracle-compare", "--config", str(write_config(raw)), "--samples", "50000"
    )
    assert code == EXIT_OK
    record = json.loads(out)
    assert record["agree"] is True
    assert record["max_difference_sigma"] <= 5
    assert set(record["channels"]) == {c.value for c in HeraldChannel}
    assert set(record["closed_form_infidelity_prob"]) == {"table", "printed-eq37", "oracle"}


def test_oracle_compare_is_deterministic(write_config, tmp_path, capsys):
    config = str(write_config(link(**STRONG, mc={"samples": 20000, "seed": 4})))
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    assert run(capsys, "oracle-compare", "--config", config, "--out", str(first))[0] == EXIT_OK
    run(capsys, "oracle-compare", "--config", config, "--workers", "3", "--out", str(second))
    assert first.read_bytes() == second.read_bytes()


def test_oracle_compare_needs_samples(write_config, capsys):
    code, _, _ = run(capsys, "oracle-compare", "--config", str(write_config(link())))
    assert code == EXIT_USAGE


def test_rewind_check(write_config, capsys):
    raw = link(**STRONG, rewind={"pairs": 3, "trials": 200})
    code, out, _ = run(capsys, "rewind-check", "--config", str(write_config(raw)), "--seed", "2")
    assert code == EXIT_OK
    record = json.loads(out)
    assert len(record["events"]) == 3
    assert record["max_deficit_dimless"] <= 1e-12
    assert all(event["swapped_times_deficit_dimless"] > 0 for event in record["events"])


@pytest.mark.parametrize("imbalance", [0.0, 0.1])
def test_oracle_compare_kappa_ignores_imbalance(write_config, capsys, imbalance):
    tau = lookup_species("171Yb+@369").excited_lifetime
    raw = link(protocol={"timebin_ns": 0, "beamsplitter": {"imbalance": imbalance}})
    raw["emitters"]["A"]["modes"] = [
        {"frequency_khz": 1e-2 / tau / 1e3, "frequency_unit": "rad_per_s", "nbar": "doppler"}
    ]
    code, out, _ = run(
        capsys, "oracle-compare", "--config", str(write_config(raw)), "--samples", "20000"
    )
    assert code == EXIT_OK
    record = json.loads(out)
    assert record["kappa_channel"] == HeraldChannel.SAME_1100.value
    assert record["kappa_quadrature"]["value_dimless"] == pytest.approx(1.0, rel=0.05)
