import hashlib
import json
import re

import pytest

from mesflow import gas
from mesflow.cli import EXIT_INPUT, EXIT_IO, EXIT_JACOBIAN, EXIT_NOT_CONVERGED, EXIT_OK, main
from mesflow.fixture import constant_profiles, generate_fixture
from mesflow.graph import LayerKind
from mesflow.io import save_network


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    small = generate_fixture(0, "small")
    save_network(small, d / "small.json")
    save_network(small.only("electricity"), d / "el.json")
    constant_profiles(small, steps=4, value=0.8).to_csv(d / "const.csv")
    return d


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_validate(files, capsys):
    code, out, _ = _run(capsys, "validate", "--network", files / "small.json")
    assert code == EXIT_OK and "electricity: 5 nodes" in out


def test_zero_load_solve_takes_one_iteration(files, capsys):
    code, out, _ = _run(capsys, "solve", "--network", files / "small.json", "--load-scale", "0")
    assert code == EXIT_OK
    assert "converged in 1 iterations" in out


def test_nominal_solve_prints_norms_below_tolerance(files, capsys, tmp_path):
    code, out, _ = _run(capsys, "solve", "--network", files / "small.json", "--out", tmp_path)
    assert code == EXIT_OK
    norm_lines = [ln for ln in out.splitlines() if ln.strip().startswith(("E ", "G ", "H_hy", "H_th"))]
    assert len(norm_lines) == 4 and all("ok" in ln for ln in norm_lines)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["converged"] and summary["iterations"] <= 6


def test_corrupted_network_exits_1_with_location(files, capsys, tmp_path):
    text = re.sub(r'"diameter_m": [0-9.]+', '"diameter_m": "wide"', (files / "small.json").read_text(), count=1)
    bad = tmp_path / "bad.json"
    bad.write_text(text)
    code, _, err = _run(capsys, "solve", "--network", bad)
    assert code == EXIT_INPUT
    assert "diameter_m (line " in err


def test_missing_network_file_exits_3(capsys, tmp_path):
    code, _, err = _run(capsys, "solve", "--network", tmp_path / "absent.json")
    assert code == EXIT_IO and "cannot read network" in err


def test_unwritable_output_exits_3(files, capsys, tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, _, err = _run(capsys, "solve", "--network", files / "small.json", "--out", blocker / "x")
    assert code == EXIT_IO and "cannot write results" in err


def test_non_convergence_exits_2(files, capsys):
    code, out, _ = _run(capsys, "solve", "--network", files / "small.json", "--max-iter", "1")
    assert code == EXIT_NOT_CONVERGED and "did not converge" in out


def test_invalid_option_exits_1(files, capsys):
    code, _, _ = _run(capsys, "solve", "--network", files / "small.json", "--tol-electric", "-1")
    assert code == EXIT_INPUT


def test_unknown_timestamp_exits_1(files, capsys):
    code, _, _ = _run(capsys, "solve", "--network", files / "small.json", "--profiles", files / "const.csv",
                      "--at", "1999-01-01T00:00:00")
    assert code == EXIT_INPUT


def _series_rows(path):
    return [r.split(",") for r in path.read_text().splitlines()[1:]]


def test_constant_profile_gives_identical_rows(files, capsys, tmp_path):
    code, out, _ = _run(capsys, "timeseries", "--network", files / "small.json", "--profiles", files / "const.csv",
                        "--no-warm-start", "--out", tmp_path / "cold")
    assert code == EXIT_OK and "4 steps, 4 converged" in out
    cold = _series_rows(tmp_path / "cold" / "series.csv")
    assert len(cold) == 4
    assert len({tuple(r[1:]) for r in cold}) == 1  # identical apart from the timestamp
    # warm starts change only the iteration column: later steps start at the solution
    _run(capsys, "timeseries", "--network", files / "small.json", "--profiles", files / "const.csv",
         "--out", tmp_path / "warm")
    warm = _series_rows(tmp_path / "warm" / "series.csv")
    assert [r[2] for r in warm] == [cold[0][2], "1", "1", "1"]
    assert all(r[3:] == cold[0][3:] for r in warm)


def test_time_range_selects_rows(files, capsys, tmp_path):
    code, _, _ = _run(capsys, "timeseries", "--network", files / "small.json", "--profiles", files / "const.csv",
                      "--from", "2016-01-18T00:15:00", "--to", "2016-01-18T00:30:00", "--out", tmp_path)
    assert code == EXIT_OK
    rows = (tmp_path / "series.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["2016-01-18T00:15:00", "2016-01-18T00:30:00"]


def test_jacobian_check_passes(files, capsys):
    code, out, _ = _run(capsys, "jacobian-check", "--network", files / "small.json", "--states", "3")
    assert code == EXIT_OK
    assert {ln.split()[0] for ln in out.splitlines()[1:-1]} == {"E", "G", "H_hy", "H_th"}


def test_frozen_friction_check_passes(files, capsys):
    code, _, _ = _run(capsys, "jacobian-check", "--network", files / "small.json", "--states", "2",
                      "--frozen-friction")
    assert code == EXIT_OK


def test_perturbed_kernel_exits_4_naming_block(files, capsys, monkeypatch):
    original = gas.gas_jacobian

    def perturbed(state, layer, frozen_friction=False):
        blocks = original(state, layer, frozen_friction)
        if layer.kind is LayerKind.GAS:
            blocks = dict(blocks, J22=blocks["J22"] * 1.01)
        return blocks

    monkeypatch.setattr(gas, "gas_jacobian", perturbed)
    code, out, _ = _run(capsys, "jacobian-check", "--network", files / "small.json", "--states", "2")
    assert code == EXIT_JACOBIAN
    assert "Jacobian check failed: block G/J22" in out


def test_electricity_only_network_checks_only_e_blocks(files, capsys):
    code, out, _ = _run(capsys, "jacobian-check", "--network", files / "el.json", "--states", "3")
    assert code == EXIT_OK
    assert {ln.split()[0] for ln in out.splitlines()[1:-1]} == {"E"}


def test_fixture_command_writes_network_and_profiles(capsys, tmp_path):
    code, _, _ = _run(capsys, "fixture", "--scale", "table1", "--out", tmp_path)
    assert code == EXIT_OK
    assert (tmp_path / "table1.json").exists() and (tmp_path / "winter_week.csv").exists()
    code, _, _ = _run(capsys, "validate", "--network", tmp_path / "table1.json")
    assert code == EXIT_OK


@pytest.mark.parametrize("cmd", [("solve",), ("timeseries", "--profiles"), ("report", "--profiles")])
def test_commands_are_deterministic(files, capsys, tmp_path, cmd):
    digests, outs = [], []
    for k in range(2):
        argv = [cmd[0], "--network", files / "small.json"]
        if len(cmd) > 1:
            argv += [cmd[1], files / "const.csv"]
        code, out, _ = _run(capsys, *argv, "--out", tmp_path / str(k), "--format", "json")
        assert code == EXIT_OK
        digests.append(_digest(tmp_path / str(k)))
        outs.append(out.replace(str(tmp_path / str(k)), "<out>"))
    assert digests[0] == digests[1] and outs[0] == outs[1]
