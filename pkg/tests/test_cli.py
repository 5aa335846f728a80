import csv
import io

import pytest

from fxlocalvol.cli import main, parse_tenor
from fxlocalvol.hedging import synthetic_history
from fxlocalvol.marketdata import write_history
from markets import sample_snapshot


def _write(path, snaps):
    with open(path, "w", newline="") as fh:
        write_history(snaps, fh)
    return str(path)


@pytest.fixture(scope="module")
def history(tmp_path_factory):
    return _write(tmp_path_factory.mktemp("h") / "history.csv", synthetic_history(12, seed=8))


@pytest.fixture(scope="module")
def day(tmp_path_factory):
    return _write(tmp_path_factory.mktemp("d") / "day.csv", [sample_snapshot()])


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_tenor():
    assert parse_tenor("1w") == 1 / 52
    assert parse_tenor("3m") == 3 / 12
    assert parse_tenor("2y") == 2.0
    assert parse_tenor("0.5") == 0.5


def test_calibrate(day, tmp_path):
    out = tmp_path / "cal.csv"
    assert main(["calibrate", "--input", day, "--output", str(out)]) == 0
    rows = _rows(out)
    assert rows[0][:8] == ["date", "tenor", "label", "side", "strike", "market_vol", "model_vol", "abs_error"]
    assert len(rows) == 51
    assert all(float(r[7]) < 0.005 for r in rows[1:])
    summary = _rows(tmp_path / "cal_summary.csv")
    assert summary[0] == ["tenor", "label", "mean_abs_error"] and len(summary) == 51


def test_backtest_outputs(history, tmp_path):
    out, summ = tmp_path / "err.csv", tmp_path / "sum.csv"
    argv = ["backtest", "--scheme", "lv_sticky", "--label", "atm", "--tenor", "1w", "--input", history,
            "--output", str(out), "--summary", str(summ)]
    assert main(argv) == 0
    rows = _rows(out)
    assert rows[0] == ["start_date", "scheme", "label", "tenor", "strike", "premium", "error"]
    assert len(rows) == 8  # 7 admissible start dates in 12 weekdays
    s = _rows(summ)
    assert s[0] == ["scheme", "label", "tenor", "mean", "std"] and s[1][:2] == ["lv_sticky", "ATM"]


def test_simulate_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"sim{k}.csv"
        assert main(["simulate", "--paths", "1000", "--vol", "0.10", "--rebalance", "250", "--seed", "42",
                     "--output", str(out)]) == 0
        outs.append(out.read_bytes() + (tmp_path / f"sim{k}_summary.csv").read_bytes())
    assert outs[0] == outs[1]


def test_ten_significant_digits(day, capsys):
    assert main(["price", "--input", day, "--tenor", "1y", "--label", "atm"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    price = row.split(",")[4]
    assert len(price.replace("0.", "", 1).lstrip("0").replace(".", "")) <= 10


def test_localvol_dump(day, tmp_path):
    out = tmp_path / "lv.csv"
    assert main(["localvol", "--input", day, "--tenor", "1m", "--grid-m", "60", "--output", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["t", "s", "sigma"]
    assert len(rows) - 1 == 61 * 543  # (M+1) x (N+1), N = round(500/12 + 500)


def test_config_file_and_flag_precedence(history, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nscheme = lv_tc\ngrid-m = 100\nmax_starts = 2\n")
    out = tmp_path / "e.csv"
    assert main(["--config", str(cfg), "backtest", "--input", history, "--output", str(out)]) == 0
    assert [r[1] for r in _rows(out)[1:]] == ["lv_tc", "lv_tc"]
    assert main(["--config", str(cfg), "backtest", "--input", history, "--scheme", "bs",
                 "--output", str(out)]) == 0
    assert [r[1] for r in _rows(out)[1:]] == ["bs", "bs"]


def test_exit_codes(history, tmp_path, capsys):
    assert main(["backtest", "--bogus"]) == 2
    assert main(["backtest", "--input", str(tmp_path / "missing.csv")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("date,spot\n")
    assert main(["calibrate", "--input", str(bad)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("fxlocalvol: error:")
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["--config", str(cfg), "backtest", "--input", history]) == 2
