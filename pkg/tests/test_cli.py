import numpy as np
import pytest

from universalize.cli import (
    RunConfig,
    compare_modes,
    load_config,
    main,
    parse_config_text,
)
from universalize.errors import ConfigError, GridTooLarge
from universalize.geometry import ParamSpace, build_grid, single_point_grid
from universalize.market import cover_market, ingest_csv
from universalize.sampler import SamplerBudget
from universalize.strategies import CRP


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    summary = dict(line.split("=", 1) for line in out.out.splitlines() if "=" in line)
    return code, summary, out.err


def test_gen_market_cover(tmp_path, capsys):
    code, s, _ = run(capsys, "gen-market", "--out", str(tmp_path), "--set", "generator=cover", "--set", "days=4")
    assert code == 0
    series = ingest_csv(s["market_file"])
    np.testing.assert_array_equal(series[0].prices, [1, 1, 1, 1, 1])
    np.testing.assert_array_equal(series[1].prices, [1, 2, 1, 2, 1])


def test_gen_market_constant_and_lognormal(tmp_path, capsys):
    code, s, _ = run(capsys, "gen-market", "--out", str(tmp_path / "c"), "--set", "generator=constant",
                     "--set", "m=3", "--set", "days=5")
    assert code == 0
    assert all(np.all(p.prices == 1.0) for p in ingest_csv(s["market_file"]))
    files = []
    for sub in ("a", "b"):
        code, s, _ = run(capsys, "gen-market", "--out", str(tmp_path / sub), "--seed", "4",
                         "--set", "generator=iid-lognormal", "--set", "days=30")
        assert code == 0
        files.append((tmp_path / sub / "market.csv").read_bytes())
    assert files[0] == files[1]
    assert len(ingest_csv(tmp_path / "a" / "market.csv")[0]) == 31
    code, _, err = run(capsys, "gen-market", "--out", str(tmp_path), "--set", "generator=iid-lognormal")
    assert code == 2 and "seed" in err


def test_backtest_fixed_cover(tmp_path, capsys):
    code, s, _ = run(capsys, "backtest", "--mode", "fixed", "--out", str(tmp_path), "--set", "w=0.5,0.5",
                     "--set", "days=20")
    assert code == 0
    assert float(s["final_wealth"]) == pytest.approx((9 / 8) ** 10, rel=1e-12)
    assert (tmp_path / "ledger.csv").read_text().startswith(
        "day,universal_return,universal_wealth_log,best_wealth_log,regret\n")


def test_backtest_exact_cover(tmp_path, capsys):
    code, s, _ = run(capsys, "backtest", "--mode", "exact", "--grid-delta", "1e-4", "--out", str(tmp_path),
                     "--set", "days=2")
    assert code == 0
    assert float(s["final_wealth"]) == pytest.approx(13 / 12, abs=1e-6)
    assert float(s["regret"]) == pytest.approx(0.01887, abs=1e-5)


def test_backtest_from_csv_and_trading_strategies(tmp_path, capsys):
    run(capsys, "gen-market", "--out", str(tmp_path), "--seed", "2", "--set", "generator=iid-lognormal",
        "--set", "days=40", "--set", "sigma=0.02")
    csv = str(tmp_path / "market.csv")
    for strat, extra in (("crp", []), ("ma", ["--set", "k=3"]), ("sr", ["--set", "k=3"]),
                         ("ia", ["--set", "k=2"]), ("crpside", [])):
        code, s, err = run(capsys, "backtest", "--out", str(tmp_path / strat), "--grid-delta", "0.25",
                           "--set", "market=csv", "--set", f"csv={csv}", "--set", f"strategy={strat}", *extra)
        assert code == 0, err
        assert float(s["regret"]) >= 0


def test_dynamic_mode(tmp_path, capsys):
    code, s, _ = run(capsys, "backtest", "--mode", "dynamic", "--grid-delta", "1e-3", "--out", str(tmp_path),
                     "--set", "days=4", "--set", "interval=2")
    assert code == 0
    assert float(s["final_wealth"]) == pytest.approx((13 / 12) ** 2, abs=1e-5)


def test_exit_codes(tmp_path, capsys):
    assert run(capsys, "backtest", "--set", "market=csv", "--set", f"csv={tmp_path / 'nope.csv'}")[0] == 3
    assert run(capsys, "backtest", "--set", "colour=blue")[0] == 2
    assert run(capsys, "backtest", "--mode", "fixed")[0] == 2
    assert run(capsys, "backtest", "--mode", "sampled")[0] == 2
    assert run(capsys, "backtest", "--set", "epsilon=1.5")[0] == 2
    assert run(capsys, "backtest", "--config", str(tmp_path / "missing.cfg"))[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("date,a\n2020-01-02,1\n2020-01-01,2\n")
    assert run(capsys, "backtest", "--set", "market=csv", "--set", f"csv={bad}")[0] == 3
    with pytest.raises(SystemExit) as exc:
        main(["backtest", "--mode", "bogus"])
    assert exc.value.code == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ndays = 6\nseed = 3\ngrid-delta = 0.5\ndamping = off\n\n")
    c = load_config(cfg)
    assert (c.days, c.seed, c.grid_delta, c.damping) == (6, 3, 0.5, False)
    c = load_config(cfg, {"days": "4", "seed": 9})
    assert (c.days, c.seed, c.grid_delta) == (4, 9, 0.5)
    assert load_config().days == RunConfig().days
    with pytest.raises(ConfigError):
        parse_config_text("days: 4")
    with pytest.raises(ConfigError):
        parse_config_text("days = many")


def test_config_file_used_by_cli(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"mode = fixed\nw = 0.5,0.5\ndays = 6\nout = {tmp_path / 'o'}\n")
    code, s, _ = run(capsys, "backtest", "--config", str(cfg))
    assert code == 0 and s["days"] == "6"
    code, s, _ = run(capsys, "backtest", "--config", str(cfg), "--set", "days=2")
    assert s["days"] == "2" and float(s["final_wealth"]) == pytest.approx(9 / 8)


def test_diagnose(tmp_path, capsys):
    code, s, _ = run(capsys, "diagnose", "--seed", "1", "--grid-delta", "0.1", "--samples", "20000",
                     "--burn-in", "1000", "--out", str(tmp_path), "--set", "days=4", "--set", "thin=20")
    assert code == 0
    report = dict(line.split("=", 1) for line in (tmp_path / "diagnose.txt").read_text().splitlines())
    assert report["log_concavity_eligible"] == "True" and report["log_concavity_pass"] == "True"
    assert float(report["tv_max"]) <= 0.1
    assert "theoretical_tau" in report
    rows = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert rows[0] == "day,chain,acceptance_rate,ess,tv_exact"


def test_diagnose_step_strategy_and_threshold(tmp_path, capsys):
    code, s, _ = run(capsys, "diagnose", "--seed", "1", "--grid-delta", "0.5", "--samples", "200",
                     "--burn-in", "10", "--out", str(tmp_path), "--set", "strategy=ma", "--set", "alloc=step",
                     "--set", "market=iid-lognormal", "--set", "days=12", "--set", "tv_threshold=1e-9")
    assert code == 4
    report = (tmp_path / "diagnose.txt").read_text()
    assert "universalizable=False" in report and "log_concavity_eligible=False" in report


def test_grid_too_large(tmp_path, capsys):
    code, _, err = run(capsys, "compare", "--seed", "1", "--out", str(tmp_path), "--set", "tv_cap=10")
    assert code == 5
    with pytest.raises(GridTooLarge):
        compare_modes(CRP(2), build_grid(ParamSpace(2), 0.1), cover_market(2), SamplerBudget(10, 0, 1), 0, cap=5)


def test_compare_single_point_and_seeds(tmp_path, capsys):
    c = compare_modes(CRP(2), single_point_grid([0.3, 0.7]), cover_market(4), SamplerBudget(100, 10, 2), seed=0)
    assert c.deviation.max() == 0.0
    outs = []
    for seed in ("1", "2"):
        code, s, _ = run(capsys, "compare", "--seed", seed, "--grid-delta", "0.1", "--samples", "500",
                         "--burn-in", "100", "--out", str(tmp_path / seed), "--set", "days=4")
        assert code == 0
        rows = [line.split(",") for line in (tmp_path / seed / "compare.csv").read_text().splitlines()[1:]]
        assert all(float(r[4]) == abs(float(r[3]) - float(r[2])) for r in rows)
        outs.append(rows)
    assert [r[2] for r in outs[0]] == [r[2] for r in outs[1]]
    assert [r[3] for r in outs[0]] != [r[3] for r in outs[1]]


def test_sampled_backtest_byte_identical(tmp_path, capsys):
    results = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code, s, _ = run(capsys, "backtest", "--mode", "sampled", "--seed", "5", "--samples", "2000",
                         "--burn-in", "500", "--chains", "3", "--grid-delta", "0.05", "--out", str(out),
                         "--set", "days=5")
        assert code == 0
        s.pop("ledger_file"), s.pop("diagnostics_file")
        results.append((s, (out / "ledger.csv").read_bytes(), (out / "diagnostics.csv").read_bytes()))
    assert results[0] == results[1]
