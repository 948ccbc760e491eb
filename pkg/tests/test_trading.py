import statistics
import warnings

import numpy as np
import pandas as pd
import pytest

from cmar.core import CmarModel, Dims, MatrixSeries
from cmar.io import FormatError
from cmar.simulate import SimConfig, gen_model, simulate_series
from cmar.trading import (
    LONG,
    SHORT,
    TRADE_COLUMNS,
    BacktestConfig,
    BacktestConfigError,
    DegenerateSpreadWarning,
    backtest,
    backtest_equal_value,
    load_ff_panel,
    spread_weights,
    write_ff_panel,
)

FORM = 60
BETA = np.array([1.0, -1.0])


def _panel(trading_path, extra=()):
    """Two assets: a = 100 + spread, b = 100, so beta = (1, -1) gives the spread exactly."""
    formation = [1.0 if i % 2 == 0 else -1.0 for i in range(FORM)]
    spread = np.array(formation + list(trading_path) + list(extra))
    X = np.stack([100.0 + spread, np.full(spread.size, 100.0)], axis=1)[:, :, None]
    dates = tuple(d.date().isoformat() for d in pd.bdate_range("2021-01-04", periods=spread.size))
    return MatrixSeries(X, dates), spread, dates


def _stub(window):
    return BETA


def _cfg(**kw):
    return BacktestConfig(formation_days=FORM, s=1.0, **kw)


ROUND_TRIP = [0.0, 3.0, 3.0, 3.0, 3.0, -1.02, 0.0, 0.1, -0.1, 0.0]


def test_hand_traced_round_trip():
    series, spread, dates = _panel(ROUND_TRIP)
    mu0, sd0 = statistics.mean(spread[:FORM]), statistics.stdev(spread[:FORM])
    assert mu0 == 0.0
    log = backtest(series, _cfg(), _stub)
    assert len(log.events) == 1
    e = log.events[0]
    assert (e.open_date, e.side, e.close_date, e.forced) == (dates[61], SHORT, dates[65], False)
    assert abs(e.spread_open - 3.0) < 1e-12 and abs(e.spread_close + 1.02) < 1e-12
    assert abs(e.mu - mu0) < 1e-12 and abs(e.sigma - sd0) < 1e-12
    # short spread: long b, short a; P&L = -(spread change) on gross capital a + b at open
    assert abs(e.trade_return - 4.02 / 203.0) < 1e-12
    assert abs(log.cumulative_return - 4.02 / 203.0) < 1e-12
    # one refit at the start, one after the close on the preceding 60 observations
    assert [r.used_from for r in log.refits] == [dates[60], dates[65]]
    w = spread[5:65]
    mu1, sd1 = statistics.mean(w), statistics.stdev(w)
    assert mu1 - sd1 < -1.02  # the close day does not trigger a new entry
    assert log.no_lookahead()


def test_hand_traced_round_trip_equal_value():
    series, spread, dates = _panel(ROUND_TRIP)
    log = backtest_equal_value(series, _cfg(), _stub)
    e = log.events[0]
    long_leg = 100.0 / 100.0 - 1.0
    short_leg = 98.98 / 103.0 - 1.0
    assert abs(e.trade_return - (long_leg - short_leg) / 2) < 1e-12


FORCED = [0.0] * 7 + [-2.0, -1.5, -0.5]


def test_hand_traced_forced_close():
    series, spread, dates = _panel(FORCED)
    log = backtest(series, _cfg(), _stub)
    assert len(log.events) == 1
    e = log.events[0]
    assert (e.open_date, e.side, e.close_date, e.forced) == (dates[67], LONG, dates[69], True)
    assert abs(e.trade_return - 1.5 / 198.0) < 1e-12
    ev = backtest_equal_value(series, _cfg(), _stub).events[0]
    assert abs(ev.trade_return - (99.5 / 98.0 - 1.0) / 2) < 1e-12
    assert log.no_lookahead()


def test_forced_close_at_configured_end():
    series, spread, dates = _panel(FORCED[:9], extra=[5.0, 5.0, 5.0])
    log = backtest(series, _cfg(trading_end=dates[68]), _stub)
    e = log.events[-1]
    assert e.close_date == dates[68] and e.forced
    assert abs(e.trade_return - 0.5 / 198.0) < 1e-12


def test_no_entry_inside_band():
    series, _, _ = _panel([0.0] * 10)
    for run in (backtest, backtest_equal_value):
        log = run(series, _cfg(), _stub)
        assert log.events == [] and log.cumulative_return == 0.0


def test_huge_threshold_means_no_trades():
    series, _, _ = _panel(ROUND_TRIP)
    log = backtest(series, BacktestConfig(FORM, s=1e9), _stub)
    assert log.events == [] and log.cumulative_return == 0.0


def test_signals_invariant_to_positive_rescaling():
    series, _, _ = _panel(ROUND_TRIP + FORCED)
    a = backtest(series, _cfg(), _stub)
    b = backtest(series, _cfg(), lambda w: 7.5 * BETA)
    assert [(e.open_date, e.close_date, e.side) for e in a.events] == \
        [(e.open_date, e.close_date, e.side) for e in b.events]
    assert np.allclose([e.trade_return for e in a.events], [e.trade_return for e in b.events])


def test_csv_output():
    series, _, dates = _panel(ROUND_TRIP)
    text = backtest(series, _cfg(), _stub).to_csv().splitlines()
    assert text[0] == ",".join(TRADE_COLUMNS)
    row = text[1].split(",")
    assert row[0] == dates[61] and row[1] == SHORT and float(row[-1]) == pytest.approx(4.02 / 203.0)


def test_degenerate_weights_warn():
    series, _, _ = _panel(ROUND_TRIP)
    with pytest.warns(DegenerateSpreadWarning):
        log = backtest(series, _cfg(), lambda w: np.array([1.0, 0.5]))
    assert log.degenerate


def test_config_errors():
    series, _, dates = _panel(ROUND_TRIP)
    with pytest.raises(BacktestConfigError):
        backtest(series, _cfg(trading_start=dates[30]), _stub)
    with pytest.raises(BacktestConfigError):
        BacktestConfig(s=0)
    with pytest.raises(BacktestConfigError):
        BacktestConfig(formation_days=59)
    with pytest.raises(BacktestConfigError):
        BacktestConfig(method="ols")


def test_spread_weight_split():
    w = spread_weights(np.array([1.0, -1.0, 0.0, 0.0]))
    assert np.array_equal(w.plus, [1, 0, 0, 0]) and np.array_equal(w.minus, [0, 1, 0, 0])
    beta, plus, minus = spread_weights(np.ones(4))
    assert np.array_equal(minus, np.zeros(4)) and spread_weights(np.ones(4)).degenerate
    v = np.random.default_rng(0).normal(size=25)
    w = spread_weights(v)
    assert np.array_equal(w.plus - w.minus, v)


def test_spread_weights_from_model():
    m = gen_model(SimConfig(Dims(5, 5, 1, 1, 1), 100), np.random.default_rng(1))
    w = spread_weights(m)
    assert np.allclose(w.beta, np.kron(m.beta2, m.beta1).ravel())
    with pytest.raises(ValueError):
        spread_weights(gen_model(SimConfig(Dims(3, 3, 0, 2, 1), 100), np.random.default_rng(2)))


def test_cmar_driven_backtest_is_audited():
    rng = np.random.default_rng(3)
    m = gen_model(SimConfig(Dims(5, 5, 1, 1, 1), 400, include_constant=True), rng)
    X = simulate_series(m, 400, rng).values + 100.0
    dates = tuple(d.date().isoformat() for d in pd.bdate_range("2021-01-04", periods=400))
    series = MatrixSeries(X, dates)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSpreadWarning)
        for method in ("mle", "lse"):
            log = backtest(series, BacktestConfig(method=method, trading_start=dates[300]))
            assert log.no_lookahead()
            opens = [e.open_pos for e in log.events]
            closes = [e.close_pos for e in log.events]
            assert all(c >= o for o, c in zip(opens, closes))
            assert all(o2 >= c1 for c1, o2 in zip(closes, opens[1:]))
            ev = backtest_equal_value(series, BacktestConfig(method=method, trading_start=dates[300]))
            assert [e.open_pos for e in ev.events] == opens


# -- data loading --

def _ff_name(bm, op):
    b = {1: "LoBM", 5: "HiBM"}.get(bm, f"BM{bm}")
    o = {1: "LoOP", 5: "HiOP"}.get(op, f"OP{op}")
    if bm in (1, 5) and op in (1, 5):
        return f"{b} {o}"
    return f"BM{bm} OP{op}"


RAW_HEADER = [_ff_name(bm, op) for bm in range(1, 6) for op in range(1, 6)]


def _raw_file(path, rows):
    lines = [
        "This file was created using the 202301 CRSP database.",
        "The portfolios are constructed at the end of each June.",
        "",
        "  Average Value Weighted Returns -- Daily",
        "," + ",".join(RAW_HEADER),
    ]
    lines += [",".join([d] + [f"{v:.2f}" for v in vals]) for d, vals in rows]
    lines += ["", "  Average Equal Weighted Returns -- Daily", "," + ",".join(RAW_HEADER),
              "20220701," + ",".join(["9.99"] * 25)]
    path.write_text("\n".join(lines) + "\n")


def _cell(bm, op, n):
    return bm * 0.1 + op * 0.01 + n


def test_raw_fixture_levels_and_mapping(tmp_path):
    rows = [(d, [_cell(bm, op, n) for bm in range(1, 6) for op in range(1, 6)])
            for n, d in enumerate(["20220701", "20220705", "20220706"])]
    _raw_file(tmp_path / "ff.csv", rows)
    s = load_ff_panel(tmp_path / "ff.csv")
    assert s.values.shape == (3, 5, 5)
    assert s.index == ("2022-07-01", "2022-07-05", "2022-07-06")
    for n in range(3):
        for bm in range(1, 6):
            for op in range(1, 6):
                assert s.values[n, op - 1, bm - 1] == pytest.approx(_cell(bm, op, n) / 100, abs=1e-15)


def test_returns_to_levels(tmp_path):
    rows = [("20220701", [1.0] * 25), ("20220705", [-2.0] * 25)]
    _raw_file(tmp_path / "ff.csv", rows)
    s = load_ff_panel(tmp_path / "ff.csv", returns=True)
    assert np.allclose(s.values[0], 1.01) and np.allclose(s.values[1], 1.01 * 0.98)


def test_missing_rows_dropped(tmp_path):
    rows = [("20220701", [1.0] * 25), ("20220705", [-99.99] + [1.0] * 24), ("20220706", [0.5] * 25)]
    _raw_file(tmp_path / "ff.csv", rows)
    s = load_ff_panel(tmp_path / "ff.csv")
    assert s.index == ("2022-07-01", "2022-07-06")


def test_plain_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    dates = tuple(d.date().isoformat() for d in pd.bdate_range("2022-01-03", periods=30))
    series = MatrixSeries(100 + rng.normal(size=(30, 5, 5)).cumsum(axis=0), dates)
    write_ff_panel(tmp_path / "p.csv", series)
    back = load_ff_panel(tmp_path / "p.csv")
    assert back.index == dates and np.array_equal(back.values, series.values)


def test_unknown_header_lists_expected_names(tmp_path):
    (tmp_path / "bad.csv").write_text("date,foo,bar\n2022-01-03,1,2\n")
    with pytest.raises(FormatError, match="BM1 OP1"):
        load_ff_panel(tmp_path / "bad.csv")
