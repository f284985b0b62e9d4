import datetime as dt
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from universalize.errors import InsufficientHistory, MarginBreach, NonPositivePrice, ParseError
from universalize.market import (
    MarginSpec,
    MarketSeries,
    PriceSeries,
    constant_market,
    cover_market,
    ingest_csv,
    lognormal_market,
    normalize_environment,
    normalize_indicators,
    short_return,
    trading_market,
    write_csv,
)


def test_short_return_values():
    assert short_return(1.0, MarginSpec(1.0)) == 1.0
    assert short_return(0.5, MarginSpec(1.0)) == 1.5
    assert short_return(1.1, MarginSpec(0.5)) == pytest.approx(0.8)
    np.testing.assert_allclose(short_return(np.array([0.9, 1.2]), 0.25), [1.4, 0.2])


def test_short_return_breach():
    with pytest.raises(MarginBreach) as exc:
        short_return(2.0, MarginSpec(1.0))
    assert exc.value.alpha == 1.0
    with pytest.raises(MarginBreach):
        short_return(np.array([1.0, 1.3]), 0.25)


@given(alpha=st.sampled_from([0.25, 0.5, 1.0]), u=st.floats(1e-6, 1 - 1e-6))
def test_short_return_positive_and_decreasing(alpha, u):
    x = u * (1 + alpha)
    y = short_return(x, alpha)
    assert y > 0
    assert short_return(x * 0.99, alpha) > y


def test_margin_spec_validation():
    with pytest.raises(ValueError):
        MarginSpec(0.0)
    with pytest.raises(ValueError):
        MarginSpec(1.5)
    assert MarginSpec(0.25).neutral_long == pytest.approx(0.8)


def test_trading_market_columns():
    p = PriceSeries("abc", np.array([1.0, 1.1, 0.99]))
    mk = trading_market(p, MarginSpec(0.5))
    np.testing.assert_allclose(mk.returns[:, 0], [1.1, 0.9])
    np.testing.assert_allclose(mk.returns[:, 1], [0.8, 1.2])
    assert mk.labels == ("abc:long", "abc:short")


def test_trading_market_breach_raise_and_clamp(caplog):
    p = PriceSeries("abc", np.array([1.0, 2.5, 2.4]))
    with pytest.raises(MarginBreach) as exc:
        trading_market(p, MarginSpec(1.0))
    assert exc.value.day == 0
    with caplog.at_level(logging.WARNING):
        mk = trading_market(p, MarginSpec(1.0), on_breach="clamp")
    assert "clamping" in caplog.text
    assert mk.returns[0, 0] < 2.0
    assert mk.returns[0, 1] > 0


def test_cover_market_and_prices():
    mk = cover_market(4)
    np.testing.assert_array_equal(mk.returns, [[1, 2], [1, 0.5], [1, 2], [1, 0.5]])
    np.testing.assert_array_equal(mk.to_prices(), [[1, 1], [1, 2], [1, 1], [1, 2], [1, 1]])


def test_market_series_is_read_only():
    mk = constant_market(3, 2)
    with pytest.raises(ValueError):
        mk.returns[0, 0] = 2.0
    with pytest.raises(ValueError):
        MarketSeries(np.array([[1.0, 0.0]]))


def test_lognormal_market_deterministic():
    a = lognormal_market(10, 3, sigma=0.1, seed=7)
    b = lognormal_market(10, 3, sigma=0.1, seed=7)
    np.testing.assert_array_equal(a.returns, b.returns)
    assert not np.array_equal(a.returns, lognormal_market(10, 3, sigma=0.1, seed=8).returns)


def test_price_series_rejects_nonpositive():
    with pytest.raises(NonPositivePrice):
        PriceSeries("x", np.array([1.0, 0.0]))
    with pytest.raises(InsufficientHistory):
        PriceSeries("x", np.array([1.0])).factors()


def test_normalize_environment_window():
    p = np.array([4.0, 2.0, 8.0, 5.0, 6.0])
    env = normalize_environment(p, k=3, t=4)
    # previous prices, most recent first: 5, 8, 2; scaled by max(8, 6)
    np.testing.assert_allclose(env.price_history, [5 / 8, 1.0, 2 / 8])
    np.testing.assert_allclose(env.min_history, [5 / 8, 5 / 8, 2 / 8])
    np.testing.assert_allclose(env.max_history, [5 / 8, 1.0, 1.0])
    assert env.current_price == pytest.approx(6 / 8)
    env.check()


def test_normalize_environment_current_price_can_set_scale():
    env = normalize_environment(np.array([1.0, 2.0, 4.0]), k=2, t=2)
    assert env.current_price == 1.0
    np.testing.assert_allclose(env.price_history, [0.5, 0.25])


def test_normalize_environment_needs_history():
    with pytest.raises(InsufficientHistory):
        normalize_environment(np.ones(5), k=3, t=2)


@given(st.lists(st.floats(0.1, 10.0), min_size=6, max_size=12), st.integers(1, 4))
def test_normalize_environment_range(prices, k):
    env = normalize_environment(np.array(prices), k)
    vals = np.r_[env.price_history, env.min_history, env.max_history, env.current_price]
    assert vals.max() == pytest.approx(1.0)
    assert np.all(vals > 0)
    assert np.all(env.min_history <= env.max_history)
    assert np.all(np.diff(env.min_history) <= 0) and np.all(np.diff(env.max_history) >= 0)


def test_normalize_indicators_column_max():
    raw = np.array([[1.0, 4.0], [2.0, 2.0], [0.5, 1.0]])
    v = normalize_indicators(raw)
    np.testing.assert_allclose(v.max(axis=0), 1.0)
    np.testing.assert_allclose(v[:, 0], [0.5, 1.0, 0.25])


def test_csv_round_trip(tmp_path):
    prices = np.array([[1.0, 10.5], [1.25, 9.75], [0.5, 11.0]])
    path = write_csv(tmp_path / "m.csv", prices, ["a", "b"])
    series = ingest_csv(path)
    assert [s.ticker for s in series] == ["a", "b"]
    np.testing.assert_array_equal(np.column_stack([s.prices for s in series]), prices)
    assert series[0].dates[0] == dt.date(2000, 1, 3).isoformat()


@pytest.mark.parametrize("body, err, row, col", [
    ("date,a\n2020-01-01,1\n2020-01-02,\n", ParseError, 2, "a"),
    ("date,a\n2020-01-01,1\n2020-01-01,2\n", ParseError, 2, "date"),
    ("date,a\n2020-01-01,1\n2020-13-01,2\n", ParseError, 2, "date"),
    ("date,a\n2020-01-01,1\n2020-01-02,-3\n", NonPositivePrice, 2, "a"),
    ("date,a\n2020-01-01,abc\n", ParseError, 1, "a"),
    ("when,a\n2020-01-01,1\n", ParseError, 0, None),
])
def test_csv_errors(tmp_path, body, err, row, col):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(err) as exc:
        ingest_csv(path)
    assert exc.value.row == row
    assert exc.value.column == col
