"""Rolling pairs trading on the spread ``beta' vec(X_t)`` with ``beta = beta2 kron beta1``.

Rules, evaluated at each daily close from ``trading_start`` to ``trading_end``:

* flat and spread >= mu + s*sigma: short the spread (long the negative-weight
  basket, short the positive-weight basket); flat and spread <= mu - s*sigma:
  the reverse;
* a short-spread position closes once the spread reaches mu - s*sigma, a
  long-spread position once it reaches mu + s*sigma;
* after every close, beta, mu and sigma are re-estimated on the
  ``formation_days`` observations strictly before the close date and the same
  day is checked for a new entry;
* anything open on the last day is closed at that day's prices.
"""
from __future__ import annotations

import csv
import io
import logging
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .core import CmarModel, MatrixSeries, kron
from .fitting import FitConfig
from .io import FormatError
from .lse import lse_fit
from .mle import mle_fit

log = logging.getLogger(__name__)

TRADE_COLUMNS = (
    "open_date", "side", "close_date", "spread_open", "spread_close",
    "mu", "sigma", "trade_return", "cum_return",
)
LONG, SHORT = "long-spread", "short-spread"


class BacktestConfigError(ValueError):
    pass


class DegenerateSpreadWarning(UserWarning):
    pass


# -- data --------------------------------------------------------------------

_FF_TOKEN = re.compile(r"^(?:(Lo|Hi)(BM|OP|INV|ME)|(BM|OP|INV|ME)(\d))$", re.IGNORECASE)
_WIDE = re.compile(r"^v_(\d+)_(\d+)$")
_FF_MISSING = (-99.99, -999.0)


def _ff_position(name: str):
    """Map e.g. ``"BM2 OP4"`` or ``"LoBM HiOP"`` to ``(row, col)``: row = OP quintile, col = BM quintile."""
    levels = {}
    for tok in name.split():
        m = _FF_TOKEN.match(tok)
        if not m:
            return None
        if m.group(1):
            factor = m.group(2).upper()
            level = 1 if m.group(1).lower() == "lo" else 5
        else:
            factor = m.group(3).upper()
            level = int(m.group(4))
        levels[factor] = level
    if set(levels) != {"BM", "OP"}:
        return None
    return levels["OP"] - 1, levels["BM"] - 1


def _column_map(names):
    pos = []
    for n in names:
        p = _ff_position(n.strip())
        if p is None:
            m = _WIDE.match(n.strip())
            if m:
                p = (int(m.group(1)) - 1, int(m.group(2)) - 1)
        if p is None:
            expected = ", ".join(
                f"BM{j} OP{i}" for i in range(1, 6) for j in range(1, 6)
            )
            raise FormatError(
                f"unrecognised portfolio column {n!r}; expected names such as {expected} "
                "(LoBM/HiBM and LoOP/HiOP accepted) or v_<row>_<col>"
            )
        pos.append(p)
    if len(set(pos)) != len(pos):
        raise FormatError("duplicate portfolio positions in header")
    return pos


def _read_french_raw(lines):
    """Extract the first table of a Ken French data-library CSV."""
    start = None
    for i, line in enumerate(lines):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) >= 26 and cells[0] == "" and _ff_position(cells[1]) is not None:
            start = i
            break
    if start is None:
        return None
    header = [c.strip() for c in lines[start].split(",")][1:]
    rows = []
    for line in lines[start + 1:]:
        cells = [c.strip() for c in line.split(",")]
        if not cells[0].isdigit():
            break
        rows.append(cells)
    df = pd.DataFrame([r[1:] for r in rows], columns=header, dtype=float)
    df.insert(0, "date", [r[0] for r in rows])
    return df


def load_ff_panel(path, returns: bool = False, percent: Optional[bool] = None) -> MatrixSeries:
    """Load 25 portfolios as a 5x5 daily series (rows: profitability, columns: book-to-market).

    Accepts the raw data-library CSV (first table is used, values in percent)
    or a plain CSV with a date column followed by 25 portfolio columns. With
    ``returns`` the values are compounded into levels starting from
    ``1 + r_1``. Rows with missing values are dropped.
    """
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    df = _read_french_raw(lines)
    if df is not None:
        percent = True if percent is None else percent
    else:
        df = pd.read_csv(io.StringIO("\n".join(lines)), float_precision="round_trip")
        percent = False if percent is None else percent
    date_col = df.columns[0]
    names = list(df.columns[1:])
    pos = _column_map(names)
    d1 = max(i for i, _ in pos) + 1
    d2 = max(j for _, j in pos) + 1
    if d1 * d2 != len(pos):
        raise FormatError(f"{len(pos)} columns do not fill a {d1}x{d2} grid")
    vals = df[names].to_numpy(float)
    bad = np.isnan(vals).any(axis=1) | np.isin(vals, _FF_MISSING).any(axis=1)
    if bad.any():
        log.warning("dropping %d rows with missing values", int(bad.sum()))
    vals = vals[~bad]
    dates = pd.to_datetime(df[date_col][~bad].astype(str), format="mixed")
    if percent:
        vals = vals / 100.0
    if returns:
        vals = np.cumprod(1.0 + vals, axis=0)
    X = np.empty((len(vals), d1, d2))
    for c, (i, j) in enumerate(pos):
        X[:, i, j] = vals[:, c]
    return MatrixSeries(X, tuple(d.date().isoformat() for d in dates))


def write_ff_panel(path, series: MatrixSeries) -> None:
    """Write a 5x5 series as a plain CSV with ``BMj OPi`` columns (round-trips through :func:`load_ff_panel`)."""
    T, d1, d2 = series.values.shape
    cols = {}
    for j in range(d2):
        for i in range(d1):
            cols[f"BM{j + 1} OP{i + 1}"] = series.values[:, i, j]
    df = pd.DataFrame(cols)
    idx = series.index if series.index is not None else range(1, T + 1)
    df.insert(0, "date", list(idx))
    df.to_csv(path, index=False, float_format="%.17g")


# -- strategy ----------------------------------------------------------------

@dataclass(frozen=True)
class SpreadWeights:
    beta: np.ndarray
    plus: np.ndarray
    minus: np.ndarray

    def __iter__(self):
        return iter((self.beta, self.plus, self.minus))

    @property
    def degenerate(self) -> bool:
        return not (np.any(self.plus > 0) and np.any(self.minus > 0))


def spread_weights(model_or_beta) -> SpreadWeights:
    """``beta2 kron beta1`` split into positive and negative parts."""
    if isinstance(model_or_beta, CmarModel):
        m = model_or_beta
        if m.dims.r1 != 1 or m.dims.r2 != 1:
            raise ValueError("spread weights need r1 = r2 = 1")
        beta = kron(m.beta2, m.beta1).ravel()
    else:
        beta = np.asarray(model_or_beta, dtype=float).ravel()
    return SpreadWeights(beta, np.maximum(beta, 0.0), np.maximum(-beta, 0.0))


@dataclass(frozen=True)
class BacktestConfig:
    formation_days: int = 252
    s: float = 1.0
    ranks: tuple = (1, 1)
    k: int = 1
    include_constant: bool = True
    method: str = "mle"
    trading_start: Optional[str] = None
    trading_end: Optional[str] = None
    cost_bps: float = 0.0

    def __post_init__(self):
        if not self.s > 0:
            raise BacktestConfigError("threshold s must be positive")
        if self.formation_days < 60:
            raise BacktestConfigError("formation_days must be at least 60")
        if self.method not in ("mle", "lse"):
            raise BacktestConfigError(f"unknown method {self.method!r}")


@dataclass
class TradeEvent:
    open_date: object
    side: str
    close_date: object
    forced: bool
    spread_open: float
    spread_close: float
    mu: float
    sigma: float
    trade_return: float
    beta: np.ndarray
    fit_end: object
    open_pos: int
    close_pos: int
    fit_end_pos: int


@dataclass
class Refit:
    used_from: object
    fit_end: object
    used_from_pos: int
    fit_end_pos: int


@dataclass
class TradeLog:
    events: list = field(default_factory=list)
    refits: list = field(default_factory=list)
    degenerate: bool = False
    strategy: str = "primary"

    @property
    def cumulative_return(self) -> float:
        return float(np.prod([1.0 + e.trade_return for e in self.events]) - 1.0)

    def no_lookahead(self) -> bool:
        """True when every parameter set was fitted only on data before its first use."""
        ok = all(r.fit_end_pos < r.used_from_pos for r in self.refits)
        return ok and all(e.fit_end_pos < e.open_pos for e in self.events)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRADE_COLUMNS)
        cum = 1.0
        for e in self.events:
            cum *= 1.0 + e.trade_return
            w.writerow([
                e.open_date, e.side, e.close_date, repr(e.spread_open), repr(e.spread_close),
                repr(e.mu), repr(e.sigma), repr(e.trade_return), repr(cum - 1.0),
            ])
        return buf.getvalue()


Estimator = Callable[[MatrixSeries], np.ndarray]


def cmar_estimator(cfg: BacktestConfig) -> Estimator:
    """Spread weights from a CMAR fit on the formation window."""
    fcfg = FitConfig(tuple(cfg.ranks), cfg.k, cfg.include_constant)
    fit = mle_fit if cfg.method == "mle" else lse_fit

    def estimate(window: MatrixSeries) -> np.ndarray:
        return spread_weights(fit(window, fcfg).model).beta

    return estimate


def _locate(index, date, default, side):
    if date is None:
        return default
    if index is None:
        return int(date)
    arr = np.array(index, dtype=str)
    pos = np.searchsorted(arr, str(date), side="left")
    if side == "right":
        pos = np.searchsorted(arr, str(date), side="right") - 1
    return int(pos)


def _run(series: MatrixSeries, cfg: BacktestConfig, estimate: Optional[Estimator], sizing: str) -> TradeLog:
    X = series.vectorized()
    T = series.T
    labels = series.index if series.index is not None else tuple(range(T))
    start = _locate(series.index, cfg.trading_start, cfg.formation_days, "left")
    end = _locate(series.index, cfg.trading_end, T - 1, "right")
    if start < cfg.formation_days:
        raise BacktestConfigError(
            f"trading start at observation {start} leaves fewer than "
            f"{cfg.formation_days} formation observations"
        )
    if end <= start or end >= T:
        raise BacktestConfigError("trading window is empty")
    estimate = cmar_estimator(cfg) if estimate is None else estimate
    out = TradeLog(strategy=sizing)

    def refit(t):
        window = series.slice(t - cfg.formation_days, t)
        w = spread_weights(estimate(window))
        if w.degenerate and not out.degenerate:
            warnings.warn("spread weights all of one sign; benchmark comparison is not meaningful",
                          DegenerateSpreadWarning, stacklevel=3)
            out.degenerate = True
        hist = window.vectorized() @ w.beta
        out.refits.append(Refit(labels[t], labels[t - 1], t, t - 1))
        return w, float(np.mean(hist)), float(np.std(hist, ddof=1)), t - 1

    w, mu, sd, fit_end = refit(start)
    pos = None  # (side, open index, weights, mu, sd, fit_end)
    for t in range(start, end + 1):
        if pos is not None:
            side, t0, pw, pmu, psd, pfit = pos
            sp = float(X[t] @ pw.beta)
            hit = sp <= pmu - cfg.s * psd if side == SHORT else sp >= pmu + cfg.s * psd
            if not (hit or t == end):
                continue
            ret = _trade_return(X[t0], X[t], pw, side, sizing) - cfg.cost_bps * 1e-4
            out.events.append(TradeEvent(
                labels[t0], side, labels[t], not hit, float(X[t0] @ pw.beta), sp,
                pmu, psd, ret, pw.beta.copy(), labels[pfit], t0, t, pfit,
            ))
            pos = None
            if t == end:
                break
            w, mu, sd, fit_end = refit(t)
        if t == end:
            break
        sp = float(X[t] @ w.beta)
        if sp >= mu + cfg.s * sd:
            pos = (SHORT, t, w, mu, sd, fit_end)
        elif sp <= mu - cfg.s * sd:
            pos = (LONG, t, w, mu, sd, fit_end)
    return out


def _trade_return(x0, x1, w: SpreadWeights, side: str, sizing: str) -> float:
    if sizing == "primary":
        # |beta_i| shares of each portfolio: P&L is the spread change
        sign = 1.0 if side == LONG else -1.0
        capital = float(w.plus @ x0 + w.minus @ x0)
        return sign * float(w.beta @ (x1 - x0)) / capital
    long_w, short_w = (w.plus, w.minus) if side == LONG else (w.minus, w.plus)

    def leg(v):
        base = float(v @ x0)
        return float(v @ x1) / base - 1.0 if base != 0 else 0.0

    return 0.5 * (leg(long_w) - leg(short_w))


def backtest(series: MatrixSeries, cfg: BacktestConfig, estimate: Optional[Estimator] = None) -> TradeLog:
    """Spread-proportional strategy: hold ``|beta_i|`` shares of portfolio ``i``.

    The per-trade return is the spread P&L divided by the gross value of both
    legs at the open. ``estimate`` maps a formation window to spread weights
    and defaults to a CMAR fit with the configured method.
    """
    return _run(series, cfg, estimate, "primary")


def backtest_equal_value(series: MatrixSeries, cfg: BacktestConfig, estimate: Optional[Estimator] = None) -> TradeLog:
    """Same signals as :func:`backtest`, one dollar in each leg per trade."""
    return _run(series, cfg, estimate, "equal-value")
