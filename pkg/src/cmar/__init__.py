"""Cointegrated matrix autoregression: estimation, simulation and pairs trading."""
from .core import CmarModel, Dims, ErrorCovSpec, MatrixSeries, companion_matrix, normalize, unit_root_count
from .cvar import cvar_fit, nearest_kronecker
from .fitting import EstimationResult, FitConfig
from .lse import lse_fit
from .mle import loglik, mle_fit
from .montecarlo import McConfig, run_monte_carlo
from .simulate import SimConfig, gen_model, simulate_series
from .trading import BacktestConfig, TradeLog, backtest, backtest_equal_value, load_ff_panel, spread_weights

__all__ = [
    "CmarModel", "Dims", "ErrorCovSpec", "MatrixSeries", "companion_matrix", "normalize",
    "unit_root_count", "cvar_fit", "nearest_kronecker", "EstimationResult", "FitConfig",
    "lse_fit", "loglik", "mle_fit", "McConfig", "run_monte_carlo", "SimConfig", "gen_model",
    "simulate_series", "BacktestConfig", "TradeLog", "backtest", "backtest_equal_value",
    "load_ff_panel", "spread_weights",
]
__version__ = "0.1.0"
