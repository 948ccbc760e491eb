"""Command line entry point: ``cmar simulate | fit | montecarlo | backtest``.

Every command validates its options before computing, writes outputs
atomically and prints a one-line JSON summary. Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import Dims
from .cvar import cvar_fit
from .fitting import FitConfig
from .io import FormatError, atomic_write_text, read_series, write_json, write_series
from .lse import lse_fit
from .mle import mle_fit
from .montecarlo import McConfig, run_monte_carlo, worker_count
from .simulate import SimConfig, gen_model, simulate_series
from .trading import BacktestConfig, backtest, backtest_equal_value, load_ff_panel

log = logging.getLogger("cmar")


class UsageError(ValueError):
    pass


def _ranks(text: str):
    try:
        r = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ranks must look like 1,1 (got {text!r})")
    if len(r) != 2:
        raise argparse.ArgumentTypeError("ranks needs exactly two integers")
    return r


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmar", description="Cointegrated matrix autoregression tools.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a series from a random stable model")
    s.add_argument("--d1", type=int, required=True)
    s.add_argument("--d2", type=int, required=True)
    s.add_argument("--r1", type=int, default=1)
    s.add_argument("--r2", type=int, default=1)
    s.add_argument("--k", type=int, default=0)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--setting", choices=["I", "II", "identity"], default="II")
    s.add_argument("--const", action="store_true", help="include a constant drift term")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="series.csv")
    s.add_argument("--truth", default=None, help="truth JSON path (default: <out>.truth.json)")
    s.add_argument("--layout", choices=["wide", "long"], default="wide")

    f = sub.add_parser("fit", help="fit a model to a series CSV")
    f.add_argument("data")
    f.add_argument("--method", choices=["lse", "mle", "cvar"], default="mle")
    f.add_argument("--ranks", type=_ranks, default=(1, 1))
    f.add_argument("--rank", type=int, default=None, help="cvar rank (default r1*r2)")
    f.add_argument("--k", type=int, default=0)
    f.add_argument("--const", action="store_true")
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--max-iter", type=int, default=200)
    f.add_argument("--init", choices=["cvar", "random"], default="cvar")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default="params.json")

    m = sub.add_parser("montecarlo", help="run a replicated simulation study")
    m.add_argument("--config", required=True, help="JSON file with McConfig fields")
    m.add_argument("--out", default="results.csv")

    b = sub.add_parser("backtest", help="rolling pairs-trading backtest on a 25-portfolio panel")
    b.add_argument("--data", required=True)
    b.add_argument("--start", default=None)
    b.add_argument("--end", default=None)
    b.add_argument("--s", type=float, default=1.0)
    b.add_argument("--method", choices=["mle", "lse"], default="mle")
    b.add_argument("--formation-days", type=int, default=252)
    b.add_argument("--benchmark", choices=["primary", "equal-value"], default="primary")
    b.add_argument("--returns", action="store_true", help="input holds daily returns; compound into levels")
    b.add_argument("--percent", action="store_true", default=None, help="returns are in percent")
    b.add_argument("--cost-bps", type=float, default=0.0)
    b.add_argument("--out", default="trades.csv")
    return p


def _simulate(a) -> dict:
    try:
        dims = Dims(a.d1, a.d2, a.k, a.r1, a.r2)
        cfg = SimConfig(dims, a.T, a.setting, a.const, seed=a.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    rng = np.random.default_rng(a.seed)
    model = gen_model(cfg, rng)
    series = simulate_series(model, a.T, rng)
    truth = a.truth or str(Path(a.out).with_suffix("")) + ".truth.json"
    write_series(a.out, series, a.layout)
    write_json(truth, {"config": {"d1": a.d1, "d2": a.d2, "r1": a.r1, "r2": a.r2, "k": a.k,
                                  "T": a.T, "setting": a.setting, "const": a.const, "seed": a.seed},
                       "model": model.to_dict()})
    return {"command": "simulate", "series": a.out, "truth": truth, "T": a.T}


def _fit(a) -> dict:
    try:
        cfg = FitConfig(a.ranks, a.k, a.const, a.tol, a.max_iter, a.init, a.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    series = read_series(a.data)
    d1, d2 = series.dims
    if a.method != "cvar" and (a.ranks[0] > d1 or a.ranks[1] > d2):
        raise UsageError(f"ranks {a.ranks} exceed dimensions {(d1, d2)}")
    if a.method == "cvar":
        r = a.rank if a.rank is not None else a.ranks[0] * a.ranks[1]
        if not 0 <= r <= series.dims[0] * series.dims[1]:
            raise UsageError(f"rank {r} outside [0, {series.dims[0] * series.dims[1]}]")
        fit = cvar_fit(series.vectorized(), r, a.k, a.const, "ml")
        out = {
            "method": "cvar", "rank": r, "alpha": fit.alpha.tolist(), "beta": fit.beta.tolist(),
            "Pi": fit.Pi.tolist(), "Gamma": [g.tolist() for g in fit.Gamma],
            "constant": None if fit.d_const is None else np.asarray(fit.d_const).tolist(),
            "sigma": fit.sigma.tolist(), "ridged": bool(fit.ridged), "converged": True,
        }
    else:
        res = (lse_fit if a.method == "lse" else mle_fit)(series, cfg)
        out = {"method": a.method, **res.to_dict()}
    write_json(a.out, out)
    return {"command": "fit", "method": a.method, "out": a.out, "converged": out["converged"]}


def _montecarlo(a) -> dict:
    try:
        with open(a.config) as fh:
            cfg = McConfig.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"bad config {a.config}: {exc}")
    records = run_monte_carlo(cfg, a.out)
    return {"command": "montecarlo", "out": a.out, "rows": len(records), "workers": worker_count(cfg)}


def _backtest(a) -> dict:
    try:
        cfg = BacktestConfig(a.formation_days, a.s, method=a.method, trading_start=a.start,
                             trading_end=a.end, cost_bps=a.cost_bps)
    except ValueError as exc:
        raise UsageError(str(exc))
    series = load_ff_panel(a.data, returns=a.returns, percent=a.percent)
    run = backtest if a.benchmark == "primary" else backtest_equal_value
    tl = run(series, cfg)
    atomic_write_text(a.out, tl.to_csv())
    return {
        "command": "backtest", "strategy": a.benchmark, "out": a.out, "trades": len(tl.events),
        "cumulative_return": tl.cumulative_return, "no_lookahead": tl.no_lookahead(),
        "degenerate": tl.degenerate,
    }


COMMANDS = {"simulate": _simulate, "fit": _fit, "montecarlo": _montecarlo, "backtest": _backtest}


def _error(kind: str, msg: str) -> None:
    print(json.dumps({"error": kind, "message": " ".join(str(msg).split())}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        _error("usage", exc)
        return 2
    except (FormatError, OSError) as exc:
        _error("input", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
