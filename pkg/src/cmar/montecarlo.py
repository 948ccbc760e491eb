"""Projection-space error metrics and the replicated simulation harness."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .core import CmarModel, Dims, kron, projection
from .cvar import cvar_fit
from .fitting import FitConfig
from .lse import lse_fit
from .mle import mle_fit
from .simulate import SimConfig, gen_model, simulate_series

log = logging.getLogger(__name__)

LOG_FLOOR = -745.0
METHODS = ("CVAR", "LSE", "MLE")
CSV_COLUMNS = (
    "method", "T", "d1", "d2", "r1", "r2", "rep", "seed",
    "proj_err_log", "alpha_err", "b_err", "runtime_ms", "converged", "exact_flag",
)


def _spec2(a) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0] ** 2)


def _safe_log(x: float) -> float:
    if x <= 0.0:
        return LOG_FLOOR
    return max(math.log(x), LOG_FLOOR)


def projection_error(beta1_hat, beta1, beta2_hat, beta2) -> float:
    """``log(||P1_hat - P1||_s^2 + ||P2_hat - P2||_s^2)``, floored at -745."""
    e = _spec2(projection(beta1_hat) - projection(beta1))
    e += _spec2(projection(beta2_hat) - projection(beta2))
    return _safe_log(e)


def cvar_projection_error(beta_hat, beta1, beta2) -> float:
    """Log squared spectral distance between ``span(beta_hat)`` and ``span(beta2 kron beta1)``."""
    return _safe_log(_spec2(projection(beta_hat) - projection(kron(beta2, beta1))))


def is_exact(err: float) -> bool:
    return err <= LOG_FLOOR


def procrustes(beta_hat, beta):
    """Orthogonal ``O`` minimizing ``||beta_hat O - beta||_F``."""
    u, _, vt = np.linalg.svd(beta_hat.T @ beta)
    return u @ vt


def alpha_error(alpha_hat, beta_hat, alpha, beta) -> float:
    """Squared Frobenius error of ``alpha`` after aligning ``beta_hat`` to ``beta``.

    The overall sign is chosen to minimize the error since ``(A1, A2)`` and
    ``(-A1, -A2)`` give the same model.
    """
    a = alpha_hat @ procrustes(beta_hat, beta)
    return float(min(np.sum((a - alpha) ** 2), np.sum((a + alpha) ** 2)))


def gamma_error(gammas_hat, gammas) -> float:
    return float(sum(np.sum((g - h) ** 2) for g, h in zip(gammas_hat, gammas)))


@dataclass(frozen=True)
class McConfig:
    dims: tuple = (Dims(3, 3, 1, 1, 1),)
    T: tuple = (400, 600, 1000)
    reps: int = 100
    methods: tuple = METHODS
    error_setting: str = "II"
    include_constant: bool = False
    base_seed: int = 0
    redraw_per_rep: bool = False
    timing: bool = False
    tol: float = 1e-8
    max_iter: int = 200
    workers: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.dims or not self.T:
            raise ValueError("dims and T grids must be non-empty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        if "dims" in d:
            d["dims"] = tuple(Dims(**x) if isinstance(x, dict) else Dims(*x) for x in d["dims"])
        for key in ("T", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class ReplicateRecord:
    method: str
    T: int
    d1: int
    d2: int
    r1: int
    r2: int
    rep: int
    seed: int
    proj_err_log: float
    alpha_err: float
    b_err: float
    runtime_ms: float
    converged: bool
    exact_flag: bool


def model_for(cfg: McConfig, dims_idx: int, rep: int) -> CmarModel:
    dims = cfg.dims[dims_idx]
    sc = SimConfig(dims, max(cfg.T), cfg.error_setting, cfg.include_constant)
    if cfg.redraw_per_rep:
        rng = np.random.default_rng([cfg.base_seed + rep, dims_idx, 1])
    else:
        rng = np.random.default_rng([cfg.base_seed, dims_idx, 1])
    return gen_model(sc, rng)


def _run_one(cfg: McConfig, dims_idx: int, T: int, rep: int) -> list:
    dims = cfg.dims[dims_idx]
    seed = cfg.base_seed + rep
    truth = model_for(cfg, dims_idx, rep)
    series = simulate_series(truth, T, np.random.default_rng([seed, dims_idx, 2]))
    fcfg = FitConfig((dims.r1, dims.r2), dims.k, cfg.include_constant, cfg.tol, cfg.max_iter)
    out = []
    for method in METHODS:
        if method not in cfg.methods:
            continue
        t0 = time.perf_counter()
        try:
            if method == "CVAR":
                fit = cvar_fit(series.vectorized(), dims.r, dims.k, cfg.include_constant, "ml")
                err = cvar_projection_error(fit.beta, truth.beta1, truth.beta2)
                a_err = alpha_error(fit.alpha, fit.beta, truth.alpha, truth.beta)
                b_err = gamma_error(fit.Gamma, truth.Gammas)
                conv = True
            else:
                res = (lse_fit if method == "LSE" else mle_fit)(series, fcfg)
                m = res.model
                err = projection_error(m.beta1, truth.beta1, m.beta2, truth.beta2)
                a_err = alpha_error(m.alpha1, m.beta1, truth.alpha1, truth.beta1)
                b_err = gamma_error(m.Gammas, truth.Gammas)
                conv = res.converged
        except (np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
            log.warning("%s failed at T=%d rep=%d: %s", method, T, rep, exc)
            err = a_err = b_err = float("nan")
            conv = False
        ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
        out.append(ReplicateRecord(
            method, T, dims.d1, dims.d2, dims.r1, dims.r2, rep, seed,
            err, a_err, b_err, ms, conv, is_exact(err),
        ))
    return out


def _run_chunk(args):
    cfg, jobs = args
    return [(job, _run_one(cfg, *job)) for job in jobs]


def worker_count(cfg: McConfig) -> int:
    if cfg.workers > 0:
        return cfg.workers
    env = os.environ.get("CMAR_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def run_monte_carlo(cfg: McConfig, out_path=None) -> list:
    """Run every (dims, T, rep) replicate; all methods share each simulated path.

    Output order is ``(dims, T, method, rep)`` regardless of scheduling.
    """
    jobs = [(i, T, rep) for i in range(len(cfg.dims)) for T in cfg.T for rep in range(cfg.reps)]
    n = min(worker_count(cfg), len(jobs))
    if n <= 1:
        done = _run_chunk((cfg, jobs))
    else:
        chunks = [c for c in (jobs[i::n * 4] for i in range(n * 4)) if c]
        with ProcessPoolExecutor(n) as ex:
            done = [item for part in ex.map(_run_chunk, [(cfg, c) for c in chunks]) for item in part]
    by_job = dict(done)
    records = []
    for i in range(len(cfg.dims)):
        for T in cfg.T:
            for method in METHODS:
                for rep in range(cfg.reps):
                    records.extend(r for r in by_job[(i, T, rep)] if r.method == method)
    if out_path is not None:
        write_records(records, out_path)
    return records


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        row = asdict(r)
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(records, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, records_to_csv(records))


def medians(records, method: str, field_name: str = "proj_err_log") -> dict:
    """Median of ``field_name`` per T for one method, ignoring NaNs."""
    out = {}
    for T in sorted({r.T for r in records}):
        vals = [getattr(r, field_name) for r in records if r.method == method and r.T == T]
        out[T] = float(np.nanmedian(vals))
    return out


def rate_slope(records, method: str, field_name: str = "proj_err_log", log_field: bool = False) -> float:
    """Least-squares slope of the median (log) error against ``log T``."""
    med = medians(records, method, field_name)
    Ts = np.array(sorted(med), dtype=float)
    y = np.array([med[int(T)] for T in Ts])
    if log_field:
        y = np.log(y)
    return float(np.polyfit(np.log(Ts), y, 1)[0])
