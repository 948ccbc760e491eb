"""Alternating least-squares estimator of the cointegrated matrix autoregression.

Each sweep solves two reduced-rank regressions exactly: the row-side
coefficients ``(A1, B_i1, D)`` given ``(A2, B_i2)``, then the column-side
coefficients given the new row side. Both steps minimize

    sum_t || dX_t - A1 X_{t-1} A2' - sum_i B_i1 dX_{t-i} B_i2' - D ||_F^2

over their block, so the recorded objective cannot increase.
"""
from __future__ import annotations

import logging
from typing import Union

import numpy as np

from ._design import Design, fit_side, residuals, sse
from .core import CmarModel, MatrixSeries
from .fitting import (
    EstimationResult,
    Extrapolator,
    FitConfig,
    check_series,
    initial_factors,
    residual_cov_spec,
)

log = logging.getLogger(__name__)

IMPROVE_RTOL = 1e-12


def _design(data: Union[MatrixSeries, Design], cfg: FitConfig) -> Design:
    if isinstance(data, Design):
        return data
    return check_series(data, cfg)


def lse_update_left(data, right_factors, cfg: FitConfig):
    """Row-side update; returns ``(A1, [B_i1], D)`` (``D`` is None without a constant)."""
    design = _design(data, cfg)
    A2, B2 = right_factors
    s = fit_side(design, np.asarray(A2), list(B2), cfg.ranks[0])
    return s.A, s.B, s.D


def lse_update_right(data, left_factors, cfg: FitConfig):
    """Column-side update; returns ``(A2, [B_i2], D)``."""
    design = _design(data, cfg)
    A1, B1 = left_factors
    s = fit_side(design.transposed(), np.asarray(A1), list(B1), cfg.ranks[1])
    return s.A, s.B, None if s.D is None else s.D.T


def _assemble(A1, A2, B1, B2, D, ranks):
    return CmarModel.from_coefficients(A1, A2, tuple(zip(B1, B2)), D, ranks=ranks)


def lse_fit(data: Union[MatrixSeries, Design], cfg: FitConfig = FitConfig()) -> EstimationResult:
    """Fit the model by alternating least squares.

    Iterates until the relative decrease of the residual sum of squares falls
    below ``cfg.tol`` or ``cfg.max_iter`` sweeps have run. The returned model
    is normalized (see :func:`cmar.core.normalize`).
    """
    design = _design(data, cfg)
    if isinstance(data, MatrixSeries):
        A2, B2, _ = initial_factors(data, cfg)
    else:
        if not isinstance(cfg.init, CmarModel):
            raise ValueError("fitting a bare design needs an initial CmarModel")
        A2, B2 = cfg.init.A2, [b for _, b in cfg.init.B]
    tdesign = design.transposed()
    r1, r2 = cfg.ranks
    trace, history = [], []
    ridged = False
    converged = False
    best = None
    accel = Extrapolator(cfg.ranks)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        left = fit_side(design, A2, B2, r1)
        A1, B1 = left.A, left.B
        right = fit_side(tdesign, A1, B1, r2)
        A2, B2 = right.A, right.B
        D = None if right.D is None else right.D.T
        ridged |= left.ridged or right.ridged
        obj = right.sse
        trace.append(obj)
        if best is None or obj <= best[0]:
            best = (obj, A1, A2, list(B1), list(B2), D)
        if cfg.keep_history:
            history.append(_assemble(A1, A2, B1, B2, D, cfg.ranks))
        if len(trace) > 1:
            prev = trace[-2]
            if prev - obj <= cfg.tol * max(abs(prev), np.finfo(float).tiny):
                converged = True
                break
        elif obj <= np.finfo(float).tiny:
            converged = True
            break
        cand = accel.propose(A1, B1, A2, B2, D)
        if cand is not None:
            c1, cb1, c2, cb2, cD = cand
            if sse(design, c1, c2, tuple(zip(cb1, cb2)), cD) < obj - IMPROVE_RTOL * abs(obj):
                A2, B2 = c2, cb2
                accel.accepted()
            else:
                accel.rejected()
    if not converged:
        log.warning("LSE did not converge in %d sweeps", cfg.max_iter)
    _, A1, A2, B1, B2, D = best
    R = residuals(design, A1, A2, tuple(zip(B1, B2)), D)
    d1, d2 = A1.shape[0], A2.shape[0]
    model = _assemble(A1, A2, B1, B2, D, cfg.ranks)
    model = model.with_error_cov(residual_cov_spec(R, d1, d2))
    return EstimationResult(model, it, trace, converged, ridged, history=history)
