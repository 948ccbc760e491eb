"""Alternating maximum-likelihood estimator under ``Cov(vec E_t) = sigma2 kron sigma1``.

The row-side step maximizes the Gaussian likelihood over ``(A1, B_i1, D,
sigma1)`` with the column side and ``sigma2`` fixed. After whitening the
columns by ``sigma2^{-1/2}`` this is a reduced-rank regression with unknown
row covariance, solved by weighting the eigen-step with the full-rank
residual covariance. The column-side step mirrors it on transposed data.

The pair ``(c sigma1, sigma2 / c)`` is not identified; ``trace(sigma2) = d2``
is enforced after every sweep.
"""
from __future__ import annotations

import logging
from typing import Union

import numpy as np

from ._design import Design, fit_side, residuals
from .core import CmarModel, CovarianceError, ErrorCovSpec, MatrixSeries, is_spd
from .fitting import EstimationResult, Extrapolator, FitConfig, check_series, floor_spd, initial_factors
from .lse import IMPROVE_RTOL

log = logging.getLogger(__name__)


def loglik(data, model: CmarModel, sigma1, sigma2, k: int = None, include_constant: bool = None) -> float:
    """Gaussian log-likelihood up to an additive constant.

    ``-d2 N log|sigma1| - d1 N log|sigma2| - sum_t tr(sigma1^-1 R_t sigma2^-1 R_t')``
    with ``N`` the number of usable observations and ``R_t`` the model residual.
    """
    sigma1 = np.asarray(sigma1, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if not (is_spd(sigma1, 1e-10) and is_spd(sigma2, 1e-10)):
        raise CovarianceError("covariance factors must be symmetric positive definite")
    if isinstance(data, Design):
        design = data
    else:
        k = model.dims.k if k is None else k
        const = bool(np.any(model.D)) if include_constant is None else include_constant
        design = Design.from_series(data, k, const)
    D = model.D if design.const else None
    R = residuals(design, model.A1, model.A2, model.B, D)
    return _loglik_resid(R, sigma1, sigma2)


def _loglik_resid(R, sigma1, sigma2) -> float:
    N, d1, d2 = R.shape
    _, ld1 = np.linalg.slogdet(sigma1)
    _, ld2 = np.linalg.slogdet(sigma2)
    S1i = np.linalg.inv(sigma1)
    S2i = np.linalg.inv(sigma2)
    quad = np.einsum("ab,nbc,cd,nad->", S1i, R, S2i, R)
    return float(-d2 * N * ld1 - d1 * N * ld2 - quad)


def _design(data, cfg):
    return data if isinstance(data, Design) else check_series(data, cfg)


def mle_update_left(data, right_factors, sigma2, cfg: FitConfig, sigma1=None):
    """Row-side ML step; returns ``(A1, [B_i1], D, sigma1)``.

    With ``cfg.update_cov`` false the eigen-step is weighted by the given
    ``sigma1`` (identity when None) and ``sigma1`` is returned unchanged.
    """
    design = _design(data, cfg)
    A2, B2 = right_factors
    d1 = design.resp.shape[1]
    S2i = np.linalg.inv(np.asarray(sigma2, dtype=float))
    if cfg.update_cov:
        s = fit_side(design, np.asarray(A2), list(B2), cfg.ranks[0], S2i, "profile")
        return s.A, s.B, s.D, s.sigma
    S1 = np.eye(d1) if sigma1 is None else np.asarray(sigma1, dtype=float)
    s = fit_side(design, np.asarray(A2), list(B2), cfg.ranks[0], S2i, S1)
    return s.A, s.B, s.D, S1


def mle_update_right(data, left_factors, sigma1, cfg: FitConfig, sigma2=None):
    """Column-side ML step; returns ``(A2, [B_i2], D, sigma2)``."""
    design = _design(data, cfg)
    A1, B1 = left_factors
    d2 = design.resp.shape[2]
    S1i = np.linalg.inv(np.asarray(sigma1, dtype=float))
    if cfg.update_cov:
        s = fit_side(design.transposed(), np.asarray(A1), list(B1), cfg.ranks[1], S1i, "profile")
        sig = s.sigma
    else:
        sig = np.eye(d2) if sigma2 is None else np.asarray(sigma2, dtype=float)
        s = fit_side(design.transposed(), np.asarray(A1), list(B1), cfg.ranks[1], S1i, sig)
    return s.A, s.B, None if s.D is None else s.D.T, sig


def mle_fit(data: Union[MatrixSeries, Design], cfg: FitConfig = FitConfig()) -> EstimationResult:
    """Fit the model by alternating maximum likelihood.

    The objective trace holds the log-likelihood after each sweep and is
    non-decreasing. ``cfg.update_cov=False`` freezes both covariance factors
    at the identity, which reproduces :func:`cmar.lse.lse_fit` exactly.
    """
    design = _design(data, cfg)
    N, d1, d2 = design.resp.shape
    if isinstance(data, MatrixSeries):
        A2, B2, S2 = initial_factors(data, cfg)
    else:
        if not isinstance(cfg.init, CmarModel):
            raise ValueError("fitting a bare design needs an initial CmarModel")
        A2, B2 = cfg.init.A2, [b for _, b in cfg.init.B]
        S2 = cfg.init.error_cov.sigma2 if cfg.init.error_cov.kind == "II" else np.eye(d2)
    S1 = np.eye(d1)
    if not cfg.update_cov:
        S2 = np.eye(d2)
    tdesign = design.transposed()
    r1, r2 = cfg.ranks
    eig1 = "profile" if cfg.update_cov else S1
    eig2 = "profile" if cfg.update_cov else S2
    trace, history = [], []
    ridged = floored = converged = False
    best = None
    accel = Extrapolator(cfg.ranks)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        left = fit_side(design, A2, B2, r1, np.linalg.inv(S2), eig1)
        A1, B1 = left.A, left.B
        if cfg.update_cov:
            S1, f = floor_spd(left.sigma)
            floored |= f
        right = fit_side(tdesign, A1, B1, r2, np.linalg.inv(S1), eig2)
        A2, B2 = right.A, right.B
        D = None if right.D is None else right.D.T
        if cfg.update_cov:
            S2, f = floor_spd(right.sigma)
            floored |= f
            c = np.trace(S2) / d2
            S2, S1 = S2 / c, S1 * c
        ridged |= left.ridged or right.ridged
        R = residuals(design, A1, A2, tuple(zip(B1, B2)), D)
        ll = _loglik_resid(R, S1, S2)
        trace.append(ll)
        if best is None or ll >= best[0]:
            best = (ll, A1, A2, list(B1), list(B2), D, S1, S2)
        if cfg.keep_history:
            history.append(CmarModel.from_coefficients(A1, A2, tuple(zip(B1, B2)), D, ranks=cfg.ranks))
        if len(trace) > 1:
            prev = trace[-2]
            if ll - prev <= cfg.tol * max(abs(prev), np.finfo(float).tiny):
                converged = True
                break
        cand = accel.propose(A1, B1, A2, B2, D)
        if cand is not None:
            c1, cb1, c2, cb2, cD = cand
            Rc = residuals(design, c1, c2, tuple(zip(cb1, cb2)), cD)
            if _loglik_resid(Rc, S1, S2) > ll + IMPROVE_RTOL * abs(ll):
                A2, B2 = c2, cb2
                accel.accepted()
            else:
                accel.rejected()
    if floored:
        log.warning("covariance iterate floored at eigenvalue 1e-10")
    if not converged:
        log.warning("MLE did not converge in %d sweeps", cfg.max_iter)
    _, A1, A2, B1, B2, D, S1, S2 = best
    cov = ErrorCovSpec("II", d1, d2, sigma1=S1, sigma2=S2)
    model = CmarModel.from_coefficients(A1, A2, tuple(zip(B1, B2)), D, cov, ranks=cfg.ranks)
    return EstimationResult(model, it, trace, converged, ridged, S1, S2, history, floored)
