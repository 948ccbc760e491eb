"""Random CMAR models and simulated I(1) matrix series."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    CmarModel,
    CovarianceError,
    Dims,
    ErrorCovSpec,
    MatrixSeries,
    companion_matrix,
    spectral_radius,
)

STABILITY_BOUND = 0.98


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dims: Dims
    T: int
    error_setting: str = "II"
    include_constant: bool = False
    constant_norm: float = 0.8
    seed: int = 0
    max_rejection: int = 1000

    def __post_init__(self):
        if self.T < self.dims.k + 2:
            raise ValueError(f"T must be at least k + 2 = {self.dims.k + 2}")
        if self.constant_norm < 0:
            raise ValueError("constant_norm must be non-negative")
        if self.error_setting not in ("I", "II", "identity"):
            raise ValueError(f"unknown error setting {self.error_setting!r}")


def haar_semi_orthogonal(d: int, r: int, rng: np.random.Generator):
    """``d x r`` matrix with orthonormal columns, Haar distributed."""
    if not 0 < r <= d:
        raise ValueError("need 0 < r <= d")
    q, R = np.linalg.qr(rng.standard_normal((d, r)))
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return q * s


def _low_rank(d: int, r: int, rng):
    q1 = haar_semi_orthogonal(d, r, rng)
    q2 = haar_semi_orthogonal(d, r, rng)
    lam = np.abs(rng.standard_normal(r))
    return (q1 * lam) @ q2.T


def _spaced_cov(n: int, lo: float, hi: float, rng):
    q = haar_semi_orthogonal(n, n, rng)
    S = (q * np.linspace(lo, hi, n)) @ q.T
    return 0.5 * (S + S.T)


def gen_error_cov(setting: str, d1: int, d2: int, rng) -> ErrorCovSpec:
    if setting == "I":
        return ErrorCovSpec("I", d1, d2, sigma=_spaced_cov(d1 * d2, 1.0, 10.0, rng))
    if setting == "II":
        return ErrorCovSpec(
            "II", d1, d2,
            sigma1=_spaced_cov(d1, 1.0, 5.0, rng),
            sigma2=_spaced_cov(d2, 1.0, 5.0, rng),
        )
    return ErrorCovSpec.identity(d1, d2)


def gen_model(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> CmarModel:
    """Draw coefficients until the stacked stationary system has spectral radius below 0.98."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dm = cfg.dims
    for _ in range(cfg.max_rejection):
        A1 = _low_rank(dm.d1, dm.r1, rng)
        A2 = _low_rank(dm.d2, dm.r2, rng)
        B = tuple((_low_rank(dm.d1, dm.d1, rng), _low_rank(dm.d2, dm.d2, rng)) for _ in range(dm.k))
        D = None
        if cfg.include_constant:
            D = rng.standard_normal((dm.d1, dm.d2))
            D *= cfg.constant_norm / np.linalg.norm(D)
        model = CmarModel.from_coefficients(A1, A2, B, D, ranks=(dm.r1, dm.r2))
        if spectral_radius(companion_matrix(model)) < STABILITY_BOUND:
            cov = gen_error_cov(cfg.error_setting, dm.d1, dm.d2, rng)
            return model.with_error_cov(cov)
    raise GenerationError(f"no stable model after {cfg.max_rejection} draws")


def draw_errors(model: CmarModel, T: int, rng):
    """``(T, d1, d2)`` Gaussian errors with ``Cov(vec E_t)`` from the model."""
    d1, d2 = model.dims.d1, model.dims.d2
    S = model.error_cov.full()
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] <= 0:
        raise CovarianceError("error covariance is not positive definite")
    root = (V * np.sqrt(w)) @ V.T
    e = rng.standard_normal((T, d1 * d2)) @ root
    return e.reshape(T, d2, d1).transpose(0, 2, 1)


def simulate_series(
    model: CmarModel,
    T: int,
    rng: Optional[np.random.Generator] = None,
    errors=None,
    noise_scale: float = 1.0,
) -> MatrixSeries:
    """Run the error-correction recursion from ``X_0 = ... = X_{-k} = 0``.

    ``errors`` (shape ``(T, d1, d2)``) replaces the Gaussian draw; the errors
    are multiplied by ``noise_scale`` either way.
    """
    dm = model.dims
    if T < dm.k + 2:
        raise ValueError(f"T must be at least k + 2 = {dm.k + 2}")
    if errors is None:
        rng = np.random.default_rng() if rng is None else rng
        errors = draw_errors(model, T, rng)
    E = np.asarray(errors, dtype=float) * noise_scale
    if E.shape != (T, dm.d1, dm.d2):
        raise ValueError(f"errors must have shape {(T, dm.d1, dm.d2)}")
    A1, A2, D = model.A1, model.A2, model.D
    k = dm.k
    X = np.zeros((T + 1, dm.d1, dm.d2))  # X[0] is the zero initial value
    dX = np.zeros((T + k, dm.d1, dm.d2))  # dX[k + t - 1] = X_t - X_{t-1}
    for t in range(1, T + 1):
        step = A1 @ X[t - 1] @ A2.T + D + E[t - 1]
        for i, (B1, B2) in enumerate(model.B, start=1):
            step += B1 @ dX[k + t - 1 - i] @ B2.T
        dX[k + t - 1] = step
        X[t] = X[t - 1] + step
    return MatrixSeries(X[1:])
