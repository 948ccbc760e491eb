"""Configuration, results and initialization shared by the LSE and MLE fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._design import Design
from .core import CmarModel, ErrorCovSpec, MatrixSeries, _factor, is_spd
from .cvar import cvar_fit, nearest_kronecker

EIG_FLOOR = 1e-10


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Options for :func:`cmar.lse.lse_fit` and :func:`cmar.mle.mle_fit`.

    ``init`` is ``"cvar"`` (warm start from the vectorized reduced-rank fit),
    ``"random"`` (uses ``seed``) or a :class:`CmarModel` whose right-hand
    factors seed the first sweep.
    """

    ranks: tuple = (1, 1)
    k: int = 0
    include_constant: bool = False
    tol: float = 1e-8
    max_iter: int = 200
    init: Union[str, CmarModel] = "cvar"
    seed: int = 0
    update_cov: bool = True
    keep_history: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if len(self.ranks) != 2 or min(self.ranks) < 1:
            raise ValueError("ranks must be a pair of positive integers")
        if isinstance(self.init, str) and self.init not in ("cvar", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class EstimationResult:
    model: CmarModel
    iterations: int
    objective_trace: list
    converged: bool
    ridged: bool = False
    sigma1: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    history: list = field(default_factory=list)
    cov_floored: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self) -> dict:
        m = self.model
        out = {
            "model": m.to_dict(),
            "P_beta1": (m.beta1 @ m.beta1.T).tolist(),
            "P_beta2": (m.beta2 @ m.beta2.T).tolist(),
            "iterations": self.iterations,
            "objective_trace": list(map(float, self.objective_trace)),
            "converged": bool(self.converged),
            "ridged": bool(self.ridged),
        }
        if self.sigma1 is not None:
            out["sigma1"] = self.sigma1.tolist()
            out["sigma2"] = self.sigma2.tolist()
            out["cov_floored"] = bool(self.cov_floored)
        return out


def check_series(series: MatrixSeries, cfg: FitConfig) -> Design:
    d1, d2 = series.dims
    r1, r2 = cfg.ranks
    if r1 > d1 or r2 > d2:
        raise ValueError(f"ranks {cfg.ranks} exceed dimensions {(d1, d2)}")
    if not np.all(np.isfinite(series.values)):
        raise ValueError("series contains non-finite values")
    return Design.from_series(series, cfg.k, cfg.include_constant)


def _truncate(A, r):
    alpha, beta = _factor(A, r)
    return alpha @ beta.T


def floor_spd(S, floor: float = EIG_FLOOR):
    """Symmetrize and clip eigenvalues at ``floor``; returns ``(matrix, floored)``."""
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w[0] >= floor:
        return S, False
    w = np.maximum(w, floor)
    return (V * w) @ V.T, True


def initial_factors(series: MatrixSeries, cfg: FitConfig):
    """Right-hand factors ``(A2, [B_i2], sigma2)`` for the first sweep."""
    d1, d2 = series.dims
    r1, r2 = cfg.ranks
    k = cfg.k
    if isinstance(cfg.init, CmarModel):
        m = cfg.init
        if m.dims.d1 != d1 or m.dims.d2 != d2 or m.dims.k != k:
            raise ValueError("initial model does not match the series dimensions or k")
        sigma2 = np.eye(d2)
        if m.error_cov.kind == "II":
            sigma2 = np.array(m.error_cov.sigma2)
        return _truncate(m.A2, r2), [b2 for _, b2 in m.B], sigma2
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        A2 = _truncate(rng.standard_normal((d2, d2)), r2)
        return A2, [rng.standard_normal((d2, d2)) for _ in range(k)], np.eye(d2)
    cv = cvar_fit(series.vectorized(), r1 * r2, k, cfg.include_constant, method="ml")
    A2, _ = nearest_kronecker(cv.Pi, d1, d2)
    B2 = [nearest_kronecker(G, d1, d2)[0] for G in cv.Gamma]
    S2, S1 = nearest_kronecker(cv.sigma, d1, d2)
    if np.trace(S2) < 0:
        S2 = -S2
    S2, _ = floor_spd(S2)
    S2 = S2 * d2 / np.trace(S2)
    return _truncate(A2, r2), B2, S2


def residual_cov_spec(R, d1: int, d2: int) -> ErrorCovSpec:
    """Dense covariance of ``vec(R_t)``, falling back to identity when singular."""
    N = R.shape[0]
    v = R.transpose(0, 2, 1).reshape(N, d1 * d2)
    S = v.T @ v / N
    S = 0.5 * (S + S.T)
    if is_spd(S):
        return ErrorCovSpec("I", d1, d2, sigma=S)
    return ErrorCovSpec.identity(d1, d2)


MAX_STEP = 64.0


def _canonical(L, R):
    """Rescale a factor pair so ``||L||_F = 1`` with its largest entry positive."""
    n = np.linalg.norm(L)
    if n == 0:
        return L, R
    flat = L.ravel()
    c = n * np.sign(flat[np.argmax(np.abs(flat))])
    return L / c, R * c


class Extrapolator:
    """Safeguarded extrapolation along the direction between successive sweeps.

    Alternating updates converge linearly and can crawl when a regressor is
    nearly collinear with the constant. :meth:`propose` jumps ahead from the
    latest sweep output and projects back to the rank constraints, so the
    candidate is feasible. The caller keeps it only when it strictly improves
    the objective; the next sweep then cannot do worse, which preserves
    monotonicity. Accepted jumps double the step, rejected ones reset it.
    """

    def __init__(self, ranks):
        self.ranks = tuple(ranks)
        self.step = 1.0
        self.prev = None

    def _canon(self, A1, B1, A2, B2, D):
        A1, A2 = _canonical(A1, A2)
        pairs = [_canonical(b1, b2) for b1, b2 in zip(B1, B2)]
        return A1, [p[0] for p in pairs], A2, [p[1] for p in pairs], D

    def propose(self, A1, B1, A2, B2, D):
        cur = self._canon(A1, B1, A2, B2, D)
        prev, self.prev = self.prev, cur
        if prev is None:
            return None
        lam = self.step

        def jump(a, b):
            return a + lam * (a - b)

        r1, r2 = self.ranks
        return (
            _truncate(jump(cur[0], prev[0]), r1),
            [jump(a, b) for a, b in zip(cur[1], prev[1])],
            _truncate(jump(cur[2], prev[2]), r2),
            [jump(a, b) for a, b in zip(cur[3], prev[3])],
            None if D is None else jump(cur[4], prev[4]),
        )

    def accepted(self) -> None:
        self.step = min(2.0 * self.step, MAX_STEP)

    def rejected(self) -> None:
        self.step = 1.0
