"""Regression design and the one-sided reduced-rank update shared by the estimators.

Every half-step of the alternating algorithms is the same problem: with the
right-hand factors fixed, regress the responses on

    x_t = X_{t-1} A_other',   z_t = (dX_{t-1} B_1other', ..., dX_{t-k} B_kother', I)

column by column, under a rank constraint on the coefficient of ``x_t``. The
update for the right-hand factors is the same problem on transposed data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .core import MatrixSeries, sym_sqrt

log = logging.getLogger(__name__)

RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class Design:
    """Responses and regressors aligned on the effective sample ``t = k+2..T``.

    ``resp[n] = dX_t``, ``level[n] = X_{t-1}``, ``diffs[i][n] = dX_{t-1-i}``.
    """

    resp: np.ndarray
    level: np.ndarray
    diffs: tuple
    const: bool

    @classmethod
    def from_series(cls, series: MatrixSeries, k: int, const: bool) -> "Design":
        X = series.values
        T = X.shape[0]
        if T < k + 2:
            raise ValueError(f"need at least k + 2 = {k + 2} observations, got {T}")
        dX = np.diff(X, axis=0)  # dX[j] = X[j+1] - X[j]
        n0 = k  # first usable index into dX
        resp = dX[n0:]
        level = X[n0:T - 1]
        diffs = tuple(dX[n0 - i:len(dX) - i] for i in range(1, k + 1))
        return cls(resp, level, diffs, const)

    @property
    def N(self) -> int:
        return self.resp.shape[0]

    @property
    def k(self) -> int:
        return len(self.diffs)

    def transposed(self) -> "Design":
        t = lambda a: np.swapaxes(a, 1, 2)
        return Design(t(self.resp), t(self.level), tuple(t(g) for g in self.diffs), self.const)

    def scaled(self, c: float) -> "Design":
        return Design(self.resp * c, self.level * c, tuple(g * c for g in self.diffs), self.const)


def gram_inverse(G, label: str = "gram"):
    """Inverse of a symmetric Gram matrix, with ridge fallback when singular.

    Returns ``(inverse, ridged)``.
    """
    G = 0.5 * (G + G.T)
    n = G.shape[0]
    if n == 0:
        return np.zeros((0, 0)), False
    try:
        c = linalg.cho_factor(G, check_finite=False)
        inv = linalg.cho_solve(c, np.eye(n), check_finite=False)
        if np.all(np.isfinite(inv)):
            return inv, False
    except linalg.LinAlgError:
        pass
    lam = RIDGE_SCALE * np.trace(G) / n
    if not lam > 0:
        lam = RIDGE_SCALE
    while True:
        try:
            c = linalg.cho_factor(G + lam * np.eye(n), check_finite=False)
            log.debug("ridge %.3g added to singular %s matrix", lam, label)
            return linalg.cho_solve(c, np.eye(n), check_finite=False), True
        except linalg.LinAlgError:
            lam *= 10.0


def _flatten(a):
    """(N, p, q) -> (p, N*q), columns ordered by (t, j)."""
    N, p, q = a.shape
    return a.transpose(1, 0, 2).reshape(p, N * q)


@dataclass
class SideFit:
    A: np.ndarray          # p x p, rank constrained
    B: list                # k matrices p x p
    D: Optional[np.ndarray]  # p x q
    sigma: np.ndarray      # p x p residual covariance (divisor N*q)
    sse: float             # sum_t tr(R_t W R_t')
    ridged: bool


def fit_side(
    design: Design,
    A_other,
    B_other,
    rank: int,
    weight_other=None,
    eig_weight="identity",
) -> SideFit:
    """Rank-constrained update of the row-side coefficients.

    Parameters
    ----------
    design : Design with arrays of shape (N, p, q)
    A_other, B_other : fixed column-side coefficients (q x q)
    rank : rank constraint on the row-side level coefficient
    weight_other : inverse column covariance (q x q), identity when None
    eig_weight : ``"identity"`` for least squares, ``"profile"`` to weight the
        eigen-step by the full-rank residual covariance (Gaussian ML with the
        row covariance concentrated out), or a fixed p x p covariance.
    """
    N, p, q = design.resp.shape
    if weight_other is None:
        wh = np.eye(q)
    else:
        wh = sym_sqrt(weight_other)
    Y = _flatten(design.resp @ wh)
    Xr = _flatten(design.level @ (A_other.T @ wh))
    zs = [_flatten(g @ (B.T @ wh)) for g, B in zip(design.diffs, B_other)]
    if design.const:
        zs.append(np.tile(wh, (1, N)))
    ridged = False
    if zs:
        Z = np.vstack(zs)
        Szz_inv, r = gram_inverse(Z @ Z.T, "S_zz")
        ridged |= r
        Syz, Sxz = Y @ Z.T, Xr @ Z.T
        Ry = Y - Syz @ Szz_inv @ Z
        Rx = Xr - Sxz @ Szz_inv @ Z
    else:
        Z = None
        Ry, Rx = Y, Xr
    Sxx_inv, r = gram_inverse(Rx @ Rx.T, "S_xx.z")
    ridged |= r
    Syx = Ry @ Rx.T
    A_full = Syx @ Sxx_inv
    if rank >= p:
        A = A_full
    else:
        M = A_full @ Syx.T  # S_yx.z S_xx.z^-1 S_xy.z
        if isinstance(eig_weight, str) and eig_weight == "identity":
            _, U = np.linalg.eigh(0.5 * (M + M.T))
            U = U[:, ::-1][:, :rank]
            A = U @ (U.T @ A_full)
        else:
            if isinstance(eig_weight, str):
                E = Ry - A_full @ Rx
                S_ee = E @ E.T / (N * q)
            else:
                S_ee = np.asarray(eig_weight, dtype=float)
            half = sym_sqrt(S_ee)
            ihalf = sym_sqrt(S_ee, inverse=True)
            K = ihalf @ M @ ihalf
            _, U = np.linalg.eigh(0.5 * (K + K.T))
            U = U[:, ::-1][:, :rank]
            A = half @ U @ (U.T @ (ihalf @ A_full))
    if Z is not None:
        Psi = (Syz - A @ Sxz) @ Szz_inv
        resid = Y - A @ Xr - Psi @ Z
    else:
        Psi = np.zeros((p, 0))
        resid = Y - A @ Xr
    k = design.k
    B = [Psi[:, i * p:(i + 1) * p] for i in range(k)]
    # the constant regressor is W^{1/2}; the coefficient is D itself
    D = Psi[:, k * p:] if design.const else None
    sigma = resid @ resid.T / (N * q)
    return SideFit(A, B, D, 0.5 * (sigma + sigma.T), float(np.sum(resid * resid)), ridged)


def residuals(design: Design, A1, A2, B, D):
    """``R_t = dX_t - A1 X_{t-1} A2' - sum_i B_i1 dX_{t-i} B_i2' - D`` on the effective sample."""
    R = design.resp - A1 @ design.level @ A2.T
    for g, (B1, B2) in zip(design.diffs, B):
        R = R - B1 @ g @ B2.T
    if D is not None:
        R = R - D
    return R


def sse(design: Design, A1, A2, B, D) -> float:
    R = residuals(design, A1, A2, B, D)
    return float(np.sum(R * R))
