"""Classical vector error-correction model on ``vec(X_t)``.

Serves as the simulation benchmark, as the oracle for the ``d2 = 1`` reduction
of the matrix estimators, and as the warm start for them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._design import RIDGE_SCALE, gram_inverse
from .core import _factor, vec_inverse


@dataclass(frozen=True)
class CvarModel:
    alpha: np.ndarray
    beta: np.ndarray
    Gamma: tuple
    d_const: np.ndarray
    sigma: np.ndarray
    ridged: bool = False
    method: str = "ml"

    @property
    def Pi(self):
        return self.alpha @ self.beta.T

    @property
    def rank(self) -> int:
        return self.beta.shape[1]


@dataclass
class _Moments:
    R0: np.ndarray
    R1: np.ndarray
    Z: np.ndarray
    S0z: np.ndarray
    S1z: np.ndarray
    Szz_inv: np.ndarray
    N: int
    ridged: bool = False


def _moments(x, k: int, const: bool) -> _Moments:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, d = x.shape
    if T < k + 2:
        raise ValueError(f"need at least k + 2 = {k + 2} observations, got {T}")
    dx = np.diff(x, axis=0)
    Y0 = dx[k:].T
    Y1 = x[k:T - 1].T
    N = Y0.shape[1]
    rows = [dx[k - i:len(dx) - i].T for i in range(1, k + 1)]
    if const:
        rows.append(np.ones((1, N)))
    Z = np.vstack(rows) if rows else np.zeros((0, N))
    ridged = False
    if Z.shape[0]:
        Szz_inv, ridged = gram_inverse(Z @ Z.T, "S_zz")
        S0z, S1z = Y0 @ Z.T, Y1 @ Z.T
        R0 = Y0 - S0z @ Szz_inv @ Z
        R1 = Y1 - S1z @ Szz_inv @ Z
    else:
        Szz_inv = np.zeros((0, 0))
        S0z, S1z = np.zeros((d, 0)), np.zeros((d, 0))
        R0, R1 = Y0, Y1
    return _Moments(R0, R1, Z, S0z, S1z, Szz_inv, N, ridged)


def reduced_rank_pi(m: _Moments, r: int, method: str = "ml"):
    """Rank-``r`` coefficient of ``R0`` on ``R1``; returns ``(Pi, ridged)``."""
    d = m.R0.shape[0]
    S00 = m.R0 @ m.R0.T / m.N
    S01 = m.R0 @ m.R1.T / m.N
    S11 = m.R1 @ m.R1.T / m.N
    if r == 0:
        return np.zeros((d, d)), False
    S11_inv, ridged = gram_inverse(S11, "S_11")
    full = S01 @ S11_inv
    if r >= d:
        return full, ridged
    if method == "ls":
        M = full @ S01.T
        _, U = np.linalg.eigh(0.5 * (M + M.T))
        U = U[:, ::-1][:, :r]
        return U @ (U.T @ full), ridged
    if method != "ml":
        raise ValueError(f"unknown method {method!r}")
    # S10 S00^-1 S01 v = lam S11 v, whitened with the Cholesky factor of S11
    S00_inv, r0 = gram_inverse(S00, "S_00")
    S11 = 0.5 * (S11 + S11.T)
    try:
        L = np.linalg.cholesky(S11)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(S11 + RIDGE_SCALE * np.trace(S11) / d * np.eye(d))
        ridged = True
    Linv = linalg.solve_triangular(L, np.eye(d), lower=True)
    C = Linv @ S01.T @ S00_inv @ S01 @ Linv.T
    _, W = np.linalg.eigh(0.5 * (C + C.T))
    beta = Linv.T @ W[:, ::-1][:, :r]
    alpha = S01 @ beta @ np.linalg.inv(beta.T @ S11 @ beta)
    return alpha @ beta.T, ridged or r0


def cvar_fit(x, r: int, k: int = 0, include_constant: bool = False, method: str = "ml") -> CvarModel:
    """Reduced-rank fit of ``dx_t = Pi x_{t-1} + sum_i Gamma_i dx_{t-i} + d + e_t``.

    ``method="ml"`` is the Gaussian maximum-likelihood (Johansen) solution;
    ``method="ls"`` minimizes the unweighted residual sum of squares under
    the same rank constraint.
    """
    m = _moments(x, k, include_constant)
    d = m.R0.shape[0]
    if not 0 <= r <= d:
        raise ValueError(f"rank must lie in [0, {d}]")
    Pi, ridged = reduced_rank_pi(m, r, method)
    ridged = ridged or m.ridged
    if r > 0:
        alpha, beta = _factor(Pi, r)
    else:
        alpha, beta = np.zeros((d, 0)), np.zeros((d, 0))
    if m.Z.shape[0]:
        Psi = (m.S0z - Pi @ m.S1z) @ m.Szz_inv
    else:
        Psi = np.zeros((d, 0))
    Gamma = tuple(Psi[:, i * d:(i + 1) * d] for i in range(k))
    d_const = Psi[:, k * d] if include_constant else np.zeros(d)
    Y0 = m.R0 + m.S0z @ m.Szz_inv @ m.Z if m.Z.shape[0] else m.R0
    Y1 = m.R1 + m.S1z @ m.Szz_inv @ m.Z if m.Z.shape[0] else m.R1
    resid = Y0 - Pi @ Y1 - Psi @ m.Z
    sigma = resid @ resid.T / m.N
    return CvarModel(alpha, beta, Gamma, d_const, 0.5 * (sigma + sigma.T), ridged, method)


def rearrange(pi, d1: int, d2: int):
    """Van Loan rearrangement: row ``i + j*d2`` holds ``vec`` of block ``(i, j)``.

    ``rearrange(kron(A2, A1)) == outer(vec(A2), vec(A1))``.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"expected a {d1 * d2}x{d1 * d2} matrix, got {pi.shape}")
    # pi[i*d1 + s, j*d1 + t] -> [j, i, t, s], i.e. row i + j*d2, column s + t*d1
    return pi.reshape(d2, d1, d2, d1).transpose(2, 0, 3, 1).reshape(d2 * d2, d1 * d1)


def nearest_kronecker(pi, d1: int, d2: int):
    """``(A2, A1)`` minimizing ``||pi - kron(A2, A1)||_F``."""
    R = rearrange(pi, d1, d2)
    u, s, vt = np.linalg.svd(R)
    root = np.sqrt(s[0])
    A2 = vec_inverse(u[:, 0] * root, d2, d2)
    A1 = vec_inverse(vt[0] * root, d1, d1)
    return A2, A1
