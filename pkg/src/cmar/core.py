"""Domain types and linear-algebra helpers for cointegrated matrix autoregressions.

Conventions used throughout the package:

* ``vec`` stacks columns (Fortran order), so that
  ``kron(A2, A1) @ vec(X) == vec(A1 @ X @ A2.T)``.
* A series is stored as an array of shape ``(T, d1, d2)``.
* Cointegrating vectors ``beta`` have orthonormal columns and the entry of
  largest magnitude in every column is positive.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

RANK_RTOL = 1e-12
UNIT_ROOT_TOL = 1e-6


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class CovarianceError(ValueError):
    pass


def kron(a, b):
    """Kronecker product, ``result[i*p + s, j*q + t] = a[i, j] * b[s, t]``."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def vec(x):
    """Column-major vectorization of a matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"vec expects a matrix, got shape {x.shape}")
    return x.reshape(-1, order="F")


def vec_inverse(v, m: int, n: int):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != m * n:
        raise ValueError(f"cannot reshape vector of length {v.size} into {m}x{n}")
    return v.reshape((m, n), order="F")


def _check_full_column_rank(beta) -> None:
    s = np.linalg.svd(beta, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0]:
        raise SingularMatrixError("beta does not have full column rank")


def projection(beta):
    """Orthogonal projection onto the column space of ``beta``."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape[0] < beta.shape[1]:
        beta = beta.T
    _check_full_column_rank(beta)
    q, _ = np.linalg.qr(beta)
    p = q @ q.T
    return 0.5 * (p + p.T)


def numerical_rank(a, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def sign_fix_columns(m):
    """Flip columns so the entry of largest magnitude in each is positive."""
    m = np.array(m, dtype=float, copy=True)
    if m.size == 0:
        return m
    idx = np.argmax(np.abs(m), axis=0)
    signs = np.sign(m[idx, np.arange(m.shape[1])])
    signs[signs == 0] = 1.0
    return m * signs


def spectral_radius(m) -> float:
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def is_spd(m, sym_tol: float = 1e-12) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > sym_tol * scale:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (m + m.T))[0] > 0)


def sym_sqrt(m, inverse: bool = False):
    """Symmetric square root (or inverse square root) via eigendecomposition."""
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    if w[0] <= 0:
        raise CovarianceError("matrix is not positive definite")
    p = -0.5 if inverse else 0.5
    return (v * w**p) @ v.T


@dataclass(frozen=True)
class Dims:
    d1: int
    d2: int
    k: int = 0
    r1: int = 1
    r2: int = 1

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("dimensions must be positive")
        if self.k < 0:
            raise ValueError("lag count k must be non-negative")
        if not (0 < self.r1 <= self.d1 and 0 < self.r2 <= self.d2):
            raise ValueError(
                f"ranks must satisfy 0 < r1 <= d1 and 0 < r2 <= d2, got "
                f"r=({self.r1},{self.r2}) d=({self.d1},{self.d2})"
            )

    @property
    def d(self) -> int:
        return self.d1 * self.d2

    @property
    def r(self) -> int:
        return self.r1 * self.r2


@dataclass(frozen=True)
class ErrorCovSpec:
    """Covariance of ``vec(E_t)``.

    ``kind`` is ``"I"`` (dense ``sigma``), ``"II"`` (``sigma2 kron sigma1``)
    or ``"identity"``.
    """

    kind: str
    d1: int
    d2: int
    sigma: Optional[np.ndarray] = None
    sigma1: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "I":
            mats = [("sigma", self.sigma, self.d1 * self.d2)]
        elif self.kind == "II":
            mats = [("sigma1", self.sigma1, self.d1), ("sigma2", self.sigma2, self.d2)]
        elif self.kind == "identity":
            mats = []
        else:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        for name, m, n in mats:
            if m is None or np.shape(m) != (n, n):
                raise CovarianceError(f"{name} must be a {n}x{n} matrix")
            if not is_spd(m):
                raise CovarianceError(f"{name} is not symmetric positive definite")

    @classmethod
    def identity(cls, d1: int, d2: int) -> "ErrorCovSpec":
        return cls("identity", d1, d2)

    def full(self):
        if self.kind == "I":
            return np.array(self.sigma, dtype=float)
        if self.kind == "II":
            return kron(self.sigma2, self.sigma1)
        return np.eye(self.d1 * self.d2)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d1": self.d1, "d2": self.d2}
        for name in ("sigma", "sigma1", "sigma2"):
            m = getattr(self, name)
            if m is not None:
                out[name] = np.asarray(m).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorCovSpec":
        kw = {k: np.asarray(d[k], dtype=float) for k in ("sigma", "sigma1", "sigma2") if k in d}
        return cls(d["kind"], int(d["d1"]), int(d["d2"]), **kw)


@dataclass(frozen=True)
class MatrixSeries:
    values: np.ndarray
    index: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError(f"series values must have shape (T, d1, d2), got {v.shape}")
        object.__setattr__(self, "values", v)
        if self.index is not None:
            idx = tuple(self.index)
            if len(idx) != v.shape[0]:
                raise ValueError("index length does not match the number of observations")
            object.__setattr__(self, "index", idx)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def vectorized(self):
        """``(T, d1*d2)`` array of column-major ``vec(X_t)``."""
        T, d1, d2 = self.values.shape
        return self.values.transpose(0, 2, 1).reshape(T, d1 * d2)

    def slice(self, start: int, stop: int) -> "MatrixSeries":
        idx = None if self.index is None else self.index[start:stop]
        return MatrixSeries(self.values[start:stop], idx)

    def scaled(self, c: float) -> "MatrixSeries":
        return MatrixSeries(self.values * c, self.index)


@dataclass(frozen=True)
class CmarModel:
    """Parameters of ``dX_t = A1 X_{t-1} A2' + sum_i B_i1 dX_{t-i} B_i2' + D + E_t``.

    ``A_j = alpha_j beta_j'``. Use :func:`normalize` (or
    :meth:`from_coefficients`) to obtain the identified representation.
    """

    dims: Dims
    alpha1: np.ndarray
    beta1: np.ndarray
    alpha2: np.ndarray
    beta2: np.ndarray
    B: tuple = ()
    D: Optional[np.ndarray] = None
    error_cov: Optional[ErrorCovSpec] = None

    def __post_init__(self):
        dm = self.dims
        for name, shape in (
            ("alpha1", (dm.d1, dm.r1)),
            ("beta1", (dm.d1, dm.r1)),
            ("alpha2", (dm.d2, dm.r2)),
            ("beta2", (dm.d2, dm.r2)),
        ):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, arr)
        pairs = tuple(
            (np.asarray(b1, dtype=float).reshape(dm.d1, dm.d1),
             np.asarray(b2, dtype=float).reshape(dm.d2, dm.d2))
            for b1, b2 in self.B
        )
        if len(pairs) != dm.k:
            raise ValueError(f"expected {dm.k} lag pairs, got {len(pairs)}")
        object.__setattr__(self, "B", pairs)
        D = np.zeros((dm.d1, dm.d2)) if self.D is None else np.asarray(self.D, dtype=float)
        object.__setattr__(self, "D", D.reshape(dm.d1, dm.d2))
        if self.error_cov is None:
            object.__setattr__(self, "error_cov", ErrorCovSpec.identity(dm.d1, dm.d2))

    @property
    def A1(self):
        return self.alpha1 @ self.beta1.T

    @property
    def A2(self):
        return self.alpha2 @ self.beta2.T

    @property
    def Pi(self):
        return kron(self.A2, self.A1)

    @property
    def Gammas(self) -> list:
        return [kron(b2, b1) for b1, b2 in self.B]

    @property
    def beta(self):
        return kron(self.beta2, self.beta1)

    @property
    def alpha(self):
        return kron(self.alpha2, self.alpha1)

    @classmethod
    def from_coefficients(cls, A1, A2, B=(), D=None, error_cov=None, ranks=None) -> "CmarModel":
        """Build a normalized model from coefficient matrices.

        ``ranks`` defaults to the numerical ranks of ``A1`` and ``A2``; when
        given, the coefficients are truncated to those ranks.
        """
        A1 = np.atleast_2d(np.asarray(A1, dtype=float))
        A2 = np.atleast_2d(np.asarray(A2, dtype=float))
        if ranks is None:
            ranks = (numerical_rank(A1), numerical_rank(A2))
        dims = Dims(A1.shape[0], A2.shape[0], len(B), *ranks)
        a1, b1 = _factor(A1, dims.r1)
        a2, b2 = _factor(A2, dims.r2)
        return normalize(cls(dims, a1, b1, a2, b2, tuple(B), D, error_cov))

    def with_error_cov(self, error_cov: ErrorCovSpec) -> "CmarModel":
        return replace(self, error_cov=error_cov)

    def to_dict(self) -> dict:
        dm = self.dims
        return {
            "dims": {"d1": dm.d1, "d2": dm.d2, "k": dm.k, "r1": dm.r1, "r2": dm.r2},
            "alpha1": self.alpha1.tolist(),
            "beta1": self.beta1.tolist(),
            "alpha2": self.alpha2.tolist(),
            "beta2": self.beta2.tolist(),
            "B": [[b1.tolist(), b2.tolist()] for b1, b2 in self.B],
            "D": self.D.tolist(),
            "error_cov": self.error_cov.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CmarModel":
        return cls(
            Dims(**d["dims"]),
            np.asarray(d["alpha1"]),
            np.asarray(d["beta1"]),
            np.asarray(d["alpha2"]),
            np.asarray(d["beta2"]),
            tuple((np.asarray(b1), np.asarray(b2)) for b1, b2 in d["B"]),
            np.asarray(d["D"]),
            ErrorCovSpec.from_dict(d["error_cov"]),
        )


def _factor(A, r: int):
    """Split ``A`` into ``(alpha, beta)``, ``A ~= alpha beta'``.

    ``beta`` spans the row space of ``A`` (leading singular vectors of
    ``A'``); ``A @ beta`` is the rank-r truncation expressed in that basis.
    """
    _, _, vt = np.linalg.svd(A)
    beta = sign_fix_columns(vt[:r].T)
    return A @ beta, beta


def _largest_entry_sign(m) -> float:
    flat = np.asarray(m).reshape(-1, order="F")
    if flat.size == 0:
        return 1.0
    s = np.sign(flat[np.argmax(np.abs(flat))])
    return 1.0 if s == 0 else float(s)


def normalize(model: CmarModel) -> CmarModel:
    """Return the identified representation of ``model``.

    ``||A1||_F = 1`` and ``||B_i1||_F = 1`` with the scale moved to the
    right-hand factor; ``beta_j`` are sign-fixed leading right singular
    vectors of ``A_j`` (a basis of its row space). The remaining joint sign
    ``(A1, A2) -> (-A1, -A2)`` is fixed by making the largest entry of
    ``alpha1`` positive, and likewise for each ``B_i1``.
    """
    dm = model.dims
    A1, A2 = model.A1, model.A2
    c = np.linalg.norm(A1)
    if c > 0:
        A1, A2 = A1 / c, A2 * c
    a1, b1 = _factor(A1, dm.r1)
    a2, b2 = _factor(A2, dm.r2)
    s = _largest_entry_sign(a1)
    a1, a2 = a1 * s, a2 * s
    pairs = []
    for B1, B2 in model.B:
        c = np.linalg.norm(B1)
        if c > 0:
            B1, B2 = B1 / c, B2 * c
        s = _largest_entry_sign(B1)
        pairs.append((B1 * s, B2 * s))
    return CmarModel(dm, a1, b1, a2, b2, tuple(pairs), model.D, model.error_cov)


def companion_matrix(model: CmarModel):
    """Transition matrix of the stationary state ``(beta'vec X_t, dvec X_t, ..., dvec X_{t-k+1})``."""
    dm = model.dims
    beta, alpha = model.beta, model.alpha
    r, d, k = dm.r, dm.d, dm.k
    top_left = np.eye(r) + beta.T @ alpha
    if k == 0:
        return top_left
    gammas = model.Gammas
    n = r + k * d
    phi = np.zeros((n, n))
    phi[:r, :r] = top_left
    phi[r:r + d, :r] = alpha
    for i, G in enumerate(gammas):
        cols = slice(r + i * d, r + (i + 1) * d)
        phi[:r, cols] = beta.T @ G
        phi[r:r + d, cols] = G
    for i in range(1, k):
        phi[r + i * d:r + (i + 1) * d, r + (i - 1) * d:r + i * d] = np.eye(d)
    return phi


def levels_companion(Pi, gammas: Sequence) -> np.ndarray:
    """VAR(1) companion of the levels representation of a VECM."""
    d = Pi.shape[0]
    k = len(gammas)
    p = k + 1
    coefs = [np.eye(d) + Pi + (gammas[0] if k else 0)]
    for i in range(1, k):
        coefs.append(gammas[i] - gammas[i - 1])
    if k:
        coefs.append(-gammas[k - 1])
    comp = np.zeros((d * p, d * p))
    comp[:d, :] = np.hstack(coefs)
    if p > 1:
        comp[d:, :-d] = np.eye(d * (p - 1))
    return comp


def unit_root_count(model: CmarModel, tol: float = UNIT_ROOT_TOL) -> int:
    """Number of characteristic roots at ``z = 1`` (companion eigenvalues near 1)."""
    eig = np.linalg.eigvals(levels_companion(model.Pi, model.Gammas))
    return int(np.sum(np.abs(eig - 1.0) < tol))
