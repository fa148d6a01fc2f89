"""Core least-squares engine: OLS, WLS, GLS, and SUR systems.

Everything solves through a pivoted QR decomposition — normal equations
are never inverted explicitly — so rank checks fall out of the
factorization (singular-value ratio tolerance 1e-10) and the offending
columns can be named when the design is collinear.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import (
    MissingColumnError,
    NonPositiveWeightError,
    NotPositiveDefiniteError,
    RankDeficientError,
    SingularSigmaError,
    ValidationError,
)

__all__ = ["ModelSpec", "FitResult", "SurResult", "ols", "wls", "gls", "sur"]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    """Regression specification.

    ``regressors`` is an ordered column list; ``dummies`` lists categorical
    columns (wave, quarter) expanded to indicator sets with the first level
    dropped; ``weight_col`` supplies per-row weights for WLS-style fits.
    """

    dependent: str
    regressors: tuple
    intercept: bool = True
    dummies: tuple = ()
    weight_col: str | None = None

    def __init__(self, dependent, regressors, intercept=True, dummies=(), weight_col=None):
        object.__setattr__(self, "dependent", dependent)
        object.__setattr__(self, "regressors", tuple(regressors))
        object.__setattr__(self, "intercept", bool(intercept))
        object.__setattr__(self, "dummies", tuple(dummies))
        object.__setattr__(self, "weight_col", weight_col)


@dataclass
class FitResult:
    """Estimates, covariance, residuals and bookkeeping from one fit.

    ``params`` is name-indexed; ``cov`` is aligned to ``params.index``.
    ``residuals`` is indexed by the rows actually used; ``n_excluded``
    counts rows dropped for missing model variables.
    """

    params: pd.Series
    cov: np.ndarray
    residuals: pd.Series
    df: int
    n_used: int
    method: str
    n_excluded: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def names(self):
        return list(self.params.index)

    @property
    def se(self):
        return pd.Series(np.sqrt(np.diag(self.cov)), index=self.params.index)

    @property
    def tvalues(self):
        return self.params / self.se

    def cov_series(self, a, b):
        i = self.names.index(a)
        j = self.names.index(b)
        return self.cov[i, j]

    def to_dict(self):
        return {
            "method": self.method,
            "n_used": int(self.n_used),
            "n_excluded": int(self.n_excluded),
            "df": int(self.df),
            "names": self.names,
            "coef": {k: float(v) for k, v in self.params.items()},
            "se": {k: float(v) for k, v in self.se.items()},
            "cov": [float(v) for v in np.asarray(self.cov).ravel()],
        }

    def to_json(self, path=None, **dump_kwargs):
        dump_kwargs.setdefault("sort_keys", True)
        dump_kwargs.setdefault("indent", 2)
        text = json.dumps(self.to_dict(), **dump_kwargs)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path_or_text):
        if isinstance(path_or_text, str) and path_or_text.lstrip().startswith("{"):
            payload = json.loads(path_or_text)
        else:
            with open(path_or_text, encoding="utf-8") as fh:
                payload = json.load(fh)
        names = payload["names"]
        k = len(names)
        params = pd.Series([payload["coef"][n] for n in names], index=names, dtype=float)
        cov = np.asarray(payload["cov"], dtype=float).reshape(k, k)
        return cls(
            params=params,
            cov=cov,
            residuals=pd.Series(dtype=float),
            df=payload.get("df", 0),
            n_used=payload.get("n_used", 0),
            method=payload.get("method", "loaded"),
            n_excluded=payload.get("n_excluded", 0),
        )


def build_design(spec, frame):
    """Expand a spec against a frame into (y, X, names, used index, n_excluded).

    Dummy columns expand to indicators with the first (sorted) level
    dropped. Rows with a missing value in any model column are excluded and
    counted, never imputed.
    """
    needed = [spec.dependent, *spec.regressors, *spec.dummies]
    for col in needed:
        if col not in frame.columns:
            raise MissingColumnError(f"model column {col!r} not found")
    if spec.weight_col is not None and spec.weight_col not in frame.columns:
        raise MissingColumnError(f"weight column {spec.weight_col!r} not found")

    cols = [frame[c] for c in [spec.dependent, *spec.regressors]]
    names = list(spec.regressors)
    parts = [np.column_stack([c.to_numpy(dtype=float) for c in cols])] if cols else []
    X_parts = [parts[0][:, 1:]] if parts else []
    y_all = parts[0][:, 0]

    for dcol in spec.dummies:
        levels = np.sort(pd.unique(frame[dcol].dropna()))
        for level in levels[1:]:
            X_parts.append((frame[dcol] == level).to_numpy(dtype=float).reshape(-1, 1))
            names.append(f"{dcol}=={level}")
        # missing dummy source values drop the row
        miss = frame[dcol].isna().to_numpy()
        if miss.any():
            X_parts.append(np.where(miss, np.nan, 0.0).reshape(-1, 1))
            names.append(f"_{dcol}_missing_marker")

    X_all = np.hstack(X_parts) if X_parts else np.empty((len(frame), 0))
    marker = [i for i, n in enumerate(names) if n.endswith("_missing_marker")]
    ok = ~np.isnan(y_all) & ~np.isnan(X_all).any(axis=1)
    if marker:
        keep = [i for i in range(X_all.shape[1]) if i not in marker]
        X_all = X_all[:, keep]
        names = [n for i, n in enumerate(names) if i not in marker]

    if spec.intercept:
        X_all = np.hstack([np.ones((len(frame), 1)), X_all])
        names = ["const", *names]

    used = frame.index[ok]
    return y_all[ok], X_all[ok], names, used, int((~ok).sum())


def qr_solve(X, y, names=None, rank_tol=RANK_TOL):
    """Least-squares solve via column-pivoted QR.

    Returns (beta, xtx_inv). Raises :class:`RankDeficientError` naming the
    dependent columns when the R diagonal collapses below ``rank_tol``
    relative to its largest entry.
    """
    n, k = X.shape
    if k == 0:
        raise ValidationError("empty design matrix")
    names = names if names is not None else [f"x{i}" for i in range(k)]
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag.max() if diag.size else 0.0
    if top == 0.0:
        raise RankDeficientError(names, "design matrix is identically zero")
    rank = int(np.sum(diag > rank_tol * top))
    if rank < k:
        raise RankDeficientError([names[j] for j in piv[rank:]])

    beta_piv = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_piv

    r_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    m = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = m
    return beta, xtx_inv


def _covariance(X, resid, xtx_inv, df, cov_type, row_weights=None):
    n = X.shape[0]
    if cov_type == "homoscedastic":
        if row_weights is None:
            sigma2 = float(resid @ resid) / df
        else:
            sigma2 = float(row_weights * resid @ resid) / df
        base = xtx_inv if row_weights is None else xtx_inv
        return sigma2 * base
    if cov_type == "white":
        w = np.ones(n) if row_weights is None else row_weights
        meat = (X * (w**2 * resid**2)[:, None]).T @ X
        return (n / df) * xtx_inv @ meat @ xtx_inv
    raise ValidationError(f"unknown covariance type {cov_type!r}")


def _finish(spec, frame, y, X, names, used, n_excluded, method, cov_type,
            row_weights=None):
    if X.shape[0] <= X.shape[1]:
        raise ValidationError(
            f"{X.shape[0]} usable rows for {X.shape[1]} coefficients"
        )
    if row_weights is None:
        beta, xtx_inv = qr_solve(X, y, names)
        resid = y - X @ beta
        df = X.shape[0] - X.shape[1]
        cov = _covariance(X, resid, xtx_inv, df, cov_type)
    else:
        sw = np.sqrt(row_weights)
        beta, xtwx_inv = qr_solve(X * sw[:, None], y * sw, names)
        resid = y - X @ beta
        df = X.shape[0] - X.shape[1]
        cov = _covariance(X, resid, xtwx_inv, df, cov_type, row_weights)
    return FitResult(
        params=pd.Series(beta, index=names),
        cov=cov,
        residuals=pd.Series(resid, index=used),
        df=df,
        n_used=X.shape[0],
        method=method,
        n_excluded=n_excluded,
    )


def ols(spec, frame, cov_type="homoscedastic"):
    """Ordinary least squares.

    ``cov_type`` selects the homoscedastic covariance or the White-type
    heteroscedasticity-consistent one (with the n/(n-k) degrees-of-freedom
    factor, so the two coincide when residual magnitudes are constant).
    """
    y, X, names, used, n_excluded = build_design(spec, frame)
    return _finish(spec, frame, y, X, names, used, n_excluded, "ols", cov_type)


def wls(spec, frame, weights=None, cov_type="homoscedastic"):
    """Weighted least squares minimising sum_r w_r e_r^2.

    ``weights`` may be an array aligned with ``frame`` rows or the spec's
    ``weight_col``; all weights must be strictly positive. Duplicating a
    row is equivalent to doubling its weight; equal weights reproduce OLS.
    """
    y, X, names, used, n_excluded = build_design(spec, frame)
    if weights is None:
        if spec.weight_col is None:
            raise ValidationError("wls needs weights or a spec weight_col")
        weights = frame[spec.weight_col]
    w = np.asarray(weights, dtype=float)
    if w.shape[0] == len(frame):
        w = w[frame.index.get_indexer(used)]
    elif w.shape[0] != len(used):
        raise ValidationError("weights length matches neither the frame nor the used rows")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeightError("weights must be positive and finite")
    return _finish(spec, frame, y, X, names, used, n_excluded, "wls", cov_type, row_weights=w)


def gls(spec, frame, omega):
    """Generalized least squares with a full covariance matrix.

    beta = (X' Omega^-1 X)^-1 X' Omega^-1 y, covariance
    (X' Omega^-1 X)^-1 taken literally (omega is the residual covariance,
    not a covariance up to scale). omega must be symmetric positive
    definite over the used rows.
    """
    y, X, names, used, n_excluded = build_design(spec, frame)
    omega = np.asarray(omega, dtype=float)
    if omega.shape == (len(frame), len(frame)) and len(used) != len(frame):
        idx = frame.index.get_indexer(used)
        omega = omega[np.ix_(idx, idx)]
    if omega.shape != (len(used), len(used)):
        raise ValidationError("omega order does not match the usable rows")
    if not np.allclose(omega, omega.T, atol=1e-10):
        raise NotPositiveDefiniteError("omega is not symmetric")
    try:
        L = scipy.linalg.cholesky(omega, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("omega is not positive definite") from exc

    Xt = scipy.linalg.solve_triangular(L, X, lower=True)
    yt = scipy.linalg.solve_triangular(L, y, lower=True)
    beta, xox_inv = qr_solve(Xt, yt, names)
    resid = y - X @ beta
    return FitResult(
        params=pd.Series(beta, index=names),
        cov=xox_inv,
        residuals=pd.Series(resid, index=used),
        df=X.shape[0] - X.shape[1],
        n_used=X.shape[0],
        method="gls",
        n_excluded=n_excluded,
    )


@dataclass
class SurResult:
    """Joint result of a seemingly-unrelated-regressions fit."""

    fits: list
    sigma: np.ndarray
    cov: np.ndarray
    n_used: int
    iterations: int

    def __iter__(self):
        return iter(self.fits)


def sur(specs, frame, iterate=False, max_iter=50, tol=1e-8):
    """Seemingly unrelated regressions over a common row set.

    First-stage per-equation OLS residuals give the cross-equation
    covariance (divisor n); one feasible-GLS step follows by default, with
    iteration to convergence behind ``iterate``. With identical regressor
    matrices the GLS step reproduces per-equation OLS exactly.
    """
    if len(specs) < 2:
        raise ValidationError("sur needs at least two equations")

    designs = []
    used_common = None
    for spec in specs:
        y, X, names, used, _ = build_design(spec, frame)
        designs.append((y, X, names, used))
        used_common = used if used_common is None else used_common.intersection(used)

    ys, Xs, names_all = [], [], []
    for (y, X, names, used), spec in zip(designs, specs):
        mask = used.isin(used_common)
        ys.append(y[mask])
        Xs.append(X[mask])
        names_all.append(names)
    n = len(used_common)
    m = len(specs)
    ks = [X.shape[1] for X in Xs]
    if n <= max(ks):
        raise ValidationError("too few common rows for the system")

    betas = []
    for y, X, names in zip(ys, Xs, names_all):
        b, _ = qr_solve(X, y, names)
        betas.append(b)

    def residual_matrix(betas):
        return np.column_stack([y - X @ b for y, X, b in zip(ys, Xs, betas)])

    iterations = 0
    while True:
        E = residual_matrix(betas)
        sigma = (E.T @ E) / n
        try:
            sigma_inv = scipy.linalg.inv(sigma)
            if not np.all(np.isfinite(sigma_inv)):
                raise scipy.linalg.LinAlgError
        except scipy.linalg.LinAlgError as exc:
            raise SingularSigmaError("cross-equation residual covariance is singular") from exc
        if np.linalg.cond(sigma) > 1e12:
            raise SingularSigmaError("cross-equation residual covariance is singular")

        k_tot = sum(ks)
        A = np.zeros((k_tot, k_tot))
        b_vec = np.zeros(k_tot)
        offs = np.concatenate([[0], np.cumsum(ks)])
        for i in range(m):
            for j in range(m):
                A[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = sigma_inv[i, j] * (Xs[i].T @ Xs[j])
            b_vec[offs[i]:offs[i + 1]] = sum(
                sigma_inv[i, j] * (Xs[i].T @ ys[j]) for j in range(m)
            )
        try:
            beta_stack = scipy.linalg.solve(A, b_vec, assume_a="sym")
            cov_full = scipy.linalg.inv(A)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSigmaError("stacked SUR system is singular") from exc

        new_betas = [beta_stack[offs[i]:offs[i + 1]] for i in range(m)]
        change = max(np.max(np.abs(nb - ob)) for nb, ob in zip(new_betas, betas))
        betas = new_betas
        iterations += 1
        if not iterate or change < tol or iterations >= max_iter:
            break

    E = residual_matrix(betas)
    fits = []
    for i, spec in enumerate(specs):
        block = cov_full[offs[i]:offs[i + 1], offs[i]:offs[i + 1]]
        fits.append(FitResult(
            params=pd.Series(betas[i], index=names_all[i]),
            cov=block,
            residuals=pd.Series(E[:, i], index=used_common),
            df=n - ks[i],
            n_used=n,
            method="sur",
            n_excluded=len(frame) - n,
        ))
    return SurResult(fits=fits, sigma=sigma, cov=cov_full, n_used=n, iterations=iterations)
