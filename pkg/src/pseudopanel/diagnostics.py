"""Specification diagnostics: Hausman test, DFBETAS filter, residual-based
heteroscedasticity test with inverse-absolute-residual reweighting.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import stats

from .errors import SingularVError, ValidationError
from .regress import ModelSpec, build_design, ols, qr_solve, wls

__all__ = [
    "HausmanResult",
    "DfbetasResult",
    "HetTestResult",
    "hausman",
    "dfbetas_filter",
    "het_test_and_reweight",
    "inverse_residual_reweight",
]


@dataclass
class HausmanResult:
    statistic: float
    dof: int
    p_value: float
    v_psd_repaired: bool = False
    subset: tuple = ()
    difference: pd.Series | None = None


def _psd_inverse(V, clip=1e-12):
    """Inverse through the eigendecomposition, clipping tiny eigenvalues.

    Returns (V_inv, repaired). Raises when the matrix has no usable
    spectrum at all.
    """
    V = 0.5 * (V + V.T)
    vals, vecs = scipy.linalg.eigh(V)
    if not np.any(vals > clip):
        raise SingularVError("variance of the contrast has no positive eigenvalue")
    repaired = bool(np.any(vals < clip))
    vals = np.clip(vals, clip, None)
    V_inv = (vecs / vals) @ vecs.T
    return V_inv, repaired


def hausman(fit_b, fit_w, subset=None, naive=False):
    """Contrast two estimators of the same coefficients.

    The quadratic form (b_b - b_w)' V^-1 (b_b - b_w) with V = V_b + V_w is
    built over *all* coefficients the two fits share; restricting to a
    subset uses the corresponding block of V^-1 (equivalently the
    conditional variance of the subset contrast), with dof = subset size.
    ``naive=True`` instead inverts only the subset block of V — a biased
    shortcut, provided for comparison only. Near-singular V is repaired by
    eigenvalue clipping at 1e-12 and flagged.

    Both estimators must be consistent under the null and computed from
    orthogonal samples or transformations so that V_b + V_w is the
    variance of the difference. Published pseudo-panel contrasts sometimes
    omit the dof; it always equals the subset size here.
    """
    common = [n for n in fit_b.names if n in set(fit_w.names)]
    if subset is None:
        subset = tuple(common)
    else:
        subset = tuple(subset)
        missing = [s for s in subset if s not in common]
        if missing:
            raise ValidationError(f"subset names not shared by both fits: {missing}")
    if not common:
        raise ValidationError("the two fits share no coefficients")

    ib = [fit_b.names.index(n) for n in common]
    iw = [fit_w.names.index(n) for n in common]
    d = fit_b.params[common].to_numpy() - fit_w.params[common].to_numpy()
    V = fit_b.cov[np.ix_(ib, ib)] + fit_w.cov[np.ix_(iw, iw)]

    sel = [common.index(s) for s in subset]
    if naive:
        V_ss = V[np.ix_(sel, sel)]
        V_inv_ss, repaired = _psd_inverse(V_ss)
        stat = float(d[sel] @ V_inv_ss @ d[sel])
    else:
        V_inv, repaired = _psd_inverse(V)
        stat = float(d[sel] @ V_inv[np.ix_(sel, sel)] @ d[sel])
    stat = max(stat, 0.0)
    dof = len(subset)
    return HausmanResult(
        statistic=stat, dof=dof, p_value=float(stats.chi2.sf(stat, dof)),
        v_psd_repaired=repaired, subset=subset,
        difference=pd.Series(d, index=common),
    )


@dataclass
class DfbetasResult:
    dfbetas: pd.DataFrame
    flags: pd.Series
    threshold: float
    retained: pd.Index
    flagged: pd.Index
    extra: dict = field(default_factory=dict)


def dfbetas_filter(spec, frame, threshold=None):
    """Flag influential rows by per-coefficient DFBETAS.

    DFBETAS_ij is the change in coefficient j upon deleting row i, scaled
    by the deleted-case standard error (the externally studentized scale).
    Rows whose largest |DFBETAS| exceeds 2/sqrt(n) are flagged; nothing is
    deleted — the retained/flagged split is returned for the caller.
    """
    y, X, names, used, n_ex = build_design(spec, frame)
    n, k = X.shape
    if n <= k + 1:
        raise ValidationError("too few rows for deleted-case diagnostics")
    beta, xtx_inv = qr_solve(X, y, names)
    resid = y - X @ beta

    H = X @ xtx_inv  # n x k; h_i = row_i . x_i
    h = np.einsum("ij,ij->i", H, X)
    h = np.clip(h, 0.0, 1.0 - 1e-12)
    ssr = float(resid @ resid)
    s_i2 = (ssr - resid**2 / (1.0 - h)) / (n - k - 1)
    s_i2 = np.clip(s_i2, 1e-300, None)

    delta_beta = H * (resid / (1.0 - h))[:, None]  # row i: (X'X)^-1 x_i e_i/(1-h_i)
    denom = np.sqrt(s_i2)[:, None] * np.sqrt(np.diag(xtx_inv))[None, :]
    dfb = delta_beta / denom

    threshold = 2.0 / np.sqrt(n) if threshold is None else float(threshold)
    flags = pd.Series(np.max(np.abs(dfb), axis=1) > threshold, index=used)
    return DfbetasResult(
        dfbetas=pd.DataFrame(dfb, index=used, columns=names),
        flags=flags,
        threshold=threshold,
        retained=used[~flags.to_numpy()],
        flagged=used[flags.to_numpy()],
        extra={"n_excluded": n_ex},
    )


@dataclass
class HetTestResult:
    statistic: float
    dof: int
    p_value: float
    rejected: bool
    refit: object = None


def inverse_residual_reweight(spec, frame, residuals, cov_type="homoscedastic"):
    """Refit with weights 1/|e|, flooring |e| at its 1st percentile.

    A zero-residual (exact) fit floors every row identically, so the
    reweighted fit reproduces the unweighted one.
    """
    abs_e = np.abs(np.asarray(residuals, dtype=float))
    floor = float(np.percentile(abs_e, 1))
    if floor <= 0.0:
        positive = abs_e[abs_e > 0]
        floor = float(positive.min()) * 1e-3 if positive.size else 1.0
    w = 1.0 / np.maximum(abs_e, floor)
    sub = frame.loc[residuals.index] if isinstance(residuals, pd.Series) else frame
    return wls(spec, sub, weights=w, cov_type=cov_type)


def het_test_and_reweight(fit, spec, frame, level=0.05, force_reweight=False):
    """Regress squared residuals on a quadratic form of the regressors.

    The auxiliary regression uses the regressors, their squares, and
    cross-products; n R^2 is referred to chi^2 with the auxiliary slope
    count as dof. On rejection at ``level`` (or with ``force_reweight``)
    the model is refit with inverse-absolute-residual weights.
    """
    y, X, names, used, _ = build_design(
        ModelSpec(spec.dependent, spec.regressors, intercept=False,
                  dummies=spec.dummies),
        frame.loc[fit.residuals.index],
    )
    e2 = (fit.residuals.to_numpy()) ** 2

    cols = []
    k = X.shape[1]
    for j in range(k):
        cols.append(X[:, j])
    for j in range(k):
        for l in range(j, k):
            cols.append(X[:, j] * X[:, l])
    A = np.column_stack(cols) if cols else np.empty((len(e2), 0))
    # drop duplicated/constant auxiliary columns before fitting
    keep = []
    seen = []
    for j in range(A.shape[1]):
        col = A[:, j]
        if np.ptp(col) < 1e-12:
            continue
        if any(np.allclose(col, A[:, i]) for i in seen):
            continue
        seen.append(j)
        keep.append(j)
    A = A[:, keep]

    n = len(e2)
    if A.shape[1] == 0 or np.ptp(e2) < 1e-300:
        stat, dof, p = 0.0, max(A.shape[1], 1), 1.0
    else:
        Xa = np.hstack([np.ones((n, 1)), A])
        beta, _ = qr_solve(Xa, e2, [f"a{j}" for j in range(Xa.shape[1])])
        res = e2 - Xa @ beta
        sst = float(((e2 - e2.mean()) ** 2).sum())
        r2 = 1.0 - float(res @ res) / sst if sst > 0 else 0.0
        dof = A.shape[1]
        stat = n * r2
        p = float(stats.chi2.sf(stat, dof))

    rejected = p < level
    refit = None
    if rejected or force_reweight:
        refit = inverse_residual_reweight(spec, frame, fit.residuals)
    return HetTestResult(statistic=float(stat), dof=int(dof), p_value=p,
                         rejected=bool(rejected), refit=refit)
