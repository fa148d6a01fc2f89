"""Panel transforms and heteroscedasticity-correction variants.

Estimators: between (unit time-means), within (deviation from unit means,
or a per-period equation system), first differences, and per-wave cross
sections. On pseudo-panels, aggregation makes the residual variance
proportional to delta_Ht; four treatments are supported:

``none``
    unweighted.
``approx``
    rows scaled by delta_bar^(-1/2), the per-cell time average — a plain
    GLS that commutes with the transforms because the factor is constant
    over time inside each cell.
``false``
    rows scaled by the time-varying delta_Ht^(-1/2) *before* transforming.
    The scaling makes the cell effects time-varying, so demeaning and
    differencing no longer annihilate them; the variant is provided to
    quantify the damage. It coincides with ``approx`` exactly when delta
    is constant over time.
``exact``
    between: inverse-variance WLS with weights
    (sigma_mu^2 + sigma_eps^2 * w_c / T)^(-1), w_c the time-mean delta.
    within: the annihilator Delta = D^-1 - D^-1 Z (Z' D^-1 Z)^-1 Z' D^-1
    with D = diag(delta_Ht) and Z the cell dummies; Delta kills the cell
    effects exactly whatever the delta pattern. Not defined for first
    differences or cross sections.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from .data import PanelTable
from .errors import (
    NotIdentifiedError,
    SingularSigmaError,
    ValidationError,
)
from .pseudo import PseudoPanel
from .regress import FitResult, ModelSpec, _covariance, build_design, ols, qr_solve, wls

__all__ = [
    "TRANSFORMS",
    "CORRECTIONS",
    "VarianceComponents",
    "CrossSectionResult",
    "SpectralCheck",
    "between_fit",
    "within_fit",
    "first_difference_fit",
    "cross_section_fit",
    "variance_components",
    "spectral_check",
    "within_annihilator",
    "error_components_omega",
]

TRANSFORMS = ("between", "within", "first_difference", "cross_section")
CORRECTIONS = ("none", "approx", "exact", "false")


@dataclass(frozen=True)
class _Layout:
    frame: pd.DataFrame
    unit: str
    wave: str
    delta: str | None
    delta_bar: str | None


def _layout(panel):
    if isinstance(panel, PseudoPanel):
        frame = panel.frame.sort_values(["key", "wave"], kind="mergesort").reset_index(drop=True)
        return _Layout(frame, "key", "wave", "delta", "delta_bar")
    if isinstance(panel, PanelTable):
        frame = panel.frame.sort_values(
            [panel.unit_col, panel.wave_col], kind="mergesort"
        ).reset_index(drop=True)
        return _Layout(frame, panel.unit_col, panel.wave_col, None, None)
    raise ValidationError("panel must be a PanelTable or a PseudoPanel")


def _require_balanced(layout):
    counts = layout.frame.groupby(layout.unit)[layout.wave].nunique()
    n_waves = layout.frame[layout.wave].nunique()
    if not (counts == n_waves).all():
        raise ValidationError("estimator requires a balanced panel")
    return int(n_waves)


def _check_correction(correction, layout):
    if correction not in CORRECTIONS:
        raise ValidationError(f"unknown correction {correction!r}; one of {CORRECTIONS}")
    if correction != "none" and layout.delta is None:
        raise ValidationError("heteroscedasticity corrections require a pseudo-panel")


def _scale_factor(layout, correction):
    if correction == "approx":
        return layout.frame[layout.delta_bar].to_numpy(dtype=float) ** -0.5
    if correction == "false":
        return layout.frame[layout.delta].to_numpy(dtype=float) ** -0.5
    return None


def _design_on(layout, spec, intercept=None):
    spec2 = ModelSpec(
        spec.dependent, spec.regressors,
        intercept=spec.intercept if intercept is None else intercept,
        dummies=spec.dummies,
    )
    return build_design(spec2, layout.frame)


def _apply_iv_correction(fit, y_t, X_orig_t):
    """Standard second-stage covariance correction.

    Residuals are recomputed with the original (uninstrumented) regressors
    under the same transform, and the covariance rescaled by the ratio of
    residual variances.
    """
    e_fitted = fit.residuals.to_numpy()
    e_orig = y_t - X_orig_t @ fit.params.to_numpy()
    ss_f = float(e_fitted @ e_fitted)
    ss_o = float(e_orig @ e_orig)
    if ss_f > 0:
        fit.cov = fit.cov * (ss_o / ss_f)
    fit.residuals = pd.Series(e_orig, index=fit.residuals.index)
    fit.extra["iv_corrected"] = True
    return fit


# ---------------------------------------------------------------------
# between
# ---------------------------------------------------------------------

def _between_design(layout, spec, lam, intercept):
    """Time-mean design, with optional pre-averaging row scaling.

    With scaling, the constant column is the scaled constant's time mean
    (no free intercept): averaging commutes with a cell-constant factor, so
    this reproduces inverse-variance WLS whenever the factor is constant
    over time.
    """
    frame = layout.frame
    cols = [spec.dependent, *spec.regressors]
    if lam is None:
        means = frame.groupby(layout.unit, sort=True)[cols].mean()
        y = means[spec.dependent].to_numpy()
        X = means[list(spec.regressors)].to_numpy()
        names = list(spec.regressors)
        if intercept:
            X = np.hstack([np.ones((len(means), 1)), X])
            names = ["const", *names]
        return y, X, names, means.index
    work = pd.DataFrame({c: frame[c].to_numpy(dtype=float) * lam for c in cols})
    if intercept:
        work["_const"] = lam
    work[layout.unit] = frame[layout.unit].to_numpy()
    means = work.groupby(layout.unit, sort=True).mean()
    y = means[spec.dependent].to_numpy()
    design_cols = (["_const"] if intercept else []) + list(spec.regressors)
    X = means[design_cols].to_numpy()
    names = (["const"] if intercept else []) + list(spec.regressors)
    return y, X, names, means.index


def between_fit(spec, panel, correction="none", sigma=None, cov_type="homoscedastic",
                iv_resid_spec=None):
    """Regress unit-level time means.

    Wave/quarter dummies are dropped (collinear with the intercept after
    time-averaging). The exact correction needs variance components; when
    ``sigma`` is omitted they are estimated from the panel first.
    """
    layout = _layout(panel)
    T = _require_balanced(layout)
    _check_correction(correction, layout)
    frame = layout.frame

    if correction == "exact":
        if sigma is None:
            sigma = variance_components(spec, panel)
        cols = [spec.dependent, *spec.regressors]
        means = frame.groupby(layout.unit, sort=True)[cols].mean().reset_index()
        w_c = frame.groupby(layout.unit, sort=True)[layout.delta].mean().to_numpy()
        weights = 1.0 / (sigma.sigma_mu2 + sigma.sigma_eps2 * w_c / T)
        mean_spec = ModelSpec(spec.dependent, spec.regressors, intercept=spec.intercept)
        fit = wls(mean_spec, means, weights=weights, cov_type=cov_type)
        fit.method = "between:exact"
        fit.extra["between_weights"] = weights
        fit.extra["sigma"] = sigma
        if iv_resid_spec is not None:
            means_o = frame.groupby(layout.unit, sort=True)[
                [iv_resid_spec.dependent, *iv_resid_spec.regressors]
            ].mean().reset_index()
            spec_o = ModelSpec(iv_resid_spec.dependent, iv_resid_spec.regressors,
                               intercept=spec.intercept)
            y_o, X_o, _, _, _ = build_design(spec_o, means_o)
            _apply_iv_correction(fit, y_o, X_o)
        return fit

    lam = _scale_factor(layout, correction)
    y, X, names, index, = _between_design(layout, spec, lam, spec.intercept)
    beta, xtx_inv = qr_solve(X, y, names)
    resid = y - X @ beta
    df = X.shape[0] - X.shape[1]
    fit = FitResult(
        params=pd.Series(beta, index=names),
        cov=_covariance(X, resid, xtx_inv, df, cov_type),
        residuals=pd.Series(resid, index=index),
        df=df, n_used=X.shape[0], method=f"between:{correction}",
    )
    if iv_resid_spec is not None:
        y_o, X_o, _, _ = _between_design(layout, iv_resid_spec, lam, spec.intercept)
        _apply_iv_correction(fit, y_o, X_o)
    return fit


# ---------------------------------------------------------------------
# within
# ---------------------------------------------------------------------

def _demean_by(values, groups):
    s = pd.Series(values)
    return (s - s.groupby(groups).transform("mean")).to_numpy()


def _build_transformed(layout, spec, lam, transform):
    """Expand the design, scale rows, then demean or difference by unit.

    Returns (y_t, X_t, names, units, waves, used, n_excluded) with rows in
    unit-major, wave-minor order. The intercept never survives either
    transform and is excluded up front.
    """
    y, X, names, used, n_ex = _design_on(layout, spec, intercept=False)
    units = layout.frame.loc[used, layout.unit].to_numpy()
    waves = layout.frame.loc[used, layout.wave].to_numpy()
    if lam is not None:
        lam_used = lam[layout.frame.index.get_indexer(used)]
        y = y * lam_used
        X = X * lam_used[:, None]

    order = np.lexsort((waves, units))
    y, X, units, waves = y[order], X[order], units[order], waves[order]
    used = used[order]

    if transform == "demean":
        y_t = _demean_by(y, units)
        X_t = np.column_stack([_demean_by(X[:, j], units) for j in range(X.shape[1])]) \
            if X.shape[1] else X
        return y_t, X_t, names, units, waves, used, n_ex

    if transform == "difference":
        same_unit = units[1:] == units[:-1]
        adjacent = same_unit & (waves[1:] == waves[:-1] + 1)
        y_t = (y[1:] - y[:-1])[adjacent]
        X_t = (X[1:] - X[:-1])[adjacent]
        return (y_t, X_t, names, units[1:][adjacent], waves[1:][adjacent],
                used[1:][adjacent], n_ex)

    raise ValidationError(f"unknown transform {transform!r}")


def _alive_columns(X_t, names, X_scale):
    """Positions of regressors that survive the transform."""
    alive, dropped = [], []
    for j in range(X_t.shape[1]):
        scale = max(1.0, float(np.max(np.abs(X_scale[:, j]))) if X_scale.size else 1.0)
        if np.max(np.abs(X_t[:, j])) <= 1e-12 * scale:
            dropped.append(names[j])
        else:
            alive.append(j)
    return alive, dropped


def _system_gls(y_t, X_t, units, names, used, df, method):
    """Common-slope GLS across the per-period equations of a balanced block.

    First-stage pooled OLS residuals, reshaped unit x period, estimate the
    period covariance; a single feasible-GLS step follows.
    """
    unit_ids, counts = np.unique(units, return_counts=True)
    P = counts[0]
    if not np.all(counts == P):
        raise ValidationError("period-system estimation needs complete units")
    N = len(unit_ids)
    k = X_t.shape[1]

    beta0, _ = qr_solve(X_t, y_t, names)
    E = (y_t - X_t @ beta0).reshape(N, P)
    sigma = E.T @ E / N
    try:
        sigma_inv = scipy.linalg.inv(sigma)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSigmaError("singular period covariance in system estimation") from exc
    if np.linalg.cond(sigma) > 1e12:
        raise SingularSigmaError("singular period covariance in system estimation")

    Xb = X_t.reshape(N, P, k)
    yb = y_t.reshape(N, P)
    A = np.einsum("ipk,pq,iql->kl", Xb, sigma_inv, Xb)
    b = np.einsum("ipk,pq,iq->k", Xb, sigma_inv, yb)
    beta = scipy.linalg.solve(A, b, assume_a="sym")
    cov = scipy.linalg.inv(A)
    resid = y_t - X_t @ beta
    return FitResult(
        params=pd.Series(beta, index=names), cov=cov,
        residuals=pd.Series(resid, index=used), df=df, n_used=len(y_t),
        method=method, extra={"period_sigma": sigma},
    )


def _complete_mask(units, expected):
    unit_ids, counts = np.unique(units, return_counts=True)
    full = set(unit_ids[counts == expected])
    return np.fromiter((u in full for u in units), bool, len(units))


def within_fit(spec, panel, correction="none", mode="demean", sigma=None,
               cov_type="homoscedastic", lsdv=False, iv_resid_spec=None):
    """Within (fixed-effects) estimator.

    ``mode="demean"`` subtracts unit means; ``mode="period_system"``
    estimates the demeaned per-period equations jointly with a common slope
    and an unrestricted period covariance, absorbing serially correlated
    residuals. The exact correction uses the Delta annihilator over
    D = diag(delta_Ht) (or, with ``lsdv=True``, the equivalent weighted
    dummy-variable regression) and is demean-mode only.
    """
    layout = _layout(panel)
    T = _require_balanced(layout)
    _check_correction(correction, layout)
    if mode not in ("demean", "period_system"):
        raise ValidationError(f"unknown within mode {mode!r}")

    if correction == "exact":
        if mode != "demean":
            raise ValidationError("the exact within correction is demean-mode only")
        return _within_exact(spec, layout, cov_type=cov_type, lsdv=lsdv,
                             iv_resid_spec=iv_resid_spec)

    lam = _scale_factor(layout, correction)
    y_t, X_t, names, units, waves, used, n_ex = _build_transformed(layout, spec, lam, "demean")
    _, X_raw, _, _, _ = _design_on(layout, spec, intercept=False)
    alive, dropped = _alive_columns(X_t, names, X_raw)
    X_t = X_t[:, alive]
    names = [names[j] for j in alive]
    if X_t.shape[1] == 0:
        raise NotIdentifiedError("every regressor is time-invariant within units")

    N = len(np.unique(units))
    df = len(y_t) - N - X_t.shape[1]
    if df <= 0:
        raise ValidationError("not enough within variation for the requested model")

    method = f"within:{correction}:{mode}"
    if mode == "period_system":
        full = _complete_mask(units, T)
        y_t, X_t, units, waves, used = (
            y_t[full], X_t[full], units[full], waves[full], used[full])
        keep = waves < waves.max()  # demeaned rows have T-1 free periods
        fit = _system_gls(y_t[keep], X_t[keep], units[keep], names, used[keep], df, method)
        iv_masks = (full, keep)
    else:
        beta, xtx_inv = qr_solve(X_t, y_t, names)
        resid = y_t - X_t @ beta
        cov = _covariance(X_t, resid, xtx_inv, df, cov_type)
        fit = FitResult(
            params=pd.Series(beta, index=names), cov=cov,
            residuals=pd.Series(resid, index=used), df=df, n_used=len(y_t),
            method=method, n_excluded=n_ex,
        )
        iv_masks = None
    if dropped:
        fit.extra["dropped_time_invariant"] = dropped
    if iv_resid_spec is not None:
        y_o, X_o, _, _, _, _, _ = _build_transformed(layout, iv_resid_spec, lam, "demean")
        X_o = X_o[:, alive]
        if iv_masks is not None:
            full, keep = iv_masks
            y_o, X_o = y_o[full][keep], X_o[full][keep]
        _apply_iv_correction(fit, y_o, X_o)
    return fit


def _within_exact(spec, layout, cov_type="homoscedastic", lsdv=False,
                  iv_resid_spec=None):
    frame = layout.frame
    delta = frame[layout.delta].to_numpy(dtype=float)
    y, X, names, used, n_ex = _design_on(layout, spec, intercept=False)
    if len(used) != len(frame):
        raise ValidationError("the exact within path needs complete cases")
    units = frame[layout.unit].to_numpy()

    if lsdv:
        # weighted dummy-variable regression; the intercept plus N-1 cell
        # dummies span the full set of effects, so this equals the Delta path
        dummy_spec = ModelSpec(spec.dependent, spec.regressors, intercept=True,
                               dummies=(*spec.dummies, layout.unit))
        fit = wls(dummy_spec, frame, weights=1.0 / delta, cov_type=cov_type)
        keep = [n for n in fit.params.index
                if not n.startswith(f"{layout.unit}==") and n != "const"]
        idx = [fit.names.index(n) for n in keep]
        return FitResult(
            params=fit.params[keep],
            cov=fit.cov[np.ix_(idx, idx)],
            residuals=fit.residuals, df=fit.df, n_used=fit.n_used,
            method="within:exact:lsdv", n_excluded=fit.n_excluded,
        )

    inv_sd = 1.0 / np.sqrt(delta)

    def project(mat):
        # Delta = S' S with S = (I - P) D^(-1/2), P projecting onto the
        # per-cell columns of D^(-1/2) Z
        out = np.empty_like(mat, dtype=float)
        for u in pd.unique(units):
            sel = units == u
            w = inv_sd[sel]
            v = mat[sel] * (w[:, None] if mat.ndim == 2 else w)
            u_dir = w / np.linalg.norm(w)
            if mat.ndim == 2:
                v = v - np.outer(u_dir, u_dir @ v)
            else:
                v = v - u_dir * (u_dir @ v)
            out[sel] = v
        return out

    y_t = project(y)
    X_t = project(X)
    alive, dropped = _alive_columns(X_t, names, X)
    X_t = X_t[:, alive]
    names = [names[j] for j in alive]
    if X_t.shape[1] == 0:
        raise NotIdentifiedError("every regressor is time-invariant within units")

    beta, xdx_inv = qr_solve(X_t, y_t, names)
    resid_t = y_t - X_t @ beta
    N = len(pd.unique(units))
    df = len(y) - N - X_t.shape[1]
    sigma_eps2 = float(resid_t @ resid_t) / df
    fit = FitResult(
        params=pd.Series(beta, index=names),
        cov=sigma_eps2 * xdx_inv,
        residuals=pd.Series(resid_t, index=used), df=df, n_used=len(y),
        method="within:exact:delta", n_excluded=n_ex,
        extra={"sigma_eps2": sigma_eps2},
    )
    if dropped:
        fit.extra["dropped_time_invariant"] = dropped
    if iv_resid_spec is not None:
        y_o, X_o, _, _, _ = _design_on(layout, iv_resid_spec, intercept=False)
        _apply_iv_correction(fit, project(y_o), project(X_o)[:, alive])
    return fit


# ---------------------------------------------------------------------
# first differences
# ---------------------------------------------------------------------

def first_difference_fit(spec, panel, correction="none", cov_mode="system",
                         cov_type="homoscedastic", iv_resid_spec=None):
    """First-difference estimator over waves 2..T.

    Differencing a serially independent residual leaves adjacent
    differences correlated, so the default estimates the T-1 difference
    equations as a common-slope system with an unrestricted period
    covariance (``cov_mode="system"``); ``cov_mode="cluster"`` keeps the
    pooled OLS coefficients and clusters the covariance by unit. The exact
    correction has no first-difference form and raises.
    """
    layout = _layout(panel)
    T = _require_balanced(layout)
    if T < 2:
        raise ValidationError("first differences need at least two waves")
    _check_correction(correction, layout)
    if correction == "exact":
        raise ValidationError(
            "the exact correction is defined for between and within only")
    if cov_mode not in ("system", "cluster"):
        raise ValidationError(f"unknown cov_mode {cov_mode!r}")

    lam = _scale_factor(layout, correction)
    y_t, X_t, names, units, waves, used, n_ex = _build_transformed(
        layout, spec, lam, "difference")
    _, X_raw, _, _, _ = _design_on(layout, spec, intercept=False)
    alive, dropped = _alive_columns(X_t, names, X_raw)
    X_t = X_t[:, alive]
    names = [names[j] for j in alive]
    if X_t.shape[1] == 0:
        raise NotIdentifiedError("no regressor varies after differencing")
    df = len(y_t) - X_t.shape[1]
    if df <= 0:
        raise ValidationError("not enough differenced rows for the model")

    method = f"fd:{correction}:{cov_mode}"
    iv_masks = None
    if cov_mode == "system" and T > 2:
        full = _complete_mask(units, T - 1)
        y_t, X_t, units, waves, used = (
            y_t[full], X_t[full], units[full], waves[full], used[full])
        fit = _system_gls(y_t, X_t, units, names, used, df, method)
        iv_masks = full
    else:
        beta, xtx_inv = qr_solve(X_t, y_t, names)
        resid = y_t - X_t @ beta
        if cov_mode == "cluster":
            meat = np.zeros((X_t.shape[1], X_t.shape[1]))
            for u in pd.unique(units):
                sel = units == u
                s = X_t[sel].T @ resid[sel]
                meat += np.outer(s, s)
            G = len(pd.unique(units))
            n = len(y_t)
            factor = (G / max(G - 1, 1)) * ((n - 1) / df)
            cov = factor * xtx_inv @ meat @ xtx_inv
        else:
            cov = _covariance(X_t, resid, xtx_inv, df, cov_type)
        fit = FitResult(
            params=pd.Series(beta, index=names), cov=cov,
            residuals=pd.Series(resid, index=used), df=df, n_used=len(y_t),
            method=method, n_excluded=n_ex,
        )
    if dropped:
        fit.extra["dropped_time_invariant"] = dropped
    if iv_resid_spec is not None:
        y_o, X_o, _, _, _, _, _ = _build_transformed(layout, iv_resid_spec, lam, "difference")
        X_o = X_o[:, alive]
        if iv_masks is not None:
            y_o, X_o = y_o[iv_masks], X_o[iv_masks]
        _apply_iv_correction(fit, y_o, X_o)
    return fit


# ---------------------------------------------------------------------
# cross sections
# ---------------------------------------------------------------------

@dataclass
class CrossSectionResult:
    """Per-wave fits plus their unweighted pooled summary.

    The summary coefficient is the mean of per-wave coefficients; its
    covariance is the mean of per-wave covariances divided by the number
    of waves.
    """

    fits: dict
    params: pd.Series
    cov: np.ndarray
    n_used: int
    method: str = "cross_section"

    @property
    def se(self):
        return pd.Series(np.sqrt(np.diag(self.cov)), index=self.params.index)

    @property
    def names(self):
        return list(self.params.index)


def cross_section_fit(spec, panel, cov_type="white", iv_resid_spec=None):
    """Independent per-wave regressions with a pooled mean summary.

    Each wave gets its own OLS with a White-type covariance (the robust
    default for repeated cross sections); wave dummies are dropped.
    """
    layout = _layout(panel)
    wave_spec = ModelSpec(spec.dependent, spec.regressors, intercept=spec.intercept)
    fits = {}
    for wave, grp in layout.frame.groupby(layout.wave, sort=True):
        grp = grp.reset_index(drop=True)
        fit = ols(wave_spec, grp, cov_type=cov_type)
        if iv_resid_spec is not None:
            spec_o = ModelSpec(iv_resid_spec.dependent, iv_resid_spec.regressors,
                               intercept=spec.intercept)
            y_o, X_o, _, _, _ = build_design(spec_o, grp)
            _apply_iv_correction(fit, y_o, X_o)
        fits[int(wave)] = fit

    waves = sorted(fits)
    names = fits[waves[0]].names
    P = np.column_stack([fits[w].params[names].to_numpy() for w in waves])
    params = pd.Series(P.mean(axis=1), index=names)
    cov = sum(fits[w].cov for w in waves) / len(waves) ** 2
    n_used = sum(fits[w].n_used for w in waves)
    return CrossSectionResult(fits=fits, params=params, cov=cov, n_used=n_used)


# ---------------------------------------------------------------------
# variance components and the spectral condition
# ---------------------------------------------------------------------

@dataclass
class VarianceComponents:
    """Moment-based error-component variances (negative estimates truncated)."""

    sigma_mu2: float
    sigma_eps2: float
    truncated: bool = False


def variance_components(spec, panel):
    """Swamy-Arora-style moments from the within and between residuals.

    sigma_eps^2 is the within residual mean square; sigma_mu^2 is the
    between residual mean square minus sigma_eps^2 / T, truncated at zero
    with a flag.
    """
    layout = _layout(panel)
    T = _require_balanced(layout)
    if T < 2:
        raise ValidationError("variance components need at least two waves")
    w = within_fit(spec, panel, correction="none", mode="demean")
    sigma_eps2 = float(w.residuals @ w.residuals) / w.df
    b = between_fit(spec, panel, correction="none")
    s_b2 = float(b.residuals @ b.residuals) / b.df
    sigma_mu2 = s_b2 - sigma_eps2 / T
    truncated = sigma_mu2 < 0
    return VarianceComponents(max(sigma_mu2, 0.0), sigma_eps2, truncated)


def within_annihilator(delta):
    """Delta = D^-1 - D^-1 Z (Z' D^-1 Z)^-1 Z' D^-1 for cell-major blocks.

    ``delta`` is an (n_cells, T) array of delta_Ht. The result annihilates
    the cell dummies Z exactly, whatever the delta pattern.
    """
    delta = np.asarray(delta, dtype=float)
    blocks = []
    for row in delta:
        dinv = 1.0 / row
        blocks.append(np.diag(dinv) - np.outer(dinv, dinv) / dinv.sum())
    return scipy.linalg.block_diag(*blocks)


def error_components_omega(delta, sigma):
    """Residual covariance sigma_mu^2 T B + sigma_eps^2 D on cell-major rows."""
    delta = np.asarray(delta, dtype=float)
    n_cells, T = delta.shape
    B = scipy.linalg.block_diag(*[np.full((T, T), 1.0 / T)] * n_cells)
    D = np.diag(delta.ravel())
    return sigma.sigma_mu2 * T * B + sigma.sigma_eps2 * D, B, D


@dataclass
class SpectralCheck:
    decomposable: bool
    asymmetry: float


def spectral_check(delta, sigma, tol=1e-10):
    """Test whether GLS splits into between and within components.

    Builds Omega = sigma_mu^2 T B + sigma_eps^2 D on the (cell, wave) index
    and reports the worst asymmetry of B Omega. The decomposition into
    within and between projections exists iff B Omega is symmetric, which
    holds iff delta_Ht is constant over time within every cell.
    """
    omega, B, _ = error_components_omega(delta, sigma)
    BO = B @ omega
    asym = float(np.max(np.abs(BO - BO.T)))
    return SpectralCheck(decomposable=asym < tol, asymmetry=asym)
