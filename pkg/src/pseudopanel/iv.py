"""Two-stage instrumentation of a noisy regressor, in levels and differences.

The level first stage regresses the endogenous column on excluded
instruments plus the exogenous regressors and reports the F-statistic on
the excluded set. The second stage swaps the endogenous column for its
fitted value; a squared endogenous term is the square of the fitted value
(the squared term has no clean errors-in-variables treatment, so the
pragmatic rule is applied, with separate instrumentation of the square
available as a robustness flag). Coefficient covariances are corrected by
recomputing residuals with the original regressors.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import PanelTable
from .errors import ValidationError, WeakInstrumentsWarning
from .estimators import first_difference_fit
from .regress import FitResult, ModelSpec, _covariance, build_design, ols, qr_solve

__all__ = ["InstrumentSet", "FirstStageResult", "first_stage", "two_stage", "fd_instrument"]

WEAK_F_THRESHOLD = 10.0  # reporting convention, not a hard rule


@dataclass(frozen=True)
class InstrumentSet:
    """Excluded instruments for one endogenous column."""

    target: str
    columns: tuple

    def __init__(self, target, columns):
        cols = tuple(columns)
        if target in cols:
            object.__setattr__(self, "target", target)
            object.__setattr__(self, "columns", cols)
            return
        if len(cols) < 1:
            raise ValidationError("instrument set needs at least one column")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "columns", cols)


@dataclass
class FirstStageResult:
    """First-stage fit, fitted values, and instrument-strength diagnostics."""

    fit: FitResult
    fitted: pd.Series
    f_stat: float
    f_dof: tuple
    weak: bool
    degenerate: bool = False
    extra: dict = field(default_factory=dict)


def first_stage(target, instruments, exogenous, frame, intercept=True):
    """Regress the endogenous column on instruments plus exogenous regressors.

    Returns the fit, the fitted column (aligned to the used rows), and the
    F-statistic on the excluded instruments. F below 10 trips a
    :class:`WeakInstrumentsWarning` (reported, not fatal); a target that
    appears among its own instruments is flagged degenerate with F = inf.
    """
    instruments = tuple(instruments)
    exogenous = tuple(exogenous)
    if not instruments:
        raise ValidationError("no instruments supplied")

    spec_u = ModelSpec(target, (*instruments, *exogenous), intercept=intercept)
    fit_u = ols(spec_u, frame)
    fitted = pd.Series(
        frame.loc[fit_u.residuals.index, target].to_numpy(dtype=float)
        - fit_u.residuals.to_numpy(),
        index=fit_u.residuals.index,
    )

    ssr_u = float(fit_u.residuals @ fit_u.residuals)
    if target in instruments or ssr_u == 0.0:
        return FirstStageResult(fit=fit_u, fitted=fitted, f_stat=np.inf,
                                f_dof=(len(instruments), fit_u.df),
                                weak=False, degenerate=True)

    if exogenous or intercept:
        spec_r = ModelSpec(target, exogenous, intercept=intercept)
        fit_r = ols(spec_r, frame.loc[fit_u.residuals.index])
        ssr_r = float(fit_r.residuals @ fit_r.residuals)
    else:
        y = frame.loc[fit_u.residuals.index, target].to_numpy(dtype=float)
        ssr_r = float(y @ y)

    q = len(instruments)
    f_stat = ((ssr_r - ssr_u) / q) / (ssr_u / fit_u.df)
    weak = f_stat < WEAK_F_THRESHOLD
    if weak:
        warnings.warn(
            f"first-stage F = {f_stat:.2f} below {WEAK_F_THRESHOLD:g}",
            WeakInstrumentsWarning,
            stacklevel=2,
        )
    return FirstStageResult(fit=fit_u, fitted=fitted, f_stat=float(f_stat),
                            f_dof=(q, fit_u.df), weak=weak)


def _with_fitted(frame, target, fitted, quadratic, separate_square, instruments,
                 exogenous, intercept):
    """Frame augmented with the fitted endogenous column (and its square)."""
    out = frame.copy()
    hat = f"{target}_hat"
    out[hat] = fitted.reindex(out.index)
    names = {target: hat}
    if quadratic:
        sq = f"{target}_sq"
        if sq not in out.columns:
            out[sq] = out[target] ** 2
        hat_sq = f"{target}_sq_hat"
        if separate_square:
            sq_instruments = list(instruments) + [f"_z2_{c}" for c in instruments]
            for c in instruments:
                out[f"_z2_{c}"] = out[c] ** 2
            fs_sq = first_stage(sq, tuple(sq_instruments), exogenous, out, intercept)
            out[hat_sq] = fs_sq.fitted.reindex(out.index)
        else:
            out[hat_sq] = out[hat] ** 2
        names[sq] = hat_sq
    return out, names


def two_stage(spec, frame, instrument_set, quadratic=False, separate_square=False,
              intercept=None):
    """Two-stage least squares by regressor replacement.

    The endogenous column named by ``instrument_set.target`` (and, when
    ``quadratic``, the column ``{target}_sq``) must appear among the spec's
    regressors. The second-stage covariance recomputes residuals with the
    original regressors, the usual correction.
    """
    target = instrument_set.target
    if target not in spec.regressors:
        raise ValidationError(f"endogenous column {target!r} is not in the model")
    if spec.dependent in instrument_set.columns:
        raise ValidationError("the dependent variable cannot be an instrument")
    intercept = spec.intercept if intercept is None else intercept
    exogenous = tuple(c for c in spec.regressors
                      if c != target and c != f"{target}_sq")

    fs = first_stage(target, instrument_set.columns, exogenous, frame, intercept)
    work, names = _with_fitted(frame, target, fs.fitted, quadratic, separate_square,
                               instrument_set.columns, exogenous, intercept)

    regs_fitted = tuple(names.get(c, c) for c in spec.regressors)
    spec_fitted = ModelSpec(spec.dependent, regs_fitted, intercept=spec.intercept,
                            dummies=spec.dummies)
    y, X_hat, xnames, used, n_ex = build_design(spec_fitted, work)
    beta, xtx_inv = qr_solve(X_hat, y, xnames)

    spec_orig = ModelSpec(spec.dependent, spec.regressors, intercept=spec.intercept,
                          dummies=spec.dummies)
    y_o, X_o, _, used_o, _ = build_design(spec_orig, work.loc[used])
    resid = y_o - X_o @ beta
    df = X_hat.shape[0] - X_hat.shape[1]
    cov = _covariance(X_hat, resid, xtx_inv, df, "homoscedastic")

    out_names = [c if c not in names.values() else
                 next(k for k, v in names.items() if v == c) for c in xnames]
    fit = FitResult(
        params=pd.Series(beta, index=out_names), cov=cov,
        residuals=pd.Series(resid, index=used), df=df, n_used=X_hat.shape[0],
        method="2sls", n_excluded=n_ex,
        extra={"first_stage_f": fs.f_stat, "weak_instruments": fs.weak,
               "degenerate_first_stage": fs.degenerate},
    )
    return fit


def fd_instrument(spec, panel, instrument_set, cov_mode="system"):
    """First-difference fit with the endogenous change replaced by the
    difference of per-wave fitted levels.

    The level equation is instrumented wave by wave; the differenced fitted
    values stand in for the differenced endogenous regressor, and the usual
    first-difference machinery (period-system covariance by default)
    applies with the second-stage residual correction.
    """
    if not isinstance(panel, PanelTable):
        raise ValidationError("fd_instrument expects an individual-level PanelTable")
    target = instrument_set.target
    if target not in spec.regressors:
        raise ValidationError(f"endogenous column {target!r} is not in the model")
    exogenous = tuple(c for c in spec.regressors if c != target)

    frame = panel.frame
    hat = f"{target}_hat"
    fitted = pd.Series(np.nan, index=frame.index)
    f_stats = {}
    weak_any = False
    for wave, grp in frame.groupby(panel.wave_col, sort=True):
        fs = first_stage(target, instrument_set.columns, exogenous, grp)
        fitted.loc[fs.fitted.index] = fs.fitted
        f_stats[int(wave)] = fs.f_stat
        weak_any = weak_any or fs.weak

    work = frame.copy()
    work[hat] = fitted
    table = panel.replace_frame(work)

    regs_fitted = tuple(hat if c == target else c for c in spec.regressors)
    spec_fitted = ModelSpec(spec.dependent, regs_fitted, intercept=spec.intercept,
                            dummies=spec.dummies)
    spec_orig = ModelSpec(spec.dependent, spec.regressors, intercept=spec.intercept,
                          dummies=spec.dummies)
    fit = first_difference_fit(spec_fitted, table, correction="none",
                               cov_mode=cov_mode, iv_resid_spec=spec_orig)
    fit.method = f"fd-iv:{cov_mode}"
    fit.params.index = [target if n == hat else n for n in fit.params.index]
    fit.extra["first_stage_f"] = f_stats
    fit.extra["weak_instruments"] = weak_any
    return fit
