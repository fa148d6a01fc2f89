"""Budget-share equation system and the elasticity calculus.

Each good's budget share is modelled as

    w_i = a_i + b_i * ln(Y/P) + (c_i / e(p)) * [ln(Y/P)]^2 + Z d_i + u_i

with P a Stone price index and e(p) = prod_i p_i^(b_i) the integrability
factor, found by an outer iteration: fit the system, recompute e from the
fitted b's, repeat until the coefficients settle. With ``quadratic=False``
the system is the linear share model estimated in one pass. Cross-equation
residual correlation is always estimated (the goods enter one SUR system).

The shadow-price calculus converts the gap between cross-section and
time-series outlay elasticities into an elasticity of the non-monetary
price component: a regressor that shifts an omitted (shadow) price shows
up differently in the two dimensions, and dividing the gap by the direct
price response gamma_ii identifies the shadow-price response. When
gamma_ii is not measured it is calibrated as half the income effect
(Frisch's rule), gamma_ii = -e_ts / 2.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import PanelTable
from .errors import (
    NoConvergenceError,
    NonPositivePriceError,
    ValidationError,
    ZeroPriceElasticityError,
    ZeroShareError,
)
from .estimators import (
    between_fit,
    cross_section_fit,
    first_difference_fit,
    within_fit,
)
from .regress import ModelSpec, ols, sur

__all__ = [
    "DemandSpec",
    "QaidsResult",
    "ShadowPriceResult",
    "ElasticityReport",
    "stone_index",
    "qaids_fit",
    "expenditure_elasticity",
    "own_price_elasticity",
    "shadow_price_elasticity",
    "elasticity_report",
]

OUTLAY_COEF = "lny"
QUAD_COEF = "lny2"


@dataclass(frozen=True)
class DemandSpec:
    """Share-equation system definition.

    ``shares`` maps each good to its budget-share column. ``prices`` maps
    goods to (positive) price columns when price data exist; otherwise
    wave dummies absorb price effects and e(p) stays at one. The goods
    need not exhaust the budget.
    """

    goods: tuple
    shares: dict
    log_outlay: str
    prices: dict | None = None
    controls: tuple = ()
    quadratic: bool = True
    wave_dummies: bool = False

    def __init__(self, goods, shares, log_outlay, prices=None, controls=(),
                 quadratic=True, wave_dummies=False):
        goods = tuple(goods)
        if not goods:
            raise ValidationError("demand system needs at least one good")
        missing = [g for g in goods if g not in shares]
        if missing:
            raise ValidationError(f"no share column for goods {missing}")
        object.__setattr__(self, "goods", goods)
        object.__setattr__(self, "shares", dict(shares))
        object.__setattr__(self, "log_outlay", log_outlay)
        object.__setattr__(self, "prices", dict(prices) if prices else None)
        object.__setattr__(self, "controls", tuple(controls))
        object.__setattr__(self, "quadratic", bool(quadratic))
        object.__setattr__(self, "wave_dummies", bool(wave_dummies))


def stone_index(prices, mean_shares, base_wave=None):
    """Share-weighted log price index, zero at the base wave.

    ``prices`` is a frame indexed by wave with one column per good;
    ``mean_shares`` the sample-mean share per good. The index is
    ln P_t = sum_i w_bar_i ln p_it, normalized so the base (first) wave
    is zero.
    """
    prices = pd.DataFrame(prices)
    w = pd.Series(mean_shares)
    missing = [g for g in w.index if g not in prices.columns]
    if missing:
        raise ValidationError(f"no price column for goods {missing}")
    vals = prices[list(w.index)].to_numpy(dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise NonPositivePriceError("prices must be positive and finite")
    log_p = np.log(vals) @ w.to_numpy(dtype=float)
    index = pd.Series(log_p, index=prices.index)
    base = prices.index[0] if base_wave is None else base_wave
    return index - index.loc[base]


@dataclass
class QaidsResult:
    """Per-good fits plus the integrability-iteration trace."""

    fits: dict
    e_factor: pd.Series
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    stone: pd.Series | None = None
    estimator: str = "pooled"

    def coefficient(self, good, name):
        return float(self.fits[good].params[name])


def _row_stone(spec, frame, stone_weights):
    """Row-level Stone deflator from per-row price columns."""
    if spec.prices is None:
        return np.zeros(len(frame)), None
    w = np.array([stone_weights[g] for g in spec.goods])
    logp = np.column_stack(
        [np.log(frame[spec.prices[g]].to_numpy(dtype=float)) for g in spec.goods]
    )
    if np.any(~np.isfinite(logp)):
        raise NonPositivePriceError("prices must be positive and finite")
    return logp @ w, logp


def _fit_system(spec, work, estimator, panel, unit_col, wave_col):
    regs = (OUTLAY_COEF, QUAD_COEF) if spec.quadratic else (OUTLAY_COEF,)
    regs = regs + spec.controls
    dummies = (wave_col,) if spec.wave_dummies else ()
    specs = [ModelSpec(spec.shares[g], regs, intercept=True, dummies=dummies)
             for g in spec.goods]

    if estimator == "pooled":
        res = sur(specs, work) if len(specs) > 1 else None
        if res is None:
            fit = ols(specs[0], work)
            return {spec.goods[0]: fit}
        return dict(zip(spec.goods, res.fits))

    table = PanelTable(work, roles=None, unit_col=unit_col, wave_col=wave_col)
    fits = {}
    for g, mspec in zip(spec.goods, specs):
        if estimator == "between":
            fits[g] = between_fit(mspec, table)
        elif estimator == "within":
            fits[g] = within_fit(mspec, table)
        elif estimator == "first_difference":
            fits[g] = first_difference_fit(mspec, table)
        elif estimator == "cross_section":
            fits[g] = cross_section_fit(mspec, table)
        else:
            raise ValidationError(f"unknown estimator {estimator!r}")
    return fits


def qaids_fit(spec, table, estimator="pooled", tol=1e-6, max_iter=100,
              stone_weights=None):
    """Fit the share system, iterating the integrability factor.

    Starting from e(p) = 1, each pass fits all goods jointly, then updates
    e(p) = prod_i p_i^(b_i) from the fitted outlay coefficients, until the
    largest coefficient change drops below ``tol`` (at most ``max_iter``
    passes; non-convergence raises with the trace attached). Without the
    quadratic term, or with all prices equal to one, a single pass is
    exact. ``stone_weights`` overrides the sample-mean shares in the
    deflator.
    """
    if isinstance(table, PanelTable):
        frame, unit_col, wave_col = table.frame, table.unit_col, table.wave_col
    else:
        frame, unit_col, wave_col = table, "unit_id", "wave"
    for g in spec.goods:
        if spec.shares[g] not in frame.columns:
            raise ValidationError(f"share column {spec.shares[g]!r} missing")

    if stone_weights is None:
        stone_weights = {g: float(frame[spec.shares[g]].mean()) for g in spec.goods}
    stone, logp = _row_stone(spec, frame, stone_weights)

    work = frame.copy()
    lny = frame[spec.log_outlay].to_numpy(dtype=float) - stone
    work[OUTLAY_COEF] = lny
    e_rows = np.ones(len(work))

    trace = []
    prev = None
    fits = None
    iterations = 0
    for iteration in range(1, max_iter + 1):
        iterations = iteration
        if spec.quadratic:
            work[QUAD_COEF] = lny**2 / e_rows
        fits = _fit_system(spec, work, estimator, table, unit_col, wave_col)

        stacked = np.concatenate([
            np.asarray(fits[g].params, dtype=float) for g in spec.goods
        ])
        change = np.inf if prev is None else float(np.max(np.abs(stacked - prev)))
        trace.append({"iteration": iteration, "max_change": change,
                      "b": {g: float(fits[g].params[OUTLAY_COEF]) for g in spec.goods}})
        prev = stacked

        if not spec.quadratic or logp is None:
            break
        b = np.array([fits[g].params[OUTLAY_COEF] for g in spec.goods])
        e_rows = np.exp(logp @ b)
        if change < tol:
            break
    else:
        raise NoConvergenceError(
            f"integrability iteration did not converge in {max_iter} passes", trace)

    converged = (not spec.quadratic) or logp is None or trace[-1]["max_change"] < tol
    if spec.quadratic and logp is not None and not converged:
        raise NoConvergenceError(
            f"integrability iteration did not converge in {max_iter} passes", trace)
    return QaidsResult(
        fits=fits,
        e_factor=pd.Series(e_rows, index=work.index),
        iterations=iterations,
        converged=True,
        trace=trace,
        stone=pd.Series(stone, index=work.index),
        estimator=estimator,
    )


def expenditure_elasticity(fit, share, ln_y, quadratic=True, e_p=1.0,
                           outlay_coef=OUTLAY_COEF, quad_coef=QUAD_COEF):
    """Outlay elasticity of demand from a fitted share equation.

    e = 1 + (b + 2 (c / e(p)) ln_y) / w, evaluated at the supplied share
    and (deflated) log outlay; the quadratic term drops when the model is
    linear. Equals 1 + dln w / dln y on the fitted share curve.
    """
    if share <= 0:
        raise ZeroShareError("elasticity needs a positive evaluation share")
    b = float(fit.params[outlay_coef])
    slope = b
    if quadratic and quad_coef in fit.params.index:
        c = float(fit.params[quad_coef])
        slope = b + 2.0 * (c / e_p) * ln_y
    return 1.0 + slope / share


def own_price_elasticity(fit, share, price_coef, outlay_coef=OUTLAY_COEF,
                         compensated=False):
    """Own-price elasticity from the share equation's own log-price term.

    Uncompensated: -1 + g/w - b; compensated adds the outlay response,
    -1 + g/w + w. Only meaningful when the fit carries a price coefficient
    (price data varied in the sample).
    """
    if share <= 0:
        raise ZeroShareError("elasticity needs a positive evaluation share")
    g = float(fit.params[price_coef])
    if compensated:
        return -1.0 + g / share + share
    b = float(fit.params[outlay_coef])
    return -1.0 + g / share - b


@dataclass
class ShadowPriceResult:
    """Income elasticity of the non-monetary price component of one good."""

    e_cs: float
    e_ts: float
    gamma_ii: float
    shadow_income_elasticity: float
    frisch_calibrated: bool
    good: str | None = None


def shadow_price_elasticity(e_cs, e_ts, gamma_ii=None, good=None):
    """(e_cs - e_ts) / gamma_ii with optional Frisch calibration.

    With ``gamma_ii`` omitted, the direct price effect is set to half the
    income effect, gamma_ii = -0.5 * e_ts. A zero price effect is an
    error. The result is positive whenever the cross-section elasticity
    falls short of the time-series one and the price effect is negative.
    """
    frisch = gamma_ii is None
    if frisch:
        gamma_ii = -0.5 * e_ts
    if gamma_ii == 0:
        raise ZeroPriceElasticityError("gamma_ii must be nonzero")
    value = (e_cs - e_ts) / gamma_ii
    return ShadowPriceResult(
        e_cs=float(e_cs), e_ts=float(e_ts), gamma_ii=float(gamma_ii),
        shadow_income_elasticity=float(value), frisch_calibrated=frisch, good=good,
    )


@dataclass
class ElasticityReport:
    """Per-good expenditure elasticities at stated evaluation points."""

    rows: list

    def to_frame(self):
        return pd.DataFrame(self.rows)


def elasticity_report(result, spec, table, at=None):
    """Evaluate each good's expenditure elasticity at sample means.

    ``at`` overrides the evaluation point with (share, ln_y) per good.
    """
    frame = table.frame if isinstance(table, PanelTable) else table
    rows = []
    for g in spec.goods:
        fit = result.fits[g]
        if at and g in at:
            share, ln_y = at[g]
        else:
            share = float(frame[spec.shares[g]].mean())
            stone_vals = result.stone.to_numpy() if result.stone is not None else 0.0
            ln_y = float(
                (frame[spec.log_outlay].to_numpy(dtype=float) - stone_vals).mean()
            )
        e_p = float(result.e_factor.mean())
        value = expenditure_elasticity(fit, share, ln_y, quadratic=spec.quadratic,
                                       e_p=e_p)
        rows.append({"good": g, "estimator": result.estimator,
                     "expenditure_elasticity": value,
                     "share": share, "ln_y": ln_y})
    return ElasticityReport(rows)
