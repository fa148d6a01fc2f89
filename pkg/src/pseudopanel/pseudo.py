"""Pseudo-panel construction: cohort keys, sub-sampling, cell aggregation.

Grouping households into cohort cells and aggregating with income-share
weights gamma_ht = Y_ht / sum_H Y_ht induces a heteroscedasticity factor
delta_Ht = sum_h gamma_ht^2 on each cell's residual. Cells carry delta_Ht
per wave and its time average delta_bar, which downstream estimators use
for the correction variants.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import PanelTable, VariableRole
from .errors import EmptyCellError, MissingColumnError, UncoveredAgeError, ValidationError

__all__ = [
    "CohortScheme",
    "Cell",
    "PseudoPanel",
    "DEFAULT_AGE_BANDS",
    "assign_cohorts",
    "aggregate",
    "cell_report",
]

# Six age bands of the household head; half-open [lo, hi) on integer years.
DEFAULT_AGE_BANDS = (
    (None, 30),
    (30, 40),
    (40, 50),
    (50, 60),
    (60, 70),
    (70, None),
)


def _band_label(lo, hi):
    if lo is None:
        return f"<{hi}"
    if hi is None:
        return f"{lo}+"
    return f"{lo}-{hi - 1}"


@dataclass(frozen=True)
class CohortScheme:
    """Grouping scheme: age bands x education levels, optional k-way split.

    ``age_bands`` are half-open integer intervals (lo, hi), None for an
    open end; they must be disjoint and cover every observed age.
    ``edu_levels`` maps a level label to the set of raw education values it
    absorbs; None keeps each raw value as its own level. ``split_k`` draws
    one sub-sample label per unit, used by the rotating design in
    :func:`aggregate` so a household never feeds the same cell twice.
    """

    age_bands: tuple = DEFAULT_AGE_BANDS
    edu_levels: dict | None = None
    split_k: int | None = None
    age_col: str = "age"
    edu_col: str = "edu"

    def band_of(self, age):
        for lo, hi in self.age_bands:
            lo_ok = lo is None or age >= lo
            hi_ok = hi is None or age < hi
            if lo_ok and hi_ok:
                return _band_label(lo, hi)
        raise UncoveredAgeError(f"age {age!r} falls in no band of the cohort scheme")

    def level_of(self, edu):
        if self.edu_levels is None:
            return str(edu)
        for label, values in self.edu_levels.items():
            if edu in values:
                return label
        raise ValidationError(f"education value {edu!r} matches no level of the cohort scheme")


def _stable_subsample(unit, seed, k):
    # hash-based stream so the label depends only on (seed, unit_id)
    digest = hashlib.blake2b(str(unit).encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng([seed, int.from_bytes(digest, "big")])
    return int(rng.integers(k))


def assign_cohorts(table, scheme=None, seed=0):
    """Attach a cohort key (and optional sub-sample label) to every row.

    The key is deterministic per unit: age band of the head crossed with
    the education level, formatted ``"<30|college"``. With ``split_k`` set,
    each unit draws one sub-sample uniformly from a generator seeded by
    (seed, unit_id), so reruns and re-orderings reproduce the same labels.
    """
    scheme = scheme or CohortScheme()
    frame = table.frame
    for col in (scheme.age_col, scheme.edu_col):
        if col not in frame.columns:
            raise MissingColumnError(f"cohort scheme needs column {col!r}")

    bands = frame[scheme.age_col].map(scheme.band_of)
    levels = frame[scheme.edu_col].map(scheme.level_of)
    out = frame.copy()
    out["cohort"] = bands.astype(str) + "|" + levels.astype(str)
    extra_roles = {"cohort": VariableRole.COHORT_KEY}
    if scheme.split_k is not None:
        if scheme.split_k < 1:
            raise ValidationError("split_k must be a positive integer")
        labels = {u: _stable_subsample(u, seed, scheme.split_k) for u in table.units}
        out["subsample"] = out[table.unit_col].map(labels)
    return table.replace_frame(out, extra_roles)


@dataclass
class Cell:
    """One cohort cell in one wave: members, weights, aggregates."""

    key: str
    wave: int
    members: list
    gamma: np.ndarray
    delta: float
    size: int
    aggregates: dict = field(default_factory=dict)


class PseudoPanel:
    """Cohort-cell x wave table with aggregation weights and delta factors.

    The long frame has one row per (key, wave) with columns ``key``,
    ``wave``, ``size``, ``delta``, ``delta_bar``, ``small`` and one column
    per aggregated variable. ``delta_bar`` is the per-key time average of
    ``delta``. Per-cell membership (unit list and gamma weights) is kept on
    the side for inspection via :meth:`cell`.
    """

    def __init__(self, frame, value_columns, cells=None, roles=None,
                 weighting="income_share", min_cell_size=30):
        self._frame = frame.reset_index(drop=True)
        self.value_columns = list(value_columns)
        self._cells = cells or {}
        self.roles = dict(roles or {})
        self.weighting = weighting
        self.min_cell_size = min_cell_size

    @property
    def frame(self):
        return self._frame

    @property
    def keys(self):
        return pd.unique(self._frame["key"])

    @property
    def waves(self):
        return np.sort(pd.unique(self._frame["wave"]))

    def cell(self, key, wave):
        return self._cells[(key, int(wave))]

    def delta_bar(self):
        """Per-key time-averaged heteroscedasticity factor."""
        return self._frame.groupby("key")["delta_bar"].first()

    def to_frame(self):
        return self._frame.copy()

    def to_csv(self, path, float_format=None):
        cols = ["key", "wave", "size", "delta", "delta_bar", *self.value_columns]
        self._frame[cols].to_csv(path, index=False, float_format=float_format)

    @classmethod
    def from_csv(cls, path, roles=None):
        """Read a pseudo-panel export back (no membership information)."""
        frame = pd.read_csv(path)
        for col in ("key", "wave", "size", "delta", "delta_bar"):
            if col not in frame.columns:
                raise MissingColumnError(f"pseudo-panel csv lacks column {col!r}")
        value_cols = [c for c in frame.columns
                      if c not in ("key", "wave", "size", "delta", "delta_bar", "small")]
        frame["small"] = False
        return cls(frame, value_cols, roles=roles)


def aggregate(table, weighting="income_share", min_cell_size=30,
              outlay_col=None, balanced=True, use_subsamples="auto"):
    """Collapse a cohort-keyed table to a (cell, wave) pseudo-panel.

    For each cell H in wave t, every model column is aggregated as
    sum_h gamma_ht * x_ht where gamma is the household's share of cell
    outlay (``income_share``) or 1/|H| (``equal``); and the residual
    heteroscedasticity factor delta_Ht = sum gamma^2 and its time mean
    delta_bar are stored. Cells below ``min_cell_size`` are flagged, never
    dropped.

    With a ``subsample`` column present (and ``use_subsamples`` not False),
    wave t is built from sub-sample t mod k only — the rotating design that
    keeps a household out of the same cell in two periods. Members
    accumulate in sorted unit order so results are reproducible bit for bit.
    """
    frame = table.frame
    if "cohort" not in frame.columns:
        raise MissingColumnError("assign_cohorts must run before aggregate")

    if use_subsamples == "auto":
        use_subsamples = "subsample" in frame.columns
    if use_subsamples:
        if "subsample" not in frame.columns:
            raise MissingColumnError("no subsample column; run assign_cohorts with split_k")
        k = int(frame["subsample"].max()) + 1
        frame = frame[frame["subsample"] == frame[table.wave_col] % k]

    if weighting == "income_share":
        if outlay_col is None:
            ln_y = table.log_outlay_column()
            outlay = np.exp(frame[ln_y].to_numpy(dtype=float))
        else:
            outlay = frame[outlay_col].to_numpy(dtype=float)
        if np.any(~np.isfinite(outlay)) or np.any(outlay <= 0):
            raise ValidationError("income-share weights need positive, finite outlay")
    elif weighting == "equal":
        outlay = np.ones(len(frame))
    else:
        raise ValidationError(f"unknown weighting {weighting!r} (income_share or equal)")

    work = frame.copy()
    work["_y"] = outlay
    work = work.sort_values(["cohort", table.wave_col, table.unit_col], kind="mergesort")

    skip = {table.unit_col, table.wave_col, "cohort", "subsample", "_y"}
    value_cols = [c for c in frame.columns
                  if c not in skip and pd.api.types.is_numeric_dtype(frame[c])]

    rows = []
    cells = {}
    for (key, wave), grp in work.groupby(["cohort", table.wave_col], sort=True):
        y = grp["_y"].to_numpy(dtype=float)
        gamma = y / y.sum()
        delta = float(np.sum(gamma**2))
        aggregates = {}
        for col in value_cols:
            vals = grp[col].to_numpy(dtype=float)
            aggregates[col] = float(np.dot(gamma, vals))
        row = {"key": key, "wave": int(wave), "size": len(grp), "delta": delta}
        row.update(aggregates)
        rows.append(row)
        cells[(key, int(wave))] = Cell(
            key=key, wave=int(wave), members=grp[table.unit_col].tolist(),
            gamma=gamma, delta=delta, size=len(grp), aggregates=aggregates,
        )

    out = pd.DataFrame(rows).sort_values(["key", "wave"], kind="mergesort").reset_index(drop=True)

    if balanced:
        waves = np.sort(out["wave"].unique())
        for key, grp in out.groupby("key"):
            missing = sorted(set(waves.tolist()) - set(grp["wave"].tolist()))
            if missing:
                raise EmptyCellError(f"cell {key!r} has no members in wave(s) {missing}")

    out["delta_bar"] = out.groupby("key")["delta"].transform("mean")
    out["small"] = out["size"] < min_cell_size

    roles = {c: r for c, r in table.roles.items() if c in value_cols}
    return PseudoPanel(out, value_cols, cells=cells, roles=roles,
                       weighting=weighting, min_cell_size=min_cell_size)


def cell_report(pp, size_threshold=100):
    """Per-key cell-size and delta summary.

    Columns: min/mean/max size across waves, the delta_Ht range, and counts
    of cell-waves under ``size_threshold`` (grouping-noise guidance,
    default 100) and under 30.
    """
    frame = pp.frame
    report = frame.groupby("key").agg(
        size_min=("size", "min"),
        size_mean=("size", "mean"),
        size_max=("size", "max"),
        delta_min=("delta", "min"),
        delta_max=("delta", "max"),
        n_under_threshold=("size", lambda s: int((s < size_threshold).sum())),
        n_under_30=("size", lambda s: int((s < 30).sum())),
    )
    return report
