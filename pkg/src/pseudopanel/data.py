"""Long-format household panel tables: loading, validation, derived variables.

A :class:`PanelTable` is an immutable (unit, wave) table with a role map
attaching a :class:`VariableRole` to each modelled column. All operations
return new tables; nothing mutates in place.
"""

from enum import Enum

import numpy as np
import pandas as pd

from .errors import (
    DuplicateUnitWaveError,
    EmptyResultError,
    MissingColumnError,
    NoAdultError,
    NonNumericCellError,
    ShareRangeError,
    ValidationError,
)

__all__ = [
    "VariableRole",
    "PanelTable",
    "load_csv",
    "oxford_scale",
    "balance",
]


class VariableRole(str, Enum):
    SHARE = "share"
    LOG_OUTLAY = "log_outlay"
    REGRESSOR = "regressor"
    INSTRUMENT = "instrument"
    PRICE = "price"
    SURVEY_WEIGHT = "survey_weight"
    COHORT_KEY = "cohort_key"


def _coerce_roles(roles):
    out = {}
    for col, role in (roles or {}).items():
        out[col] = VariableRole(role)
    return out


class PanelTable:
    """Household-by-wave observation table with typed column roles.

    Parameters
    ----------
    frame : pd.DataFrame
        Long-format data; one row per (unit, wave).
    roles : dict, optional
        Column name -> :class:`VariableRole` (or its string value). Columns
        without a role are plain numeric columns.
    unit_col, wave_col : str
        Names of the unit and wave columns. The unit key is opaque; the
        wave must be integer-valued.

    Invariants checked at construction: (unit, wave) pairs are unique,
    share-role columns lie in [0, 1] (NaN allowed), and at most one column
    carries the log-outlay role.
    """

    def __init__(self, frame, roles=None, unit_col="unit_id", wave_col="wave"):
        roles = _coerce_roles(roles)
        for col in [unit_col, wave_col, *roles]:
            if col not in frame.columns:
                raise MissingColumnError(f"column {col!r} not found in table")

        frame = frame.copy()
        try:
            waves = frame[wave_col].astype(np.int64)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"wave column {wave_col!r} must be integer-valued") from exc
        if not np.array_equal(waves, frame[wave_col].astype(float)):
            raise ValidationError(f"wave column {wave_col!r} must be integer-valued")
        frame[wave_col] = waves

        dup = frame.duplicated(subset=[unit_col, wave_col])
        if dup.any():
            first = frame.loc[dup, [unit_col, wave_col]].iloc[0]
            raise DuplicateUnitWaveError(
                f"duplicate (unit, wave) pair: ({first[unit_col]!r}, {first[wave_col]!r})"
            )

        n_log_outlay = sum(1 for r in roles.values() if r is VariableRole.LOG_OUTLAY)
        if n_log_outlay > 1:
            raise ValidationError("at most one column may carry the log_outlay role")

        for col, role in roles.items():
            if role is VariableRole.SHARE:
                vals = frame[col].to_numpy(dtype=float)
                bad = (vals < 0.0) | (vals > 1.0)
                bad &= ~np.isnan(vals)
                if bad.any():
                    rows = [int(r) for r in np.flatnonzero(bad)[:10]]
                    raise ShareRangeError(
                        f"share column {col!r} outside [0, 1] at rows {rows}"
                    )

        self._frame = frame.reset_index(drop=True)
        self.roles = roles
        self.unit_col = unit_col
        self.wave_col = wave_col
        self.n_removed_units = 0

    # -- accessors -----------------------------------------------------

    @property
    def frame(self):
        """The underlying DataFrame (treat as read-only)."""
        return self._frame

    @property
    def units(self):
        return pd.unique(self._frame[self.unit_col])

    @property
    def waves(self):
        return np.sort(pd.unique(self._frame[self.wave_col]))

    @property
    def n_waves(self):
        return len(self.waves)

    @property
    def is_balanced(self):
        counts = self._frame.groupby(self.unit_col)[self.wave_col].nunique()
        return bool((counts == self.n_waves).all())

    def __len__(self):
        return len(self._frame)

    def columns_with_role(self, role):
        role = VariableRole(role)
        return [c for c, r in self.roles.items() if r is role]

    def log_outlay_column(self):
        cols = self.columns_with_role(VariableRole.LOG_OUTLAY)
        if not cols:
            raise MissingColumnError("no column carries the log_outlay role")
        return cols[0]

    # -- construction helpers -------------------------------------------

    def replace_frame(self, frame, extra_roles=None):
        """New table sharing this one's schema, with ``frame`` as payload."""
        roles = dict(self.roles)
        roles.update(_coerce_roles(extra_roles))
        roles = {c: r for c, r in roles.items() if c in frame.columns}
        return PanelTable(frame, roles, self.unit_col, self.wave_col)

    def to_csv(self, path):
        """Write the table back out; float text round-trips bitwise."""
        self._frame.to_csv(path, index=False)


def load_csv(path, roles, unit_col="unit_id", wave_col="wave"):
    """Load a long-format CSV into a validated :class:`PanelTable`.

    The file must have a header row; values are comma-separated UTF-8 with
    a decimal point and no thousands separators. ``roles`` maps column
    names to roles (a plain dict, e.g. parsed from a JSON schema file).

    Every column except the unit key and cohort-key-role columns must parse
    as a number; an unparseable cell raises :class:`NonNumericCellError`
    naming the row and column rather than being dropped. Empty cells become
    NaN and are excluded per-model at fit time.
    """
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    roles = _coerce_roles(roles)
    for col in [unit_col, wave_col, *roles]:
        if col not in raw.columns:
            raise MissingColumnError(f"column {col!r} not found in {path}")

    string_cols = {unit_col} | {
        c for c, r in roles.items() if r is VariableRole.COHORT_KEY
    }
    frame = pd.DataFrame(index=raw.index)
    for col in raw.columns:
        if col in string_cols:
            frame[col] = raw[col]
            continue
        cleaned = raw[col].str.strip()
        converted = pd.to_numeric(cleaned.replace("", np.nan), errors="coerce")
        bad = converted.isna() & (cleaned != "")
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise NonNumericCellError(
                f"non-numeric cell {raw[col].iloc[row]!r} in column {col!r}, data row {row + 1}"
            )
        frame[col] = converted

    return PanelTable(frame, roles, unit_col=unit_col, wave_col=wave_col)


def oxford_scale(adults, children_6_plus=0, children_under_6=0):
    """Oxford household equivalence scale.

    1.0 for the first adult, 0.8 for each further adult, 0.5 per child of
    age six or more, 0.4 per child of age five or less. Accepts scalars or
    aligned arrays.
    """
    adults = np.asarray(adults)
    if np.any(adults < 1):
        raise NoAdultError("oxford_scale requires at least one adult")
    if np.any(np.asarray(children_6_plus) < 0) or np.any(np.asarray(children_under_6) < 0):
        raise ValidationError("child counts must be non-negative")
    scale = 1.0 + 0.8 * (adults - 1) + 0.5 * np.asarray(children_6_plus) + 0.4 * np.asarray(children_under_6)
    if scale.ndim == 0:
        return float(scale)
    return scale


def balance(table):
    """Restrict to units observed in every wave.

    The count of dropped units is reported on the result as
    ``n_removed_units``. Raises :class:`EmptyResultError` when no unit
    spans all waves. Idempotent.
    """
    waves = set(table.waves.tolist())
    per_unit = table.frame.groupby(table.unit_col)[table.wave_col].agg(set)
    keep = per_unit.index[per_unit.apply(lambda s: s == waves)]
    if len(keep) == 0:
        raise EmptyResultError("no unit is present in every wave")
    out_frame = table.frame[table.frame[table.unit_col].isin(keep)].reset_index(drop=True)
    out = table.replace_frame(out_frame)
    out.n_removed_units = len(table.units) - len(keep)
    return out
