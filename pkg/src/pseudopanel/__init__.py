"""Pseudo-panel construction, corrected panel estimators, and elasticity calculus."""

from . import errors
from .data import PanelTable, VariableRole, balance, load_csv, oxford_scale
from .demand import (
    DemandSpec,
    ElasticityReport,
    QaidsResult,
    ShadowPriceResult,
    elasticity_report,
    expenditure_elasticity,
    own_price_elasticity,
    qaids_fit,
    shadow_price_elasticity,
    stone_index,
)
from .diagnostics import (
    DfbetasResult,
    HausmanResult,
    HetTestResult,
    dfbetas_filter,
    hausman,
    het_test_and_reweight,
)
from .estimators import (
    CORRECTIONS,
    TRANSFORMS,
    CrossSectionResult,
    SpectralCheck,
    VarianceComponents,
    between_fit,
    cross_section_fit,
    error_components_omega,
    first_difference_fit,
    spectral_check,
    variance_components,
    within_annihilator,
    within_fit,
)
from .iv import FirstStageResult, InstrumentSet, fd_instrument, first_stage, two_stage
from .mc import DgpConfig, GroupingOptions, McReport, generate, run_study, thin_waves
from .pseudo import (
    DEFAULT_AGE_BANDS,
    Cell,
    CohortScheme,
    PseudoPanel,
    aggregate,
    assign_cohorts,
    cell_report,
)
from .regress import FitResult, ModelSpec, SurResult, gls, ols, sur, wls

__version__ = "0.1.0"

__all__ = [
    "errors",
    "PanelTable", "VariableRole", "load_csv", "oxford_scale", "balance",
    "CohortScheme", "Cell", "PseudoPanel", "DEFAULT_AGE_BANDS",
    "assign_cohorts", "aggregate", "cell_report",
    "ModelSpec", "FitResult", "SurResult", "ols", "wls", "gls", "sur",
    "TRANSFORMS", "CORRECTIONS", "VarianceComponents", "CrossSectionResult",
    "SpectralCheck", "between_fit", "within_fit", "first_difference_fit",
    "cross_section_fit", "variance_components", "spectral_check",
    "within_annihilator", "error_components_omega",
    "InstrumentSet", "FirstStageResult", "first_stage", "two_stage", "fd_instrument",
    "HausmanResult", "DfbetasResult", "HetTestResult",
    "hausman", "dfbetas_filter", "het_test_and_reweight",
    "DemandSpec", "QaidsResult", "ShadowPriceResult", "ElasticityReport",
    "stone_index", "qaids_fit", "expenditure_elasticity", "own_price_elasticity",
    "shadow_price_elasticity", "elasticity_report",
    "DgpConfig", "GroupingOptions", "McReport", "generate", "thin_waves", "run_study",
]
