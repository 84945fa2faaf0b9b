from .bootstrap import BootstrapSpec, bootstrap, replicate_indices
from .cosine import paired_cosine
from .fld import fld
from .frechet import (
    GaussianSummary,
    NegativeEigenvalueWarning,
    fd_between,
    fit_gaussian,
    frechet_distance,
    sqrtm_psd,
)
from .precision_recall import DEFAULT_K, KnnRadii, knn_radii, precision_recall
from .report import METRIC_NAMES, MetricReport, format_reports, parse_reports

__all__ = [
    "BootstrapSpec",
    "DEFAULT_K",
    "GaussianSummary",
    "KnnRadii",
    "METRIC_NAMES",
    "MetricReport",
    "NegativeEigenvalueWarning",
    "bootstrap",
    "fd_between",
    "fit_gaussian",
    "fld",
    "format_reports",
    "frechet_distance",
    "knn_radii",
    "paired_cosine",
    "parse_reports",
    "precision_recall",
    "replicate_indices",
    "sqrtm_psd",
]
