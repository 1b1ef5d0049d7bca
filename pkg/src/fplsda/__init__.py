"""Functional LDA on multi-class (penalized) functional PLS for repeated measures."""

__version__ = "0.1.0"

from .basis import (  # noqa: E402
    BasisSystem,
    CoefficientMatrix,
    CurveDataset,
    build_basis,
    design_matrix,
    factor_metric,
    fit_regression_splines,
    read_curve_csv,
    sample_matrix,
    write_curve_csv,
)
from .flda import (  # noqa: E402
    DiscriminantModel,
    classify,
    classify_subjects,
    confusion_and_ccr,
    fit_classifier,
    fit_lda,
    recover_beta,
)
from .modelselect import CvGrid, cross_validate, holdout_evaluate  # noqa: E402
from .mpls import PlsModel, fit_pls, project, transform_features  # noqa: E402
from .variation import SplitVariation, center_new_subject, split  # noqa: E402
