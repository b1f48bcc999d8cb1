"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so that CLI consumers
can dispatch on failures without parsing messages.
"""


class RdlcqrError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"error": self.code, "message": str(self), **self.details}


class InsufficientData(RdlcqrError):
    code = "insufficient_data"


class SolverDiverged(RdlcqrError):
    code = "solver_diverged"


class SingularS(RdlcqrError):
    code = "singular_s_matrix"


class SingularDesign(RdlcqrError):
    code = "singular_design"


class DegenerateResiduals(RdlcqrError):
    code = "degenerate_residuals"


class CollinearCovariates(RdlcqrError):
    code = "collinear_covariates"


class WeakIdentification(RdlcqrError):
    code = "weak_identification"


class NegativeAdjustedVariance(RdlcqrError):
    code = "negative_adjusted_variance"


class DegenerateCurvature(RdlcqrError):
    code = "degenerate_curvature"


class QuantileInversionFailure(RdlcqrError):
    code = "quantile_inversion_failure"


class MissingColumn(RdlcqrError):
    code = "missing_column"


class ParseError(RdlcqrError):
    code = "parse_error"


class EmptyAfterFiltering(RdlcqrError):
    code = "empty_after_filtering"


class UnsupportedOrder(RdlcqrError):
    code = "unsupported_order"
