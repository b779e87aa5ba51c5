"""Exception types shared across the toolkit."""


class GeofolError(Exception):
    """Base class for all toolkit errors."""


class CatalogError(GeofolError):
    """Unknown catalog name or invalid catalog parameters."""


class DomainExitError(GeofolError):
    """A geodesic left the chart domain; carries the exit parameter."""

    def __init__(self, t_exit, message=None):
        self.t_exit = float(t_exit)
        super().__init__(message or f"geodesic left the chart domain near t = {t_exit:.6g}")


class NonNormalInitialDataError(GeofolError):
    """Jacobi initial data not orthogonal to the geodesic velocity."""


class RankDeficientError(GeofolError):
    """A basis or initial-data set failed its rank requirement."""


class NotSelfAdjointError(GeofolError):
    """A family's symplectic pairing has a nonzero entry."""

    def __init__(self, i, j, value, threshold):
        self.entry = (i, j)
        self.value = float(value)
        self.threshold = float(threshold)
        super().__init__(
            f"family is not self-adjoint: pairing entry ({i},{j}) = {value:.3e} "
            f"exceeds threshold {threshold:.3e}"
        )


class NonKillingFieldError(GeofolError):
    """A supplied vector field failed the numerical Killing check."""


class CompletionRankError(GeofolError):
    """Killing-family completion could not reach the required dimension."""


class ShapeEstimateError(GeofolError):
    """Leaf shape-operator estimation hit a rank anomaly along the stencil."""


class NotPerpendicularError(GeofolError):
    """A direction that must be normal to a leaf is not."""


class SingularSubspaceError(GeofolError):
    """Subfamily values collapsed in rank outside any flagged window."""


class CertificateError(GeofolError):
    """A caller-supplied dual-horizontal vector failed its certificate."""


class UnstableRankError(GeofolError):
    """Accessibility rank changed under bracket-step refinement."""

    def __init__(self, rank_coarse, rank_fine):
        self.rank_coarse = rank_coarse
        self.rank_fine = rank_fine
        super().__init__(
            f"accessibility rank inconclusive: {rank_coarse} at the nominal step, "
            f"{rank_fine} at the halved step"
        )


class ConfigError(GeofolError):
    """Configuration file or CLI argument error (position-annotated)."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = f"{source}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)
