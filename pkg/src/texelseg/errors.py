"""Exception and warning classes shared by every stage of the pipeline."""


class TexelError(Exception):
    """Base class for all errors raised by texelseg."""

    #: process exit code used by the command line front end
    exit_code = 4


class InputError(TexelError):
    exit_code = 3


class ParseError(InputError):
    """Malformed mesh, raster or dictionary file."""


class TopologyError(InputError):
    """Mesh is not a closed, edge-manifold, consistently oriented surface."""


class DegenerateGeometryError(InputError):
    """Geometry too degenerate to define a quantity (e.g. a vertex normal)."""


class ConfigError(TexelError):
    exit_code = 2


class DictError(InputError):
    """Invalid semantic dictionary."""


class NoSeedsError(TexelError):
    """No salient local maximum survived the global threshold."""


class EmptyRegionError(TexelError):
    """No facet incident to a seed passed the local threshold."""


class DegenerateTexelError(TexelError):
    """Texel facet set has no boundary contour."""


class ZeroAreaError(TexelError):
    """Texel facet set has zero total area."""


class UndefinedSignificance(TexelError):
    """Feature is constant over all texels; its significance ratio is undefined."""


class EigenFailure(TexelError):
    """Eigen-decomposition did not converge."""


class EmptySetError(TexelError):
    """An empty facet set was given where a nonempty one is required."""


class TexelWarning(UserWarning):
    """Base class for recoverable conditions."""


class ScaleTooSmallWarning(TexelWarning):
    pass


class DegenerateScaleWarning(TexelWarning):
    pass


class InsufficientAnnotationsWarning(TexelWarning):
    pass


class NoIntersectionWarning(TexelWarning):
    pass


class CollapseStallWarning(TexelWarning):
    pass


class SingleClusterWarning(TexelWarning):
    pass
