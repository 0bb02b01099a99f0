"""Exception types shared across the toolkit."""


class MvtkError(Exception):
    """Base class for all toolkit errors."""


class DegenerateProjection(MvtkError):
    """Point projects onto (or too close to) the camera plane."""


class NonPositiveDepth(MvtkError):
    """Unprojection requested with depth <= 0."""


class InsufficientObservations(MvtkError):
    """Triangulation needs at least two observations."""


class DegenerateConfiguration(MvtkError):
    """Rank-deficient triangulation system (e.g. coincident camera centers)."""


class InvalidCount(MvtkError):
    """View-sampling count outside [1, number of cameras]."""


class SamplingExhausted(MvtkError):
    """Chained camera sampling found no valid placement within the attempt budget."""


class NoVisibleFrame(MvtkError):
    """A point has no visible frame in some view, so no query can be anchored."""


class DimensionMismatch(MvtkError):
    """Weights or embeddings sized inconsistently with their inputs."""


class ShapeMismatch(MvtkError):
    """Array arguments disagree in shape."""


class IterationOverflow(MvtkError):
    """Refinement stepped past the configured iteration budget."""


class OddDimension(MvtkError):
    """Sinusoidal encoding requires an even dimension."""


class InvalidConfig(MvtkError):
    """A configuration value violates its documented range."""
