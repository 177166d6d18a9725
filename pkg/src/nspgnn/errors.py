"""Exception hierarchy shared across the toolkit."""


class NspgnnError(Exception):
    """Base class for all toolkit errors."""


class InvalidNode(NspgnnError):
    """Edge endpoint outside [0, n_nodes)."""


class EmptyGraph(NspgnnError):
    """Operation requires at least one edge."""


class ShapeMismatch(NspgnnError):
    """Array shapes inconsistent with the graph or each other."""


class CapacityExceeded(NspgnnError):
    """Operation would materialize a dense N x N matrix above the cap."""


class EmptyDistribution(NspgnnError):
    """Histogram / density estimate requested on an empty sample set."""


class InvalidK(NspgnnError):
    """kNN neighbor count outside [1, N-1]."""


class MissingDualGraphs(NspgnnError):
    """NSPGNN variant forward called without dual-kNN graphs."""


class TapeMismatch(NspgnnError):
    """Backward called with a tape from a different forward pass."""


class EmptyMask(NspgnnError):
    """Loss or metric over an empty node mask."""


class NonFiniteGradient(NspgnnError):
    """Training produced NaN/Inf loss or gradients."""


class InvalidSpec(NspgnnError):
    """Synthetic dataset spec is infeasible."""


class DataError(NspgnnError):
    """Malformed input files (shape or format inconsistencies)."""
