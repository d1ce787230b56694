class HssError(Exception):
    """Base class for errors raised by hsskit."""


class InvalidInputError(HssError, ValueError):
    """Input array or argument is malformed (non-finite, wrong shape, ...)."""


class InterpolationBoundError(HssError):
    """An interpolative decomposition produced coefficients above the cap."""


class RankOverflowError(HssError):
    """The random sample is too narrow to certify the rank at a node."""

    def __init__(self, node, rank, width):
        self.node = node
        self.rank = rank
        self.width = width
        super().__init__(
            f"node {node}: rank {rank} saturates the sample width {width}; "
            "increase max_rank or oversampling"
        )


class CorruptFileError(HssError):
    """A serialized factorization could not be decoded."""
