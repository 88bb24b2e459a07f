class SimilarityError(ValueError):
    """Parameter sets or similarity matrices that cannot be compared."""


class DiffusionError(ArithmeticError):
    """Invalid kernel scale, degenerate transition matrix or failed eigensolve."""
