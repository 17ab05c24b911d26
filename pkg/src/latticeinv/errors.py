"""Exception hierarchy for latticeinv."""


class LatticeInvError(Exception):
    """Base exception for all latticeinv errors."""
    pass


class ParameterError(LatticeInvError):
    """A numeric parameter is outside its admissible range."""
    pass


class ShapeMismatchError(LatticeInvError):
    """Vectors or matrices have incompatible shapes."""
    pass


class FormatError(LatticeInvError):
    """A PGM, CSV, MatrixMarket or TOML file could not be read."""
    pass


class UnsupportedInputError(LatticeInvError):
    """The input is well-formed but outside what the method handles."""
    pass


class LPError(LatticeInvError):
    """Malformed linear program or simplex iteration cap reached."""
    pass


class DegenerateRowError(LatticeInvError):
    """A matrix row has no entries left to normalize."""

    def __init__(self, row: int):
        super().__init__(f"Row {row} is entirely zero after thresholding")
        self.row = row


class InfeasibilityError(LatticeInvError):
    """A feasible set is empty or the point lies outside it."""
    pass


class InconsistentBoundsError(InfeasibilityError):
    """A lower bound exceeds the matching upper bound.

    ``index`` is the flat position for data bounds and the (row, col) pair
    for operator bounds.
    """

    def __init__(self, message: str, step: int | None = None, index: int | tuple[int, int] | None = None):
        super().__init__(message)
        self.step = step
        self.index = index


class InfeasibleRowError(InfeasibilityError):
    """The row constraint set {A^l <= a <= A^u, a.v = g} is empty."""

    def __init__(self, row: int, message: str = ""):
        super().__init__(message or f"Row {row}: bounds admit no operator row with a.v = g")
        self.row = row


class NotInUError(InfeasibilityError):
    """The point violates u >= 0, A^l u <= f^u or A^u u >= f^l."""

    def __init__(self, violated: list[str]):
        super().__init__(f"Point is not in U (violated: {', '.join(violated)})")
        self.violated = violated
