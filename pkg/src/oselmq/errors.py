class ShapeError(ValueError):
    """Operand dimensions do not conform."""


class SingularMatrixError(ArithmeticError):
    def __init__(self, column: int, pivot: float):
        super().__init__(f"matrix is singular: pivot {pivot:.3e} in column {column}")
        self.column = column
        self.pivot = pivot


class StateError(RuntimeError):
    """Operation is illegal in the object's current state."""


class DegenerateUpdateError(ArithmeticError):
    """Sequential update denominator collapsed; the P matrix is corrupted."""


class ConfigError(ValueError):
    pass
