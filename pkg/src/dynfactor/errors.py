"""Exception hierarchy shared by all modules."""


class DynFactorError(Exception):
    pass


class GraphError(DynFactorError):
    pass


class UnknownNode(GraphError, IndexError):
    pass


class DuplicateEdge(GraphError):
    pass


class MissingEdge(GraphError, KeyError):
    pass


class NumericalError(DynFactorError, ArithmeticError):
    pass


class ZeroMatrix(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class SingularProjection(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class ShapeMismatch(DynFactorError, ValueError):
    pass


class EvalError(DynFactorError, ValueError):
    pass


class DegenerateLabels(EvalError):
    pass


class KTooLarge(EvalError):
    pass


class GraphTooSmall(EvalError):
    pass


class TooLarge(EvalError):
    pass


class ParseError(DynFactorError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
