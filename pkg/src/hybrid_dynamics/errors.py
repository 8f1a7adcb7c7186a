"""Exception types shared across the package."""


class HybridDynamicsError(Exception):
    """Base class for all package errors."""


class ShapeError(HybridDynamicsError, ValueError):
    """Array dimensions do not match what an operation expects."""


class DivergenceError(HybridDynamicsError, ArithmeticError):
    """A numerical integration produced a non-finite state.

    ``substep`` is the index of the failing step within the solve that
    raised; callers higher up may attach more context (interval, epoch,
    waveform id) through ``context``.
    """

    def __init__(self, message, substep=None, **context):
        super().__init__(message)
        self.substep = substep
        self.context = dict(context)

    def __str__(self):
        base = super().__str__()
        extra = {"substep": self.substep, **self.context}
        extra = {k: v for k, v in extra.items() if v is not None}
        if not extra:
            return base
        return base + " (" + ", ".join(f"{k}={v}" for k, v in extra.items()) + ")"


class SplineDomainError(HybridDynamicsError, ValueError):
    """Spline evaluated outside its knot span."""


class ConfigError(HybridDynamicsError, ValueError):
    """Invalid or inconsistent configuration."""


class ConvergenceError(HybridDynamicsError, ArithmeticError):
    """An iterative solve hit its iteration cap without converging."""


class VaSyntaxError(HybridDynamicsError, ValueError):
    """Verilog-A text that does not parse, or falls outside the supported subset."""

    def __init__(self, message, line=None, column=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column
