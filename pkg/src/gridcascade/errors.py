"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it so that
callers can branch on failures without parsing messages.
"""

from __future__ import annotations


class GridError(Exception):
    category = "grid-error"


class TopologyError(GridError):
    category = "invalid-topology"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class LineNotFoundError(GridError, KeyError):
    category = "line-not-found"

    def __str__(self) -> str:
        return Exception.__str__(self)


class UnbalancedComponentError(GridError):
    category = "unbalanced-component"


class ConvergenceError(GridError):
    category = "no-convergence"


class SingularJacobianError(GridError):
    category = "singular-jacobian"


class IntegrationDivergedError(GridError):
    category = "integration-diverged"


class DisconnectedError(GridError):
    category = "disconnected-after-fault"


class NonUniformParametersError(GridError):
    category = "nonuniform-parameters"


class ParseError(GridError):
    category = "parse-error"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class OverrideError(GridError):
    category = "unknown-node"
