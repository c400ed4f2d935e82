"""
tdoa_homotopy.errors
====================

Exceptions raised by the library. Numerical trouble during path tracking is
reported through path statuses, never raised.
"""


class TDOAError(Exception):
    pass


class DimensionError(TDOAError, ValueError):
    pass


class NonSquareSystemError(DimensionError):
    pass


class UnsupportedConfigurationError(TDOAError, ValueError):
    pass


class InfeasibleSolutionError(TDOAError):
    pass


class DegenerateGeometryError(TDOAError):
    pass
