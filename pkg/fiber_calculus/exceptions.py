from thermostat_lab.exceptions import ConfigurationError, NumericalFailure, SceneRejected


class BandwidthOverflow(NumericalFailure):
    """Fiber modes at the top of the resolved band are not negligible."""
    error_code = 'BANDWIDTH_OVERFLOW'


class GridMismatchError(NumericalFailure):
    """Bundle functions live on different grids."""
    error_code = 'GRID_MISMATCH'


class InvalidCurvatureBound(SceneRejected):
    """The thermostat curvature is not bounded above by a negative constant."""
    error_code = 'INVALID_CURVATURE_BOUND'


class NonUnitaryConnectionError(ConfigurationError):
    """The check needs a unitary connection."""
    error_code = 'NON_UNITARY_CONNECTION'
