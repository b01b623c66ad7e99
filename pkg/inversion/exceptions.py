from thermostat_lab.exceptions import ConfigurationError


class InvalidRegularization(ConfigurationError):
    """The Tikhonov parameter must be a positive finite number."""
    error_code = 'INVALID_REGULARIZATION'


class GaugeNotBoundaryFixed(ConfigurationError):
    """The gauge differs from the identity on the boundary."""
    error_code = 'GAUGE_NOT_BOUNDARY_FIXED'


class InvalidBasis(ConfigurationError):
    """The tensor order or polynomial degree is out of range."""
    error_code = 'INVALID_BASIS'
