from thermostat_lab.exceptions import NumericalFailure, SceneRejected, ConfigurationError


class OutOfDomainError(NumericalFailure):
    """A scene quantity was requested outside the chart domain."""
    error_code = 'OUT_OF_DOMAIN'


class NonUnitVectorError(NumericalFailure):
    """A tangent vector expected to be g-unit is not."""
    error_code = 'NON_UNIT_VECTOR'


class NonConvexScene(SceneRejected):
    """The boundary is not strictly convex for the thermostat."""
    error_code = 'NON_CONVEX_SCENE'


class UnknownFieldKind(ConfigurationError):
    """The field family named in the scene block does not exist."""
    error_code = 'UNKNOWN_FIELD_KIND'
