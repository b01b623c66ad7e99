from thermostat_lab.exceptions import ConfigurationError, NumericalFailure


class SingularGaugeError(NumericalFailure):
    """The gauge field is not invertible on the chart."""
    error_code = 'SINGULAR_GAUGE'


class RankMismatchError(ConfigurationError):
    """Matrix fields or pairs of different bundle rank were combined."""
    error_code = 'RANK_MISMATCH'


class BoundaryValueError(ConfigurationError):
    """A field that must vanish on the boundary does not."""
    error_code = 'BOUNDARY_VALUE'


class UnknownMatrixFieldKind(ConfigurationError):
    """The matrix field family named in the pair block does not exist."""
    error_code = 'UNKNOWN_MATRIX_FIELD_KIND'


class TensorOrderMismatch(ConfigurationError):
    """Tensor orders or ranks are inconsistent."""
    error_code = 'TENSOR_ORDER_MISMATCH'
