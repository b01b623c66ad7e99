from thermostat_lab.exceptions import NumericalFailure, SceneRejected


class TrappedOrbit(SceneRejected):
    """An orbit did not leave the surface before T_max."""
    error_code = 'TRAPPED_ORBIT'


class StepFailure(NumericalFailure):
    """The adaptive integrator could not make progress."""
    error_code = 'STEP_FAILURE'


class NotOnBoundary(NumericalFailure):
    """A boundary phase point is not on the boundary or points the wrong way."""
    error_code = 'NOT_ON_BOUNDARY'
