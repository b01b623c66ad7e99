"""
Exception hierarchy shared by all apps.

Each error carries an ``error_code`` for reports and the process
``exit_status`` the management commands return when it escapes.
"""


class ThermostatLabError(Exception):
    error_code = 'THERMOSTAT_LAB_ERROR'
    exit_status = 3

    def __init__(self, detail=None, **context):
        self.detail = detail or self.__class__.__doc__ or self.error_code
        self.context = context
        super().__init__(self.detail)


class ConfigurationError(ThermostatLabError):
    """The experiment configuration is malformed or inconsistent."""
    error_code = 'CONFIG_ERROR'
    exit_status = 1


class SceneRejected(ThermostatLabError):
    """The scene does not satisfy the hypotheses of the experiment."""
    error_code = 'SCENE_REJECTED'
    exit_status = 2


class NumericalFailure(ThermostatLabError):
    """A numerical procedure broke down."""
    error_code = 'NUMERICAL_FAILURE'
    exit_status = 3


class ConditioningWarning(UserWarning):
    """Transport matrices became badly conditioned along a ray."""
