from thermostat_lab.exceptions import ConfigurationError


class InvalidConfiguration(ConfigurationError):
    """The experiment document failed validation."""
    error_code = 'INVALID_CONFIGURATION'


class UnreadableConfiguration(ConfigurationError):
    """The experiment document could not be read or parsed."""
    error_code = 'UNREADABLE_CONFIGURATION'
