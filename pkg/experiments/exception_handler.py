import logging
from typing import Dict, Tuple

from rest_framework.exceptions import ValidationError
from rest_framework.utils.encoders import JSONEncoder

from thermostat_lab.exceptions import ConfigurationError, NumericalFailure, ThermostatLabError

logger = logging.getLogger(__name__)


def _jsonable(context: Dict) -> Dict:
    encoder = JSONEncoder()
    out = {}
    for key, value in context.items():
        try:
            encoder.encode(value)
            out[key] = value
        except (TypeError, ValueError):
            out[key] = str(value)
    return out


def experiment_exception_handler(exc: Exception) -> Tuple[Dict, int]:
    """
    Map an exception escaping a command to an error payload and exit status.

    Returns:
        tuple: ({detail, error_code, error_type, ...context}, exit status)
    """
    if isinstance(exc, ThermostatLabError):
        logger.warning(f"{exc.error_code}: {exc.detail}")
        payload = {
            'detail': str(exc.detail),
            'error_code': exc.error_code,
            'error_type': type(exc).__name__,
        }
        payload.update(_jsonable(exc.context))
        return payload, exc.exit_status

    if isinstance(exc, ValidationError):
        return {
            'detail': 'The experiment configuration is invalid',
            'error_code': ConfigurationError.error_code,
            'error_type': type(exc).__name__,
            'errors': exc.detail,
        }, ConfigurationError.exit_status

    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return {
        'detail': str(exc) or 'An internal error occurred',
        'error_code': 'INTERNAL_ERROR',
        'error_type': type(exc).__name__,
    }, NumericalFailure.exit_status
