import numpy as np
from rest_framework import serializers

from fiber_calculus.constants import DEFAULT_CONVENTION, FRAME_CONVENTIONS
from geometry.constants import DOMAIN_COLLAR, EFIELD_KINDS, SIGMA_KINDS
from inversion.constants import (
    DEFAULT_DEGREE,
    DEFAULT_REGULARIZATION,
    KERNEL_THRESHOLD,
    MAX_TENSOR_ORDER,
    RIGIDITY_RAYS,
)
from thermostat_lab.exceptions import ThermostatLabError
from transport.connections import ConnectionPair, matrix_field_from_config
from transport.constants import MATRIX_FIELD_KINDS, MAX_RANK

from .constants import DEFAULT_NOISE, REQUIRED_BLOCKS


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _positive(value, name: str):
    if value is not None and not value > 0:
        raise serializers.ValidationError(f"{name} must be positive.")
    return value


class FieldSerializer(serializers.Serializer):
    """A ``{kind, params}`` block; subclasses fix the admissible kinds."""

    kinds = ()

    kind = serializers.CharField(default='zero')
    params = serializers.DictField(required=False, default=dict)

    def validate_kind(self, value):
        if value not in self.kinds:
            raise serializers.ValidationError(f"Unknown kind '{value}'; expected one of {', '.join(self.kinds)}.")
        return value


class SigmaSerializer(FieldSerializer):
    kinds = SIGMA_KINDS


class EFieldSerializer(FieldSerializer):
    kinds = EFIELD_KINDS


class MatrixFieldSerializer(FieldSerializer):
    kinds = MATRIX_FIELD_KINDS


class SceneSerializer(serializers.Serializer):
    R = serializers.FloatField(default=1.0)
    sigma = SigmaSerializer(required=False)
    E = EFieldSerializer(required=False)
    collar = serializers.FloatField(default=DOMAIN_COLLAR, min_value=0.0, max_value=1.0)

    def validate_R(self, value):
        return _positive(value, 'R')


class RandomPairSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=1, max_value=MAX_RANK)
    unitary = serializers.BooleanField(default=True)
    degree = serializers.IntegerField(default=1, min_value=0, max_value=4)
    amplitude = serializers.FloatField(default=0.3, min_value=0.0)
    higgs = serializers.BooleanField(default=True)


class PairSerializer(serializers.Serializer):
    n = serializers.IntegerField(default=1, min_value=1, max_value=MAX_RANK)
    A1 = MatrixFieldSerializer(required=False)
    A2 = MatrixFieldSerializer(required=False)
    Phi = MatrixFieldSerializer(required=False)
    random = RandomPairSerializer(required=False)

    def validate(self, data):
        explicit = [name for name in ('A1', 'A2', 'Phi') if name in data]
        if 'random' in data and explicit:
            raise serializers.ValidationError('Give either a random pair or explicit fields, not both.')
        try:
            for name in explicit:
                matrix_field_from_config(data[name], data['n'])
        except (ThermostatLabError, KeyError, TypeError, ValueError) as exc:
            raise serializers.ValidationError(f"Invalid matrix field: {exc}")
        return data


class TensorSerializer(serializers.Serializer):
    order = serializers.IntegerField(min_value=0, max_value=MAX_TENSOR_ORDER)
    terms = serializers.ListField(child=serializers.ListField(min_length=4, max_length=4), default=list)
    cutoff = serializers.BooleanField(default=False)


class SourceSerializer(serializers.Serializer):
    f = TensorSerializer()
    h = TensorSerializer(required=False)

    def validate(self, data):
        if 'h' in data and data['h']['order'] != data['f']['order'] - 1:
            raise serializers.ValidationError('h must have order one less than f.')
        return data


class FanSerializer(serializers.Serializer):
    boundary_points = serializers.IntegerField(default=64, min_value=4)
    angles = serializers.IntegerField(default=64, min_value=2)


class GridSerializer(serializers.Serializer):
    n_x = serializers.IntegerField(default=96, min_value=8)
    n_theta = serializers.IntegerField(default=64, min_value=4)
    convention = serializers.ChoiceField(choices=FRAME_CONVENTIONS, default=DEFAULT_CONVENTION)

    def validate_n_theta(self, value):
        if not _is_power_of_two(value):
            raise serializers.ValidationError('n_theta must be a power of two.')
        return value


class DiscretizationSerializer(serializers.Serializer):
    fan = FanSerializer(required=False)
    grid = GridSerializer(required=False)
    resolutions = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=4), min_length=2, max_length=2),
        required=False, min_length=1,
    )
    t_max = serializers.FloatField(required=False, allow_null=True)
    rtol = serializers.FloatField(default=1e-10)
    atol = serializers.FloatField(default=1e-10)
    tolerance = serializers.FloatField(default=1e-5)

    def validate_resolutions(self, value):
        for n_x, n_theta in value:
            if n_x < 8 or not _is_power_of_two(n_theta):
                raise serializers.ValidationError('Resolutions need n_x >= 8 and a power-of-two n_theta.')
        return value

    def validate_t_max(self, value):
        return _positive(value, 't_max')

    def validate_rtol(self, value):
        return _positive(value, 'rtol')

    def validate_atol(self, value):
        return _positive(value, 'atol')

    def validate_tolerance(self, value):
        return _positive(value, 'tolerance')


class TraceSerializer(serializers.Serializer):
    x = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, required=False)
    theta = serializers.FloatField(required=False)
    beta = serializers.FloatField(required=False)
    alpha = serializers.FloatField(required=False)
    direction = serializers.ChoiceField(choices=('forward', 'backward'), default='forward')

    def validate(self, data):
        interior = 'x' in data and 'theta' in data
        boundary = 'beta' in data and 'alpha' in data
        if interior == boundary:
            raise serializers.ValidationError('Give either x and theta, or beta and alpha.')
        if boundary and not abs(data['alpha']) < 0.5 * np.pi:
            raise serializers.ValidationError('alpha must lie strictly between -pi/2 and pi/2.')
        return data


class TransformSerializer(serializers.Serializer):
    source = SourceSerializer()


class VerifySerializer(serializers.Serializer):
    energy_samples = serializers.IntegerField(default=10, min_value=0)
    carleman_samples = serializers.IntegerField(default=20, min_value=0)
    finite_degree = serializers.BooleanField(default=True)
    kappa = serializers.FloatField(required=False, allow_null=True)


class KernelSerializer(serializers.Serializer):
    order = serializers.IntegerField(default=1, min_value=0, max_value=MAX_TENSOR_ORDER)
    degree = serializers.IntegerField(default=DEFAULT_DEGREE, min_value=0, max_value=12)
    threshold = serializers.FloatField(default=KERNEL_THRESHOLD)
    alpha = serializers.FloatField(default=DEFAULT_REGULARIZATION)
    noise = serializers.FloatField(default=DEFAULT_NOISE, min_value=0.0)

    def validate_threshold(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('threshold must lie in (0, 1).')
        return value

    def validate_alpha(self, value):
        return _positive(value, 'alpha')


class RigiditySerializer(serializers.Serializer):
    gauge = MatrixFieldSerializer()
    rays = serializers.IntegerField(default=RIGIDITY_RAYS, min_value=1)
    negative_control = serializers.BooleanField(default=True)


class ExperimentSerializer(serializers.Serializer):
    """
    The whole experiment document.

    The command being run is passed in the serializer context and decides
    which command blocks are required.
    """

    seed = serializers.IntegerField(default=0, min_value=0, max_value=2 ** 64 - 1)
    scene = SceneSerializer()
    pair = PairSerializer(required=False)
    discretization = DiscretizationSerializer(required=False)
    trace = TraceSerializer(required=False)
    transform = TransformSerializer(required=False)
    verify = VerifySerializer(required=False)
    kernel = KernelSerializer(required=False)
    rigidity = RigiditySerializer(required=False)

    def validate(self, data):
        command = self.context.get('command')
        missing = {
            block: f"This block is required by the {command} command."
            for block in REQUIRED_BLOCKS.get(command, ())
            if block not in data
        }
        if missing:
            raise serializers.ValidationError(missing)
        if command == 'rigidity' and 'pair' in data:
            try:
                pair = ConnectionPair.from_config(data['pair']) if 'random' not in data['pair'] else None
                n = pair.n if pair is not None else data['pair']['random']['n']
                matrix_field_from_config(data['rigidity']['gauge'], n)
            except (ThermostatLabError, KeyError, TypeError, ValueError) as exc:
                raise serializers.ValidationError({'rigidity': f"Invalid gauge: {exc}"})
        return data
