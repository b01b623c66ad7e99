import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from fiber_calculus.services import DegreeProfile, StarCurvatureReport
from geometry.exceptions import NonConvexScene
from inversion.services import FiniteDegreeResult
from thermostat_lab.exceptions import NumericalFailure

from .config import config_hash, load_config, read_document, validate_document
from .constants import BOUNDARY_COMMANDS, COMMANDS
from .exception_handler import experiment_exception_handler
from .exceptions import InvalidConfiguration, UnreadableConfiguration
from .reports import format_cell
from .services import RUNNERS, run, run_verify

SMALL_FAN = {'boundary_points': 6, 'angles': 4}


def trace_document(**overrides):
    document = {
        'seed': 7,
        'scene': {'R': 1.0},
        'trace': {'beta': 0.0, 'alpha': 0.0},
    }
    document.update(overrides)
    return document


class ConfigTestMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, document):
        path = self.root / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)


class ValidationTest(SimpleTestCase):
    def assertInvalid(self, document, command, field):
        with self.assertRaises(InvalidConfiguration) as ctx:
            validate_document(document, command)
        self.assertIn(field, json.dumps(ctx.exception.context['errors']))

    def test_defaults_filled_in(self):
        validated = validate_document(trace_document(), 'trace')
        self.assertEqual(validated['scene']['collar'], 0.05)
        self.assertEqual(validated['trace']['direction'], 'forward')

    def test_trace_block_required(self):
        document = trace_document()
        del document['trace']
        self.assertInvalid(document, 'trace', 'trace')

    def test_scatter_does_not_need_trace(self):
        document = trace_document()
        del document['trace']
        validate_document(document, 'scatter')

    def test_grid_needs_power_of_two(self):
        document = trace_document(discretization={'grid': {'n_x': 32, 'n_theta': 48}})
        self.assertInvalid(document, 'verify', 'n_theta')

    def test_negative_tolerance(self):
        self.assertInvalid(trace_document(discretization={'tolerance': -1.0}), 'verify', 'tolerance')

    def test_regularization_must_be_positive(self):
        self.assertInvalid(trace_document(kernel={'alpha': 0.0}), 'kernel', 'alpha')

    def test_trace_needs_one_start(self):
        self.assertInvalid(trace_document(trace={'beta': 0.0, 'alpha': 0.0, 'x': [0, 0], 'theta': 0.0}),
                           'trace', 'trace')
        self.assertInvalid(trace_document(trace={'beta': 0.0, 'alpha': 2.0}), 'trace', 'alpha')

    def test_unknown_field_kind(self):
        self.assertInvalid(trace_document(scene={'sigma': {'kind': 'torus'}}), 'trace', 'torus')

    def test_random_and_explicit_pair_are_exclusive(self):
        pair = {'n': 1, 'Phi': {'kind': 'constant', 'params': {'matrix': [[1.0]]}}, 'random': {'n': 1}}
        self.assertInvalid(trace_document(pair=pair), 'transport', 'random')

    def test_source_orders_must_match(self):
        source = {'f': {'order': 1}, 'h': {'order': 1}}
        self.assertInvalid(trace_document(transform={'source': source}), 'transform', 'order one less')


class ConfigLoadingTest(ConfigTestMixin, SimpleTestCase):
    def test_hash_ignores_key_order(self):
        a = validate_document(trace_document(), 'trace')
        b = validate_document(dict(reversed(list(trace_document().items()))), 'trace')
        self.assertEqual(config_hash(a), config_hash(b))

    def test_hash_changes_with_seed(self):
        a = validate_document(trace_document(), 'trace')
        b = validate_document(trace_document(seed=8), 'trace')
        self.assertNotEqual(config_hash(a), config_hash(b))

    def test_yaml_document(self):
        path = self.root / 'trace.yaml'
        path.write_text('seed: 3\nscene:\n  R: 2.0\ntrace:\n  beta: 0.5\n  alpha: 0.1\n', encoding='utf-8')
        config = load_config(path, 'trace')
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.scene().radius, 2.0)

    def test_seed_override(self):
        config = load_config(self.write('c.json', trace_document()), 'trace', seed=11)
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.document['seed'], 11)

    def test_unreadable(self):
        with self.assertRaises(UnreadableConfiguration):
            read_document(self.root / 'missing.json')
        broken = self.root / 'broken.json'
        broken.write_text('{"scene": ', encoding='utf-8')
        with self.assertRaises(UnreadableConfiguration):
            read_document(broken)

    def test_absent_pair_is_zero(self):
        config = load_config(self.write('c.json', trace_document()), 'trace')
        pair = config.pair(default_rank=1)
        self.assertEqual(pair.n, 1)
        np.testing.assert_array_equal(pair.higgs(np.zeros((1, 2))), np.zeros((1, 1, 1)))


class ExceptionHandlerTest(SimpleTestCase):
    def test_configuration_error(self):
        payload, status = experiment_exception_handler(InvalidConfiguration('bad', errors={'seed': ['x']}))
        self.assertEqual(status, 1)
        self.assertEqual(payload['error_code'], 'INVALID_CONFIGURATION')
        self.assertEqual(payload['errors'], {'seed': ['x']})

    def test_scene_rejected(self):
        payload, status = experiment_exception_handler(NonConvexScene('concave'))
        self.assertEqual(status, 2)
        self.assertEqual(payload['error_type'], 'NonConvexScene')

    def test_numerical_failure(self):
        _, status = experiment_exception_handler(NumericalFailure('diverged'))
        self.assertEqual(status, 3)

    def test_validation_error(self):
        payload, status = experiment_exception_handler(ValidationError({'seed': ['bad']}))
        self.assertEqual(status, 1)
        self.assertIn('seed', payload['errors'])

    def test_unexpected_error(self):
        with self.assertLogs('experiments', level='ERROR'):
            payload, status = experiment_exception_handler(RuntimeError('boom'))
        self.assertEqual(status, 3)
        self.assertEqual(payload['error_code'], 'INTERNAL_ERROR')


class FormatCellTest(SimpleTestCase):
    def test_round_trip_precision(self):
        value = 0.1 + 0.2
        self.assertEqual(float(format_cell(value)), value)
        self.assertEqual(format_cell(True), 'true')
        self.assertEqual(format_cell(3), '3')


class CommandTest(ConfigTestMixin, SimpleTestCase):
    def run_command(self, name, document, out='out', **options):
        out_dir = self.root / out
        call_command(name, config=self.write(f'{name}.json', document), out=str(out_dir),
                     no_cache=True, stdout=StringIO(), stderr=StringIO(), **options)
        return out_dir

    def read_csv(self, path):
        with open(path, newline='', encoding='utf-8') as handle:
            return list(csv.DictReader(handle))

    def test_trace_diameter(self):
        out = self.run_command('trace', trace_document())
        row = self.read_csv(out / 'trace.csv')[0]
        self.assertAlmostEqual(float(row['tau']), 2.0, places=6)
        self.assertAlmostEqual(float(row['exit_x1']), -1.0, places=6)
        report = json.loads((out / 'trace.json').read_text(encoding='utf-8'))
        self.assertEqual(report['schema_version'], 1)
        self.assertEqual(report['command'], 'trace')
        self.assertEqual(report['seed'], 7)

    def test_reruns_are_identical(self):
        document = trace_document(discretization={'fan': SMALL_FAN})
        first = self.run_command('scatter', document, out='a')
        second = self.run_command('scatter', document, out='b')
        self.assertEqual((first / 'scatter.csv').read_bytes(), (second / 'scatter.csv').read_bytes())
        a = json.loads((first / 'scatter.json').read_text(encoding='utf-8'))
        b = json.loads((second / 'scatter.json').read_text(encoding='utf-8'))
        self.assertEqual(a['results'], b['results'])
        self.assertEqual(a['config_hash'], b['config_hash'])

    def test_transport_of_zero_pair_is_identity(self):
        document = trace_document(pair={'n': 1}, discretization={'fan': SMALL_FAN})
        out = self.run_command('transport', document)
        for row in self.read_csv(out / 'transport.csv'):
            self.assertAlmostEqual(float(row['C_11_re']), 1.0, places=10)
            self.assertAlmostEqual(float(row['C_11_im']), 0.0, places=10)

    def test_malformed_config_writes_nothing(self):
        document = trace_document()
        del document['trace']
        with self.assertRaises(CommandError) as ctx:
            self.run_command('trace', document)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertFalse((self.root / 'out').exists())

    def test_non_convex_scene_is_rejected(self):
        document = trace_document(scene={'R': 1.0, 'E': {'kind': 'radial', 'params': {'c': -2.0}}},
                                  discretization={'fan': SMALL_FAN})
        with self.assertRaises(CommandError) as ctx:
            self.run_command('scatter', document)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse((self.root / 'out').exists())


class RunTest(ConfigTestMixin, SimpleTestCase):
    def load(self, command, document):
        return load_config(self.write(f'{command}.json', document), command)

    def test_every_command_has_a_runner(self):
        self.assertEqual(set(RUNNERS), set(COMMANDS))
        self.assertTrue(set(BOUNDARY_COMMANDS) <= set(COMMANDS))
        self.assertNotIn('trace', BOUNDARY_COMMANDS)
        self.assertNotIn('verify', BOUNDARY_COMMANDS)

    def test_unknown_command(self):
        config = self.load('trace', trace_document())
        with self.assertRaises(InvalidConfiguration):
            run('plot', config)

    def test_boundary_commands_are_gated_before_integration(self):
        document = trace_document(scene={'R': 1.0, 'E': {'kind': 'radial', 'params': {'c': -2.0}}},
                                  discretization={'fan': SMALL_FAN})
        for command in ('scatter', 'transport', 'kernel'):
            with self.assertRaises(NonConvexScene):
                run(command, self.load(command, document))


class VerifyVerdictTest(ConfigTestMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        document = {
            'seed': 5,
            'scene': {'R': 1.0},
            'pair': {'random': {'n': 1, 'unitary': True}},
            'discretization': {'grid': {'n_x': 16, 'n_theta': 8}},
        }
        self.config = load_config(self.write('verify.json', document), 'verify')
        self.suite = mock.patch('experiments.services.verification_suite',
                                return_value={'identities': [], 'energy': [], 'carleman': []})
        self.suite.start()

    def tearDown(self):
        self.suite.stop()
        super().tearDown()

    def degree_result(self, tail):
        profile = DegreeProfile(np.array([0, 1]), np.array([1.0, tail]))
        return FiniteDegreeResult(profile=profile, order=1, tail_fraction=tail, solution_error=0.0)

    def verdict(self, fiber_residual, tail):
        star = StarCurvatureReport(star=np.zeros((1, 1, 1, 1)), fiber_residual=fiber_residual)
        with mock.patch('experiments.services.star_curvature_report', return_value=star), \
                mock.patch('experiments.services.finite_degree_experiment', return_value=self.degree_result(tail)):
            return run_verify(self.config)

    def test_all_checks_pass(self):
        output = self.verdict(1e-9, 1e-12)
        self.assertTrue(output.results['all_passed'])
        self.assertTrue(output.results['finite_degree']['passed'])

    def test_star_curvature_residual_fails_the_run(self):
        self.assertFalse(self.verdict(1e-2, 1e-12).results['all_passed'])

    def test_finite_degree_tail_fails_the_run(self):
        output = self.verdict(1e-9, 0.3)
        self.assertFalse(output.results['finite_degree']['passed'])
        self.assertFalse(output.results['all_passed'])
