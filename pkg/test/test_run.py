# Copyright 2026 The stlmm Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import collections
import contextlib
import json
import os
import sys
import unittest
import warnings

import mock
import numpy as np
import pandas as pd
import pytest

import stlmm
from stlmm.common.exceptions import DataError, NonConvergenceError
from stlmm.fit.config import FitConfig
from stlmm.fit.ecme import FitResult
from stlmm.inference.selection import SelectionRow
from stlmm.model.data import LongDataset, SubjectBlock
from stlmm.model.theta import Theta
from stlmm.run.common.util import config_parser, report
from stlmm.run.common.util.ingest import ingest_long_csv, parse_columns
from stlmm.run import run as run_module
from stlmm.run.run import parse_args, run_commandline

from common import data_path, tempdir

STLMM_VARS = ('STLMM_SEED', 'STLMM_THREADS', 'STLMM_LOG_LEVEL')


@contextlib.contextmanager
def override_args(tool=None, *args):
    old = sys.argv[:]
    try:
        if tool:
            sys.argv[0] = tool
        sys.argv[1:] = args
        yield
    finally:
        sys.argv = old


@contextlib.contextmanager
def override_env(env):
    old = os.environ.copy()
    try:
        for k, v in env.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v
        yield
    finally:
        os.environ.clear()
        os.environ.update(old)


def clean_env(**env):
    values = dict((k, None) for k in STLMM_VARS)
    values.update(env)
    return override_env(values)


def run_cli(*args):
    with override_args('stlmm', *args):
        with pytest.raises(SystemExit) as e:
            run_commandline()
    return e.value.code


def write_csv(path, text):
    with open(path, 'w') as f:
        f.write(text)
    return path


class RunTests(unittest.TestCase):
    """
    Tests for stlmm.run.
    """

    def __init__(self, *args, **kwargs):
        super(RunTests, self).__init__(*args, **kwargs)
        warnings.simplefilter('module')

    def test_fit_args(self):
        with clean_env(), override_args('stlmm', 'fit', 'data.csv', '-o', 'out.json',
                                        '--family', 'SN',
                                        '--structure', 'sdb',
                                        '--tolerance', '1e-5',
                                        '--max-iter', '20',
                                        '--nu-min', '3',
                                        '--nu-max', '30',
                                        '--init', 'b',
                                        '--no-se-louis',
                                        '--se-numerical',
                                        '--seed', '9'):
            args = parse_args()

            self.assertEqual(args.command, 'fit')
            self.assertEqual(args.input, 'data.csv')
            self.assertEqual(args.family, 'SN')
            self.assertEqual(args.structure, 'sdb')
            self.assertEqual(args.tolerance, 1e-5)
            self.assertEqual(args.max_iter, 20)
            self.assertEqual((args.nu_min, args.nu_max), (3, 30))
            self.assertEqual(args.init, 'b')
            self.assertFalse(args.se_louis)
            self.assertTrue(args.se_numerical)
            self.assertTrue(args.random_effects)
            self.assertEqual(args.seed, 9)

    def test_defaults(self):
        with clean_env(STLMM_THREADS='2'), override_args('stlmm', 'simulate', '-o', 'out.csv',
                                                         '--scenario', 'illus-a'):
            args = parse_args()

            self.assertEqual(args.subjects, 100)
            self.assertEqual(args.seed, 0)
            self.assertEqual(args.threads, 2)
            self.assertEqual(args.log_level, 'WARNING')
            self.assertFalse(args.log_hide_timestamp)

        with clean_env(), override_args('stlmm', 'mc-study', '-o', 'out.csv',
                                        '--scenario', 'illus-c'):
            args = parse_args()

            self.assertIsNone(args.structure)
            self.assertEqual(args.replicas, 100)
            self.assertEqual(args.family, 'ST')
            self.assertFalse(args.se_numerical)

    def test_config_file(self):
        config_filename = data_path('config.test.yaml')
        with clean_env(), override_args('stlmm', 'fit', 'data.csv', '-o', 'out.json',
                                        '--config-file', config_filename):
            args = parse_args()

            # Model
            self.assertEqual(args.family, 'SN')
            self.assertEqual(args.structure, 'sdb')
            self.assertEqual(args.response, 'resp')
            self.assertEqual(args.fixed, '1,t')
            self.assertEqual(args.subject, 'id')

            # Fitter
            self.assertEqual(args.tolerance, 0.0001)
            self.assertEqual(args.max_iter, 50)
            self.assertEqual((args.nu_min, args.nu_max), (3, 40))
            self.assertEqual(args.init, 'c')
            self.assertEqual(args.seed, 7)

            # Inference
            self.assertFalse(args.se_louis)
            self.assertTrue(args.se_numerical)
            self.assertFalse(args.random_effects)

            # Logging
            self.assertEqual(args.log_level, 'INFO')
            self.assertTrue(args.log_hide_timestamp)

        with clean_env(), override_args('stlmm', 'density-grid', '-o', 'grid.csv',
                                        '--config-file', config_filename):
            args = parse_args()

            self.assertEqual(args.scenario, 'illus-b')
            self.assertEqual(args.grid_size, 51)
            self.assertEqual(args.grid_span, 3.5)

        with clean_env(), override_args('stlmm', 'mc-study', '-o', 'mc.csv',
                                        '--config-file', config_filename):
            args = parse_args()

            self.assertEqual(args.subjects, 30)
            self.assertEqual(args.replicas, 4)
            self.assertEqual(args.cache_dir, 'stlmm_checkpoints')

    def test_config_file_override_args(self):
        config_filename = data_path('config.test.yaml')
        with clean_env(), override_args('stlmm', 'fit', 'data.csv', '-o', 'out.json',
                                        '--config-file', config_filename,
                                        '--family', 'ST',
                                        '--max-iter', '9',
                                        '--se-louis',
                                        '--log-level', 'ERROR'):
            args = parse_args()

            self.assertEqual(args.family, 'ST')
            self.assertEqual(args.max_iter, 9)
            self.assertTrue(args.se_louis)
            self.assertEqual(args.log_level, 'ERROR')
            self.assertEqual(args.structure, 'sdb')

    def test_env_precedence(self):
        """Test that STLMM_SEED beats the config file and STLMM_LOG_LEVEL does not."""
        config_filename = data_path('config.test.yaml')
        base = ('stlmm', 'fit', 'data.csv', '-o', 'out.json')
        with clean_env(STLMM_SEED='11', STLMM_LOG_LEVEL='debug'):
            with override_args(*(base + ('--config-file', config_filename))):
                args = parse_args()
                # the seed variable beats the file, the file beats the log level variable
                self.assertEqual(args.seed, 11)
                self.assertEqual(args.log_level, 'INFO')
            with override_args(*(base + ('--config-file', config_filename, '--seed', '3'))):
                self.assertEqual(parse_args().seed, 3)
            with override_args(*base):
                self.assertEqual(parse_args().log_level, 'DEBUG')

    def test_validate_config_args(self):
        with clean_env(), override_args('stlmm', 'fit', 'data.csv', '-o', 'out.json',
                                        '--tolerance', '-1'):
            with pytest.raises(ValueError):
                parse_args()

        with clean_env(), override_args('stlmm', 'fit', 'data.csv', '-o', 'out.json',
                                        '--nu-min', '30', '--nu-max', '10'):
            with pytest.raises(ValueError):
                parse_args()

        with clean_env(STLMM_SEED='abc'), override_args('stlmm', 'fit', 'data.csv', '-o', 'o'):
            with pytest.raises(ValueError):
                parse_args()

        args = mock.MagicMock(spec=['grid_size'], grid_size=1)
        with pytest.raises(ValueError, match='grid_size'):
            config_parser.validate_config_args(args)

    def test_commands_receive_settings(self):
        """Test that commands run with the settings resolved from flags and environment."""
        command = mock.MagicMock(return_value=0)
        with clean_env(STLMM_SEED='17', STLMM_THREADS='3'), \
                mock.patch.dict(run_module.COMMANDS, {'fit': command}):
            self.assertEqual(run_cli('fit', 'data.csv', '-o', 'out.json'), 0)
            self.assertEqual(run_cli('fit', 'data.csv', '-o', 'out.json', '--seed', '4'), 0)
        first, second = [call[0][1] for call in command.call_args_list]
        self.assertEqual((first.command, first.input, first.output),
                         ('fit', 'data.csv', 'out.json'))
        self.assertEqual((first.seed, first.threads), (17, 3))
        self.assertEqual(second.seed, 4)

    def test_usage_errors_exit_one(self):
        with clean_env():
            self.assertEqual(run_cli('fit', 'data.csv'), 1)
            self.assertEqual(run_cli('fit', 'data.csv', '-o', 'x', '--family', 'X'), 1)
            self.assertEqual(run_cli('fit', 'data.csv', '-o', 'x', '--max-iter', '0'), 1)
            self.assertEqual(run_cli('density-grid', '-o', 'g.csv', '--scenario', 'illus-a',
                                     '--report', 'r.json'), 1)
            self.assertEqual(run_cli('simulate', '-o', 's.csv', '--scenario', 'nope'), 1)
            with tempdir() as d:
                bad = write_csv(os.path.join(d, 'bad.yaml'), '- just\n- a list\n')
                self.assertEqual(run_cli('simulate', '-o', 's.csv', '--config-file', bad), 1)

    def test_parse_columns(self):
        self.assertEqual(parse_columns('1, x ,x2'), ['1', 'x', 'x2'])
        self.assertEqual(parse_columns(['1', 2]), ['1', '2'])
        self.assertIsNone(parse_columns(None))

    def test_ingest(self):
        data = ingest_long_csv(data_path('long.csv'), 'y', '1,x', '1', 'subject')
        self.assertEqual(data.ids, [1, 2, 3, 10])
        self.assertEqual([b.n for b in data], [3, 4, 2, 3])
        self.assertEqual((data.p, data.q), (2, 1))
        first = data.blocks[0]
        np.testing.assert_allclose(first.X[:, 1], [-1.0, -0.5, 0.0])
        np.testing.assert_allclose(first.Z[:, 0], [1.0, 1.0, 1.0])
        np.testing.assert_allclose(first.y, [0.12, 1.31, 2.05])
        self.assertEqual(data.fixed, ['1', 'x'])

    def test_ingest_errors(self):
        """Test that ingestion errors name the offending row and column."""
        with tempdir() as d:
            missing = write_csv(os.path.join(d, 'missing.csv'),
                                'subject,x,y\n1,0.0,1.0\n1,0.5,\n')
            with pytest.raises(DataError, match='missing value in column y at row 3') as e:
                ingest_long_csv(missing, 'y', '1,x', '1,x', 'subject')
            self.assertEqual((e.value.row, e.value.column), (3, 'y'))

            text = write_csv(os.path.join(d, 'text.csv'),
                             'subject,x,y\n1,0.0,1.0\n1,abc,2.0\n2,0.0,1.0\n')
            with pytest.raises(DataError, match="non-numeric value 'abc' in column x at row 3"):
                ingest_long_csv(text, 'y', '1,x', '1,x', 'subject')

            infinite = write_csv(os.path.join(d, 'infinite.csv'),
                                 'subject,x,y\n1,0.0,1.0\n1,0.5,inf\n2,0.0,1.0\n')
            with pytest.raises(DataError, match='in column y at row 3') as e:
                ingest_long_csv(infinite, 'y', '1,x', '1', 'subject')
            self.assertEqual((e.value.row, e.value.column), (3, 'y'))
            infinite = write_csv(os.path.join(d, 'infinite_x.csv'),
                                 'subject,x,y\n1,0.0,1.0\n2,-inf,2.0\n2,0.5,1.0\n')
            with pytest.raises(DataError, match='in column x at row 3') as e:
                ingest_long_csv(infinite, 'y', '1,x', '1', 'subject')
            self.assertEqual((e.value.row, e.value.column), (3, 'x'))

            with pytest.raises(DataError, match='unknown column time'):
                ingest_long_csv(data_path('long.csv'), 'y', '1,time', '1', 'subject')
            with pytest.raises(DataError, match='cannot read'):
                ingest_long_csv(os.path.join(d, 'absent.csv'), 'y', '1,x', '1', 'subject')

            labels = write_csv(os.path.join(d, 'labels.csv'),
                               'id,x,y\nb,0.0,1.0\na,0.0,2.0\nb,1.0,3.0\n')
            data = ingest_long_csv(labels, 'y', '1,x', '1', 'id')
            self.assertEqual(data.ids, ['a', 'b'])

    def test_ingest_subject_ids(self):
        """Test that ids are coerced to integers only when every id is a plain integer."""
        with tempdir() as d:
            padded = write_csv(os.path.join(d, 'padded.csv'),
                               'id,x,y\n1,0.0,1.0\n001,0.0,2.0\n1,1.0,3.0\n')
            data = ingest_long_csv(padded, 'y', '1,x', '1', 'id')
            self.assertEqual(data.ids, ['001', '1'])
            self.assertEqual([b.n for b in data], [1, 2])
            np.testing.assert_allclose(data.blocks[1].y, [1.0, 3.0])

            plain = write_csv(os.path.join(d, 'plain.csv'),
                              'id,x,y\n-2,0.0,1.0\n7,0.0,2.0\n-2,1.0,3.0\n')
            data = ingest_long_csv(plain, 'y', '1,x', '1', 'id')
            self.assertEqual(data.ids, [-2, 7])

    def test_simulate_fit_and_report(self):
        with clean_env(), tempdir() as d:
            csv = os.path.join(d, 'sim.csv')
            self.assertEqual(run_cli('simulate', '-o', csv, '--scenario', 'illus-b',
                                     '--subjects', '40', '--seed', '5'), 0)
            frame = pd.read_csv(csv)
            self.assertEqual(list(frame.columns), ['subject', 'x', 'y'])
            self.assertEqual(len(frame), 200)
            with open(csv + '.truth.json') as f:
                truth = json.load(f)
            self.assertEqual(truth['scenario'], 'illus-b')
            self.assertEqual(truth['parameters']['nu'], 10.0)

            out = os.path.join(d, 'fit.json')
            self.assertEqual(run_cli('fit', csv, '-o', out, '--family', 'N',
                                     '--log-level', 'ERROR'), 0)
            fitted = report.load_report(out)
            self.assertEqual(list(fitted), ['version', 'model', 'results'])
            self.assertEqual(fitted['model']['family'], 'N')
            self.assertEqual(fitted['model']['design'],
                             {'subjects': 40, 'observations': 200, 'p': 2, 'q': 2})
            results = fitted['results']
            self.assertTrue(results['converged'])
            self.assertEqual(list(results['estimates']), fitted['model']['parameters'])
            self.assertEqual(results['loglik'], results['loglik_trace'][-1])
            self.assertEqual(len(results['random_effects']), 40)
            self.assertIn('1', results['random_effects'])
            self.assertIsNone(results['se_numerical'])

            theta = report.theta_from_report(fitted)
            self.assertEqual(theta.family, 'N')
            np.testing.assert_allclose(theta.to_vector(), list(results['estimates'].values()))

            grid = os.path.join(d, 'grid.csv')
            self.assertEqual(run_cli('density-grid', '-o', grid, '--report', out,
                                     '--grid-size', '9'), 0)
            density = pd.read_csv(grid)
            self.assertEqual(density.shape, (9, 9))
            with open(grid + '.axes.json') as f:
                axes = json.load(f)
            self.assertEqual(len(axes['b1']), 9)
            np.testing.assert_allclose([float(c) for c in density.columns], axes['b2'])

    def test_report_round_trips_skew_t(self):
        theta = Theta([1.0, 3.0], 0.25, [[0.5, -0.2], [-0.2, 0.5]],
                      [[0.6, 1.5], [-1.0, 3.0]], nu=5)
        fake = {'model': {'family': 'ST', 'structure': 'full', 'skew_rank': 2},
                'results': {'estimates': theta.estimates()}}
        back = report.theta_from_report(fake)
        np.testing.assert_allclose(back.to_vector(), theta.to_vector())
        self.assertEqual(back.nu, 5.0)
        with pytest.raises(DataError):
            report.theta_from_report({'model': {}})

    def test_report_layout_matches_golden_file(self):
        """Test the byte layout of a fit report against a stored file."""
        data = LongDataset([SubjectBlock(2, [0.5, 1.5, 2.5], [[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]],
                                         np.ones((3, 1))),
                            SubjectBlock(1, [1.0, 2.0], [[1.0, 0.0], [1.0, 1.0]], np.ones((2, 1)))],
                           response='y', fixed=['1', 'x'], random=['1'], subject='subject')
        theta = Theta([1.5, -0.25], 0.5, [[2.0]], family='N')
        result = FitResult(theta, [-12.5, -10.25], 1, True, 4, 'normal-plus-grid',
                           collections.OrderedDict([('normal-plus-grid', -10.25)]))
        result.se = collections.OrderedDict([('beta0', 0.125), ('beta1', 0.0625),
                                             ('sigma2', 0.25), ('D11', float('nan'))])
        result.random_effects = collections.OrderedDict([(1, np.array([0.5])),
                                                         (2, np.array([-0.5]))])
        with tempdir() as d, mock.patch.object(stlmm, '__version__', 'golden'):
            out = os.path.join(d, 'fit.json')
            report.write_json_atomic(report.build_fit_report(result, data, FitConfig(family='N')),
                                     out)
            with open(out, 'rb') as f:
                written = f.read()
        with open(data_path('report.golden.json'), 'rb') as f:
            self.assertEqual(written, f.read())

    def test_json_non_finite(self):
        with tempdir() as d:
            path = os.path.join(d, 'r.json')
            report.write_json_atomic({'nu': float('inf'), 'x': np.float64(2.5),
                                      'ok': np.bool_(True), 'v': np.arange(2)}, path)
            with open(path) as f:
                self.assertEqual(json.load(f), {'nu': 'inf', 'x': 2.5, 'ok': True, 'v': [0, 1]})
            self.assertEqual(os.listdir(d), ['r.json'])

    def test_density_grid_scenario(self):
        with clean_env(), tempdir() as d:
            grid = os.path.join(d, 'grid.csv')
            self.assertEqual(run_cli('density-grid', '-o', grid, '--scenario', 'illus-d',
                                     '--grid-size', '7', '--grid-span', '2'), 0)
            self.assertEqual(pd.read_csv(grid).shape, (7, 7))

    def test_select_writes_table(self):
        rows = [SelectionRow('ST (SDB)', 'ST', 'sdb', 2, 9, -100.0, 218.0),
                SelectionRow('SN (r=1)', 'SN', 'full', 1, 8, -105.0, 226.0)]
        for i, row in enumerate(rows):
            row.rank = i + 1
        with clean_env(), tempdir() as d:
            out = os.path.join(d, 'select.csv')
            with mock.patch('stlmm.run.run.model_select', return_value=rows) as select:
                self.assertEqual(run_cli('select', data_path('long.csv'), '-o', out,
                                         '--random', '1'), 0)
            self.assertEqual(select.call_count, 1)
            table = pd.read_csv(out)
            self.assertEqual(list(table.columns),
                             ['label', 'family', 'structure', 'skew_rank', 'npar', 'loglik',
                              'aic', 'rank'])
            self.assertEqual(list(table['label']), ['ST (SDB)', 'SN (r=1)'])

            with mock.patch('stlmm.run.run.model_select', return_value=[]):
                self.assertEqual(run_cli('select', data_path('long.csv'), '-o', out,
                                         '--random', '1'), 2)

    def test_exit_codes(self):
        """Test that non-convergence exits with 2 and bad data with 1."""
        with clean_env(), tempdir() as d:
            out = os.path.join(d, 'fit.json')
            with mock.patch('stlmm.run.run.fit', side_effect=NonConvergenceError('stuck')):
                self.assertEqual(run_cli('fit', data_path('long.csv'), '-o', out,
                                         '--random', '1'), 2)
            self.assertFalse(os.path.exists(out))

            unconverged = mock.MagicMock(converged=False, loglik=-1.0, aic=4.0, n_iter=1)
            with mock.patch('stlmm.run.run.fit', return_value=unconverged), \
                    mock.patch('stlmm.run.common.util.report.build_fit_report',
                               return_value={'results': {}}):
                self.assertEqual(run_cli('fit', data_path('long.csv'), '-o', out,
                                         '--random', '1'), 2)
            self.assertTrue(os.path.exists(out))

            bad = write_csv(os.path.join(d, 'bad.csv'), 'subject,x,y\n1,0.0,\n')
            self.assertEqual(run_cli('fit', bad, '-o', out), 1)

    def test_mc_study(self):
        """Test that mc-study writes the summary, replica table, metadata and checkpoint."""
        with clean_env(), tempdir() as d:
            out = os.path.join(d, 'mc.csv')
            cache_dir = os.path.join(d, 'ckpt')
            self.assertEqual(run_cli('mc-study', '-o', out, '--scenario', 'illus-b',
                                     '--subjects', '15', '--replicas', '2', '--family', 'N',
                                     '--threads', '1', '--cache-dir', cache_dir), 0)
            summary = pd.read_csv(out)
            self.assertEqual(list(summary['parameter']),
                             ['beta0', 'beta1', 'sigma2', 'D11', 'D12', 'D22'])
            self.assertEqual(len(pd.read_csv(out + '.replicas.csv')), 2)
            with open(out + '.meta.json') as f:
                meta = json.load(f)
            self.assertEqual((meta['replicas_requested'], meta['replicas_used']), (2, 2))
            self.assertEqual(meta['strategy_counts'], {'normal-plus-grid': 2})
            self.assertTrue(os.path.exists(os.path.join(cache_dir, 'checkpoint.bin')))
