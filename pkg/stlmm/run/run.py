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

from __future__ import print_function

import argparse
import logging
import sys

import pandas as pd
import yaml

import stlmm
from stlmm.common.exceptions import (DataError, ModelError, NonConvergenceError,
                                     NumericalError, StlmmError)
from stlmm.dist import qmc
from stlmm.fit.config import FitConfig
from stlmm.fit.ecme import fit
from stlmm.inference.selection import model_select
from stlmm.model.likelihood import random_effects_law
from stlmm.run.common.util import config_parser, env, report
from stlmm.run.common.util import settings as stlmm_settings
from stlmm.run.common.util.ingest import ingest_long_csv, parse_columns
from stlmm.run.util import cache
from stlmm.sim.contour import contour_grid
from stlmm.sim.montecarlo import parameters_hash, run_monte_carlo
from stlmm.sim.scenarios import SCENARIOS, dataset_frame, generate_dataset, get_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2

CACHE_STALENESS_THRESHOLD_MINUTES = 60 * 24 * 7

DEFAULTS = {
    'family': 'ST',
    'structure': 'full',
    'skew_rank': None,
    'response': 'y',
    'fixed': '1,x',
    'random': '1,x',
    'subject': 'subject',
    'tolerance': 1e-6,
    'max_iter': 500,
    'nu_min': 2,
    'nu_max': 100,
    'init': 'e',
    'seed': 0,
    'se_louis': True,
    'se_numerical': False,
    'random_effects': True,
    'subjects': 100,
    'replicas': 100,
    'grid_size': 101,
    'grid_span': 4.0,
    'log_hide_timestamp': False,
}


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def make_override_action(override_args):
    class StoreOverrideAction(argparse.Action):
        def __init__(self,
                     option_strings,
                     dest,
                     default=None,
                     type=None,
                     choices=None,
                     required=False,
                     help=None):
            super(StoreOverrideAction, self).__init__(
                option_strings=option_strings,
                dest=dest,
                nargs=1,
                default=default,
                type=type,
                choices=choices,
                required=required,
                help=help)

        def __call__(self, parser, args, values, option_string=None):
            override_args.add(self.dest)
            setattr(args, self.dest, values[0])

    return StoreOverrideAction


def make_override_bool_action(override_args, bool_value):
    class StoreOverrideBoolAction(argparse.Action):
        def __init__(self,
                     option_strings,
                     dest,
                     required=False,
                     help=None):
            super(StoreOverrideBoolAction, self).__init__(
                option_strings=option_strings,
                dest=dest,
                const=bool_value,
                nargs=0,
                default=None,
                required=required,
                help=help)

        def __call__(self, parser, args, values, option_string=None):
            override_args.add(self.dest)
            setattr(args, self.dest, self.const)

    return StoreOverrideBoolAction


def make_override_true_action(override_args):
    return make_override_bool_action(override_args, True)


def make_override_false_action(override_args):
    return make_override_bool_action(override_args, False)


def _add_flag_pair(group, override_args, name, dest, help):
    pair = group.add_mutually_exclusive_group()
    pair.add_argument('--' + name, dest=dest, action=make_override_true_action(override_args), help=help)
    pair.add_argument('--no-' + name, dest=dest, action=make_override_false_action(override_args),
                      help=argparse.SUPPRESS)


def _add_common_arguments(parser, override_args):
    parser.add_argument('--config-file', action='store', dest='config_file',
                        help='Path to a YAML (or JSON) config file. Flags override its values.')
    parser.add_argument('--seed', action=make_override_action(override_args), type=int,
                        help='Run seed; STLMM_SEED overrides the config file. (default: 0)')
    parser.add_argument('--threads', action=make_override_action(override_args), type=int,
                        help='Worker threads; defaults to STLMM_THREADS or the CPU count.')

    group_logging = parser.add_argument_group('logging arguments')
    group_logging.add_argument('--log-level', action=make_override_action(override_args),
                               choices=config_parser.LOG_LEVELS,
                               help='Minimum level to log to stderr. (default: STLMM_LOG_LEVEL or WARNING).')
    _add_flag_pair(group_logging, override_args, 'log-hide-timestamp', 'log_hide_timestamp',
                   'Hide the timestamp from log messages.')


def _add_model_arguments(parser, override_args, with_columns=True):
    group_model = parser.add_argument_group('model arguments')
    group_model.add_argument('--family', action=make_override_action(override_args),
                             choices=config_parser.FAMILIES,
                             help='Model family. (default: ST)')
    group_model.add_argument('--structure', action=make_override_action(override_args),
                             choices=config_parser.STRUCTURES,
                             help='Shape matrix structure: full q x r or diagonal (sdb). (default: full)')
    group_model.add_argument('--skew-rank', action=make_override_action(override_args), type=int,
                             help='Skewness rank r of the full structure. (default: q)')
    if with_columns:
        group_model.add_argument('--response', action=make_override_action(override_args),
                                 help='Response column. (default: y)')
        group_model.add_argument('--fixed', action=make_override_action(override_args),
                                 help='Comma-separated fixed-effects columns, "1" for the intercept. '
                                      '(default: 1,x)')
        group_model.add_argument('--random', action=make_override_action(override_args),
                                 help='Comma-separated random-effects columns. (default: 1,x)')
        group_model.add_argument('--subject', action=make_override_action(override_args),
                                 help='Subject id column. (default: subject)')


def _add_fitter_arguments(parser, override_args):
    group_fitter = parser.add_argument_group('fitter arguments')
    group_fitter.add_argument('--tolerance', action=make_override_action(override_args), type=float,
                              help='Stop when |l(k+1)/l(k) - 1| is below this. (default: 1e-6)')
    group_fitter.add_argument('--max-iter', action=make_override_action(override_args), type=int,
                              help='Maximum ECME iterations. (default: 500)')
    group_fitter.add_argument('--nu-min', action=make_override_action(override_args), type=int,
                              help='Smallest degrees of freedom searched. (default: 2)')
    group_fitter.add_argument('--nu-max', action=make_override_action(override_args), type=int,
                              help='Largest degrees of freedom searched. (default: 100)')
    group_fitter.add_argument('--init', action=make_override_action(override_args),
                              choices=config_parser.INIT_CHOICES,
                              help='Initialization strategy. (default: e, best-of)')


def _add_inference_arguments(parser, override_args):
    group_inference = parser.add_argument_group('inference arguments')
    _add_flag_pair(group_inference, override_args, 'se-louis', 'se_louis',
                   'Compute Louis standard errors (on by default).')
    _add_flag_pair(group_inference, override_args, 'se-numerical', 'se_numerical',
                   'Compute numerical-Hessian standard errors.')
    _add_flag_pair(group_inference, override_args, 'random-effects', 'random_effects',
                   'Report per-subject random-effect estimates (on by default).')


def _add_scenario_arguments(parser, override_args):
    group_sim = parser.add_argument_group('simulation arguments')
    group_sim.add_argument('--scenario', action=make_override_action(override_args),
                           help='Scenario name: {}.'.format(', '.join(SCENARIOS)))
    group_sim.add_argument('--subjects', action=make_override_action(override_args), type=int,
                           help='Subjects per data set. (default: 100)')
    return group_sim


def parse_args():
    override_args = set()

    parser = _ArgumentParser(description='Skew-t linear mixed models')

    parser.add_argument('-v', '--version', action='version', version=stlmm.__version__,
                        help='Shows stlmm version.')

    subparsers = parser.add_subparsers(dest='command', parser_class=_ArgumentParser)
    subparsers.required = True

    fit_parser = subparsers.add_parser('fit', help='Fit a model to a long-format CSV.')
    fit_parser.add_argument('input', help='Input CSV.')
    fit_parser.add_argument('-o', '--output', required=True, help='Report JSON path.')
    _add_common_arguments(fit_parser, override_args)
    _add_model_arguments(fit_parser, override_args)
    _add_fitter_arguments(fit_parser, override_args)
    _add_inference_arguments(fit_parser, override_args)

    select_parser = subparsers.add_parser('select', help='Rank SN/ST variants by AIC.')
    select_parser.add_argument('input', help='Input CSV.')
    select_parser.add_argument('-o', '--output', required=True, help='Selection table CSV path.')
    _add_common_arguments(select_parser, override_args)
    _add_model_arguments(select_parser, override_args)
    _add_fitter_arguments(select_parser, override_args)

    sim_parser = subparsers.add_parser('simulate', help='Simulate one data set of a scenario.')
    sim_parser.add_argument('-o', '--output', required=True, help='Long CSV path.')
    _add_common_arguments(sim_parser, override_args)
    _add_scenario_arguments(sim_parser, override_args)

    mc_parser = subparsers.add_parser('mc-study', help='Monte Carlo study of a scenario.')
    mc_parser.add_argument('-o', '--output', required=True, help='Summary CSV path.')
    _add_common_arguments(mc_parser, override_args)
    group_sim = _add_scenario_arguments(mc_parser, override_args)
    group_sim.add_argument('--replicas', action=make_override_action(override_args), type=int,
                           help='Number of replicas. (default: 100)')
    group_sim.add_argument('--cache-dir', action=make_override_action(override_args),
                           help='Checkpoint folder; finished replicas are reused on restart.')
    _add_model_arguments(mc_parser, override_args, with_columns=False)
    _add_fitter_arguments(mc_parser, override_args)
    group_inference = mc_parser.add_argument_group('inference arguments')
    _add_flag_pair(group_inference, override_args, 'se-numerical', 'se_numerical',
                   'Also compute numerical-Hessian standard errors per replica.')

    grid_parser = subparsers.add_parser('density-grid', help='Random-effects density on a grid.')
    grid_parser.add_argument('-o', '--output', required=True, help='Density matrix CSV path.')
    _add_common_arguments(grid_parser, override_args)
    source = grid_parser.add_mutually_exclusive_group()
    source.add_argument('--scenario', action=make_override_action(override_args),
                        help='Scenario whose random-effects law is drawn.')
    source.add_argument('--report', action='store', dest='report',
                        help='Fit report whose fitted random-effects law is drawn.')
    group_grid = grid_parser.add_argument_group('grid arguments')
    group_grid.add_argument('--grid-size', action=make_override_action(override_args), type=int,
                            help='Points per axis. (default: 101)')
    group_grid.add_argument('--grid-span', action=make_override_action(override_args), type=float,
                            help='Half-width in marginal standard deviations. (default: 4)')

    args = parser.parse_args()

    if args.config_file:
        try:
            with open(args.config_file, 'r') as f:
                config = yaml.load(f, Loader=yaml.FullLoader)
        except (IOError, OSError, yaml.YAMLError) as e:
            parser.error('cannot read config file {}: {}'.format(args.config_file, e))
        if config is not None and not isinstance(config, dict):
            parser.error('config file {} must hold a mapping'.format(args.config_file))
        config_parser.set_args_from_config(args, config, override_args)
    _apply_env(args, override_args)
    _apply_defaults(args)
    config_parser.validate_config_args(args)

    return args


def _apply_env(args, override_args):
    seed = env.get_seed()
    if seed is not None and 'seed' not in override_args:
        args.seed = seed
    if getattr(args, 'log_level', None) is None:
        args.log_level = env.get_log_level()
    if getattr(args, 'threads', None) is None:
        args.threads = env.get_threads()


def _apply_defaults(args):
    for name, value in DEFAULTS.items():
        if name == 'structure' and args.command == 'mc-study':
            # the scenario supplies it
            continue
        if getattr(args, name, None) is None:
            setattr(args, name, value)


class StlmmArgs(object):
    """Argument holder for driving the commands from Python."""

    def __init__(self, command=None, **kwargs):
        self.command = command
        self.input = None
        self.output = None
        self.config_file = None
        self.report = None
        self.scenario = None
        self.cache_dir = None
        self.threads = 1
        self.log_level = 'WARNING'
        for name, value in DEFAULTS.items():
            setattr(self, name, value)
        for name, value in kwargs.items():
            setattr(self, name, value)


def _configure_logging(level, hide_timestamp):
    logging.addLevelName(env.TRACE, 'TRACE')
    fmt = '%(levelname)s %(name)s: %(message)s'
    if not hide_timestamp:
        fmt = '%(asctime)s ' + fmt
    root = logging.getLogger('stlmm')
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(fmt))
    root.addHandler(handler)
    root.setLevel(env.log_level_value(level))


def _fit_config(args, settings, **overrides):
    fields = dict(family=args.family, structure=args.structure, skew_rank=args.skew_rank,
                  tolerance=args.tolerance, max_iter=args.max_iter,
                  nu_grid=range(int(args.nu_min), int(args.nu_max) + 1), init=args.init,
                  seed=settings.seed, se_louis=args.se_louis, se_numerical=args.se_numerical,
                  random_effects=args.random_effects)
    fields.update(overrides)
    return FitConfig(**fields)


def _ingest(args, settings):
    return ingest_long_csv(settings.input, args.response, parse_columns(args.fixed),
                           parse_columns(args.random), args.subject)


def cmd_fit(args, settings):
    data = _ingest(args, settings)
    config = _fit_config(args, settings)
    result = fit(data, config)
    report.write_json_atomic(report.build_fit_report(result, data, config), settings.output)
    print('{}: loglik={!r} aic={!r} iterations={} converged={}'.format(
        settings.output, result.loglik, result.aic, result.n_iter, result.converged))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_select(args, settings):
    data = _ingest(args, settings)
    config = _fit_config(args, settings, se_louis=False, random_effects=False)
    rows = model_select(data, config=config)
    if not rows:
        raise NonConvergenceError('no candidate model could be fitted')
    frame = pd.DataFrame([[row.label, row.family, row.structure, row.skew_rank, row.npar,
                           row.loglik, row.aic, row.rank] for row in rows],
                         columns=['label', 'family', 'structure', 'skew_rank', 'npar',
                                  'loglik', 'aic', 'rank'])
    report.write_frame_atomic(frame, settings.output)
    print('{}: best {} (aic={!r})'.format(settings.output, rows[0].label, rows[0].aic))
    return EXIT_OK


def _scenario(args):
    if not args.scenario:
        raise ValueError('a scenario is required; valid names: {}'.format(', '.join(SCENARIOS)))
    return get_scenario(args.scenario, args.subjects)


def cmd_simulate(args, settings):
    scenario = _scenario(args)
    data, truth = generate_dataset(scenario, settings.seed)
    report.write_frame_atomic(dataset_frame(scenario, data), settings.output)
    sidecar = {
        'version': stlmm.__version__,
        'scenario': scenario.name,
        'subjects': scenario.subjects,
        'seed': settings.seed,
        'model': scenario.model_block(),
        'parameters': truth.estimates(),
    }
    report.write_json_atomic(sidecar, settings.output + '.truth.json')
    print('{}: {} subjects of {}'.format(settings.output, scenario.subjects, scenario.name))
    return EXIT_OK


def cmd_mc_study(args, settings):
    scenario = _scenario(args)
    truth = scenario.theta()
    structure = args.structure or scenario.structure
    skew_rank = args.skew_rank if args.skew_rank is not None else truth.r
    config = _fit_config(args, settings, structure=structure, skew_rank=skew_rank,
                         true_theta=truth, se_louis=True, random_effects=False)
    fn_cache = None
    if args.cache_dir:
        fn_cache = cache.Cache(args.cache_dir, CACHE_STALENESS_THRESHOLD_MINUTES,
                               parameters_hash(scenario, config, settings.seed, args.se_numerical))
    summary = run_monte_carlo(scenario, args.replicas, config, seed=settings.seed,
                              threads=settings.threads, se_numerical=args.se_numerical,
                              cache=fn_cache)
    report.write_frame_atomic(summary.to_frame(), settings.output)
    report.write_frame_atomic(summary.replica_frame(), settings.output + '.replicas.csv')
    meta = {
        'version': stlmm.__version__,
        'scenario': scenario.name,
        'subjects': scenario.subjects,
        'seed': settings.seed,
        'replicas_requested': summary.requested,
        'replicas_used': summary.used,
        'fit_failures': summary.failures,
        'hessian_failures': summary.hessian_failures,
        'strategy_counts': dict(summary.strategy_counts),
        'relative_bias': summary.relative_bias(),
    }
    report.write_json_atomic(meta, settings.output + '.meta.json')
    print('{}: {} of {} replicas fitted'.format(settings.output, summary.used, summary.requested))
    return EXIT_OK


def cmd_density_grid(args, settings):
    if args.report:
        params = random_effects_law(report.theta_from_report(report.load_report(args.report)))
    else:
        params = _scenario(args).random_effects_law()
    grid = contour_grid(params, size=args.grid_size, span=args.grid_span)
    frame = pd.DataFrame(grid.density, columns=[repr(float(v)) for v in grid.y])
    report.write_frame_atomic(frame, settings.output)
    report.write_json_atomic({'b1': grid.x, 'b2': grid.y, 'rows': 'b1', 'columns': 'b2'},
                             settings.output + '.axes.json')
    print('{}: {}x{} grid, integral {:.6f}'.format(settings.output, args.grid_size, args.grid_size,
                                                     grid.integral()))
    return EXIT_OK


COMMANDS = {
    'fit': cmd_fit,
    'select': cmd_select,
    'simulate': cmd_simulate,
    'mc-study': cmd_mc_study,
    'density-grid': cmd_density_grid,
}


def _run(args):
    settings = stlmm_settings.Settings(command=args.command,
                                       input=getattr(args, 'input', None),
                                       output=args.output,
                                       threads=args.threads,
                                       seed=args.seed,
                                       log_level=args.log_level,
                                       log_hide_timestamp=args.log_hide_timestamp)
    _configure_logging(settings.log_level, settings.log_hide_timestamp)
    qmc.set_seed(settings.seed)
    logger.debug('running %s with seed %s and %s threads', settings.command, settings.seed,
                 settings.threads)
    try:
        return COMMANDS[settings.command](args, settings)
    except NonConvergenceError as e:
        print('stlmm {}: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (DataError, ModelError, ValueError, IOError, OSError) as e:
        print('stlmm {}: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, StlmmError) as e:
        print('stlmm {}: {}'.format(args.command, e), file=sys.stderr)
        return EXIT_NOT_CONVERGED


def run_commandline():
    try:
        args = parse_args()
    except ValueError as e:
        print('stlmm: {}'.format(e), file=sys.stderr)
        sys.exit(EXIT_USAGE)
    sys.exit(_run(args))
