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

LOG_LEVELS = ['TRACE', 'DEBUG', 'INFO', 'WARNING', 'ERROR', 'FATAL']
STRUCTURES = ['full', 'sdb']
FAMILIES = ['N', 'T', 'SN', 'ST']
INIT_CHOICES = ['a', 'b', 'c', 'd', 'e',
                'true-values', 'normal-plus-grid', 'sn-warmstart', 'hybrid', 'best-of']


def _set_arg_from_config(args, arg_base_name, override_args, config, arg_prefix=''):
    arg_name = arg_prefix + arg_base_name
    if arg_name in override_args:
        return

    value = config.get(arg_base_name)
    if value is not None:
        setattr(args, arg_name, value)


def set_args_from_config(args, config, override_args):
    if not config:
        return

    # Model
    model = config.get('model')
    if model:
        _set_arg_from_config(args, 'family', override_args, model)
        _set_arg_from_config(args, 'skew_rank', override_args, model)
        _set_arg_from_config(args, 'structure', override_args, model)
        _set_arg_from_config(args, 'response', override_args, model)
        _set_arg_from_config(args, 'fixed', override_args, model)
        _set_arg_from_config(args, 'random', override_args, model)
        _set_arg_from_config(args, 'subject', override_args, model)

    # Fitter
    fitter = config.get('fitter')
    if fitter:
        _set_arg_from_config(args, 'tolerance', override_args, fitter)
        _set_arg_from_config(args, 'max_iter', override_args, fitter)
        _set_arg_from_config(args, 'nu_min', override_args, fitter)
        _set_arg_from_config(args, 'nu_max', override_args, fitter)
        _set_arg_from_config(args, 'init', override_args, fitter)
        _set_arg_from_config(args, 'seed', override_args, fitter)

    # Inference
    inference = config.get('inference')
    if inference:
        _set_arg_from_config(args, 'se_louis', override_args, inference)
        _set_arg_from_config(args, 'se_numerical', override_args, inference)
        _set_arg_from_config(args, 'random_effects', override_args, inference)

    # Simulation
    simulation = config.get('simulation')
    if simulation:
        _set_arg_from_config(args, 'scenario', override_args, simulation)
        _set_arg_from_config(args, 'subjects', override_args, simulation)
        _set_arg_from_config(args, 'replicas', override_args, simulation)
        _set_arg_from_config(args, 'seed', override_args, simulation)
        _set_arg_from_config(args, 'dir', override_args, simulation, arg_prefix='cache_')

    # Grid
    grid = config.get('grid')
    if grid:
        _set_arg_from_config(args, 'size', override_args, grid, arg_prefix='grid_')
        _set_arg_from_config(args, 'span', override_args, grid, arg_prefix='grid_')

    # Logging
    logging = config.get('logging')
    if logging:
        _set_arg_from_config(args, 'level', override_args, logging, arg_prefix='log_')
        _set_arg_from_config(args, 'hide_timestamp', override_args, logging, arg_prefix='log_')


def _value(args, arg_name):
    return getattr(args, arg_name, None)


def _validate_arg_positive(args, arg_name):
    value = _value(args, arg_name)
    if value is not None and not value > 0:
        raise ValueError('{}={} must be > 0'.format(arg_name, value))


def _validate_arg_at_least(args, arg_name, bound):
    value = _value(args, arg_name)
    if value is not None and value < bound:
        raise ValueError('{}={} must be >= {}'.format(arg_name, value, bound))


def _validate_arg_choice(args, arg_name, choices):
    value = _value(args, arg_name)
    if value is not None and value not in choices:
        raise ValueError('{}={} must be one of {}'.format(arg_name, value, ', '.join(choices)))


def validate_config_args(args):
    _validate_arg_positive(args, 'tolerance')
    _validate_arg_at_least(args, 'max_iter', 1)
    _validate_arg_at_least(args, 'nu_min', 2)
    _validate_arg_at_least(args, 'nu_max', 2)
    nu_min, nu_max = _value(args, 'nu_min'), _value(args, 'nu_max')
    if nu_min is not None and nu_max is not None and nu_min > nu_max:
        raise ValueError('nu_min={} must be <= nu_max={}'.format(nu_min, nu_max))

    skew_rank = _value(args, 'skew_rank')
    if skew_rank is not None and not 0 <= skew_rank <= 4:
        raise ValueError('skew_rank={} must be in 0..4'.format(skew_rank))
    _validate_arg_choice(args, 'family', FAMILIES)
    _validate_arg_choice(args, 'structure', STRUCTURES)
    _validate_arg_choice(args, 'init', INIT_CHOICES)
    _validate_arg_choice(args, 'log_level', LOG_LEVELS)

    _validate_arg_at_least(args, 'subjects', 1)
    _validate_arg_at_least(args, 'replicas', 1)
    _validate_arg_at_least(args, 'threads', 1)
    _validate_arg_at_least(args, 'grid_size', 2)
    _validate_arg_positive(args, 'grid_span')
