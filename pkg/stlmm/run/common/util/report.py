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
"""
Fit reports and atomic file output. Report field names are a stable
contract; floats keep their shortest round-trip representation and
non-finite values are written as the strings "inf", "-inf" and "nan".
"""

import collections
import json
import os
import tempfile

import numpy as np

import stlmm
from stlmm.common.exceptions import DataError
from stlmm.model.theta import Theta


def _jsonable(value):
    if isinstance(value, dict):
        return collections.OrderedDict((str(k), _jsonable(v)) for k, v in value.items())
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isfinite(value):
            return value
        return 'nan' if np.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def _float(value):
    if isinstance(value, str):
        return float(value)
    return value


def _write_atomic(path, write):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.' + os.path.basename(path), suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_json_atomic(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, allow_nan=False) + '\n'
    _write_atomic(path, lambda f: f.write(text))


def write_frame_atomic(frame, path):
    _write_atomic(path, lambda f: frame.to_csv(f, index=False, lineterminator='\n'))


def model_block(config, data):
    return collections.OrderedDict([
        ('family', config.family),
        ('structure', config.structure),
        ('skew_rank', config.rank_for(data.q)),
        ('response', data.response),
        ('fixed', list(data.fixed)),
        ('random', list(data.random)),
        ('subject', data.subject),
    ])


def build_fit_report(result, data, config):
    """
    :type result: stlmm.fit.ecme.FitResult
    :type data: stlmm.model.data.LongDataset
    :type config: stlmm.fit.config.FitConfig
    :rtype: collections.OrderedDict
    """
    theta = result.theta_hat
    model = model_block(config, data)
    model['parameters'] = theta.names()
    model['design'] = collections.OrderedDict([
        ('subjects', data.N), ('observations', data.n_total), ('p', data.p), ('q', data.q)])

    results = collections.OrderedDict([
        ('estimates', result.estimates()),
        ('se_louis', result.se),
        ('se_numerical', result.se_numerical),
        ('se_numerical_error', result.se_numerical_error),
        ('loglik', result.loglik),
        ('aic', result.aic),
        ('npar', result.npar),
        ('iterations', result.n_iter),
        ('converged', result.converged),
        ('init_strategy', result.init_strategy_chosen),
        ('candidates', result.candidates),
        ('loglik_trace', result.loglik_trace),
        ('random_effects', None if result.random_effects is None else
         collections.OrderedDict((k, v.tolist()) for k, v in result.random_effects.items())),
    ])
    return collections.OrderedDict([
        ('version', stlmm.__version__),
        ('model', model),
        ('results', results),
    ])


def load_report(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f, object_pairs_hook=collections.OrderedDict)
    except (IOError, OSError, ValueError) as e:
        raise DataError('cannot read report {}: {}'.format(path, e))


def theta_from_report(report):
    """Rebuild the fitted Theta from a report written by build_fit_report."""
    try:
        model = report['model']
        estimates = report['results']['estimates']
        family, structure = model['family'], model['structure']
        r = int(model['skew_rank'])
        p = sum(1 for name in estimates if name.startswith('beta'))
        n_d = sum(1 for name in estimates if name.startswith('D') and not name.startswith('Delta'))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError('malformed report: {}'.format(e))
    q = int(round((np.sqrt(8 * n_d + 1) - 1) / 2))
    template = Theta(np.zeros(p), 1.0, np.eye(q),
                     Delta=np.zeros((q, r)) if family in ('SN', 'ST') else None,
                     nu=_float(estimates.get('nu', np.inf)) if family in ('T', 'ST') else None,
                     family=family, structure=structure)
    vec = [_float(estimates[name]) for name in template.names(with_nu=False)]
    return template.from_vector(vec)
