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
Top-level ECME fit: starting values, one ECME run per candidate start, the
best final log-likelihood, then the requested inference.
"""

import collections
import logging

from stlmm.common.exceptions import NonConvergenceError, NumericalError
from stlmm.fit.init import initialize
from stlmm.fit.loop import run_ecme
from stlmm.inference.hessian import numerical_hessian_se
from stlmm.inference.louis import louis_information
from stlmm.inference.random_effects import estimate_all_random_effects
from stlmm.inference.selection import aic_value

logger = logging.getLogger(__name__)


class FitResult(object):
    """
    Outcome of `fit`.

    :param theta_hat: final parameters
    :param loglik_trace: log-likelihood at the start and after every iteration
    :param n_iter: iterations run
    :param converged: whether the stopping rule was met before max_iter
    :param npar: number of estimated parameters
    :param init_strategy_chosen: label of the winning start
    :param candidates: label -> final log-likelihood of every start tried
    """

    def __init__(self, theta_hat, loglik_trace, n_iter, converged, npar,
                 init_strategy_chosen, candidates=None):
        self.theta_hat = theta_hat
        self.loglik_trace = list(loglik_trace)
        self.n_iter = n_iter
        self.converged = converged
        self.npar = npar
        self.init_strategy_chosen = init_strategy_chosen
        self.candidates = candidates if candidates is not None else collections.OrderedDict()
        self.information = None
        self.se = None
        self.se_numerical = None
        self.se_numerical_error = None
        self.random_effects = None

    @property
    def loglik(self):
        return self.loglik_trace[-1]

    @property
    def aic(self):
        return aic_value(self.loglik, self.npar)

    def estimates(self):
        return self.theta_hat.estimates()


def _run_candidates(data, config, candidates):
    runs = []
    last_error = None
    for label, theta0 in candidates:
        if config.fix_nu is not None and config.heavy:
            theta0 = theta0.replace(nu=config.fix_nu)
        try:
            res = run_ecme(data, theta0, config.tolerance, config.max_iter,
                           nu_grid=config.nu_grid, estimate_nu=config.estimates_nu,
                           fix_delta=config.fix_delta, label=label)
        except NonConvergenceError as e:
            logger.warning('start %s failed: %s', label, e)
            last_error = e
            continue
        runs.append((label, res))
    if not runs:
        raise last_error
    return runs


def fit(data, config, start=None):
    """
    Fit the ST-LMM family named by `config`.

    :param data: the longitudinal data
    :type data: stlmm.model.data.LongDataset
    :param config: fit settings
    :type config: stlmm.fit.config.FitConfig
    :param start: explicit starting Theta; bypasses the init strategy
    :rtype: FitResult
    """
    if start is not None:
        candidates = [('user', start)]
    else:
        candidates = initialize(config.init, data, config)
    runs = _run_candidates(data, config, candidates)

    label, best = runs[0]
    for other_label, other in runs[1:]:
        if other.loglik > best.loglik:
            label, best = other_label, other
    if len(runs) > 1:
        logger.info('best-of: chose %s (%s)', label,
                    ', '.join('{}={:.6f}'.format(l, r.loglik) for l, r in runs))

    theta = best.theta
    result = FitResult(theta, best.trace, best.n_iter, best.converged,
                       theta.npar(nu_estimated=config.estimates_nu,
                                  delta_estimated=config.estimates_delta),
                       label,
                       collections.OrderedDict((l, r.loglik) for l, r in runs))

    if config.se_louis:
        try:
            result.information, result.se = louis_information(
                theta, data, include_delta=config.estimates_delta)
        except NumericalError as e:
            logger.warning('Louis standard errors unavailable: %s', e)
    if config.se_numerical:
        try:
            result.se_numerical = numerical_hessian_se(
                theta, data, include_delta=config.estimates_delta)
        except NumericalError as e:
            logger.warning('numerical-Hessian standard errors unavailable: %s', e)
            result.se_numerical_error = str(e)
    if config.random_effects:
        result.random_effects = estimate_all_random_effects(theta, data)
    return result
