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
The ECME iteration: E-step, CM(beta, sigma2), CM(D, Delta), CM(nu) on the
actual likelihood, until the likelihood-ratio criterion is met.
"""

import logging

import numpy as np

from stlmm.common.exceptions import ModelError, NonConvergenceError, NumericalError
from stlmm.fit.cmsteps import cm_update_D_Delta, cm_update_beta_sigma2, update_nu
from stlmm.fit.estep import e_step_all
from stlmm.model.likelihood import NuProfile, loglik

logger = logging.getLogger(__name__)

ABSOLUTE_FLOOR = 1e-10
ASCENT_SLACK = 1e-8


class LoopResult(object):

    def __init__(self, theta, trace, n_iter, converged):
        self.theta = theta
        self.trace = trace
        self.n_iter = n_iter
        self.converged = converged

    @property
    def loglik(self):
        return self.trace[-1]


def has_converged(ll_old, ll_new, tolerance):
    if abs(ll_new - ll_old) < ABSOLUTE_FLOOR:
        return True
    return ll_old != 0 and abs(ll_new / ll_old - 1.0) < tolerance


def run_ecme(data, start, tolerance, max_iter, nu_grid=None, estimate_nu=True,
             fix_delta=False, label='fit'):
    """
    Iterate from `start` until convergence or `max_iter`.

    :param data: the longitudinal data
    :type data: stlmm.model.data.LongDataset
    :param start: starting parameters; its family drives every step
    :type start: stlmm.model.theta.Theta
    :param nu_grid: candidate nu values; unused for N and SN
    :param estimate_nu: run the nu step (T and ST only)
    :param fix_delta: keep Delta at its start value
    :rtype: LoopResult
    """
    theta = start
    ll = loglik(theta, data)
    if not np.isfinite(ll):
        raise NonConvergenceError('{}: log-likelihood at the start is not finite'.format(label), theta)
    trace = [ll]
    heavy = start.family in ('T', 'ST')
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        try:
            moments = e_step_all(theta, data)
            beta, sigma2 = cm_update_beta_sigma2(theta, data, moments)
            D, Delta = cm_update_D_Delta(theta, data, moments, fix_delta=fix_delta)
            theta_star = theta.replace(beta=beta, sigma2=sigma2, D=D, Delta=Delta)
            profile = NuProfile(theta_star, data)
            if heavy and estimate_nu and nu_grid:
                nu = update_nu(theta_star, data, nu_grid, warm_start=theta.nu, profile=profile)
                theta_new = theta_star.replace(nu=nu)
            else:
                theta_new = theta_star
            ll_new = profile(theta_new.nu)
        except (NumericalError, ModelError) as e:
            raise NonConvergenceError('{}: iteration {} failed: {}'.format(label, n_iter, e), theta)
        if not np.isfinite(ll_new):
            raise NonConvergenceError('{}: log-likelihood not finite at iteration {}'.format(
                label, n_iter), theta)

        if ll_new < ll - ASCENT_SLACK * abs(ll):
            logger.warning('%s: log-likelihood decreased at iteration %d: %.10g -> %.10g',
                           label, n_iter, ll, ll_new)
        logger.debug('%s: iteration %d loglik %.10g', label, n_iter, ll_new)
        trace.append(ll_new)
        done = has_converged(ll, ll_new, tolerance)
        theta, ll = theta_new, ll_new
        if done:
            converged = True
            break

    if converged:
        logger.info('%s: converged after %d iterations, loglik %.10g', label, n_iter, ll)
    else:
        logger.info('%s: stopped at max_iter=%d without convergence, loglik %.10g', label, max_iter, ll)
    return LoopResult(theta, trace, n_iter, converged)
