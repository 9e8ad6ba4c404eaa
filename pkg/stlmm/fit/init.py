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
Starting values: perturbed truth (a), normal LMM plus a Delta grid (b), a
capped SN fit (c), the hybrid of (b) and (c) (d), and all of b-d (e).
"""

import logging

import numpy as np

from stlmm.common.exceptions import ModelError, NonConvergenceError, StlmmError
from stlmm.common.util import floor_eigenvalues, symmetrize
from stlmm.fit.config import INIT_STRATEGIES, normalize_strategy
from stlmm.fit.loop import run_ecme
from stlmm.model.likelihood import loglik
from stlmm.model.theta import Theta

logger = logging.getLogger(__name__)

PERTURB_SD = 0.05
PERTURB_ATTEMPTS = 50


def _ols_start(data):
    y, X, _ = data.stacked()
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    resid = y - X.dot(beta)
    q = data.q

    coefs = []
    rss = 0.0
    dof = 0
    for block in data.blocks:
        res_i = block.y - block.X.dot(beta)
        if block.n <= q:
            continue
        c, _, rank, _ = np.linalg.lstsq(block.Z, res_i, rcond=None)
        if rank < q:
            continue
        coefs.append(c)
        rss += float(np.sum((res_i - block.Z.dot(c)) ** 2))
        dof += block.n - q
    total_var = float(np.var(resid)) if resid.size > 1 else 1.0
    if total_var <= 0:
        total_var = 1.0
    sigma2 = rss / dof if dof > 0 and rss > 0 else total_var

    if len(coefs) >= 2:
        D = np.atleast_2d(np.cov(np.array(coefs).T))
    else:
        D = total_var * np.eye(q)
    if not np.trace(D) > 0:
        D = sigma2 * np.eye(q)
    D = floor_eigenvalues(symmetrize(D), rel_floor=1e-3)
    return Theta(beta, sigma2, D, family='N')


def fit_normal_lmm(data, tolerance=1e-8, max_iter=2000):
    """
    Gaussian LMM by EM from OLS beta, pooled within-subject residual
    variance and the covariance of per-subject Z-regression coefficients.

    :rtype: stlmm.model.theta.Theta
    """
    start = _ols_start(data)
    result = run_ecme(data, start, tolerance, max_iter, label='normal LMM')
    return result.theta


def delta_grid_scan(data, base, grid, passes=2):
    """
    Coordinate scan of the free Delta entries over grid * sd(b_j), the
    other parameters held at `base`.
    """
    sd = np.sqrt(np.diag(base.D))
    best = base
    best_ll = loglik(base, data)
    for _ in range(passes):
        for i, j in base.delta_index():
            for v in grid:
                value = v * sd[i]
                if best.Delta[i, j] == value:
                    continue
                delta = best.Delta.copy()
                delta[i, j] = value
                try:
                    cand = best.replace(Delta=delta)
                    ll = loglik(cand, data)
                except StlmmError:
                    continue
                if ll > best_ll:
                    best, best_ll = cand, ll
    logger.debug('Delta grid scan: loglik %.10g, Delta=%s', best_ll, best.Delta.tolist())
    return best


def perturb(theta, seed=None):
    """theta* + N(0, (0.05 max(1, |theta_j|))^2) noise, redrawn until valid."""
    rng = np.random.default_rng(seed)
    x = theta.to_vector()
    scale = PERTURB_SD * np.maximum(1.0, np.abs(x))
    for _ in range(PERTURB_ATTEMPTS):
        try:
            return theta.from_vector(x + scale * rng.standard_normal(x.shape))
        except ModelError:
            continue
    logger.warning('could not perturb the true values into a valid start; using them as is')
    return theta


def _cast(theta, config, r):
    delta = None
    if config.skewed:
        delta = theta.Delta if theta.Delta.shape == (theta.q, r) else np.zeros((theta.q, r))
        if config.structure == 'sdb':
            delta = np.diag(np.diag(delta))
    return Theta(theta.beta, theta.sigma2, theta.D, Delta=delta, nu=config.nu_for_start(),
                 family=config.family, structure=config.structure)


def _skewed_start(base, config, r, family, nu):
    return Theta(base.beta, base.sigma2, base.D, Delta=np.zeros((base.q, r)), nu=nu,
                 family=family, structure=config.structure)


def _strategy_b(data, config, normal, r):
    nu0 = config.nu_for_start()
    if not config.skewed or r == 0:
        return Theta(normal.beta, normal.sigma2, normal.D, nu=nu0, family=config.family)
    start = _skewed_start(normal, config, r, config.family, nu0)
    if config.fix_delta:
        return start
    return delta_grid_scan(data, start, config.delta_grid, config.grid_passes)


def _strategy_c(data, config, normal, r):
    sn_start = delta_grid_scan(data, _skewed_start(normal, config, r, 'SN', np.inf),
                               config.delta_grid, config.grid_passes)
    try:
        sn = run_ecme(data, sn_start, config.tolerance, config.sn_warmstart_iter,
                      fix_delta=config.fix_delta, label='SN warm start').theta
    except NonConvergenceError as e:
        if e.theta is None:
            raise
        logger.warning('SN warm start stopped early: %s', e)
        sn = e.theta
    return Theta(sn.beta, sn.sigma2, sn.D, Delta=sn.Delta, nu=config.nu_for_start(),
                 family=config.family, structure=config.structure)


def initialize(strategy, data, config):
    """
    Candidate starting values for `strategy`.

    :param strategy: letter a-e or its label
    :param data: the longitudinal data
    :type data: stlmm.model.data.LongDataset
    :param config: fit settings
    :type config: stlmm.fit.config.FitConfig
    :return: list of (label, Theta)
    """
    strategy = normalize_strategy(strategy)
    r = config.rank_for(data.q)

    if strategy == 'a':
        truth = config.true_theta
        if truth is None:
            raise ValueError('init strategy a (true-values) needs the generating parameters')
        start = perturb(_cast(truth, config, r), config.seed)
        return [(INIT_STRATEGIES['a'], start)]

    normal = fit_normal_lmm(data, config.normal_tolerance, config.normal_max_iter)
    start_b = _strategy_b(data, config, normal, r)
    if not config.skewed or r == 0:
        return [(INIT_STRATEGIES['b'], start_b)]
    if strategy == 'b':
        return [(INIT_STRATEGIES['b'], start_b)]

    start_c = _strategy_c(data, config, normal, r)
    if strategy == 'c':
        return [(INIT_STRATEGIES['c'], start_c)]
    start_d = start_b.replace(D=start_c.D, Delta=start_c.Delta)
    if strategy == 'd':
        return [(INIT_STRATEGIES['d'], start_d)]
    return [(INIT_STRATEGIES['b'], start_b),
            (INIT_STRATEGIES['c'], start_c),
            (INIT_STRATEGIES['d'], start_d)]
