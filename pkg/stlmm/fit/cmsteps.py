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
Conditional maximization steps: closed-form (beta, sigma2) and (D, Delta)
updates from E-step moments, and the integer nu search on the actual
log-likelihood.
"""

import logging

import numpy as np
from scipy import linalg

from stlmm.common.exceptions import NumericalError
from stlmm.common.util import chol_inv, cholesky, floor_eigenvalues, symmetrize
from stlmm.model.likelihood import NuProfile

logger = logging.getLogger(__name__)

# consecutive decreases that end an outward nu scan
NU_PATIENCE = 3


def cm_update_beta_sigma2(theta, data, moments):
    """
    beta' = (sum u X^T X)^-1 sum X^T (u y - Z ub), then sigma2' with beta'
    plugged in.
    """
    p = theta.p
    lhs = np.zeros((p, p))
    rhs = np.zeros(p)
    for block, m in zip(data.blocks, moments):
        lhs += m.u_hat * block.XtX
        rhs += block.X.T.dot(m.u_hat * block.y - block.Z.dot(m.ub_hat))
    try:
        beta = linalg.cho_solve(linalg.cho_factor(symmetrize(lhs), lower=True), rhs)
    except linalg.LinAlgError:
        raise NumericalError('rank-deficient fixed-effects design')
    if not np.all(np.isfinite(beta)):
        raise NumericalError('rank-deficient fixed-effects design')

    total = 0.0
    n_total = 0
    for block, m in zip(data.blocks, moments):
        resid = block.y - block.X.dot(beta)
        zr = block.Z.T.dot(resid)
        total += (m.u_hat * resid.dot(resid) - 2.0 * zr.dot(m.ub_hat)
                  + np.sum(block.ZtZ * m.ub2_hat))
        n_total += block.n
    sigma2 = total / n_total
    if not sigma2 > 0:
        raise NumericalError('sigma2 update is not positive ({:.3g})'.format(sigma2))
    return beta, sigma2


def subject_k_matrix(theta, m):
    """
    E[U (b - c - Delta S)(b - c - Delta S)^T | y_i] with c = b(nu) Delta 1_r:
    the per-subject contribution to the D update.
    """
    delta = theta.Delta
    c = theta.location
    ds = delta.dot(m.us_hat)
    k = (m.ub2_hat
         - np.outer(m.ub_hat, c) - np.outer(c, m.ub_hat)
         - m.ubs_hat.dot(delta.T) - delta.dot(m.ubs_hat.T)
         + m.u_hat * np.outer(c, c)
         + np.outer(c, ds) + np.outer(ds, c)
         + delta.dot(m.us2_hat).dot(delta.T))
    return symmetrize(k)


def _delta_normal_equations(theta, moments):
    q, r = theta.q, theta.r
    b = theta.b
    ones = np.ones(r)
    g_bg = np.zeros((q, r))
    g_gg = np.zeros((r, r))
    for m in moments:
        g_bg += b * np.outer(m.ub_hat, ones) + m.ubs_hat
        g_gg += (m.us2_hat + b * b * m.u_hat * np.outer(ones, ones)
                 + b * (np.outer(ones, m.us_hat) + np.outer(m.us_hat, ones)))
    return g_bg, symmetrize(g_gg)


def cm_update_D_Delta(theta, data, moments, fix_delta=False):
    """
    D' = N^-1 sum K_i (eigenvalue-floored) and Delta' from its normal
    equations; the sdb structure is solved with the diagonal constraint.
    """
    N = len(data.blocks)
    k_sum = np.zeros((theta.q, theta.q))
    for m in moments:
        k_sum += subject_k_matrix(theta, m)
    D = floor_eigenvalues(symmetrize(k_sum / N))

    if theta.r == 0 or fix_delta:
        return D, theta.Delta.copy()

    g_bg, g_gg = _delta_normal_equations(theta, moments)
    if theta.structure == 'sdb':
        d_inv = chol_inv(cholesky(D, 'D'))
        lhs = d_inv * g_gg
        rhs = np.diag(d_inv.dot(g_bg))
        try:
            delta = np.diag(linalg.solve(lhs, rhs, assume_a='sym'))
        except (linalg.LinAlgError, ValueError):
            raise NumericalError('skewness update degenerate')
    else:
        try:
            chol = linalg.cho_factor(g_gg, lower=True)
        except linalg.LinAlgError:
            raise NumericalError('skewness update degenerate')
        delta = linalg.cho_solve(chol, g_bg.T).T
    if not np.all(np.isfinite(delta)):
        raise NumericalError('skewness update degenerate')
    return D, delta


def update_nu(theta_star, data, nu_grid, warm_start=None, exhaustive=False, profile=None):
    """
    Grid argmax of nu -> loglik((theta*, nu)); ties go to the smaller nu.

    The scan starts at the grid point nearest `warm_start` and walks each
    way until the profile has decreased NU_PATIENCE times in a row.
    """
    grid = sorted(set(float(v) for v in nu_grid))
    if not grid:
        raise ValueError('nu_grid must not be empty')
    if len(grid) == 1:
        return grid[0]
    if profile is None:
        profile = NuProfile(theta_star, data)

    if exhaustive:
        visited = grid
    else:
        if warm_start is None:
            warm_start = theta_star.nu
        if np.isinf(warm_start):
            start = len(grid) - 1
        else:
            start = int(np.argmin([abs(v - warm_start) for v in grid]))
        visited = [grid[start]]
        for step in (1, -1):
            prev = profile(grid[start])
            drops = 0
            i = start + step
            while 0 <= i < len(grid) and drops < NU_PATIENCE:
                val = profile(grid[i])
                drops = drops + 1 if val < prev else 0
                prev = val
                visited.append(grid[i])
                i += step

    best, best_val = None, -np.inf
    for nu in sorted(visited):
        val = profile(nu)
        if val > best_val:
            best, best_val = nu, val
    if best is None:
        raise NumericalError('log-likelihood is not finite on the nu grid')
    logger.debug('nu update: %s (loglik %.10g, %d grid points visited)', best, best_val, len(visited))
    return best
