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
Louis empirical information I_e = sum_i s_i s_i^T from per-subject
expected complete-data scores, evaluated at the fitted theta*.
"""

import collections
import logging
import warnings

import numpy as np
from scipy import linalg

from stlmm.common.util import chol_inv, symmetrize
from stlmm.fit.cmsteps import subject_k_matrix
from stlmm.fit.estep import e_step_all

logger = logging.getLogger(__name__)

SCORE_CHECK = 1e-3


class ScoreVector(object):
    """Blocks of one subject's score: beta, sigma2, alpha (upper D), delta."""

    def __init__(self, beta, sigma2, alpha, delta):
        self.beta = beta
        self.sigma2 = sigma2
        self.alpha = alpha
        self.delta = delta

    @property
    def vector(self):
        return np.concatenate([self.beta, [self.sigma2], self.alpha, self.delta])

    def __len__(self):
        return self.vector.shape[0]


def subject_scores(theta, block, moments, d_inv=None, include_delta=True):
    """
    Expected complete-data score of one subject.

    :param moments: E-step moments of this subject at theta
    :type moments: stlmm.fit.estep.EStepMoments
    :rtype: ScoreVector
    """
    if d_inv is None:
        d_inv = chol_inv(theta.D_chol)
    m = moments
    s2 = theta.sigma2
    resid = block.y - block.X.dot(theta.beta)
    zub = block.Z.dot(m.ub_hat)

    s_beta = block.X.T.dot(m.u_hat * resid - zub) / s2
    bracket = (m.u_hat * resid.dot(resid) - 2.0 * resid.dot(zub)
               + np.sum(block.ZtZ * m.ub2_hat))
    s_sigma2 = -0.5 * block.n / s2 + 0.5 * bracket / (s2 * s2)

    k = subject_k_matrix(theta, m)
    g = -0.5 * d_inv + 0.5 * d_inv.dot(k).dot(d_inv)
    # off-diagonal entries of D appear twice
    s_alpha = np.array([g[i, j] if i == j else 2.0 * g[i, j] for i, j in theta.d_index()])

    if include_delta and theta.r:
        r = theta.r
        b = theta.b
        ones = np.ones(r)
        e_bg = b * np.outer(m.ub_hat, ones) + m.ubs_hat
        e_gg = (m.us2_hat + b * b * m.u_hat * np.outer(ones, ones)
                + b * (np.outer(ones, m.us_hat) + np.outer(m.us_hat, ones)))
        grad = d_inv.dot(e_bg - theta.Delta.dot(e_gg))
        s_delta = np.array([grad[i, j] for i, j in theta.delta_index()])
    else:
        s_delta = np.zeros(0)
    return ScoreVector(s_beta, s_sigma2, s_alpha, s_delta)


def information_names(theta, include_delta=True):
    names = theta.names(with_nu=False)
    if not include_delta:
        names = names[:len(names) - len(theta.delta_index())]
    return names


def louis_information(theta, data, include_delta=True, moments=None):
    """
    Empirical information of theta* and the standard errors it implies.

    :return: (I_e, OrderedDict name -> SE); the SE mapping is None when I_e
             is singular
    """
    names = information_names(theta, include_delta)
    dim = len(names)
    if data.N < dim:
        warnings.warn('{} subjects for {} parameters: the empirical information may be '
                      'singular'.format(data.N, dim))
    if moments is None:
        moments = e_step_all(theta, data)
    d_inv = chol_inv(theta.D_chol)

    scores = np.array([subject_scores(theta, block, m, d_inv, include_delta).vector
                       for block, m in zip(data.blocks, moments)])
    info = symmetrize(scores.T.dot(scores))

    total = scores.sum(axis=0)
    typical = np.mean(np.abs(scores), axis=0)
    limit = SCORE_CHECK * np.sqrt(data.N) * typical
    off = [n for n, t, l in zip(names, total, limit) if abs(t) > l]
    if off:
        logger.warning('score sums not near zero for %s; theta may not be at the maximum',
                       ', '.join(off))

    try:
        cov = linalg.cho_solve(linalg.cho_factor(info, lower=True), np.eye(dim))
    except linalg.LinAlgError:
        logger.warning('empirical information is singular; standard errors unavailable')
        return info, None
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return info, collections.OrderedDict(zip(names, se.tolist()))
