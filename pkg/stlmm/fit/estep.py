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
E-step: conditional moments of the latent (U_i, S_i, b_i) given y_i.
"""

import numpy as np
from scipy import linalg

from stlmm.common.exceptions import NumericalError, StlmmError, SubjectError
from stlmm.common.util import chol_inv, cholesky, symmetrize
from stlmm.dist.mvdist import mvt_cdf
from stlmm.dist.truncated import TruncTSpec, trunc_t_mean_and_second_moment
from stlmm.model.likelihood import SubjectGeometry

_MIN_CDF = 1e-300


class EStepMoments(object):
    """
    Conditional expectations for one subject: u_hat = E[U], us_hat = E[U S],
    us2_hat = E[U S S^T], ub_hat = E[U b], ubs_hat = E[U b S^T],
    ub2_hat = E[U b b^T], plus the auxiliary q_i, r_i, M_i and d_i.
    """

    def __init__(self, u_hat, us_hat, us2_hat, ub_hat, ubs_hat, ub2_hat, q, r, M, d):
        self.u_hat = u_hat
        self.us_hat = us_hat
        self.us2_hat = us2_hat
        self.ub_hat = ub_hat
        self.ubs_hat = ubs_hat
        self.ub2_hat = ub2_hat
        self.q = q
        self.r = r
        self.M = M
        self.d = d


class RandomEffectsGeometry(object):
    """M_i = (D^-1 + Z_i^T Z_i / sigma2)^-1 and M_i D^-1 Delta for one subject."""

    def __init__(self, block, theta, d_inv=None):
        if d_inv is None:
            d_inv = chol_inv(theta.D_chol)
        self.d_inv = d_inv
        self.M = chol_inv(cholesky(d_inv + block.ZtZ / theta.sigma2, 'M'))
        self.m_dinv = self.M.dot(d_inv)
        self.m_dinv_delta = self.m_dinv.dot(theta.Delta)

    def conditional_center(self, block, theta, nu):
        """r_i = b Delta 1_r + M_i Z_i^T (y_i - mu_i) / sigma2."""
        b = theta.b
        resid = block.y - block.X.dot(theta.beta) - b * block.Z.dot(theta.Delta.sum(axis=1))
        return theta.location + self.M.dot(block.Z.T.dot(resid)) / theta.sigma2


def _cdf_ratio(q_arg, lam, nu, n, d):
    num = mvt_cdf(q_arg * np.sqrt((nu + n + 2.0) / (nu + d)), lam, nu + n + 2.0)
    den = mvt_cdf(q_arg * np.sqrt((nu + n) / (nu + d)), lam, nu + n)
    if not den > _MIN_CDF:
        raise NumericalError('orthant probability underflow in E-step ({:.3g})'.format(den))
    return num / den


def e_step(theta, block, d_inv=None):
    """
    Conditional moments for one subject at theta.

    :param theta: current parameters
    :type theta: stlmm.model.theta.Theta
    :param block: the subject
    :type block: stlmm.model.data.SubjectBlock
    :param d_inv: optional precomputed D^-1
    :rtype: EStepMoments
    """
    nu = theta.nu
    n = block.n
    r = theta.r
    geo = SubjectGeometry(block, theta)
    z = geo.whitened_residual(nu)
    d = float(z.dot(z))
    q_arg = geo.a.T.dot(z)

    if np.isinf(nu):
        u_hat = 1.0
    elif r:
        u_hat = (nu + n) / (nu + d) * _cdf_ratio(q_arg, geo.lam, nu, n, d)
    else:
        u_hat = (nu + n) / (nu + d)

    if r:
        if np.isinf(nu):
            spec = TruncTSpec(q_arg, geo.lam)
        else:
            spec = TruncTSpec(q_arg, (nu + d) / (nu + n + 2.0) * geo.lam, nu + n + 2.0)
        ew, eww = trunc_t_mean_and_second_moment(spec)
        us_hat = u_hat * ew
        us2_hat = symmetrize(u_hat * eww)
    else:
        us_hat = np.zeros(0)
        us2_hat = np.zeros((0, 0))

    reg = RandomEffectsGeometry(block, theta, d_inv)
    r_i = reg.conditional_center(block, theta, nu)
    ub_hat = r_i * u_hat + reg.m_dinv_delta.dot(us_hat)
    ubs_hat = np.outer(r_i, us_hat) + reg.m_dinv_delta.dot(us2_hat)
    ub2_hat = symmetrize(reg.M + np.outer(ub_hat, r_i)
                         + ubs_hat.dot(theta.Delta.T).dot(reg.m_dinv.T))
    return EStepMoments(u_hat, us_hat, us2_hat, ub_hat, ubs_hat, ub2_hat,
                        q_arg, r_i, reg.M, d)


def e_step_all(theta, data):
    """E-step moments of every subject, ascending subject id order."""
    d_inv = chol_inv(theta.D_chol)
    out = []
    for block in data.blocks:
        try:
            out.append(e_step(theta, block, d_inv))
        except SubjectError:
            raise
        except (StlmmError, linalg.LinAlgError) as e:
            raise SubjectError(block.id, e)
    return out
