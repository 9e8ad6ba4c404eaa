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
Empirical Bayes random effects E[b_i | y_i, theta].
"""

import collections

import numpy as np
from scipy import linalg

from stlmm.common.exceptions import StlmmError, SubjectError
from stlmm.common.util import chol_inv
from stlmm.dist.truncated import TruncTSpec, trunc_t_mean_and_second_moment
from stlmm.fit.estep import RandomEffectsGeometry
from stlmm.model.likelihood import SubjectGeometry


def estimate_random_effects(theta, block, d_inv=None):
    """
    b(nu) Delta 1_r + M Z^T (y - mu) / sigma2 + M D^-1 Delta E[W*], with
    W* ~ TT_r(q_i, ((nu + d_i)/(nu + n_i)) Lambda_i, nu + n_i) on the
    positive orthant (truncated normal for nu = inf).
    """
    nu = theta.nu
    reg = RandomEffectsGeometry(block, theta, d_inv)
    center = reg.conditional_center(block, theta, nu)
    if theta.r == 0:
        return center
    geo = SubjectGeometry(block, theta)
    z = geo.whitened_residual(nu)
    d = float(z.dot(z))
    q_arg = geo.a.T.dot(z)
    if np.isinf(nu):
        spec = TruncTSpec(q_arg, geo.lam)
    else:
        n = block.n
        spec = TruncTSpec(q_arg, (nu + d) / (nu + n) * geo.lam, nu + n)
    ew, _ = trunc_t_mean_and_second_moment(spec)
    return center + reg.m_dinv_delta.dot(ew)


def estimate_all_random_effects(theta, data):
    """subject id -> estimated random effects, ascending id order."""
    d_inv = chol_inv(theta.D_chol)
    out = collections.OrderedDict()
    for block in data.blocks:
        try:
            out[block.id] = estimate_random_effects(theta, block, d_inv)
        except (StlmmError, linalg.LinAlgError) as e:
            raise SubjectError(block.id, e)
    return out
