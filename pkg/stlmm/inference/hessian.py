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
Standard errors from a finite-difference Hessian of the marginal
log-likelihood in theta* (nu held at its estimate).
"""

import collections
import logging

import numdifftools as nd
import numpy as np
from scipy import linalg

from stlmm.common.exceptions import NumericalError, StlmmError
from stlmm.model.likelihood import loglik

logger = logging.getLogger(__name__)

HESSIAN_STEP = 1e-4


def numeric_hessian(fn, x, scale=None, step=HESSIAN_STEP):
    """
    Central-difference Hessian of `fn` at `x`, taken in coordinates
    z = (x' - x) / scale with a fixed step in z.
    """
    x = np.asarray(x, dtype=float)
    scale = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)

    def scaled(z):
        return fn(x + z * scale)

    h = nd.Hessian(scaled, step=step, method='central')(np.zeros_like(x))
    h = np.atleast_2d(h) / np.outer(scale, scale)
    return 0.5 * (h + h.T)


def numerical_hessian_se(theta, data, include_delta=True, step=HESSIAN_STEP):
    """
    SEs from the inverse negative Hessian of loglik at theta*, with a
    per-coordinate step of step * max(1, |theta_j|).

    :return: OrderedDict name -> SE
    """
    names = theta.names(with_nu=False)
    x0 = theta.to_vector()
    free = len(names) if include_delta else len(names) - len(theta.delta_index())
    names = names[:free]

    def fn(v):
        full = x0.copy()
        full[:free] = v
        try:
            return loglik(theta.from_vector(full), data)
        except StlmmError:
            return np.nan

    x = x0[:free]
    h = numeric_hessian(fn, x, np.maximum(1.0, np.abs(x)), step)
    if not np.all(np.isfinite(h)):
        raise NumericalError('Hessian not negative definite (non-finite entries)')
    try:
        cov = linalg.cho_solve(linalg.cho_factor(-h, lower=True), np.eye(free))
    except linalg.LinAlgError:
        raise NumericalError('Hessian not negative definite')
    se = np.sqrt(np.diag(cov))
    return collections.OrderedDict(zip(names, se.tolist()))
