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
Bivariate density grids of CFUST laws for external contour plotting.
"""

import numpy as np

from stlmm.common.exceptions import ModelError
from stlmm.dist.skew import cfust_mean, cfust_moments, cfust_pdf

DEFAULT_SIZE = 101
DEFAULT_SPAN = 4.0


class DensityGrid(object):
    """density[i, j] is the pdf at (x[i], y[j])."""

    def __init__(self, x, y, density):
        self.x = x
        self.y = y
        self.density = density

    @property
    def cell_area(self):
        return (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])

    def integral(self):
        return float(self.density.sum() * self.cell_area)


def _center_and_scale(params):
    if params.nu > 2:
        moments = cfust_moments(params)
        return moments.mean, np.sqrt(np.diag(moments.variance))
    center = cfust_mean(params) if params.nu > 1 else params.mu
    return center, np.sqrt(np.diag(params.sigma))


def contour_grid(params, size=DEFAULT_SIZE, span=DEFAULT_SPAN, bounds=None):
    """
    Evaluate the density of a bivariate CFUST law on a size x size grid.

    :param params: the law
    :type params: stlmm.dist.skew.CfustParams
    :param size: points per axis, >= 2
    :param span: half-width in marginal standard deviations around the mean
    :param bounds: optional ((x_lo, x_hi), (y_lo, y_hi)) replacing span
    :rtype: DensityGrid
    """
    if params.p != 2:
        raise ModelError('density grids need a bivariate law, got p={}'.format(params.p))
    if size < 2:
        raise ValueError('size={} must be >= 2'.format(size))
    if bounds is None:
        center, sd = _center_and_scale(params)
        bounds = [(center[k] - span * sd[k], center[k] + span * sd[k]) for k in range(2)]
    x = np.linspace(bounds[0][0], bounds[0][1], size)
    y = np.linspace(bounds[1][0], bounds[1][1], size)
    xx, yy = np.meshgrid(x, y, indexing='ij')
    points = np.column_stack([xx.ravel(), yy.ravel()])
    density = np.asarray(cfust_pdf(points, params)).reshape(size, size)
    return DensityGrid(x, y, density)
