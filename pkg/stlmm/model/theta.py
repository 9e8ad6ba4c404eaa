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
The ST-LMM parameter vector theta = (beta, sigma2, D, Delta, nu) and its
packing into the free coordinates theta* = theta without nu.
"""

import collections

import numpy as np

from stlmm.common.exceptions import ModelError
from stlmm.common.util import as_matrix, cholesky
from stlmm.dist.skew import b_constant

FAMILIES = ('N', 'T', 'SN', 'ST')
STRUCTURES = ('full', 'sdb')

SDB_TOL = 1e-12


def _is_skewed(family):
    return family in ('SN', 'ST')


def _is_heavy(family):
    return family in ('T', 'ST')


class Theta(object):
    """
    ST-LMM parameters.

    :param beta: fixed effects, length p
    :param sigma2: error scale (Omega_i = sigma2 I)
    :param D: q x q random-effect scale, SPD
    :param Delta: q x r shape matrix; ignored (must be zero) for N and T
    :param nu: degrees of freedom, integer >= 2 or inf
    :param family: one of N, T, SN, ST
    :param structure: 'full' (any q x r Delta) or 'sdb' (diagonal, r = q)
    """

    def __init__(self, beta, sigma2, D, Delta=None, nu=None, family='ST', structure='full'):
        if family not in FAMILIES:
            raise ModelError('unknown family {}; expected one of {}'.format(family, ', '.join(FAMILIES)))
        if structure not in STRUCTURES:
            raise ModelError('unknown structure {}; expected one of {}'.format(
                structure, ', '.join(STRUCTURES)))
        self.family = family
        self.structure = structure

        self.beta = np.atleast_1d(np.asarray(beta, dtype=float)).copy()
        self.sigma2 = float(sigma2)
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ModelError('sigma2 must be > 0, got {}'.format(self.sigma2))
        self.D = as_matrix(D, 'D').copy()
        self.D_chol = cholesky(self.D, 'D')
        q = self.D.shape[0]

        if Delta is None or not _is_skewed(family):
            if Delta is not None and np.any(np.asarray(Delta, dtype=float) != 0.0):
                raise ModelError('family {} requires Delta = 0'.format(family))
            Delta = np.zeros((q, 0))
        Delta = np.asarray(Delta, dtype=float)
        if Delta.ndim == 1:
            Delta = Delta.reshape(q, -1)
        if Delta.shape[0] != q:
            raise ModelError('Delta has {} rows; D is {}x{}'.format(Delta.shape[0], q, q))
        self.Delta = Delta.copy()
        if structure == 'sdb' and _is_skewed(family):
            if self.Delta.shape[1] != q:
                raise ModelError('sdb structure requires r = q = {}, got r = {}'.format(q, self.Delta.shape[1]))
            off = self.Delta - np.diag(np.diag(self.Delta))
            if np.max(np.abs(off)) > SDB_TOL:
                raise ModelError('sdb structure requires a diagonal Delta')
            self.Delta = np.diag(np.diag(self.Delta))

        if nu is None:
            nu = 10.0 if _is_heavy(family) else np.inf
        nu = float(nu)
        if not _is_heavy(family) and not np.isinf(nu):
            raise ModelError('family {} requires nu = inf, got {}'.format(family, nu))
        if family == 'T' and np.isinf(nu):
            raise ModelError('family T requires a finite nu')
        if not nu > 1:
            raise ModelError('nu must be > 1, got {}'.format(nu))
        self.nu = nu

    @property
    def p(self):
        return self.beta.shape[0]

    @property
    def q(self):
        return self.D.shape[0]

    @property
    def r(self):
        return self.Delta.shape[1]

    @property
    def skew_rank(self):
        return self.r

    @property
    def b(self):
        """Centering constant b(nu); zero when there is no skewness."""
        return b_constant(self.nu) if self.r else 0.0

    @property
    def location(self):
        """b(nu) Delta 1_r, the location of the random effects."""
        return self.b * self.Delta.sum(axis=1)

    def replace(self, **kwargs):
        fields = dict(beta=self.beta, sigma2=self.sigma2, D=self.D, Delta=self.Delta,
                      nu=self.nu, family=self.family, structure=self.structure)
        for k, v in kwargs.items():
            if k not in fields:
                raise TypeError('unknown Theta field {}'.format(k))
            fields[k] = v
        if not _is_skewed(fields['family']):
            fields['Delta'] = None
        if not _is_heavy(fields['family']):
            fields['nu'] = np.inf
        return Theta(**fields)

    def delta_index(self):
        """Free (row, col) entries of Delta, column-major."""
        if self.structure == 'sdb':
            return [(j, j) for j in range(self.r)]
        return [(i, j) for j in range(self.r) for i in range(self.q)]

    def d_index(self):
        """Upper-triangle (row, col) entries of D, column-major."""
        return [(i, j) for j in range(self.q) for i in range(j + 1)]

    def names(self, with_nu=True):
        out = ['beta{}'.format(j) for j in range(self.p)]
        out.append('sigma2')
        out.extend('D{}{}'.format(i + 1, j + 1) for i, j in self.d_index())
        out.extend('Delta{}{}'.format(i + 1, j + 1) for i, j in self.delta_index())
        if with_nu and _is_heavy(self.family):
            out.append('nu')
        return out

    @property
    def dim(self):
        """Length of theta* (everything but nu)."""
        return self.p + 1 + self.q * (self.q + 1) // 2 + len(self.delta_index())

    def npar(self, nu_estimated=True, delta_estimated=True):
        n = self.p + 1 + self.q * (self.q + 1) // 2
        if delta_estimated:
            n += len(self.delta_index())
        if nu_estimated and _is_heavy(self.family):
            n += 1
        return n

    def to_vector(self):
        d = [self.D[i, j] for i, j in self.d_index()]
        delta = [self.Delta[i, j] for i, j in self.delta_index()]
        return np.concatenate([self.beta, [self.sigma2], d, delta])

    def from_vector(self, vec):
        """A new Theta with theta* taken from `vec` and nu kept."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ModelError('theta* vector has length {}, expected {}'.format(vec.shape, self.dim))
        p, q = self.p, self.q
        beta = vec[:p]
        sigma2 = vec[p]
        pos = p + 1
        D = np.zeros((q, q))
        for i, j in self.d_index():
            D[i, j] = D[j, i] = vec[pos]
            pos += 1
        Delta = np.zeros_like(self.Delta)
        for i, j in self.delta_index():
            Delta[i, j] = vec[pos]
            pos += 1
        return self.replace(beta=beta, sigma2=sigma2, D=D, Delta=Delta)

    def estimates(self):
        """Ordered name -> value mapping, nu included for T and ST."""
        out = collections.OrderedDict(zip(self.names(with_nu=False), self.to_vector().tolist()))
        if _is_heavy(self.family):
            out['nu'] = self.nu
        return out

    def __repr__(self):
        return 'Theta(family={}, structure={}, {})'.format(
            self.family, self.structure,
            ', '.join('{}={:.6g}'.format(k, v) for k, v in self.estimates().items()))
