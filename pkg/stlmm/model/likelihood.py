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
Observed-data log-likelihood of the ST-LMM.

The marginal law of subject i is
ST_{n_i,r}(X_i beta + b(nu) Z_i Delta 1_r, Psi_i, Z_i Delta, nu) with
Psi_i = Z_i D Z_i^T + sigma2 I. Everything except the location shift and the
t kernel is free of nu, so `SubjectGeometry` factors Sigma_i once and
evaluates the density for any nu cheaply.
"""

import logging

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from stlmm.common.exceptions import ModelError, StlmmError, SubjectError
from stlmm.common.util import chol_logdet, cholesky, symmetrize
from stlmm.dist.mvdist import mvt_cdf
from stlmm.dist.skew import CfustParams, affine_transform, b_constant, cfust_logpdf

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


def _check_dims(block, theta):
    if block.p != theta.p or block.q != theta.q:
        raise ModelError('subject {} has p={}, q={}; theta has p={}, q={}'.format(
            block.id, block.p, block.q, theta.p, theta.q))


class SubjectGeometry(object):
    """
    The nu-free pieces of one subject's marginal law: the Cholesky factor L
    of Sigma_i, A = L^-1 Z_i Delta, Lambda_i = I - A^T A, and the whitened
    residual pieces e0 = L^-1 (y - X beta) and g = L^-1 Z_i Delta 1_r.
    """

    def __init__(self, block, theta):
        _check_dims(block, theta)
        self.block = block
        self.theta = theta
        n = block.n
        Z = block.Z
        self.zdelta = Z.dot(theta.Delta)
        self.psi = symmetrize(Z.dot(theta.D).dot(Z.T) + theta.sigma2 * np.eye(n))
        self.sigma = symmetrize(self.psi + self.zdelta.dot(self.zdelta.T))
        self.chol = cholesky(self.sigma, 'Sigma')
        self.logdet = chol_logdet(self.chol)
        self.xb = block.X.dot(theta.beta)
        self.a = linalg.solve_triangular(self.chol, self.zdelta, lower=True)
        self.lam = symmetrize(np.eye(theta.r) - self.a.T.dot(self.a))
        self.e0 = linalg.solve_triangular(self.chol, block.y - self.xb, lower=True)
        self.g = linalg.solve_triangular(self.chol, self.zdelta.sum(axis=1), lower=True)

    def whitened_residual(self, nu):
        """L^-1 (y - mu_i(nu))."""
        b = b_constant(nu) if self.theta.r else 0.0
        return self.e0 - b * self.g

    def mahalanobis(self, nu):
        z = self.whitened_residual(nu)
        return float(z.dot(z))

    def shape_argument(self, nu):
        """q_i = Delta^T Z_i^T Sigma_i^-1 (y - mu_i)."""
        return self.a.T.dot(self.whitened_residual(nu))

    def logpdf(self, nu):
        n = self.block.n
        r = self.theta.r
        z = self.whitened_residual(nu)
        d = float(z.dot(z))
        arg = self.a.T.dot(z)
        if np.isinf(nu):
            base = -0.5 * (n * _LOG_2PI + self.logdet + d)
            orth = mvt_cdf(arg, self.lam, np.inf) if r else 1.0
        else:
            base = (gammaln(0.5 * (nu + n)) - gammaln(0.5 * nu)
                    - 0.5 * n * np.log(nu * np.pi) - 0.5 * self.logdet
                    - 0.5 * (nu + n) * np.log1p(d / nu))
            orth = mvt_cdf(arg * np.sqrt((nu + n) / (nu + d)), self.lam, nu + n) if r else 1.0
        with np.errstate(divide='ignore'):
            return r * np.log(2.0) + base + np.log(orth)


def subject_marginal_logpdf(block, theta):
    """
    log f(y_i | theta) from the closed-form marginal density.

    :param block: one subject
    :type block: stlmm.model.data.SubjectBlock
    :param theta: model parameters
    :type theta: stlmm.model.theta.Theta
    :rtype: float
    """
    return SubjectGeometry(block, theta).logpdf(theta.nu)


def joint_law(theta, n):
    """Law of (b_i, eps_i) for a subject with n observations."""
    q, r = theta.q, theta.r
    mu = np.concatenate([theta.location, np.zeros(n)])
    omega = linalg.block_diag(theta.D, theta.sigma2 * np.eye(n))
    delta = np.vstack([theta.Delta, np.zeros((n, r))])
    return CfustParams(mu, omega, delta, theta.nu)


def subject_marginal_logpdf_joint(block, theta):
    """
    log f(y_i | theta) through the joint (b_i, eps_i) law pushed through
    y_i = X_i beta + [Z_i  I] (b_i, eps_i).
    """
    _check_dims(block, theta)
    joint = joint_law(theta, block.n)
    A = np.hstack([block.Z, np.eye(block.n)])
    law = affine_transform(joint, A, block.X.dot(theta.beta))
    return float(cfust_logpdf(block.y, law))


def _subject_terms(theta, data, fn):
    out = []
    for block in data.blocks:
        try:
            out.append(fn(block))
        except SubjectError:
            raise
        except (StlmmError, linalg.LinAlgError) as e:
            raise SubjectError(block.id, e)
    return out


def loglik(theta, data):
    """Sum of subject log densities in ascending subject id order."""
    terms = _subject_terms(theta, data, lambda block: subject_marginal_logpdf(block, theta))
    return float(np.sum(terms))


def geometries(theta, data):
    return _subject_terms(theta, data, lambda block: SubjectGeometry(block, theta))


class NuProfile(object):
    """
    nu -> loglik((theta*, nu)) with the per-subject geometry built once and
    every evaluated value memoized.
    """

    def __init__(self, theta, data):
        self.theta = theta
        self._geometries = geometries(theta, data)
        self.values = {}

    def __call__(self, nu):
        nu = float(nu)
        if nu not in self.values:
            terms = []
            for geo in self._geometries:
                try:
                    terms.append(geo.logpdf(nu))
                except StlmmError as e:
                    raise SubjectError(geo.block.id, e)
            total = float(np.sum(terms))
            self.values[nu] = total
            logger.log(5, 'profile loglik nu=%s: %.10g', nu, total)
        return self.values[nu]


def profile_loglik(theta, data, nus):
    """loglik for each nu in `nus`, the rest of theta held fixed."""
    profile = NuProfile(theta, data)
    return np.array([profile(nu) for nu in nus])


def random_effects_law(theta):
    """ST_{q,r}(b(nu) Delta 1_r, D, Delta, nu), the law of b_i."""
    return CfustParams(theta.location, theta.D, theta.Delta, theta.nu)
