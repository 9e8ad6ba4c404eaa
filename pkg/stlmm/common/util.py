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

import numpy as np
from scipy import linalg

from stlmm.common.exceptions import ModelError

# Relative jitter tried once before a factorization is declared failed.
CHOLESKY_JITTER = 1e-10
SYMMETRY_TOL = 1e-10


def _cache(f):
    cache = dict()

    def wrapper(*args, **kwargs):
        key = (args, frozenset(kwargs.items()))

        if key in cache:
            return cache[key]
        else:
            retval = f(*args, **kwargs)
            cache[key] = retval
            return retval

    wrapper.__name__ = f.__name__
    wrapper.__doc__ = f.__doc__
    return wrapper


def as_matrix(a, name='matrix'):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError('{} must be square, got shape {}'.format(name, a.shape))
    return a


def symmetrize(a):
    return 0.5 * (a + a.T)


def cholesky(a, name='covariance'):
    """
    Lower Cholesky factor of a symmetric positive-definite matrix.

    A failed factorization is retried once with a diagonal jitter of
    1e-10 * trace / p; a second failure raises ModelError.
    """
    a = as_matrix(a, name)
    if a.shape[0] == 0:
        return a.copy()
    scale = max(1.0, np.max(np.abs(a)))
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * scale:
        raise ModelError('{} not symmetric'.format(name))
    a = symmetrize(a)
    try:
        return linalg.cholesky(a, lower=True)
    except linalg.LinAlgError:
        pass
    p = a.shape[0]
    jitter = CHOLESKY_JITTER * max(np.trace(a), 0.0) / p
    if jitter > 0:
        try:
            return linalg.cholesky(a + jitter * np.eye(p), lower=True)
        except linalg.LinAlgError:
            pass
    raise ModelError('{} not positive definite'.format(name))


def chol_logdet(chol):
    return 2.0 * np.sum(np.log(np.diag(chol)))


def chol_solve(chol, b):
    return linalg.cho_solve((chol, True), b)


def chol_inv(chol):
    p = chol.shape[0]
    return symmetrize(linalg.cho_solve((chol, True), np.eye(p)))


def whiten(chol, x):
    """L^{-1} x for the lower factor L; x may hold points in its last axis."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return linalg.solve_triangular(chol, x, lower=True)
    return linalg.solve_triangular(chol, x.T, lower=True).T


def is_positive_definite(a):
    try:
        linalg.cholesky(symmetrize(np.asarray(a, dtype=float)), lower=True)
        return True
    except linalg.LinAlgError:
        return False


def floor_eigenvalues(a, rel_floor=1e-8):
    """Project a symmetric matrix onto the SPD cone by flooring its spectrum."""
    a = symmetrize(a)
    q = a.shape[0]
    vals, vecs = linalg.eigh(a)
    floor = rel_floor * max(np.trace(a), 0.0) / q
    if floor <= 0:
        floor = rel_floor
    if np.min(vals) >= floor:
        return a
    vals = np.maximum(vals, floor)
    return symmetrize((vecs * vals).dot(vecs.T))
