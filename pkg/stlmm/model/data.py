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

from stlmm.common.exceptions import ModelError


class SubjectBlock(object):
    """
    One subject's response vector `y` (n_i), fixed-effects design `X`
    (n_i x p) and random-effects design `Z` (n_i x q).
    """

    def __init__(self, id, y, X, Z):
        self.id = id
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        self.X = np.asarray(X, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        if self.Z.ndim == 1:
            self.Z = self.Z.reshape(-1, 1)
        n = self.y.shape[0]
        if n < 1:
            raise ModelError('subject {} has no observations'.format(id))
        if self.X.shape[0] != n or self.Z.shape[0] != n:
            raise ModelError('subject {}: y has {} rows, X {}, Z {}'.format(
                id, n, self.X.shape[0], self.Z.shape[0]))
        self.XtX = self.X.T.dot(self.X)
        self.ZtZ = self.Z.T.dot(self.Z)
        self.XtZ = self.X.T.dot(self.Z)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Z.shape[1]


def _id_key(subject_id):
    # numeric ids sort numerically, everything else lexically after them
    try:
        return (0, float(subject_id), str(subject_id))
    except (TypeError, ValueError):
        return (1, 0.0, str(subject_id))


class LongDataset(object):
    """
    Subject blocks of a longitudinal data set, kept in ascending subject id
    order so that every reduction over subjects has a fixed summation order.
    """

    def __init__(self, blocks, response='y', fixed=None, random=None, subject='subject'):
        blocks = list(blocks)
        if not blocks:
            raise ModelError('data set has no subjects')
        ids = [b.id for b in blocks]
        if len(set(ids)) != len(ids):
            raise ModelError('subject ids are not unique')
        p, q = blocks[0].p, blocks[0].q
        for b in blocks:
            if b.p != p or b.q != q:
                raise ModelError('subject {} has p={}, q={}; expected p={}, q={}'.format(
                    b.id, b.p, b.q, p, q))
        self.blocks = sorted(blocks, key=lambda b: _id_key(b.id))
        self.response = response
        self.fixed = list(fixed) if fixed is not None else ['x{}'.format(j) for j in range(p)]
        self.random = list(random) if random is not None else ['z{}'.format(j) for j in range(q)]
        self.subject = subject

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def N(self):
        return len(self.blocks)

    @property
    def p(self):
        return self.blocks[0].p

    @property
    def q(self):
        return self.blocks[0].q

    @property
    def n_total(self):
        return sum(b.n for b in self.blocks)

    @property
    def ids(self):
        return [b.id for b in self.blocks]

    def stacked(self):
        """(y, X, Z) stacked over subjects."""
        return (np.concatenate([b.y for b in self.blocks]),
                np.vstack([b.X for b in self.blocks]),
                np.vstack([b.Z for b in self.blocks]))
