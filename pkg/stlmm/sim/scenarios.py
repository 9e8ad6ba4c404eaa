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
Simulation scenarios: the illustrative random-effects laws (a)-(d) and the
two simulation studies, all on balanced five-visit designs.
"""

import collections

import numpy as np
import pandas as pd
from scipy import linalg

from stlmm.dist.skew import CfustParams, cfust_sample
from stlmm.model.data import LongDataset, SubjectBlock
from stlmm.model.likelihood import random_effects_law
from stlmm.model.theta import Theta

DEFAULT_SUBJECTS = 100

STUDY1_TIMES = (-1.0, -0.5, 0.0, 0.5, 1.0)
STUDY2_TIMES = (-0.3, -0.15, 0.0, 0.15, 0.3)


class Scenario(object):
    """
    A generating ST-LMM: visit times, fixed effects (intercept, slope and
    optionally a quadratic term), random intercept and slope.
    """

    def __init__(self, name, times, beta, sigma2, D, Delta, nu, structure='full',
                 quadratic=False, subjects=DEFAULT_SUBJECTS):
        self.name = name
        self.times = np.asarray(times, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.sigma2 = float(sigma2)
        self.D = np.asarray(D, dtype=float)
        self.Delta = np.asarray(Delta, dtype=float)
        self.nu = float(nu)
        self.structure = structure
        self.quadratic = quadratic
        self.subjects = int(subjects)

    @property
    def fixed_columns(self):
        return ['1', 'x', 'x2'] if self.quadratic else ['1', 'x']

    @property
    def random_columns(self):
        return ['1', 'x']

    def design(self):
        """(X, Z) shared by every subject."""
        ones = np.ones_like(self.times)
        Z = np.column_stack([ones, self.times])
        X = np.column_stack([ones, self.times, self.times ** 2]) if self.quadratic else Z.copy()
        return X, Z

    def theta(self):
        return Theta(self.beta, self.sigma2, self.D, self.Delta, self.nu,
                     family='ST', structure=self.structure)

    def random_effects_law(self):
        return random_effects_law(self.theta())

    def model_block(self):
        return collections.OrderedDict([
            ('family', 'ST'),
            ('structure', self.structure),
            ('skew_rank', int(self.Delta.shape[1])),
            ('response', 'y'),
            ('fixed', self.fixed_columns),
            ('random', self.random_columns),
            ('subject', 'subject'),
        ])


def _illustrative(name, Delta, nu, structure='full'):
    def make(subjects=DEFAULT_SUBJECTS):
        return Scenario(name, STUDY1_TIMES, (1.0, 3.0), 0.25,
                        [[0.5, -0.2], [-0.2, 0.5]], Delta, nu, structure, subjects=subjects)
    return make


def _study1(subjects=DEFAULT_SUBJECTS):
    # location-consistent orientation of the shape matrix
    return Scenario('study1', STUDY1_TIMES, (1.0, 3.0), 0.25,
                    [[0.5, -0.2], [-0.2, 0.5]], [[0.6, 1.5], [-1.0, 3.0]], 5,
                    subjects=subjects)


def _study2(subjects=DEFAULT_SUBJECTS):
    return Scenario('study2', STUDY2_TIMES, (2.7, -1.0, 6.8), 0.21,
                    [[0.1, -0.1], [-0.1, 0.5]], [[1.7, 0.7], [3.9, -0.8]], 5,
                    quadratic=True, subjects=subjects)


_ILLUS_DELTA = collections.OrderedDict([
    ('illus-a', ([[0.6, 1.5], [-1.0, 3.0]], 'full')),
    ('illus-b', ([[1.7, 0.7], [3.9, -0.8]], 'full')),
    ('illus-c', ([[2.0, 0.0], [0.0, -2.0]], 'sdb')),
    ('illus-d', ([[2.0], [-2.0]], 'full')),
])

SCENARIOS = collections.OrderedDict()
for _name, (_delta, _structure) in _ILLUS_DELTA.items():
    SCENARIOS[_name] = _illustrative(_name, _delta, 10, _structure)
    SCENARIOS[_name + '-nu5'] = _illustrative(_name + '-nu5', _delta, 5, _structure)
SCENARIOS['study1'] = _study1
SCENARIOS['study2'] = _study2


def get_scenario(name, subjects=None):
    if name not in SCENARIOS:
        raise ValueError('unknown scenario {}; valid names: {}'.format(name, ', '.join(SCENARIOS)))
    return SCENARIOS[name]() if subjects is None else SCENARIOS[name](subjects)


def joint_params(scenario):
    """ST_{q+n,r}((b Delta 1, 0), blockdiag(D, sigma2 I), (Delta; 0), nu) of (b_i, eps_i)."""
    theta = scenario.theta()
    n = scenario.times.shape[0]
    return CfustParams(np.concatenate([theta.location, np.zeros(n)]),
                       linalg.block_diag(theta.D, theta.sigma2 * np.eye(n)),
                       np.vstack([theta.Delta, np.zeros((n, theta.r))]),
                       theta.nu)


def generate_dataset(scenario, replica_seed=None):
    """
    Draw (b_i, eps_i) jointly for every subject and build y_i.

    :return: (LongDataset, true Theta)
    """
    X, Z = scenario.design()
    q = Z.shape[1]
    draws = cfust_sample(joint_params(scenario), scenario.subjects, seed=replica_seed)
    b, eps = draws[:, :q], draws[:, q:]
    mean = X.dot(scenario.beta)
    blocks = [SubjectBlock(i + 1, mean + Z.dot(b[i]) + eps[i], X, Z)
              for i in range(scenario.subjects)]
    data = LongDataset(blocks, response='y', fixed=scenario.fixed_columns,
                       random=scenario.random_columns, subject='subject')
    return data, scenario.theta()


def dataset_frame(scenario, data):
    """Long-format frame (subject, x[, x2], y) of a simulated data set."""
    rows = []
    for block in data.blocks:
        for j in range(block.n):
            row = collections.OrderedDict([('subject', block.id), ('x', block.X[j, 1])])
            if scenario.quadratic:
                row['x2'] = block.X[j, 2]
            row['y'] = block.y[j]
            rows.append(row)
    return pd.DataFrame(rows)


def replica_seed(base_seed, index):
    """Counter-derived seed of replica `index`."""
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))
    return int(seq.generate_state(1)[0])
