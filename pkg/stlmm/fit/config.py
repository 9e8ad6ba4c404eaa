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

from stlmm.model.theta import FAMILIES, STRUCTURES

# strategy letter -> label used in reports
INIT_STRATEGIES = {
    'a': 'true-values',
    'b': 'normal-plus-grid',
    'c': 'sn-warmstart',
    'd': 'hybrid',
    'e': 'best-of',
}

NU_MIN = 2
NU_MAX = 100
NU_START = 10.0
DELTA_GRID = (-1.5, -0.75, 0.0, 0.75, 1.5)


def normalize_strategy(strategy):
    if strategy in INIT_STRATEGIES:
        return strategy
    for letter, label in INIT_STRATEGIES.items():
        if strategy == label:
            return letter
    raise ValueError('unknown init strategy {}; expected one of {}'.format(
        strategy, ', '.join(sorted(INIT_STRATEGIES))))


class FitConfig(object):
    """
    Settings of one ECME fit.

    :param family: N, T, SN or ST
    :param structure: 'full' or 'sdb'
    :param skew_rank: r for the full structure; None means r = q
    :param tolerance: stop when |l'/l - 1| falls below this
    :param max_iter: iteration cap
    :param nu_grid: integer degrees of freedom searched by the nu step
    :param init: strategy letter a-e or its label
    :param seed: seed of strategy (a) perturbations
    :param true_theta: generating parameters, required by strategy (a)
    :param fix_delta: keep Delta at its start value
    :param fix_nu: keep nu at this value (inf allowed)
    """

    def __init__(self, family='ST', structure='full', skew_rank=None, tolerance=1e-6,
                 max_iter=500, nu_grid=None, init='e', seed=None, true_theta=None,
                 fix_delta=False, fix_nu=None, nu_start=NU_START, delta_grid=DELTA_GRID,
                 grid_passes=2, sn_warmstart_iter=100, normal_tolerance=1e-8,
                 normal_max_iter=2000, se_louis=True, se_numerical=False,
                 random_effects=True):
        if family not in FAMILIES:
            raise ValueError('unknown family {}; expected one of {}'.format(family, ', '.join(FAMILIES)))
        if structure not in STRUCTURES:
            raise ValueError('unknown structure {}; expected one of {}'.format(
                structure, ', '.join(STRUCTURES)))
        if not tolerance > 0:
            raise ValueError('tolerance={} must be > 0'.format(tolerance))
        if max_iter < 1:
            raise ValueError('max_iter={} must be >= 1'.format(max_iter))
        if skew_rank is not None and not 0 <= skew_rank <= 4:
            raise ValueError('skew_rank={} must be in 0..4'.format(skew_rank))
        self.family = family
        self.structure = structure
        self.skew_rank = skew_rank
        self.tolerance = float(tolerance)
        self.max_iter = int(max_iter)
        if nu_grid is None:
            nu_grid = range(NU_MIN, NU_MAX + 1)
        self.nu_grid = sorted(set(float(v) for v in nu_grid))
        if not self.nu_grid:
            raise ValueError('nu_grid must not be empty')
        for nu in self.nu_grid:
            if not (nu >= NU_MIN and nu.is_integer()):
                raise ValueError('nu_grid value {} must be an integer >= {}'.format(nu, NU_MIN))
        if fix_nu is not None and not float(fix_nu) >= NU_MIN:
            raise ValueError('fix_nu={} must be >= {} or inf'.format(fix_nu, NU_MIN))
        if not float(nu_start) >= NU_MIN or np.isinf(nu_start):
            raise ValueError('nu_start={} must be finite and >= {}'.format(nu_start, NU_MIN))
        self.init = normalize_strategy(init)
        if self.init == 'a' and true_theta is None:
            raise ValueError('init strategy a (true-values) needs the generating parameters')
        self.seed = seed
        self.true_theta = true_theta
        self.fix_delta = bool(fix_delta)
        self.fix_nu = None if fix_nu is None else float(fix_nu)
        self.nu_start = float(nu_start)
        self.delta_grid = tuple(delta_grid)
        self.grid_passes = int(grid_passes)
        self.sn_warmstart_iter = int(sn_warmstart_iter)
        self.normal_tolerance = float(normal_tolerance)
        self.normal_max_iter = int(normal_max_iter)
        self.se_louis = se_louis
        self.se_numerical = se_numerical
        self.random_effects = random_effects

    @property
    def skewed(self):
        return self.family in ('SN', 'ST')

    @property
    def heavy(self):
        return self.family in ('T', 'ST')

    @property
    def estimates_nu(self):
        return self.heavy and self.fix_nu is None

    @property
    def estimates_delta(self):
        return self.skewed and not self.fix_delta

    def rank_for(self, q):
        if not self.skewed:
            return 0
        if self.structure == 'sdb':
            return q
        return q if self.skew_rank is None else self.skew_rank

    def nu_for_start(self):
        if not self.heavy:
            return np.inf
        return self.fix_nu if self.fix_nu is not None else self.nu_start

    def copy(self, **kwargs):
        fields = dict(self.__dict__)
        fields.update(kwargs)
        return FitConfig(**fields)
