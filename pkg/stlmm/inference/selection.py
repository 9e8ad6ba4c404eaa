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
AIC and ranking of family / skewness-rank variants.
"""

import logging

from stlmm.common.exceptions import NonConvergenceError

logger = logging.getLogger(__name__)

# (family, structure, skew_rank); None means r = q
DEFAULT_CANDIDATES = (
    ('SN', 'full', 1),
    ('SN', 'sdb', None),
    ('SN', 'full', None),
    ('ST', 'full', 1),
    ('ST', 'sdb', None),
    ('ST', 'full', None),
)


def aic_value(loglik, npar):
    return 2.0 * npar - 2.0 * loglik


def aic(result):
    """AIC of a FitResult."""
    return aic_value(result.loglik, result.npar)


def count_parameters(p, q, family='ST', structure='full', skew_rank=None, nu_estimated=True):
    n = p + 1 + q * (q + 1) // 2
    if family in ('SN', 'ST'):
        r = q if skew_rank is None or structure == 'sdb' else skew_rank
        n += q if structure == 'sdb' else q * r
    if family in ('T', 'ST') and nu_estimated:
        n += 1
    return n


def candidate_label(family, structure, skew_rank, q):
    if structure == 'sdb':
        return '{} (SDB)'.format(family)
    return '{} (r={})'.format(family, q if skew_rank is None else skew_rank)


class SelectionRow(object):

    def __init__(self, label, family, structure, skew_rank, npar, loglik, aic):
        self.label = label
        self.family = family
        self.structure = structure
        self.skew_rank = skew_rank
        self.npar = npar
        self.loglik = loglik
        self.aic = aic
        self.rank = None
        self.result = None


def model_select(data, candidates=None, config=None):
    """
    Fit every (family, structure, skew_rank) candidate and rank by AIC.

    :param config: base FitConfig whose fitter settings every candidate uses
    :return: list of SelectionRow ordered by ascending AIC; failed fits are
             dropped with a warning
    """
    from stlmm.fit.config import FitConfig
    from stlmm.fit.ecme import fit

    if candidates is None:
        candidates = DEFAULT_CANDIDATES
    if config is None:
        config = FitConfig()
    rows = []
    for family, structure, skew_rank in candidates:
        label = candidate_label(family, structure, skew_rank, data.q)
        cfg = config.copy(family=family, structure=structure, skew_rank=skew_rank,
                          se_louis=False, se_numerical=False, random_effects=False)
        try:
            result = fit(data, cfg)
        except NonConvergenceError as e:
            logger.warning('%s: fit failed: %s', label, e)
            continue
        row = SelectionRow(label, family, structure, cfg.rank_for(data.q),
                           result.npar, result.loglik, result.aic)
        row.result = result
        rows.append(row)
    rows.sort(key=lambda row: row.aic)
    for i, row in enumerate(rows):
        row.rank = i + 1
    return rows
