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
Monte Carlo study runner: simulate, fit and aggregate replicas of a
scenario into MC-AV / MC-SD / mean SE tables.
"""

import collections
import hashlib
import logging

import numpy as np
import pandas as pd

from stlmm.common.exceptions import StlmmError
from stlmm.fit.ecme import fit
from stlmm.run.util.cache import use_cache
from stlmm.run.util.threads import execute_function_multithreaded
from stlmm.sim.scenarios import generate_dataset, replica_seed

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['parameter', 'true', 'mc_av', 'mc_sd', 'se_l_mean', 'se_n_mean', 'n_ok']


class ReplicaOutcome(object):
    """What one replica produced; `error` is set when its fit failed."""

    def __init__(self, index, seed, estimates=None, se_louis=None, se_numerical=None,
                 hessian_failed=False, converged=False, init_strategy=None, loglik=None,
                 n_iter=None, error=None):
        self.index = index
        self.seed = seed
        self.estimates = estimates
        self.se_louis = se_louis
        self.se_numerical = se_numerical
        self.hessian_failed = hessian_failed
        self.converged = converged
        self.init_strategy = init_strategy
        self.loglik = loglik
        self.n_iter = n_iter
        self.error = error

    @property
    def ok(self):
        return self.error is None


class McSummary(object):
    """
    Aggregated Monte Carlo results.

    :param rows: one OrderedDict per parameter with SUMMARY_COLUMNS keys;
                 statistics that are undefined are None
    :param outcomes: ReplicaOutcome per replica, by index
    :param truth: name -> generating value
    """

    def __init__(self, scenario, rows, outcomes, truth):
        self.scenario = scenario
        self.rows = rows
        self.outcomes = outcomes
        self.truth = truth

    @property
    def requested(self):
        return len(self.outcomes)

    @property
    def failures(self):
        return sum(1 for o in self.outcomes if not o.ok)

    @property
    def used(self):
        return self.requested - self.failures

    @property
    def hessian_failures(self):
        return sum(1 for o in self.outcomes if o.ok and o.hessian_failed)

    @property
    def strategy_counts(self):
        return collections.Counter(o.init_strategy for o in self.outcomes if o.ok)

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=SUMMARY_COLUMNS)

    def replica_frame(self):
        return replica_table(self.outcomes)

    def relative_bias(self):
        return relative_bias_summary(self.replica_frame(), self.truth)


def replica_table(outcomes):
    """One row per replica: seed, status and every estimate and SE."""
    rows = []
    for o in outcomes:
        row = collections.OrderedDict([
            ('replica', o.index), ('seed', o.seed), ('ok', o.ok), ('converged', o.converged),
            ('init_strategy', o.init_strategy), ('loglik', o.loglik), ('iterations', o.n_iter),
            ('hessian_failed', o.hessian_failed), ('error', o.error)])
        for name, value in (o.estimates or {}).items():
            row[name] = value
        for name, value in (o.se_louis or {}).items():
            row['se_l_' + name] = value
        for name, value in (o.se_numerical or {}).items():
            row['se_n_' + name] = value
        rows.append(row)
    return pd.DataFrame(rows)


def relative_bias_summary(table, truth):
    """
    name -> mean |(estimate - true) / true| over successful replicas;
    parameters whose true value is zero are skipped.
    """
    out = collections.OrderedDict()
    ok = table[table['ok']] if 'ok' in table else table
    for name, true in truth.items():
        if name not in ok or true == 0 or not np.isfinite(true):
            continue
        values = ok[name].dropna().to_numpy(dtype=float)
        if values.size:
            out[name] = float(np.mean(np.abs((values - true) / true)))
    return out


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


@use_cache()
def fit_replica(index, scenario, config, base_seed, se_numerical=False):
    """Simulate and fit replica `index`."""
    seed = replica_seed(base_seed, index)
    data, truth = generate_dataset(scenario, seed)
    cfg = config.copy(true_theta=truth, seed=seed, se_louis=True,
                      se_numerical=se_numerical, random_effects=False)
    try:
        result = fit(data, cfg)
    except StlmmError as e:
        logger.warning('replica %d (seed %d) failed: %s', index, seed, e)
        return ReplicaOutcome(index, seed, error=str(e))
    logger.info('replica %d: loglik %.6f, %d iterations, start %s', index, result.loglik,
                result.n_iter, result.init_strategy_chosen)
    return ReplicaOutcome(index, seed,
                          estimates=result.estimates(),
                          se_louis=result.se,
                          se_numerical=result.se_numerical,
                          hessian_failed=se_numerical and result.se_numerical is None,
                          converged=result.converged,
                          init_strategy=result.init_strategy_chosen,
                          loglik=result.loglik,
                          n_iter=result.n_iter)


def parameters_hash(scenario, config, base_seed, se_numerical):
    """Checkpoint key of everything that changes a replica's outcome."""
    fields = [scenario.name, scenario.subjects, base_seed, se_numerical,
              config.family, config.structure, config.skew_rank, config.tolerance,
              config.max_iter, tuple(config.nu_grid), config.init, config.fix_delta,
              config.fix_nu]
    return hashlib.md5(repr(fields).encode('utf-8')).hexdigest()


def summarize(scenario, outcomes, truth):
    ok = [o for o in outcomes if o.ok]
    names = list(ok[0].estimates) if ok else list(truth)
    rows = []
    for name in names:
        values = [o.estimates[name] for o in ok if name in o.estimates]
        se_l = [o.se_louis[name] for o in ok if o.se_louis and name in o.se_louis]
        se_n = [o.se_numerical[name] for o in ok if o.se_numerical and name in o.se_numerical]
        rows.append(collections.OrderedDict([
            ('parameter', name),
            ('true', truth.get(name)),
            ('mc_av', _mean_or_none(values)),
            ('mc_sd', float(np.std(values, ddof=1)) if len(values) >= 2 else None),
            ('se_l_mean', _mean_or_none(se_l)),
            ('se_n_mean', _mean_or_none(se_n)),
            ('n_ok', len(values)),
        ]))
    return McSummary(scenario, rows, outcomes, truth)


def run_monte_carlo(scenario, replicas, config, seed=0, threads=1, se_numerical=False,
                    cache=None):
    """
    Fit `replicas` simulated data sets of `scenario`.

    :param scenario: generating scenario
    :type scenario: stlmm.sim.scenarios.Scenario
    :param replicas: number of replicas, >= 1
    :param config: fitter settings shared by every replica
    :type config: stlmm.fit.config.FitConfig
    :param seed: base seed; replica i uses a seed derived from (seed, i)
    :param threads: concurrent replicas
    :param se_numerical: also compute numerical-Hessian SEs
    :param cache: optional stlmm.run.util.cache.Cache of finished replicas
    :rtype: McSummary
    """
    if replicas < 1:
        raise ValueError('replicas={} must be >= 1'.format(replicas))
    results = execute_function_multithreaded(
        lambda i: fit_replica(i, scenario, config, seed, se_numerical, fn_cache=cache),
        [[i] for i in range(replicas)],
        max_concurrent_executions=max(1, int(threads)))
    outcomes = [results[i] for i in range(replicas)]
    summary = summarize(scenario, outcomes, scenario.theta().estimates())
    logger.info('%s: %d of %d replicas fitted, %d Hessian failures', scenario.name,
                summary.used, summary.requested, summary.hessian_failures)
    return summary
