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

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import unittest
import warnings

import mock
import numpy as np
import pytest
from scipy import optimize
from scipy.stats import multivariate_normal

from stlmm.common.exceptions import NonConvergenceError, NumericalError
from stlmm.common.util import is_positive_definite
from stlmm.fit.cmsteps import cm_update_D_Delta, cm_update_beta_sigma2, update_nu
from stlmm.fit.config import FitConfig, normalize_strategy
from stlmm.fit.ecme import fit
from stlmm.fit.estep import e_step, e_step_all
from stlmm.fit.init import delta_grid_scan, fit_normal_lmm, initialize, perturb
from stlmm.fit.loop import has_converged, run_ecme
from stlmm.inference.louis import subject_scores
from stlmm.model.data import LongDataset, SubjectBlock
from stlmm.model.likelihood import loglik
from stlmm.model.theta import Theta

from common import simulated, slow


def assert_ascent(testcase, trace):
    for before, after in zip(trace[:-1], trace[1:]):
        testcase.assertGreaterEqual(after, before - 1e-7 * abs(before))


def gaussian_ml(data):
    """
    Maximum likelihood of the normal linear mixed model on a balanced design,
    by direct optimization over (log sigma2, chol(D)) with beta profiled out.
    """
    X, Z = data.blocks[0].X, data.blocks[0].Z
    Y = np.array([b.y for b in data])
    n, q = Z.shape
    rows, cols = np.tril_indices(q)

    def unpack(x):
        L = np.zeros((q, q))
        L[rows, cols] = x[1:]
        return np.exp(x[0]), L.dot(L.T)

    def marginal_cov(x):
        sigma2, D = unpack(x)
        return Z.dot(D).dot(Z.T) + sigma2 * np.eye(n)

    def gls(V):
        vinv_x = np.linalg.solve(V, X)
        return np.linalg.solve(X.T.dot(vinv_x), vinv_x.T.dot(Y.mean(axis=0)))

    def objective(x):
        V = marginal_cov(x)
        return -multivariate_normal.logpdf(Y - X.dot(gls(V)), cov=V).sum() / len(Y)

    start = np.concatenate([[0.0], np.eye(q)[rows, cols]])
    x = optimize.minimize(objective, start, method='BFGS', options={'gtol': 1e-8}).x
    sigma2, D = unpack(x)
    return gls(marginal_cov(x)), sigma2, D, -objective(x) * len(Y)


class FitTests(unittest.TestCase):
    """
    Tests for stlmm.fit.
    """

    def __init__(self, *args, **kwargs):
        super(FitTests, self).__init__(*args, **kwargs)
        warnings.simplefilter('module')

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(family='X')
        with pytest.raises(ValueError):
            FitConfig(tolerance=0.0)
        with pytest.raises(ValueError, match='generating parameters'):
            FitConfig(init='a')
        with pytest.raises(ValueError):
            FitConfig(nu_grid=[])
        for grid in ([2.5, 3], [1, 2, 3], [np.inf]):
            with pytest.raises(ValueError, match='nu_grid value'):
                FitConfig(nu_grid=grid)
        with pytest.raises(ValueError, match='fix_nu'):
            FitConfig(fix_nu=1.5)
        with pytest.raises(ValueError, match='nu_start'):
            FitConfig(nu_start=1.0)
        self.assertEqual(FitConfig(fix_nu=np.inf).fix_nu, np.inf)
        self.assertEqual(FitConfig(nu_grid=[2, 3.0]).nu_grid, [2.0, 3.0])
        with pytest.raises(ValueError):
            FitConfig(skew_rank=5)
        self.assertEqual(normalize_strategy('best-of'), 'e')
        self.assertEqual(normalize_strategy('c'), 'c')
        with pytest.raises(ValueError):
            normalize_strategy('random')

    def test_config_properties(self):
        config = FitConfig(family='ST', structure='sdb', nu_grid=[5, 3, 3, 4])
        self.assertEqual(config.nu_grid, [3.0, 4.0, 5.0])
        self.assertEqual(config.rank_for(2), 2)
        self.assertTrue(config.estimates_nu)
        fixed = config.copy(fix_nu=6, fix_delta=True, structure='full', skew_rank=1)
        self.assertFalse(fixed.estimates_nu)
        self.assertFalse(fixed.estimates_delta)
        self.assertEqual(fixed.rank_for(2), 1)
        self.assertEqual(fixed.nu_for_start(), 6.0)
        self.assertEqual(FitConfig(family='SN').nu_for_start(), np.inf)
        self.assertEqual(FitConfig(family='N').rank_for(2), 0)

    def test_normal_e_step_is_blup(self):
        data, _ = simulated('illus-a', subjects=3, seed=4)
        theta = Theta([1.0, 3.0], 0.25, [[0.5, -0.2], [-0.2, 0.5]], family='N')
        for b in data:
            m = e_step(theta, b)
            V = b.Z.dot(theta.D).dot(b.Z.T) + theta.sigma2 * np.eye(b.n)
            blup = theta.D.dot(b.Z.T).dot(np.linalg.solve(V, b.y - b.X.dot(theta.beta)))
            self.assertEqual(m.u_hat, 1.0)
            self.assertEqual(m.us_hat.shape, (0,))
            np.testing.assert_allclose(m.ub_hat, blup, atol=1e-10)
            np.testing.assert_allclose(m.ub2_hat, m.M + np.outer(blup, blup), atol=1e-10)

    def test_t_e_step_weight(self):
        data, _ = simulated('illus-a', subjects=3, seed=4)
        theta = Theta([1.0, 3.0], 0.25, [[0.5, -0.2], [-0.2, 0.5]], nu=4, family='T')
        for b in data:
            V = b.Z.dot(theta.D).dot(b.Z.T) + theta.sigma2 * np.eye(b.n)
            resid = b.y - b.X.dot(theta.beta)
            d = resid.dot(np.linalg.solve(V, resid))
            self.assertAlmostEqual(e_step(theta, b).u_hat, (4.0 + b.n) / (4.0 + d))

    def check_fisher_identity(self, theta, data):
        """Summed expected complete-data scores equal the loglik gradient."""
        moments = e_step_all(theta, data)
        score = np.sum([subject_scores(theta, b, m).vector
                        for b, m in zip(data.blocks, moments)], axis=0)
        x0 = theta.to_vector()
        grad = np.zeros_like(x0)
        for j in range(x0.shape[0]):
            h = 1e-5 * max(1.0, abs(x0[j]))
            up, down = x0.copy(), x0.copy()
            up[j] += h
            down[j] -= h
            grad[j] = (loglik(theta.from_vector(up), data) -
                       loglik(theta.from_vector(down), data)) / (2.0 * h)
        np.testing.assert_allclose(score, grad, rtol=5e-3, atol=5e-3 * np.max(np.abs(grad)))

    def test_scores_match_gradient_skew_normal(self):
        data, _ = simulated('illus-a', subjects=10, seed=6)
        theta = Theta([1.1, 2.8], 0.3, [[0.6, -0.1], [-0.1, 0.4]],
                      [[0.5, 1.0], [-0.8, 2.0]], family='SN')
        self.check_fisher_identity(theta, data)

    def test_scores_match_gradient_skew_t(self):
        data, _ = simulated('illus-a-nu5', subjects=10, seed=6)
        theta = Theta([1.1, 2.8], 0.3, [[0.6, -0.1], [-0.1, 0.4]],
                      [[0.5, 1.0], [-0.8, 2.0]], nu=5)
        self.check_fisher_identity(theta, data)

    def test_rank_deficient_design(self):
        times = np.array([-1.0, 0.0, 1.0])
        X = np.column_stack([np.ones(3), np.zeros(3)])
        Z = np.ones((3, 1))
        data = LongDataset([SubjectBlock(i, times + i, X, Z) for i in range(4)])
        theta = Theta([1.0, 0.0], 1.0, [[1.0]], family='N')
        with pytest.raises(NumericalError, match='rank-deficient'):
            cm_update_beta_sigma2(theta, data, e_step_all(theta, data))

    def test_cm_update_D_Delta(self):
        data, truth = simulated('illus-a', subjects=20, seed=9)
        moments = e_step_all(truth, data)
        D, Delta = cm_update_D_Delta(truth, data, moments)
        self.assertTrue(is_positive_definite(D))
        self.assertEqual(Delta.shape, (2, 2))
        _, kept = cm_update_D_Delta(truth, data, moments, fix_delta=True)
        np.testing.assert_array_equal(kept, truth.Delta)

        sdb, _ = simulated('illus-c', subjects=20, seed=9)
        theta = Theta(truth.beta, truth.sigma2, truth.D, [[2.0, 0.0], [0.0, -2.0]], nu=10,
                      structure='sdb')
        _, diag = cm_update_D_Delta(theta, sdb, e_step_all(theta, sdb))
        self.assertEqual(diag[0, 1], 0.0)
        self.assertEqual(diag[1, 0], 0.0)

    def test_update_nu_scan(self):
        grid = range(2, 31)

        def peaked(nu):
            return -(nu - 7.0) ** 2

        self.assertEqual(update_nu(None, None, grid, warm_start=20, profile=peaked), 7.0)
        self.assertEqual(update_nu(None, None, grid, warm_start=np.inf, profile=peaked), 7.0)
        self.assertEqual(update_nu(None, None, grid, exhaustive=True, profile=lambda nu: 0.0), 2.0)
        self.assertEqual(update_nu(None, None, [9], profile=peaked), 9.0)
        with pytest.raises(ValueError):
            update_nu(None, None, [], profile=peaked)

    def test_update_nu_on_data(self):
        data, truth = simulated('illus-a-nu5', subjects=30, seed=12)
        grid = range(2, 41)
        scanned = update_nu(truth, data, grid, warm_start=10)
        exhaustive = update_nu(truth, data, grid, exhaustive=True)
        self.assertEqual(scanned, exhaustive)

    def test_has_converged(self):
        self.assertTrue(has_converged(-100.0, -100.00001, 1e-6))
        self.assertFalse(has_converged(-100.0, -99.0, 1e-6))
        self.assertTrue(has_converged(0.0, 1e-12, 1e-6))

    def test_normal_lmm_ascent(self):
        data, _ = simulated('illus-b', subjects=40, seed=2)
        theta = fit_normal_lmm(data)
        self.assertEqual(theta.family, 'N')
        result = run_ecme(data, theta.replace(sigma2=1.0), 1e-8, 1000)
        assert_ascent(self, result.trace)
        self.assertTrue(result.converged)

    def test_skew_normal_ascent(self):
        data, _ = simulated('illus-a', subjects=25, seed=3)
        normal = fit_normal_lmm(data)
        start = Theta(normal.beta, normal.sigma2, normal.D, [[0.3, 0.3], [-0.3, 0.3]], family='SN')
        result = run_ecme(data, start, 1e-9, 15)
        assert_ascent(self, result.trace)
        self.assertEqual(len(result.trace), result.n_iter + 1)
        self.assertEqual(result.loglik, result.trace[-1])

    def test_loop_failure_keeps_last_theta(self):
        data, truth = simulated('illus-a', subjects=5, seed=1)
        with mock.patch('stlmm.fit.loop.e_step_all', side_effect=NumericalError('underflow')):
            with pytest.raises(NonConvergenceError) as e:
                run_ecme(data, truth, 1e-6, 10)
        self.assertIs(e.value.theta, truth)
        self.assertIn('underflow', str(e.value))

    def test_perturb(self):
        _, truth = simulated('illus-a', subjects=5, seed=1)
        a = perturb(truth, seed=3)
        b = perturb(truth, seed=3)
        np.testing.assert_array_equal(a.to_vector(), b.to_vector())
        self.assertFalse(np.array_equal(a.to_vector(), truth.to_vector()))
        np.testing.assert_allclose(a.to_vector(), truth.to_vector(), atol=1.0)

    def test_delta_grid_scan_improves(self):
        data, _ = simulated('illus-a', subjects=20, seed=5)
        normal = fit_normal_lmm(data)
        base = Theta(normal.beta, normal.sigma2, normal.D, np.zeros((2, 2)), family='SN')
        scanned = delta_grid_scan(data, base, (-1.0, 0.0, 1.0), passes=1)
        self.assertGreaterEqual(loglik(scanned, data), loglik(base, data))

    def test_initialize_strategies(self):
        data, truth = simulated('illus-a', subjects=20, seed=5)
        normal_only = initialize('e', data, FitConfig(family='N'))
        self.assertEqual([label for label, _ in normal_only], ['normal-plus-grid'])
        self.assertEqual(normal_only[0][1].family, 'N')

        config = FitConfig(family='SN', sn_warmstart_iter=3, grid_passes=1)
        starts = initialize('e', data, config)
        self.assertEqual([label for label, _ in starts],
                         ['normal-plus-grid', 'sn-warmstart', 'hybrid'])
        for _, theta in starts:
            self.assertEqual((theta.family, theta.r), ('SN', 2))

        true_start = initialize('a', data, FitConfig(family='ST', init='a', true_theta=truth,
                                                     skew_rank=1, seed=1))
        label, theta = true_start[0]
        self.assertEqual(label, 'true-values')
        self.assertEqual(theta.r, 1)

    def test_fit_normal_family(self):
        data, _ = simulated('illus-c', subjects=150, seed=21)
        result = fit(data, FitConfig(family='N'))
        self.assertTrue(result.converged)
        self.assertEqual(result.init_strategy_chosen, 'normal-plus-grid')
        np.testing.assert_allclose(result.theta_hat.beta, [1.0, 3.0], atol=0.5)
        self.assertEqual(list(result.se), result.theta_hat.names())
        self.assertEqual(len(result.random_effects), 150)
        self.assertEqual(result.npar, 6)
        self.assertAlmostEqual(result.aic, 2 * 6 - 2 * result.loglik)
        self.assertIsNone(result.se_numerical)

    def test_fit_normal_family_matches_gaussian_ml(self):
        data, _ = simulated('illus-c', subjects=150, seed=21)
        config = FitConfig(family='N', tolerance=1e-12, max_iter=20000, se_louis=False,
                           random_effects=False)
        result = fit(data, config)
        beta, sigma2, D, ll = gaussian_ml(data)
        self.assertTrue(result.converged)
        np.testing.assert_allclose(result.theta_hat.beta, beta, atol=1e-4)
        self.assertAlmostEqual(result.theta_hat.sigma2, sigma2, delta=1e-4)
        np.testing.assert_allclose(result.theta_hat.D, D, atol=1e-4)
        self.assertAlmostEqual(result.loglik, ll, delta=1e-5)

    def test_skew_t_with_zero_delta_is_t(self):
        """Test that ST with Delta fixed at zero follows the T fit step for step."""
        data, truth = simulated('illus-d', subjects=60, seed=3)
        config = FitConfig(family='ST', skew_rank=1, fix_delta=True, nu_grid=range(3, 13),
                           tolerance=1e-8, max_iter=2000, se_louis=False, random_effects=False)
        skewed = fit(data, config, start=Theta(truth.beta, truth.sigma2, truth.D,
                                               np.zeros((2, 1)), nu=8, family='ST'))
        symmetric = fit(data, config.copy(family='T', fix_delta=False, skew_rank=None),
                        start=Theta(truth.beta, truth.sigma2, truth.D, nu=8, family='T'))
        np.testing.assert_array_equal(skewed.theta_hat.Delta, np.zeros((2, 1)))
        self.assertEqual(skewed.theta_hat.nu, symmetric.theta_hat.nu)
        np.testing.assert_allclose(skewed.theta_hat.beta, symmetric.theta_hat.beta, atol=1e-6)
        self.assertAlmostEqual(skewed.theta_hat.sigma2, symmetric.theta_hat.sigma2, delta=1e-6)
        np.testing.assert_allclose(skewed.theta_hat.D, symmetric.theta_hat.D, atol=1e-6)
        self.assertAlmostEqual(skewed.loglik, symmetric.loglik, delta=1e-6)

    def test_skew_t_with_infinite_nu_is_skew_normal(self):
        data, truth = simulated('illus-a', subjects=60, seed=5)
        config = FitConfig(family='ST', fix_nu=np.inf, tolerance=1e-8, max_iter=2000,
                           se_louis=False, random_effects=False)
        skewed_t = fit(data, config, start=truth)
        skew_normal = fit(data, config.copy(family='SN', fix_nu=None),
                          start=Theta(truth.beta, truth.sigma2, truth.D, truth.Delta, family='SN'))
        self.assertEqual(skewed_t.theta_hat.nu, np.inf)
        for name in ('beta', 'sigma2', 'D', 'Delta'):
            np.testing.assert_allclose(getattr(skewed_t.theta_hat, name),
                                       getattr(skew_normal.theta_hat, name), atol=1e-6)
        self.assertAlmostEqual(skewed_t.loglik, skew_normal.loglik, delta=1e-6)

    def test_fit_with_explicit_start_and_fixed_nu(self):
        data, truth = simulated('illus-a', subjects=20, seed=8)
        config = FitConfig(family='ST', fix_nu=6, max_iter=5, se_louis=False,
                           random_effects=False)
        result = fit(data, config, start=truth)
        self.assertEqual(result.init_strategy_chosen, 'user')
        self.assertEqual(result.theta_hat.nu, 6.0)
        self.assertEqual(result.npar, truth.npar(nu_estimated=False))
        self.assertEqual(list(result.candidates), ['user'])
        assert_ascent(self, result.loglik_trace)

    @slow
    def test_fit_skew_t(self):
        data, truth = simulated('illus-a-nu5', subjects=100, seed=31)
        result = fit(data, FitConfig(family='ST', se_numerical=True))
        self.assertTrue(result.converged)
        self.assertGreaterEqual(result.loglik, loglik(truth, data) - 1.0)
        assert_ascent(self, result.loglik_trace)
        self.assertEqual(set(result.candidates), {'normal-plus-grid', 'sn-warmstart', 'hybrid'})
        self.assertIsNotNone(result.se)
