# Copyright 2026 JumpHJB Development Team.
#
# This file is part of JumpHJB, a toolkit for controlled jump-diffusions
# with recursive costs.
#
# JumpHJB is free software: you can redistribute it and/or modify it
# under the terms of the GNU Lesser General Public License (LGPL) as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# JumpHJB is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY
# or FITNESS FOR A PARTICULAR PURPOSE. See the GNU Lesser General
# Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with JumpHJB. If not, see <http://www.gnu.org/licenses/>.

"""Tests for jumphjb.approx."""

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb import scenarios
from jumphjb.approx import (bounding_bsde, envelope_drift_residual,
                            lyapunov_check, penalty_argmax, penalty_chi,
                            penalty_derivative_check, penalty_hessian,
                            weight_derivatives)
from jumphjb.coefficients import CoefficientSet, ProbeSpec
from jumphjb.errors import InvalidInstance
from jumphjb.forward import TimeGrid
from jumphjb.marks import MarkMeasure
from jumphjb.mollify import lattice
from jumphjb.util import stream

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.approx']


def brownian_plane():
    """Two-dimensional Brownian motion without jumps."""
    return CoefficientSet(
        b=lambda t, x, u: np.zeros(x.shape),
        sigma=lambda t, x, u: np.broadcast_to(np.eye(2), (len(x), 2, 2)),
        g=lambda t, e, x, u: np.zeros(x.shape),
        f=lambda t, x, u, y, z, k: np.zeros(len(x)),
        h=lambda x: np.zeros(len(x)),
        n=2, d=2, name="plane")


class BoundingTest(TestCase):

    def setUp(self):
        self.grid = TimeGrid(0.0, 1.0, 64)

    def test_exponential(self):
        y = bounding_bsde(1.0, 0.0, 0.0, 0.0, 0.4, 0.6, self.grid)
        self.assertTrue(abs(y[0] - np.e) < 1e-3)
        self.assertEqual(y[-1], 1.0)

    def test_linear_source(self):
        y = bounding_bsde(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, self.grid)
        self.assertAlmostEqual(y[0], 1.0, places=12)
        self.assertAlmostEqual(y[32], 0.5, places=12)

    def test_lambda_source(self):
        series = np.full(65, 0.25)
        y = bounding_bsde(0.0, 0.0, series, 2.0, 0.0, 0.0, self.grid)
        self.assertAlmostEqual(y[0], 0.5, places=12)

    def test_monotone_in_errors(self):
        small = bounding_bsde(0.1, 0.1, 0.1, 1.0, 1.0, 1.0, self.grid)
        large = bounding_bsde(0.2, 0.1, 0.1, 1.0, 1.0, 1.0, self.grid)
        self.assertTrue(np.all(large > small))

    def test_negative(self):
        self.assertRaises(InvalidInstance, bounding_bsde, -1.0, 0.0, 0.0, 0.0,
                          0.0, 0.0, self.grid)
        self.assertRaises(InvalidInstance, bounding_bsde, 0.0, -1.0, 0.0,
                          0.0, 0.0, 0.0, self.grid)

    def test_wrong_length(self):
        self.assertRaises(InvalidInstance, bounding_bsde, 0.0, np.ones(3),
                          0.0, 0.0, 0.0, 0.0, self.grid)

    def test_step_too_large(self):
        self.assertRaises(InvalidInstance, bounding_bsde, 0.0, 0.0, 0.0, 0.0,
                          1.5, 1.0, TimeGrid(0.0, 1.0, 1))

    def test_envelope_residual(self):
        args = (0.1, np.linspace(0.0, 0.2, 65), 0.05, 3.0, 0.7, 1.2)
        y = bounding_bsde(*(args + (self.grid,)))
        states = lattice([-2.0, -2.0], [2.0, 2.0], 9)
        residual = envelope_drift_residual(y, *(args[1:] + (self.grid,
                                                            states, 2)))
        self.assertTrue(residual < 1e-12)


class PenaltyTest(TestCase):
    """Derivatives of the weight and the penalty against central
    differences."""

    def setUp(self):
        self.points = 2 * stream(11, "penalty").random((100, 2)) - 1
        self.center = np.array([0.3, -0.2])

    def _gradient(self, func, x, h=1e-6):
        result = np.empty(x.shape)
        for k in range(x.shape[1]):
            e = np.zeros(x.shape)
            e[:, k] = h
            result[:, k] = (func(x + e) - func(x - e)) / (2 * h)
        return result

    def test_penalty_gradient(self):
        for p in (2, 3):
            value = lambda x: penalty_chi(x, self.center, p)[0]
            numeric = self._gradient(value, self.points)
            exact = penalty_chi(self.points, self.center, p)[1]
            self.assertTrue(np.allclose(numeric, exact, rtol=1e-6,
                                        atol=1e-6))

    def test_penalty_hessian(self):
        for p in (2, 3):
            hessian = penalty_hessian(self.points, self.center, p)
            for k in range(2):
                column = lambda x: penalty_chi(x, self.center, p)[1][:, k]
                numeric = self._gradient(column, self.points)
                self.assertTrue(np.allclose(numeric, hessian[:, k],
                                            rtol=1e-5, atol=1e-5))

    def test_convexity_bound(self):
        _, _, smallest = penalty_chi(self.points, self.center, 3)
        shifted = self.points - self.center
        bound = 5 * (1 + np.sum(shifted ** 2, axis=1)) ** 1.5
        self.assertTrue(np.all(smallest >= bound * (1 - 1e-12)))

    def test_derivative_check(self):
        for p in (2, 3):
            check = penalty_derivative_check(self.points, self.center, p)
            self.assertEqual(check["points"], 100)
            self.assertTrue(check["gradient_error"] <= 1e-6)
            self.assertTrue(check["hessian_error"] <= 1e-6)
            self.assertTrue(check["convexity_margin"] >= -1e-8)

    def test_derivative_check_coarse_step(self):
        # A step of order one spoils the difference quotients for p = 3.
        check = penalty_derivative_check(self.points, self.center, 3, 0.5)
        self.assertTrue(check["hessian_error"] > 1e-6)

    def test_small_p(self):
        self.assertRaises(InvalidInstance, penalty_chi, [0.0], [0.0], 1.5)

    def test_weight_gradient(self):
        for p in (2, 3):
            value = lambda x: weight_derivatives(x, p)[0]
            numeric = self._gradient(value, self.points)
            exact = weight_derivatives(self.points, p)[1]
            self.assertTrue(np.allclose(numeric, exact, rtol=1e-6,
                                        atol=1e-6))

    def test_argmax_interior(self):
        bump = lambda x: np.exp(-np.sum((x - 0.5) ** 2, axis=1))
        report = penalty_argmax(bump, [0.0], 2, 0.01, [-3.0], [3.0], 121)
        self.assertTrue(report["interior"])
        self.assertTrue(abs(report["argmax"][0] - 0.5) < 0.1)

    def test_argmax_on_boundary(self):
        # A steep ramp beats a faint penalty at the edge.
        ramp = lambda x: 100 * x[:, 0]
        report = penalty_argmax(ramp, [0.0], 2, 1e-6, [-1.0], [1.0], 21)
        self.assertFalse(report["interior"])
        self.assertEqual(report["argmax"], [1.0])


class LyapunovTest(TestCase):

    def test_pure_diffusion(self):
        probe = ProbeSpec([-1.0, -1.0], [1.0, 1.0])
        report = lyapunov_check(brownian_plane(), MarkMeasure([]), 2, probe,
                                nodes=21)
        self.assertAlmostEqual(report["c_phi"], 2.0, places=10)
        self.assertEqual(report["argmax"], [0.0, 0.0])
        self.assertEqual(report["nonfinite"], 0)
        self.assertEqual(report["points"], 21 * 21)

    def test_geometric(self):
        sc = scenarios.load("geometric-jump")
        report = lyapunov_check(sc.coefficients, sc.marks, 2, sc.probe())
        self.assertTrue(np.isfinite(report["c_phi"]))
        self.assertEqual(len(report["per_control"]), len(sc.controls))
        self.assertTrue(report["weighted_constant"] >= report["c_phi"])
