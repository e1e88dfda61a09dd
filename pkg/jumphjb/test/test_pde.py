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

"""Tests for jumphjb.pde."""

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb import scenarios
from jumphjb.errors import InvalidInstance, StepTooLarge
from jumphjb.field import AnalyticField
from jumphjb.forward import TimeGrid, constant_policy, simulate
from jumphjb.pde import (SpaceBox, comparison_check,
                         compound_poisson_expectation, cross_check,
                         envelope_sandwich, evaluate_field_along_path,
                         feedback_policy, heat_error, heat_solution,
                         jump_term_split, solve_conditional, solve_pde,
                         stability_bound, stable_time_grid)

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.pde']


class SpaceBoxTest(TestCase):

    def test_too_few_nodes(self):
        self.assertRaises(InvalidInstance, SpaceBox, [0.0], [1.0], [2])

    def test_mismatch(self):
        self.assertRaises(InvalidInstance, SpaceBox, [0.0, 0.0], [1.0, 1.0],
                          [5])

    def test_refine(self):
        box = SpaceBox([-1.0], [1.0], [5]).refine()
        self.assertEqual(box.counts, (9,))
        self.assertEqual(box.spacing.tolist(), [0.25])

    def test_interior_2d(self):
        box = SpaceBox([0.0, 0.0], [1.0, 1.0], [3, 4])
        self.assertEqual(int(box.interior().sum()), 2)


class HeatTest(TestCase):
    """Pure diffusion against the closed-form heat flow."""

    def setUp(self):
        self.sc = scenarios.load("heat-reduction")
        self.cs, self.mm = self.sc.coefficients, self.sc.marks
        self.box = self.sc.space_box()

    def test_gaussian(self):
        grid = stable_time_grid(self.cs, self.mm, 0.0, 0.25, self.box)
        solved = solve_pde(self.cs, self.mm, grid, self.box)
        nodes = self.box.nodes()
        inner = self.box.shell.inner_mask(0.5).reshape(-1)
        exact = heat_solution(0.5, 1.0, 0.25, nodes[inner])
        error = np.abs(solved.fields[0].values.reshape(-1)[inner] - exact)
        self.assertTrue(error.max() < 0.01)
        self.assertAlmostEqual(float(solved.initial_value([0.0])),
                               np.sqrt(0.5), places=2)

    def test_heat_error(self):
        grid = stable_time_grid(self.cs, self.mm, 0.0, 0.25, self.box)
        solved = solve_pde(self.cs, self.mm, grid, self.box)
        self.assertEqual(self.sc.heat_flow(), (0.5, 1.0, 1.0))
        report = heat_error(solved, 0.5, 1.0)
        self.assertEqual(report["spacing"], 1.0 / 64)
        self.assertTrue(report["relative"] < 0.01)
        # A wider Gaussian is far from the solved field.
        self.assertTrue(heat_error(solved, 1.0, 1.0)["relative"] > 0.05)

    def test_not_a_heat_flow(self):
        self.assertEqual(scenarios.load("jump-transport").heat_flow(), None)

    def test_step_too_large(self):
        self.assertRaises(StepTooLarge, solve_pde, self.cs, self.mm,
                          TimeGrid(0.0, 0.25, 1), self.box)

    def test_bound_shrinks_with_spacing(self):
        bound = stability_bound(self.cs, self.mm, [0.0], self.box)
        finer = stability_bound(self.cs, self.mm, [0.0], self.box.refine())
        self.assertAlmostEqual(bound / finer, 4.0, places=6)

    def test_cross_check(self):
        box = SpaceBox([-2.0], [2.0], [65])
        exact = float(heat_solution(0.5, 1.0, 0.25, [0.0]))
        report = cross_check(self.cs, self.mm, 0.0, 0.25, box, [0.0], exact,
                             1e-3)
        self.assertTrue(report["agree"])
        self.assertTrue(report["gap"] < 0.01)


class JumpTransportTest(TestCase):
    """Compensated jumps of a quadratic terminal cost, where
    ``V(0, x) = x^2 + 1/4`` up to the diffusion floor."""

    def setUp(self):
        self.sc = scenarios.load("jump-transport")
        self.cs, self.mm = self.sc.coefficients, self.sc.marks
        self.box = self.sc.space_box()
        self.grid = TimeGrid(0.0, 1.0, 64)

    def test_quadratic(self):
        solved = solve_pde(self.cs, self.mm, self.grid, self.box)
        x = np.linspace(-1.0, 0.5, 13)[:, None]
        values = solved.fields[0].value(0.0, x)
        expected = x[:, 0] ** 2 + 0.25 + 1e-6
        self.assertTrue(np.abs(values - expected).max() < 1e-3)

    def test_comparison(self):
        report = comparison_check(self.cs, self.mm, self.grid, self.box)
        self.assertTrue(report["dominated"])
        self.assertTrue(report["max_violation"] <= -0.1 + 1e-9)
        # Without running cost the relaxed problem sits relaxation (T - t)
        # below V - shift.
        self.assertAlmostEqual(report["shifted_violation"], -0.1 / 64,
                               places=9)
        self.assertTrue(report["below_shifted"] <= 1e-9)

    def test_raised_cost_not_dominated(self):
        report = comparison_check(self.cs, self.mm, self.grid, self.box,
                                  relaxation=-0.5)
        self.assertFalse(report["dominated"])
        self.assertAlmostEqual(report["shifted_violation"], 0.5 / 64,
                               places=9)
        self.assertAlmostEqual(report["max_violation"], 0.4, places=6)

    def test_invalid_shift(self):
        self.assertRaises(InvalidInstance, comparison_check, self.cs,
                          self.mm, self.grid, self.box, 0.0)

    def test_along_path(self):
        solved = solve_pde(self.cs, self.mm, self.grid, self.box)
        bundle = simulate(self.cs, self.mm, self.grid, self.sc.x0,
                          constant_policy([0.0]), 32, 5)
        triple = evaluate_field_along_path(solved, bundle, self.cs, self.mm)
        self.assertEqual(triple.y.shape, (32, 65))
        self.assertEqual(triple.k.shape, (32, 64, 1))
        self.assertTrue(np.abs(triple.y[:, 0] - 0.5).max() < 1e-3)
        # K(e) = (x + 1/2)^2 - x^2 = x + 1/4.
        x = bundle.states[:, 10, 0]
        self.assertTrue(np.abs(triple.k[:, 10, 0] - (x + 0.25)).max()
                        < 1e-2)

    def test_feedback_policy(self):
        solved = solve_pde(self.cs, self.mm, self.grid, self.box)
        play = feedback_policy(solved, self.cs, self.mm)
        bundle = simulate(self.cs, self.mm, self.grid, self.sc.x0, play,
                          4, 0)
        self.assertEqual(bundle.control_trace.shape, (4, 64, 1))

    def test_jump_split(self):
        square = AnalyticField(lambda t, x: np.sum(x * x, axis=1), 1,
                               gradient=lambda t, x: 2 * x)
        low, high = jump_term_split(square, self.cs, self.mm, 0.0,
                                    [[0.0], [1.0]], np.zeros((2, 1)))
        self.assertEqual(np.round(low, 12).tolist(), [0.25, 0.25])
        self.assertEqual(high.tolist(), [0.0, 0.0])

    def test_dimension_mismatch(self):
        box = SpaceBox([0.0, 0.0], [1.0, 1.0], [3, 3])
        self.assertRaises(InvalidInstance, solve_pde, self.cs, self.mm,
                          self.grid, box)


class OracleTest(TestCase):

    def test_compound_poisson_square(self):
        # E (x + a T + c N)^2 with N ~ Poisson(r T).
        value = compound_poisson_expectation(lambda y: y * y, 1.0, -0.5, 0.5,
                                             1.0, 1.0)
        self.assertAlmostEqual(value, 1.0 + 0.25, places=10)

    def test_heat_at_zero_time(self):
        x = np.array([[0.5], [-1.0]])
        self.assertTrue(np.allclose(heat_solution(0.5, 1.0, 0.0, x),
                                    np.exp(-x[:, 0] ** 2 / 0.5)))


class RandomCoefficientTest(TestCase):

    def setUp(self):
        self.sc = scenarios.load("random-drift")
        self.cs, self.mm = self.sc.coefficients, self.sc.marks
        self.box = SpaceBox([-3.0], [3.0], [25])
        self.grid = TimeGrid(0.0, 1.0, 128)

    def test_needs_history(self):
        self.assertRaises(InvalidInstance, solve_pde, self.cs, self.mm,
                          self.grid, self.box)

    def test_conditional(self):
        solved = solve_conditional(self.cs, self.mm, self.grid, self.box, 2,
                                   7)
        self.assertEqual(len(solved), 129)
        self.assertTrue(np.all(np.isfinite(solved.fields[0].values)))

    def test_no_samples(self):
        self.assertRaises(InvalidInstance, solve_conditional, self.cs,
                          self.mm, self.grid, self.box, 0, 7)


class EnvelopeSandwichTest(TestCase):
    """Envelopes of mollified solutions around a kinked problem."""

    def test_levels(self):
        sc = scenarios.load("lipschitz-mollify")
        cs, mm = sc.coefficients, sc.marks
        box = SpaceBox([-2.0], [2.0], [33])
        grid = stable_time_grid(cs, mm, 0.0, 0.5, box)
        report = envelope_sandwich(cs, mm, grid, box, [4, 8], sc.probe(),
                                   seed=3, order=8)
        rows = report["levels"]
        self.assertEqual([row["level"] for row in rows], [4, 8])
        self.assertTrue(report["c_v"] > 0)
        self.assertTrue(report["l_y"] >= 0)
        for row in rows:
            self.assertTrue(row["gap"] >= 0)
            self.assertTrue(row["width"] > 0)
        self.assertTrue(rows[1]["y0"] <= rows[0]["y0"])
        self.assertTrue(report["shrinking"])
        self.assertEqual(report["bracketed"],
                         all(row["bracketed"] for row in rows))
