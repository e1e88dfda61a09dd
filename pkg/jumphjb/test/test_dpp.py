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

"""Tests for jumphjb.dpp."""

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb import scenarios
from jumphjb.bsde import recursive_cost, solve
from jumphjb.dpp import (FeedbackPolicy, PolicyFamily, RandomizedPolicy,
                         ValueEstimate, ValueField, dpp_check, dpp_refinement,
                         dpp_residual, feedback_policy, value, value_fields)
from jumphjb.errors import EnumerationTooLarge, InvalidInstance
from jumphjb.forward import TimeGrid, constant_policy, simulate
from jumphjb.regression import RegressionBasis
from jumphjb.util import envelope_constant, parallel_map

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.dpp']


class PolicyFamilyTest(TestCase):

    def test_must_start_at_zero(self):
        self.assertRaises(InvalidInstance, PolicyFamily, [2, 4], [[0.0]])

    def test_empty_controls(self):
        self.assertRaises(InvalidInstance, PolicyFamily, [0], [])

    def test_before(self):
        family = PolicyFamily([0, 4, 8, 12], [[-1.0], [1.0]])
        self.assertEqual(family.before(8).decision_nodes, [0, 4])
        self.assertEqual(family.before(8).size, 4)

    def test_policy_switches_at_nodes(self):
        sc = scenarios.load("two-control-1d")
        family = PolicyFamily([0, 2], sc.controls)
        bundle = simulate(sc.coefficients, sc.marks, TimeGrid(0.0, 1.0, 4),
                          sc.x0, family.policy((0, 1)), 2, 0)
        self.assertEqual(bundle.control_trace[0, :, 0].tolist(),
                         [-1.0, -1.0, 1.0, 1.0])

    def test_describe(self):
        family = PolicyFamily([0, 2], [[-1.0], [1.0]])
        self.assertEqual(family.describe((1, 0))["controls"],
                         [[1.0], [-1.0]])


class ValueTest(TestCase):
    """Value estimates on the two-control example."""

    def setUp(self):
        self.sc = scenarios.load("two-control-1d")
        self.cs, self.mm = self.sc.coefficients, self.sc.marks
        self.grid = TimeGrid(0.0, 1.0, 16)
        self.family = PolicyFamily([0, 8], self.sc.controls)
        self.basis = RegressionBasis(degree=2)

    def test_open_loop_minimum(self):
        """On common random numbers the value is the smallest cost of
        the enumerated sequences, so it is below every constant
        policy."""
        estimate = value(self.cs, self.mm, self.grid, self.sc.x0,
                         self.family, self.basis, 256, 1, "open-loop")
        self.assertEqual(estimate.mode, "open-loop")
        for u in self.sc.controls:
            cost = recursive_cost(self.cs, self.mm, self.grid, self.sc.x0,
                                  constant_policy(u), self.basis, 256, 1)
            self.assertTrue(estimate.value <= cost + 1e-12)
        # Steering toward zero from x0 = 2 plays u = -1 first.
        self.assertEqual(estimate.optimizer["sequence"][0], 0)
        self.assertEqual(len(estimate.optimizer["costs"]), 4)

    def test_budget(self):
        self.assertRaises(EnumerationTooLarge, value, self.cs, self.mm,
                          self.grid, self.sc.x0, self.family, self.basis, 16,
                          1, "open-loop", 3)

    def test_unknown_mode(self):
        self.assertRaises(InvalidInstance, value, self.cs, self.mm,
                          self.grid, self.sc.x0, self.family, self.basis, 16,
                          1, "greedy")

    def test_auto_falls_back_to_feedback(self):
        estimate = value(self.cs, self.mm, self.grid, self.sc.x0,
                         self.family, self.basis, 256, 1, "auto", 3)
        self.assertEqual(estimate.mode, "feedback")
        self.assertEqual(estimate.optimizer["first_control"], [-1.0])
        self.assertTrue(isinstance(estimate.policy, FeedbackPolicy))

    def test_feedback_close_to_open_loop(self):
        open_loop = value(self.cs, self.mm, self.grid, self.sc.x0,
                          self.family, self.basis, 1000, 2, "open-loop")
        feedback = value(self.cs, self.mm, self.grid, self.sc.x0,
                         self.family, self.basis, 1000, 2, "feedback")
        allowance = 4 * np.hypot(open_loop.std_error, feedback.std_error)
        self.assertTrue(abs(open_loop.value - feedback.value)
                        <= allowance + 0.05)

    def test_value_fields(self):
        fields = value_fields(self.cs, self.mm, self.grid, self.sc.x0,
                              self.family, self.basis, 128, 0)
        self.assertEqual([field.node for field in fields], [8, 0])
        states = np.array([[-2.0], [0.0], [3.0]])
        self.assertEqual(fields[0].candidates(states).shape, (2, 3))
        self.assertTrue(np.all(fields[0](states)
                               <= fields[0].candidates(states)[1]))
        policy = feedback_policy(self.family, fields)
        bundle = simulate(self.cs, self.mm, self.grid, self.sc.x0, policy,
                          32, 0)
        self.assertEqual(bundle.control_trace.shape, (32, 16, 1))

    def test_randomized_policy_holds(self):
        policy = RandomizedPolicy(self.family, 0)
        bundle = simulate(self.cs, self.mm, self.grid, self.sc.x0, policy,
                          64, 0)
        trace = bundle.control_trace[:, :, 0]
        self.assertTrue(np.all(trace[:, :8] == trace[:, :1]))
        self.assertTrue(np.all(trace[:, 8:] == trace[:, 8:9]))


class DppTest(TestCase):
    """The dynamic programming check."""

    def test_residual_report(self):
        sc = scenarios.load("two-control-1d")
        grid = TimeGrid(0.0, 1.0, 16)
        family = PolicyFamily([0, 4, 8, 12], sc.controls)
        result = dpp_check(sc.coefficients, sc.marks, grid, sc.x0, family, 8,
                           RegressionBasis(degree=2), 512, 3)
        self.assertEqual(result["split"], 8)
        self.assertTrue(result["residual"] >= 0)
        self.assertTrue(result["residual"]
                        <= 4 * result["combined_stderr"] + 0.05)
        self.assertEqual(len(result["outer_optimizer"]["sequence"]), 2)

    def test_residual_shortcut(self):
        sc = scenarios.load("zero")
        family = PolicyFamily([0, 2], sc.controls)
        residual = dpp_residual(sc.coefficients, sc.marks,
                                TimeGrid(0.0, 1.0, 4), sc.x0, family, 2,
                                RegressionBasis(), 16, 0)
        self.assertEqual(residual, 0.0)

    def test_split_must_be_interior(self):
        sc = scenarios.load("zero")
        family = PolicyFamily([0], sc.controls)
        self.assertRaises(InvalidInstance, dpp_check, sc.coefficients,
                          sc.marks, TimeGrid(0.0, 1.0, 4), sc.x0, family, 0,
                          RegressionBasis(), 16, 0)


class ValueObjectsTest(TestCase):

    def test_estimate_dict(self):
        estimate = ValueEstimate(1.5, {"sequence": [0]}, 0.1, "open-loop")
        self.assertEqual(estimate.as_dict()["value"], 1.5)

    def test_value_field_argmin(self):
        class Constant(object):
            def __init__(self, c):
                self.c = c

            def predict(self, states):
                return np.full(len(states), self.c)

        field = ValueField(4, [Constant(2.0), Constant(1.0)])
        self.assertEqual(field.argmin(np.zeros((3, 1))).tolist(), [1, 1, 1])
        self.assertEqual(field(np.zeros((2, 1))).tolist(), [1.0, 1.0])


class FeedbackStateTest(TestCase):
    """One feedback policy may drive several simulations at once."""

    def setUp(self):
        sc = scenarios.load("two-control-1d")
        self.cs, self.mm = sc.coefficients, sc.marks
        self.grid = TimeGrid(0.0, 1.0, 16)
        self.family = PolicyFamily([0, 8], sc.controls)
        self.fields = value_fields(self.cs, self.mm, self.grid, sc.x0,
                                   self.family, RegressionBasis(degree=2),
                                   128, 0)

    def histories(self):
        return [simulate(self.cs, self.mm, self.grid, [0.0],
                         constant_policy([1.0]), 8, seed).history(self.mm)
                for seed in (1, 2)]

    def test_interleaved_simulations(self):
        states = [np.linspace(-2.0, 3.0, 8).reshape(-1, 1),
                  np.linspace(3.0, -2.0, 8).reshape(-1, 1)]
        shared = feedback_policy(self.family, self.fields)
        alone = [feedback_policy(self.family, self.fields) for _ in range(2)]
        histories = self.histories()
        for i in range(self.grid.steps):
            t = self.grid.nodes[i]
            for which in (0, 1):
                moved = states[which] + 0.25 * i
                now = histories[which].at(i)
                self.assertTrue(np.array_equal(shared(t, moved, now),
                                               alone[which](t, moved, now)))

    def test_threads(self):
        policy = feedback_policy(self.family, self.fields)
        together = parallel_map(
            lambda seed: simulate(self.cs, self.mm, self.grid, [2.0], policy,
                                  64, seed, 1).control_trace,
            [3, 4, 5, 6], 4)
        for seed, trace in zip([3, 4, 5, 6], together):
            fresh = simulate(self.cs, self.mm, self.grid, [2.0],
                             feedback_policy(self.family, self.fields), 64,
                             seed, 1)
            self.assertTrue(np.array_equal(trace, fresh.control_trace))

    def test_restart_from_the_start(self):
        policy = feedback_policy(self.family, self.fields)
        first = simulate(self.cs, self.mm, self.grid, [2.0], policy, 32, 7)
        again = simulate(self.cs, self.mm, self.grid, [2.0], policy, 32, 7)
        self.assertTrue(np.array_equal(first.control_trace,
                                       again.control_trace))


class ValuePropertyTest(TestCase):

    def test_richer_family_never_raises_value(self):
        sc = scenarios.load("two-control-1d")
        grid = TimeGrid(0.0, 1.0, 16)
        basis = RegressionBasis(degree=2)
        values = [value(sc.coefficients, sc.marks, grid, sc.x0,
                        PolicyFamily([0, 8], controls), basis, 256, 9,
                        "open-loop").value
                  for controls in ([[-1.0], [1.0]],
                                   [[-1.0], [0.0], [1.0]])]
        self.assertTrue(values[1] <= values[0] + 1e-12)

    def test_growth_envelope(self):
        """V(0, x) = x^2 + 1/4 for the jump transport, inside a fixed
        multiple of 1 + x^2."""
        sc = scenarios.load("jump-transport")
        grid = TimeGrid(0.0, 1.0, 16)
        family = PolicyFamily([0], sc.controls)
        constants = []
        for x in (2.0, 3.0, 4.0):
            estimate = value(sc.coefficients, sc.marks, grid, [x], family,
                             RegressionBasis(degree=2), 2000, 11)
            constants.append(envelope_constant(estimate.value, [x], 2))
        self.assertTrue(max(constants) <= 1.2 * min(constants))
        self.assertTrue(abs(constants[0] - 0.85) <= 0.05)

    def test_random_initial_state(self):
        """A solve started from random states at a later node agrees
        in mean with the solve from the deterministic start, and its
        fitted value is the cost from each state."""
        sc = scenarios.load("jump-transport")
        cs, mm = sc.coefficients, sc.marks
        grid = TimeGrid(0.0, 1.0, 32)
        first = simulate(cs, mm, grid, sc.x0, sc.policy(), 2000, 5)
        bundle = simulate(cs, mm, grid.segment(16, 32), first.states[:, 16],
                          sc.policy(), 2000, 6)
        solution = solve(cs, mm, bundle, RegressionBasis(degree=2))
        self.assertTrue(abs(solution.y0 - 0.5)
                        <= 4 * solution.stderr() + 0.01)
        fitted = solution.value_at(0, [[0.0], [1.0]])
        self.assertTrue(abs(fitted[0] - 0.125) <= 0.05)
        self.assertTrue(abs(fitted[1] - 1.125) <= 0.05)

    def test_random_coefficients_fields(self):
        sc = scenarios.load("random-drift")
        grid = TimeGrid(0.0, 1.0, 16)
        family = PolicyFamily([0, 8], sc.controls)
        fields = value_fields(sc.coefficients, sc.marks, grid, sc.x0,
                              family, RegressionBasis(degree=2), 128, 0)
        self.assertEqual([field.node for field in fields], [8, 0])
        self.assertTrue(np.all(np.isfinite(fields[-1](np.zeros((3, 1))))))


class DppRefinementTest(TestCase):

    def setUp(self):
        self.sc = scenarios.load("two-control-1d")
        self.grid = TimeGrid(0.0, 1.0, 32)

    def test_two_levels(self):
        sc = self.sc
        family = PolicyFamily([0, 8, 16, 24], sc.controls)
        report = dpp_refinement(sc.coefficients, sc.marks, self.grid, sc.x0,
                                family, 16, RegressionBasis(degree=2), 512,
                                3)
        coarse, fine = report["levels"]
        self.assertEqual([coarse["steps"], fine["steps"]], [16, 32])
        self.assertEqual([coarse["split"], fine["split"]], [8, 16])
        self.assertEqual(report["decreasing"],
                         fine["residual"] < coarse["residual"])
        noise = 2 * (coarse["combined_stderr"] + fine["combined_stderr"])
        self.assertTrue(fine["residual"]
                        <= coarse["residual"] + noise + 0.05)

    def test_odd_nodes(self):
        sc = self.sc
        family = PolicyFamily([0, 8, 15], sc.controls)
        self.assertRaises(InvalidInstance, dpp_refinement, sc.coefficients,
                          sc.marks, self.grid, sc.x0, family, 16,
                          RegressionBasis(), 16, 0)
