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

"""Tests for jumphjb.forward."""

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb import scenarios
from jumphjb.coefficients import CoefficientSet
from jumphjb.errors import InvalidInstance, InvalidInterval, SimulationBlowUp
from jumphjb.forward import (TimeGrid, coarsen_noise, constant_policy,
                             flow_check, moment_report, refinement_study,
                             resimulate, simulate)
from jumphjb.marks import MarkMeasure

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.forward']


class TimeGridTest(TestCase):
    """Tests for :class:`jumphjb.forward.TimeGrid`."""

    def test_reversed(self):
        self.assertRaises(InvalidInterval, TimeGrid, 1.0, 0.0, 4)

    def test_degenerate(self):
        self.assertRaises(InvalidInstance, TimeGrid, 0.0, 0.0, 4)
        self.assertRaises(InvalidInstance, TimeGrid, 0.0, 1.0, 0)

    def test_segment(self):
        grid = TimeGrid(0.0, 1.0, 8)
        segment = grid.segment(2, 6)
        self.assertEqual(segment.steps, 4)
        self.assertEqual(segment.t0, 0.25)
        self.assertEqual(segment.T, 0.75)
        self.assertRaises(InvalidInstance, grid.segment, 3, 3)


class SimulateTest(TestCase):
    """Tests for :func:`jumphjb.forward.simulate`."""

    def load(self, name):
        sc = scenarios.load(name)
        return sc, sc.coefficients, sc.marks

    def test_zero_scenario(self):
        sc, cs, mm = self.load("zero")
        bundle = simulate(cs, mm, sc.grid(), sc.x0, sc.policy(), 16, 1)
        self.assertEqual(bundle.states.shape, (16, 17, 1))
        self.assertFalse(np.any(bundle.states))

    def test_reproducible(self):
        sc, cs, mm = self.load("geometric-jump")
        grid = TimeGrid(0.0, 1.0, 16)
        first = simulate(cs, mm, grid, sc.x0, sc.policy(), 32, 5)
        second = simulate(cs, mm, grid, sc.x0, sc.policy(), 32, 5, threads=3)
        self.assertTrue(np.array_equal(first.states, second.states))
        self.assertEqual(first.jumps, second.jumps)

    def test_labels_give_independent_noise(self):
        sc, cs, mm = self.load("geometric-jump")
        grid = TimeGrid(0.0, 1.0, 16)
        first = simulate(cs, mm, grid, sc.x0, sc.policy(), 8, 5)
        other = simulate(cs, mm, grid, sc.x0, sc.policy(), 8, 5,
                         label="other")
        self.assertFalse(np.array_equal(first.brownian_increments,
                                        other.brownian_increments))

    def test_geometric_mean(self):
        """The compensated Euler scheme has mean x0 (1 + a dt)^N."""
        sc, cs, mm = self.load("geometric-jump")
        grid = TimeGrid(0.0, 1.0, 64)
        count = 4000
        bundle = simulate(cs, mm, grid, sc.x0, sc.policy(), count, 11)
        final = bundle.states[:, -1, 0]
        expected = (1 + 0.05 / 64) ** 64
        stderr = final.std() / np.sqrt(count)
        self.assertTrue(abs(final.mean() - expected) < 4 * stderr)
        self.assertTrue(abs(expected - np.exp(0.05)) < 1e-4)

    def test_per_path_initial_states(self):
        sc, cs, mm = self.load("constant-drift")
        grid = TimeGrid(0.0, 1.0, 4)
        starts = np.array([[0.0], [1.0], [-2.0]])
        bundle = simulate(cs, mm, grid, starts, sc.policy(), 3, 0)
        self.assertTrue(np.allclose(bundle.states[:, -1, 0], [1.0, 2.0, -1.0]))
        self.assertRaises(InvalidInstance, simulate, cs, mm, grid, starts,
                          sc.policy(), 4, 0)

    def test_no_paths(self):
        sc, cs, mm = self.load("zero")
        self.assertRaises(InvalidInstance, simulate, cs, mm, sc.grid(),
                          sc.x0, sc.policy(), 0, 0)

    def test_blow_up(self):
        cs = CoefficientSet(
            b=lambda t, x, u: 1e308 * x,
            sigma=lambda t, x, u: np.zeros((len(x), 1, 1)),
            g=lambda t, e, x, u: np.zeros(x.shape),
            f=lambda t, x, u, y, z, k: np.zeros(len(x)),
            h=lambda x: np.zeros(len(x)))
        with np.errstate(over="ignore", invalid="ignore"):
            error = self.assertRaises(SimulationBlowUp, simulate, cs,
                                      MarkMeasure([]), TimeGrid(0.0, 1.0, 8),
                                      [10.0], constant_policy([0.0]), 2, 0)
        self.assertEqual(error.path, 0)

    def test_policy_sees_history(self):
        sc, cs, mm = self.load("geometric-jump")
        steps = []

        def policy(t, x, history):
            steps.append(history.step)
            self.assertEqual(len(history), len(x))
            return [0.0]

        simulate(cs, mm, TimeGrid(0.0, 1.0, 4), sc.x0, policy, 3, 0)
        self.assertEqual(steps, [0, 1, 2, 3])


class FlowTest(TestCase):
    """The flow property of the Euler recursion."""

    def test_flow_on_scenarios(self):
        for name in ("geometric-jump", "two-control-1d", "jump-transport",
                     "random-drift"):
            sc = scenarios.load(name)
            grid = TimeGrid(0.0, 1.0, 16)
            deviation = flow_check(sc.coefficients, sc.marks, grid, sc.x0,
                                   sc.policy(), 8, 64, 3)
            self.assertTrue(deviation <= 1e-12, name)

    def test_restart_matches(self):
        sc = scenarios.load("two-control-1d")
        grid = TimeGrid(0.0, 1.0, 8)
        bundle = simulate(sc.coefficients, sc.marks, grid, sc.x0,
                          sc.policy(), 16, 2)
        states, controls = resimulate(sc.coefficients, sc.marks, bundle, 4,
                                      bundle.states[:, 4], sc.policy())
        self.assertTrue(np.array_equal(states, bundle.states[:, 4:]))
        self.assertEqual(controls.shape, (16, 4, 1))

    def test_split_must_be_interior(self):
        sc = scenarios.load("zero")
        self.assertRaises(InvalidInstance, flow_check, sc.coefficients,
                          sc.marks, TimeGrid(0.0, 1.0, 4), sc.x0,
                          sc.policy(), 4, 2, 0)


class MomentTest(TestCase):
    """Tests for the moment and refinement reports."""

    def test_increment_slope(self):
        """Increment moments of order 2 grow linearly in the lag."""
        sc = scenarios.load("geometric-jump")
        bundle = simulate(sc.coefficients, sc.marks, TimeGrid(0.0, 1.0, 64),
                          sc.x0, sc.policy(), 2000, 4)
        report = moment_report(bundle, [2])
        self.assertTrue(0.85 <= report["slope"][2] <= 1.15)
        self.assertTrue(report["sup_moment"][2] >= 1.0)

    def test_refinement_levels(self):
        sc = scenarios.load("constant-drift")
        rows = refinement_study(sc.coefficients, sc.marks,
                                TimeGrid(0.0, 1.0, 4), sc.x0, sc.policy(),
                                lambda x: x[:, 0], 3, 8, 0)
        self.assertEqual([row["steps"] for row in rows], [4, 8, 16])
        for row in rows:
            self.assertAlmostEqual(row["mean"], 1.0)
        self.assertEqual(rows[0]["difference"], None)

    def test_coarsen_noise(self):
        increments = np.arange(8.0).reshape(1, 4, 2)
        coarse = coarsen_noise(increments, 2)
        self.assertEqual(coarse.tolist(), [[[2.0, 4.0], [10.0, 12.0]]])


class NoiseOriginTest(TestCase):
    """Paths restarted at a node continue the earlier noise."""

    def setUp(self):
        sc = scenarios.load("random-drift")
        self.cs, self.mm, self.policy = sc.coefficients, sc.marks, sc.policy()
        self.grid = TimeGrid(0.0, 1.0, 8)
        self.first = simulate(self.cs, self.mm, self.grid, sc.x0,
                              self.policy, 16, 1)
        self.origin = self.first.history(self.mm, 4)

    def test_history_starts_at_origin(self):
        later = simulate(self.cs, self.mm, self.grid.segment(4, 8),
                         self.first.states[:, 4], self.policy, 16, 2,
                         origin=self.origin)
        history = later.history(self.mm)
        self.assertTrue(np.array_equal(history.brownian(),
                                       self.origin.brownian()))
        walked = history.at(4).brownian() - history.brownian()
        self.assertTrue(np.allclose(walked,
                                    later.brownian_increments.sum(axis=1)))

    def test_origin_moves_random_drift(self):
        segment = self.grid.segment(4, 8)
        starts = self.first.states[:, 4]
        carried = simulate(self.cs, self.mm, segment, starts, self.policy,
                           16, 2, origin=self.origin)
        fresh = simulate(self.cs, self.mm, segment, starts, self.policy, 16,
                         2)
        shift = 0.5 * self.origin.brownian()[:, 0] * segment.dt
        self.assertTrue(np.allclose(
            carried.states[:, 1, 0] - fresh.states[:, 1, 0], shift))

    def test_row_mismatch(self):
        self.assertRaises(InvalidInstance, simulate, self.cs, self.mm,
                          self.grid.segment(4, 8), [0.0], self.policy, 8, 2,
                          origin=self.origin)
