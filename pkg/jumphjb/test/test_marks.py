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

"""Tests for jumphjb.marks."""

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb.errors import InvalidInstance, InvalidInterval
from jumphjb.marks import MarkMeasure
from jumphjb.util import stream

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.marks']


class MarkMeasureTest(TestCase):
    """Tests for :class:`jumphjb.marks.MarkMeasure`."""

    def setUp(self):
        self.mm = MarkMeasure([([-0.5], 0.5), ([0.25], 1.0), ([1.0], 0.5)],
                              rho=lambda e: abs(e[0]))

    def test_mass_and_probabilities(self):
        self.assertEqual(self.mm.total_mass, 2.0)
        self.assertEqual(self.mm.size, 3)
        self.assertEqual(self.mm.probabilities().tolist(),
                          [0.25, 0.5, 0.25])

    def test_rho_from_function(self):
        self.assertEqual(self.mm.rho.tolist(), [0.5, 0.25, 1.0])
        self.assertAlmostEqual(self.mm.rho_moment(2),
                                0.5 * 0.25 + 0.0625 + 0.5)

    def test_exp_integrability(self):
        expected = (0.5 * np.exp(0.5) + np.exp(0.25) + 0.5 * np.exp(1.0))
        self.assertAlmostEqual(self.mm.exp_integrability(), expected)

    def test_integrate_along_axis(self):
        values = np.ones((4, 3))
        self.assertEqual(self.mm.integrate(values).tolist(), [2.0] * 4)

    def test_empty_measure(self):
        mm = MarkMeasure([])
        self.assertEqual(mm.total_mass, 0.0)
        self.assertEqual(mm.sample_jumps(0.0, 1.0, stream(0, "empty")), [])
        self.assertEqual(mm.quadrature(lambda e: 1.0), 0.0)

    def test_negative_weight(self):
        self.assertRaises(InvalidInstance, MarkMeasure, [([0.0], -1.0)])

    def test_rho_count_mismatch(self):
        self.assertRaises(InvalidInstance, MarkMeasure, [([0.0], 1.0)],
                          [0.1, 0.2])

    def test_mixed_mark_dimensions(self):
        self.assertRaises(InvalidInstance, MarkMeasure,
                          [([0.0], 1.0), ([0.0, 1.0], 1.0)])

    def test_reversed_interval(self):
        self.assertRaises(InvalidInterval, self.mm.sample_jumps, 1.0, 0.5,
                          stream(0, "reversed"))
        self.assertRaises(InvalidInterval, self.mm.compensator_increment,
                          1.0, 0.5, lambda e: 1.0)


class SampleJumpsTest(TestCase):
    """Tests for :meth:`jumphjb.marks.MarkMeasure.sample_jumps`."""

    def setUp(self):
        self.mm = MarkMeasure([([-1.0], 1.0), ([1.0], 3.0)])

    def test_reproducible(self):
        first = self.mm.sample_jumps(0.0, 2.0, stream(7, "jumps", 3))
        second = self.mm.sample_jumps(0.0, 2.0, stream(7, "jumps", 3))
        self.assertEqual(first, second)

    def test_times_sorted_inside_interval(self):
        rng = stream(1, "times")
        for _ in range(50):
            jumps = self.mm.sample_jumps(0.5, 1.5, rng)
            times = [j.time for j in jumps]
            self.assertEqual(times, sorted(times))
            for t in times:
                self.assertTrue(0.5 < t <= 1.5)

    def test_count_and_marks(self):
        """The jump count has mean nu(E) T and the marks follow the
        weights."""
        rng = stream(2, "counts")
        draws = 4000
        counts, marks = [], [0, 0]
        for _ in range(draws):
            jumps = self.mm.sample_jumps(0.0, 0.5, rng)
            counts.append(len(jumps))
            for j in jumps:
                marks[j.mark_index] += 1
        mean = np.mean(counts)
        self.assertTrue(abs(mean - 2.0) < 5 * np.sqrt(2.0 / draws))
        share = marks[1] / float(sum(marks))
        self.assertTrue(abs(share - 0.75) < 0.03)

    def test_compensated_sum_is_centered(self):
        rng = stream(3, "compensated")
        draws = 4000
        sums = [self.mm.compensated_sum(self.mm.sample_jumps(0.0, 1.0, rng),
                                        0.0, 1.0, lambda e: e[0])
                for _ in range(draws)]
        # The variance is int e^2 nu(de) = 4.
        self.assertTrue(abs(np.mean(sums)) < 5 * np.sqrt(4.0 / draws))
