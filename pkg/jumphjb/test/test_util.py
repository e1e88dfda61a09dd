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

"""Tests for jumphjb.util and jumphjb.errors."""

import os

import numpy as np

from twisted.trial.unittest import TestCase

from jumphjb.util import (begin, end, envelope_constant, master_seed,
                          parallel_map, path_streams, reset_stages,
                          stage_timings, stream, thread_count)

#: Declare doctests for Trial.
__doctests__ = ['jumphjb.util', 'jumphjb.errors']


class EnvironmentMixin:

    def setEnvironment(self, name, value):
        old = os.environ.get(name)

        def restore():
            if old is None:
                os.environ.pop(name, None)
            else:
                os.environ[name] = old
        self.addCleanup(restore)
        if value is None:
            os.environ.pop(name, None)
        else:
            os.environ[name] = value


class SeedTest(EnvironmentMixin, TestCase):

    def test_default(self):
        self.setEnvironment("JUMPHJB_SEED", None)
        self.assertEqual(master_seed(42), 42)

    def test_override(self):
        self.setEnvironment("JUMPHJB_SEED", "17")
        self.assertEqual(master_seed(42), 17)

    def test_empty(self):
        self.setEnvironment("JUMPHJB_SEED", "")
        self.assertEqual(master_seed(5), 5)


class StreamTest(TestCase):

    def test_deterministic(self):
        first = stream(3, "simulate", 10).standard_normal(5)
        second = stream(3, "simulate", 10).standard_normal(5)
        self.assertEqual(first.tolist(), second.tolist())

    def test_labels_separate(self):
        self.assertNotEqual(stream(3, "simulate").random(),
                            stream(3, "reference").random())

    def test_seeds_separate(self):
        self.assertNotEqual(stream(3, "simulate").random(),
                            stream(4, "simulate").random())

    def test_path_streams(self):
        streams = path_streams(0, "paths", 3)
        draws = [s.random() for s in streams]
        self.assertEqual(len(set(draws)), 3)
        self.assertEqual(draws[1], stream(0, "paths", 1).random())


class ThreadTest(EnvironmentMixin, TestCase):

    def test_precedence(self):
        self.setEnvironment("JUMPHJB_THREADS", "3")
        self.assertEqual(thread_count(), 3)
        self.assertEqual(thread_count(2), 2)

    def test_single(self):
        self.setEnvironment("JUMPHJB_THREADS", None)
        self.assertEqual(thread_count(), 1)
        self.assertEqual(thread_count(0), 1)

    def test_parallel_order(self):
        self.assertEqual(parallel_map(lambda i: i * i, range(20), threads=4),
                         [i * i for i in range(20)])

    def test_parallel_matches_serial(self):
        work = lambda i: stream(1, "work", i).standard_normal(3).sum()
        self.assertEqual(parallel_map(work, range(8), threads=1),
                         parallel_map(work, range(8), threads=4))


class StageTest(TestCase):

    def setUp(self):
        reset_stages()

    def test_recorded(self):
        self.assertEqual(end(begin(5, "stage"), "stage"), 5)
        timings = stage_timings()
        self.assertEqual([name for name, _ in timings], ["stage"])
        self.assertTrue(timings[0][1] >= 0)
        reset_stages()
        self.assertEqual(stage_timings(), [])


class EnvelopeTest(TestCase):

    def test_largest_ratio(self):
        values = np.array([1.0, 4.0, 2.0])
        states = np.array([[0.0], [1.0], [3.0]])
        self.assertEqual(envelope_constant(values, states, 2), 2.0)
