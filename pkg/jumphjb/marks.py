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

"""Finite-activity jump structure. The mark space *E*, the
characteristic measure *nu* and the intensity function *rho* are held
by a :class:`MarkMeasure`. The measure is atomic,

    nu = w_1 delta_{e_1} + ... + w_m delta_{e_m},

so every integral over *E* is an exact finite sum and the Poisson
random measure can be sampled exactly: draw the number of jumps, then
uniform times, then marks with probabilities ``w_i / nu(E)``.

A measure with two atoms:

>>> mm = MarkMeasure([([1.0], 0.5), ([2.0], 1.5)], rho=[0.1, 0.2])
>>> mm.total_mass
2.0
>>> mm.quadrature(lambda e: e[0])
3.5
>>> mm.l2_norm(lambda e: 1.0) == mm.total_mass ** 0.5
True
"""

from collections import namedtuple

import numpy as np
from twisted.logger import Logger

from jumphjb.errors import InvalidInterval, InvalidInstance

log = Logger()


class JumpRecord(namedtuple("JumpRecord", "time mark_index")):
    """A single jump: its time in ``(t0, T]`` and the index of its mark
    in the atom list of the :class:`MarkMeasure`."""

    __slots__ = ()


class MarkMeasure(object):
    """A discrete finite measure on the mark space together with the
    intensity function *rho*."""

    def __init__(self, atoms, rho=None):
        """Initialize a measure from ``(mark, weight)`` pairs.

        The *rho* argument is either a sequence with one value per
        atom, a function of the mark, or None for ``rho = 0``.
        """
        atoms = list(atoms)
        if atoms:
            marks = [np.atleast_1d(np.asarray(mark, dtype=float))
                     for mark, _ in atoms]
            if len(set(mark.shape for mark in marks)) != 1:
                raise InvalidInstance("all marks must have the same "
                                      "dimension")
            self.marks = np.array(marks)
            self.weights = np.array([float(w) for _, w in atoms])
        else:
            self.marks = np.zeros((0, 1))
            self.weights = np.zeros(0)

        if rho is None:
            self.rho = np.zeros(len(self.weights))
        elif callable(rho):
            self.rho = np.array([float(rho(e)) for e in self.marks])
        else:
            self.rho = np.asarray(rho, dtype=float).reshape(-1)

        if len(self.rho) != len(self.weights):
            raise InvalidInstance("expected %d rho values, got %d"
                                  % (len(self.weights), len(self.rho)))
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise InvalidInstance("atom weights must be finite and "
                                  "non-negative")
        if not np.all(np.isfinite(self.rho)) or np.any(self.rho < 0):
            raise InvalidInstance("rho must be finite and non-negative")

        self.marks.flags.writeable = False
        self.weights.flags.writeable = False
        self.rho.flags.writeable = False

        #: The mass nu(E).
        self.total_mass = float(np.sum(self.weights))

    @property
    def size(self):
        """Number of atoms."""
        return len(self.weights)

    @property
    def mark_dimension(self):
        """Dimension of the mark vectors."""
        return self.marks.shape[1]

    def probabilities(self):
        """Mark probabilities ``w_i / nu(E)`` of a single jump."""
        if self.total_mass == 0:
            return np.zeros(self.size)
        return self.weights / self.total_mass

    def quadrature(self, integrand):
        """Integrate a function of the mark against nu.

        >>> MarkMeasure([([0.0], 1.0)]).quadrature(lambda e: 0.0)
        0.0
        """
        values = np.array([integrand(e) for e in self.marks], dtype=float)
        return self.integrate(values)

    def integrate(self, values, axis=-1):
        """Integrate precomputed per-atom *values* along *axis*.

        >>> MarkMeasure([([0.0], 0.5), ([1.0], 1.5)]).integrate([1.0, 2.0])
        3.5
        """
        values = np.asarray(values, dtype=float)
        result = np.tensordot(values, self.weights, axes=([axis], [0]))
        if np.ndim(result) == 0:
            return float(result)
        return result

    def l2_norm(self, r):
        """The L2(nu) norm of a function of the mark.

        >>> MarkMeasure([([0.0], 4.0)]).l2_norm(lambda e: 3.0)
        6.0
        """
        if callable(r):
            values = np.array([r(e) for e in self.marks], dtype=float)
        else:
            values = np.asarray(r, dtype=float)
        return float(np.sqrt(self.integrate(values * values)))

    def exp_integrability(self):
        """The diagnostic number ``sum_i w_i exp(rho(e_i))``."""
        return self.integrate(np.exp(self.rho))

    def rho_moment(self, q):
        """The moment ``sum_i w_i rho(e_i)**q``."""
        return self.integrate(self.rho ** q)

    def sample_jumps(self, t0, t1, rng):
        """Sample the jumps of the Poisson random measure on ``(t0, t1]``.

        The jump count is Poisson with mean ``nu(E) (t1 - t0)``, the
        times are uniform on ``(t0, t1]`` and sorted, and the marks are
        drawn independently with probabilities ``w_i / nu(E)``. The
        result is a list of :class:`JumpRecord` and is reproducible
        given the state of *rng*.

        >>> from jumphjb.util import stream
        >>> MarkMeasure([([1.0], 0.0)]).sample_jumps(0.0, 1.0, stream(0, "x"))
        []
        """
        if t1 < t0:
            raise InvalidInterval(t0, t1)
        if self.total_mass == 0 or t1 == t0:
            return []
        count = rng.poisson(self.total_mass * (t1 - t0))
        if count == 0:
            return []
        # 1 - U is uniform on (0, 1], which puts the times in (t0, t1].
        times = t0 + (t1 - t0) * (1.0 - rng.random(count))
        times.sort()
        marks = rng.choice(self.size, size=count, p=self.probabilities())
        return [JumpRecord(float(t), int(j)) for t, j in zip(times, marks)]

    def compensator_increment(self, t0, t1, integrand):
        """The compensator ``(t1 - t0) * int integrand d nu``.

        >>> mm = MarkMeasure([([0.0], 2.0)])
        >>> mm.compensator_increment(0.0, 0.5, lambda e: 1.0)
        1.0
        """
        if t1 < t0:
            raise InvalidInterval(t0, t1)
        return (t1 - t0) * self.quadrature(integrand)

    def compensated_sum(self, jumps, t0, t1, integrand):
        """The compensated integral of *integrand* over ``(t0, t1]``:
        the sum over the jumps minus :meth:`compensator_increment`."""
        total = sum(float(integrand(self.marks[j.mark_index]))
                    for j in jumps if t0 < j.time <= t1)
        return total - self.compensator_increment(t0, t1, integrand)

    def __repr__(self):
        return "<MarkMeasure: %d atoms, mass %g>" % (self.size,
                                                      self.total_mass)
