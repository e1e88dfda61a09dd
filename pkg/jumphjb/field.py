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

"""Scalar, vector and mark-indexed fields over the state space.

All fields are evaluated at a time *t* and a state *x*. The state is
either a single vector of shape ``(n,)`` or a batch of shape ``(P, n)``
and the result follows suit. Spatial derivatives default to central
finite differences.

A :class:`GridField` stores nodal values on a uniform box grid and
interpolates multilinearly:

>>> grid = GridField.from_function(lambda t, x: 2 * x[:, 0] + 1,
...                                [0.0], [1.0], [11])
>>> round(grid.value(0.0, [0.55]), 12)
2.1
>>> round(grid.gradient(0.0, [0.5])[0], 12)
2.0

An :class:`AnalyticField` wraps a batched function:

>>> square = AnalyticField(lambda t, x: (x * x).sum(axis=1), 1)
>>> round(square.hessian(0.0, [3.0])[0, 0], 6)
2.0
"""

import itertools

import numpy as np
from twisted.logger import Logger

from jumphjb.constants import FD_STEP
from jumphjb.errors import DomainTooSmall, InvalidInstance
from jumphjb.util import as_batch, column, unbatch

log = Logger()


class Field(object):
    """Base class for scalar fields.

    Subclasses implement :meth:`value` and :meth:`steps`; gradients and
    Hessians are then available through central differences.
    """

    #: Spatial dimension, or None if any dimension is accepted.
    dimension = None

    def value(self, t, x):
        raise NotImplementedError

    def __call__(self, t, x):
        return self.value(t, x)

    def steps(self, batch):
        """Finite-difference steps, one per row and axis."""
        raise NotImplementedError

    def _values(self, t, batch):
        return column(self.value(t, batch), len(batch))

    def gradient(self, t, x):
        batch, single = as_batch(x, self.dimension)
        h = self.steps(batch)
        grad = np.empty(batch.shape)
        for k in range(batch.shape[1]):
            shift = np.zeros(batch.shape)
            shift[:, k] = h[:, k]
            grad[:, k] = (self._values(t, batch + shift)
                          - self._values(t, batch - shift)) / (2 * h[:, k])
        return unbatch(grad, single)

    def hessian(self, t, x):
        batch, single = as_batch(x, self.dimension)
        h = self.steps(batch)
        count, n = batch.shape
        center = self._values(t, batch)
        hess = np.empty((count, n, n))
        for k in range(n):
            ek = np.zeros(batch.shape)
            ek[:, k] = h[:, k]
            hess[:, k, k] = (self._values(t, batch + ek) - 2 * center
                             + self._values(t, batch - ek)) / h[:, k] ** 2
            for j in range(k):
                ej = np.zeros(batch.shape)
                ej[:, j] = h[:, j]
                mixed = (self._values(t, batch + ej + ek)
                         - self._values(t, batch + ej - ek)
                         - self._values(t, batch - ej + ek)
                         + self._values(t, batch - ej - ek))
                hess[:, j, k] = hess[:, k, j] = mixed / (4 * h[:, j] * h[:, k])
        return unbatch(hess, single)


class AnalyticField(Field):
    """A field given by a batched function ``func(t, x)``.

    Analytic *gradient* and *hessian* functions may be supplied;
    otherwise central differences with step ``1e-4 (1 + |x|)`` are used.
    """

    def __init__(self, func, dimension, gradient=None, hessian=None,
                 step=FD_STEP):
        self.func = func
        self.dimension = dimension
        self._gradient = gradient
        self._hessian = hessian
        self.step = step

    @classmethod
    def constant(cls, c, dimension):
        """The constant field *c*, with exact zero derivatives.

        >>> AnalyticField.constant(2.5, 2).value(0.0, [1.0, 1.0])
        2.5
        """
        n = dimension
        return cls(lambda t, x: np.full(len(x), float(c)), n,
                   gradient=lambda t, x: np.zeros((len(x), n)),
                   hessian=lambda t, x: np.zeros((len(x), n, n)))

    def value(self, t, x):
        batch, single = as_batch(x, self.dimension)
        return unbatch(column(self.func(t, batch), len(batch)), single)

    def steps(self, batch):
        h = self.step * (1 + np.linalg.norm(batch, axis=1))
        return np.repeat(h[:, None], batch.shape[1], axis=1)

    def gradient(self, t, x):
        if self._gradient is None:
            return Field.gradient(self, t, x)
        batch, single = as_batch(x, self.dimension)
        grad = np.asarray(self._gradient(t, batch), dtype=float)
        return unbatch(grad.reshape(batch.shape), single)

    def hessian(self, t, x):
        if self._hessian is None:
            return Field.hessian(self, t, x)
        batch, single = as_batch(x, self.dimension)
        n = batch.shape[1]
        hess = np.asarray(self._hessian(t, batch), dtype=float)
        return unbatch(hess.reshape(len(batch), n, n), single)


class GridField(Field):
    """Nodal values on a uniform box grid in dimension 1 or 2.

    Values between nodes are multilinear interpolants. In a collar
    around the box the interpolant of the nearest cell is extrapolated,
    which is order-1 polynomial extrapolation; points beyond the collar
    raise :exc:`DomainTooSmall`. Derivatives are central differences of
    the interpolant with the grid spacing as step, which at interior
    nodes are the usual three-point stencils.
    """

    def __init__(self, lower, upper, values, collar=None):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.values = np.array(values, dtype=float)
        self.dimension = n = len(self.lower)
        if n > 2:
            raise InvalidInstance("grid fields support dimension 1 and 2, "
                                  "not %d" % n)
        if self.values.ndim != n or len(self.upper) != n:
            raise InvalidInstance("grid values of shape %s do not match "
                                  "dimension %d" % (self.values.shape, n))
        if np.any(self.upper <= self.lower):
            raise InvalidInstance("empty space box")
        self.counts = np.array(self.values.shape)
        if np.any(self.counts < 2):
            raise InvalidInstance("a grid needs two nodes per axis")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInstance("non-finite grid values")
        self.spacing = (self.upper - self.lower) / (self.counts - 1)
        if collar is None:
            collar = np.maximum(2 * self.spacing,
                                0.25 * (self.upper - self.lower))
        self.collar = np.broadcast_to(np.asarray(collar, dtype=float),
                                      (n,)).copy()

    @classmethod
    def from_function(cls, func, lower, upper, counts, t=0.0, collar=None):
        """Sample a batched function ``func(t, x)`` at the grid nodes."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = tuple(int(c) for c in np.atleast_1d(counts))
        shell = cls(lower, upper, np.zeros(counts), collar)
        nodes = shell.nodes()
        values = column(func(t, nodes), len(nodes)).reshape(counts)
        return shell.with_values(values)

    def with_values(self, values):
        """A field on the same grid with new nodal *values*."""
        return GridField(self.lower, self.upper, values, self.collar)

    def axes(self):
        """The node coordinates along every axis."""
        return [np.linspace(lo, hi, c) for lo, hi, c
                in zip(self.lower, self.upper, self.counts)]

    def nodes(self):
        """All nodes as a ``(N, n)`` array in C order of the values."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def inner_mask(self, fraction=0.5):
        """Boolean mask of the nodes inside the centered sub-box whose
        sides are *fraction* of the full sides.

        >>> GridField([0.0], [4.0], np.zeros(5)).inner_mask().tolist()
        [False, True, True, True, False]
        """
        center = 0.5 * (self.lower + self.upper)
        half = 0.5 * fraction * (self.upper - self.lower)
        nodes = self.nodes()
        tol = 1e-12 * (self.upper - self.lower)
        inside = np.all(np.abs(nodes - center) <= half + tol, axis=1)
        return inside.reshape(tuple(self.counts))

    def contains(self, batch):
        """Rows of *batch* inside the box extended by the collar."""
        tol = 1e-12 * (self.upper - self.lower)
        low = self.lower - self.collar - tol
        high = self.upper + self.collar + tol
        return np.all((batch >= low) & (batch <= high), axis=1)

    def steps(self, batch):
        return np.repeat(self.spacing[None, :], len(batch), axis=0)

    def value(self, t, x):
        batch, single = as_batch(x, self.dimension)
        inside = self.contains(batch)
        if not np.all(inside):
            where = batch[np.argmin(inside)]
            lower = (self.lower - self.collar).tolist()
            upper = (self.upper + self.collar).tolist()
            raise DomainTooSmall("point %s lies outside the extended box "
                                 "[%s, %s]" % (where.tolist(), lower, upper))
        position = (batch - self.lower) / self.spacing
        index = np.minimum(np.maximum(np.floor(position).astype(int), 0),
                           self.counts - 2)
        fraction = position - index
        result = np.zeros(len(batch))
        for corner in itertools.product((0, 1), repeat=self.dimension):
            weight = np.ones(len(batch))
            for k, c in enumerate(corner):
                weight *= fraction[:, k] if c else 1 - fraction[:, k]
            result += weight * self.values[tuple(index[:, k] + c for k, c
                                                 in enumerate(corner))]
        return unbatch(result, single)

    def sup_distance(self, other, t=0.0, fraction=None):
        """Sup-norm distance to a batched function ``other(t, x)`` over
        the nodes, optionally restricted to an inner box."""
        nodes = self.nodes()
        diff = np.abs(self.values.reshape(-1)
                      - column(other(t, nodes), len(nodes)))
        if fraction is not None:
            diff = diff[self.inner_mask(fraction).reshape(-1)]
        return float(diff.max())

    def __repr__(self):
        return "<GridField: %s nodes on [%s, %s]>" % (
            "x".join(str(c) for c in self.counts),
            self.lower.tolist(), self.upper.tolist())


class FieldSequence(Field):
    """A time-indexed family of fields such as a solved integro-PDE.

    Evaluation at time *t* uses the field of the nearest time node.
    """

    def __init__(self, times, fields):
        self.times = np.asarray(times, dtype=float)
        self.fields = list(fields)
        assert len(self.times) == len(self.fields), \
            "Expected one field per time node."
        self.dimension = self.fields[0].dimension

    def index(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t):
        return self.fields[self.index(t)]

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def value(self, t, x):
        return self.at(t).value(t, x)

    def gradient(self, t, x):
        return self.at(t).gradient(t, x)

    def hessian(self, t, x):
        return self.at(t).hessian(t, x)


class VectorField(object):
    """A batched vector-valued function ``func(t, x)`` with values in
    R^d and a finite-difference Jacobian.

    >>> vf = VectorField(lambda t, x: 3 * x, 1, 1)
    >>> round(vf.jacobian(0.0, [2.0])[0, 0], 8)
    3.0
    """

    def __init__(self, func, dimension, width, jacobian=None, step=FD_STEP):
        self.func = func
        self.dimension = dimension
        self.width = width
        self._jacobian = jacobian
        self.step = step

    @classmethod
    def zero(cls, dimension, width):
        return cls(lambda t, x: np.zeros((len(x), width)), dimension, width,
                   jacobian=lambda t, x: np.zeros((len(x), width, dimension)))

    def _values(self, t, batch):
        values = np.asarray(self.func(t, batch), dtype=float)
        return np.broadcast_to(values, (len(batch), self.width)).copy()

    def value(self, t, x):
        batch, single = as_batch(x, self.dimension)
        return unbatch(self._values(t, batch), single)

    __call__ = value

    def jacobian(self, t, x):
        """Derivatives ``d value_i / d x_k`` with shape ``(P, d, n)``."""
        batch, single = as_batch(x, self.dimension)
        count, n = batch.shape
        if self._jacobian is not None:
            jac = np.asarray(self._jacobian(t, batch), dtype=float)
            return unbatch(jac.reshape(count, self.width, n), single)
        h = self.step * (1 + np.linalg.norm(batch, axis=1))
        jac = np.empty((count, self.width, n))
        for k in range(n):
            shift = np.zeros(batch.shape)
            shift[:, k] = h
            jac[:, :, k] = ((self._values(t, batch + shift)
                             - self._values(t, batch - shift))
                            / (2 * h[:, None]))
        return unbatch(jac, single)


class MarkField(object):
    """A field ``func(t, e, x)`` indexed by the mark. The values at all
    atoms of a measure are collected by :meth:`atom_values`."""

    def __init__(self, func):
        self.func = func

    @classmethod
    def zero(cls):
        return cls(lambda t, e, x: np.zeros(len(x)))

    def atom_values(self, t, batch, mm):
        """Values at every atom, shape ``(P, m)``."""
        values = np.empty((len(batch), mm.size))
        for j, mark in enumerate(mm.marks):
            values[:, j] = column(self.func(t, mark, batch), len(batch))
        return values

    def __call__(self, t, e, x):
        batch, single = as_batch(x)
        return unbatch(column(self.func(t, e, batch), len(batch)), single)
