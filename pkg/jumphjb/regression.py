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

"""Least-squares conditional expectations.

Conditional expectations given the state are approximated by
projecting onto a finite basis. Two bases are offered: total-degree
polynomials in coordinates scaled to ``[-1, 1]`` over the domain box,
and a local partition of the box into cells with an affine fit per
cell.

>>> import numpy as np
>>> x = np.linspace(-1.0, 1.0, 21).reshape(-1, 1)
>>> fit = RegressionBasis("polynomial", degree=2).fit(x, 3 * x[:, 0] ** 2)
>>> round(float(fit.predict([[0.5]])[0]), 10)
0.75

The normal equations are solved directly. When their condition number
exceeds ``1e10`` a ridge term of ``1e-8`` times the mean diagonal is
added; if the system is still singular, :exc:`IllConditionedBasis` is
raised with the offending step.
"""

import itertools

import numpy as np
import scipy.linalg
from twisted.logger import Logger

from jumphjb.constants import (RIDGE_CONDITION, RIDGE_FACTOR,
                               SINGULAR_CONDITION)
from jumphjb.errors import IllConditionedBasis, InvalidInstance

log = Logger()


def least_squares(features, targets, step=None):
    """Solve the normal equations for *targets* on *features*.

    Returns the coefficients and the condition number of the Gram
    matrix after any ridge correction.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    count, dim = features.shape
    gram = features.T.dot(features) / count
    rhs = features.T.dot(targets) / count
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs))):
        raise IllConditionedBasis(-1 if step is None else step, np.inf)
    condition = np.linalg.cond(gram)
    if condition > RIDGE_CONDITION:
        ridge = RIDGE_FACTOR * np.trace(gram) / dim
        gram = gram + ridge * np.eye(dim)
        condition = np.linalg.cond(gram)
        log.debug("ridge {ridge:.3g} added at step {step}", ridge=ridge,
                  step=step)
    if not condition <= SINGULAR_CONDITION:
        raise IllConditionedBasis(-1 if step is None else step, condition)
    return scipy.linalg.solve(gram, rhs, assume_a="sym"), condition


class RegressionBasis(object):
    """A regression basis: ``"polynomial"`` of total *degree* or
    ``"local"`` with *cells* cells per axis. The domain box defaults to
    the range of the fitted states."""

    KINDS = ("polynomial", "local")

    def __init__(self, kind="polynomial", degree=3, cells=8, lower=None,
                 upper=None):
        if kind not in self.KINDS:
            raise InvalidInstance("unknown basis kind %r" % kind)
        if degree < 0 or cells < 1:
            raise InvalidInstance("basis degree must be non-negative and "
                                  "the cell count positive")
        self.kind = kind
        self.degree = int(degree)
        self.cells = int(cells)
        self.lower = lower
        self.upper = upper

    def fit(self, states, targets, step=None):
        """Fit *targets* (shape ``(P,)`` or ``(P, r)``) on *states*."""
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        lower = states.min(axis=0) if self.lower is None else \
            np.broadcast_to(np.asarray(self.lower, dtype=float),
                            states.shape[1:])
        upper = states.max(axis=0) if self.upper is None else \
            np.broadcast_to(np.asarray(self.upper, dtype=float),
                            states.shape[1:])
        center = 0.5 * (lower + upper)
        half = 0.5 * (upper - lower)
        # Axes along which every state coincides carry no information.
        active = half > 1e-12 * (1 + np.abs(center))
        fit = Fit(self, center, np.where(active, half, 1.0), active)
        fit.solve(states, np.asarray(targets, dtype=float), step)
        return fit

    def __repr__(self):
        if self.kind == "polynomial":
            return "RegressionBasis('polynomial', degree=%d)" % self.degree
        return "RegressionBasis('local', cells=%d)" % self.cells


class Fit(object):
    """A fitted regression, usable as a function of the state."""

    def __init__(self, basis, center, half, active):
        self.basis = basis
        self.center = center
        self.half = half
        self.active = active
        self.condition = 1.0

    @property
    def size(self):
        """Number of fitted basis columns."""
        if self._local is None:
            return len(self.coefficients)
        return sum(len(c) for c in self._local.values())

    def _scaled(self, states):
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, len(self.center))
        return ((states - self.center) / self.half)[:, self.active]

    def _exponents(self, dim):
        degree = self.basis.degree
        return [alpha for total in range(degree + 1)
                for alpha in itertools.product(range(total + 1), repeat=dim)
                if sum(alpha) == total]

    def _polynomial(self, scaled):
        columns = [np.prod(scaled ** np.array(alpha, dtype=float), axis=1)
                   for alpha in self._exponents(scaled.shape[1])]
        return np.stack(columns, axis=1)

    def _cells(self, scaled):
        cells = self.basis.cells
        index = np.floor((scaled + 1) * 0.5 * cells).astype(int)
        index = np.clip(index, 0, cells - 1)
        flat = np.zeros(len(scaled), dtype=int)
        for k in range(scaled.shape[1]):
            flat = flat * cells + index[:, k]
        return flat

    def solve(self, states, targets, step):
        scaled = self._scaled(states)
        if self.basis.kind == "polynomial" or scaled.shape[1] == 0:
            features = self._polynomial(scaled)
            self.coefficients, self.condition = least_squares(
                features, targets, step)
            self._local = None
            return

        flat = self._cells(scaled)
        dim = scaled.shape[1]
        fallback = targets.mean(axis=0)
        self._local = {}
        self._fallback = fallback
        for cell in np.unique(flat):
            mask = flat == cell
            rows = int(mask.sum())
            if rows >= 2 * (dim + 1):
                features = np.column_stack([np.ones(rows), scaled[mask]])
                try:
                    coefficients, condition = least_squares(
                        features, targets[mask], step)
                    self.condition = max(self.condition, condition)
                    self._local[cell] = coefficients
                    continue
                except IllConditionedBasis:
                    pass
            mean = targets[mask].mean(axis=0)
            coefficients = np.zeros((dim + 1,) + np.shape(mean))
            coefficients[0] = mean
            self._local[cell] = coefficients

    def predict(self, states):
        scaled = self._scaled(states)
        if self._local is None:
            return self._polynomial(scaled).dot(self.coefficients)
        flat = self._cells(scaled)
        features = np.column_stack([np.ones(len(scaled)), scaled])
        shape = (len(scaled),) + np.shape(self._fallback)
        result = np.empty(shape)
        result[...] = self._fallback
        for cell, coefficients in self._local.items():
            mask = flat == cell
            if np.any(mask):
                result[mask] = features[mask].dot(coefficients)
        return result

    def __call__(self, states):
        return self.predict(states)
