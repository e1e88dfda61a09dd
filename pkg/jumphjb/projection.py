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

"""Finite-dimensional projections of the driving noise.

A projection at level (N, M) splits the time grid into N equal
intervals and the atoms of the mark measure into M contiguous groups;
atom *j* of *m* belongs to group ``floor(j M / m)``, so the groups at
level 2M refine those at level M. A path is then summarized by its
Brownian increment and its jump count per group over every interval.

Functionals of the path are approximated by regression on cylinder
functions of this summary: polynomials (or local affine pieces) of a
:class:`jumphjb.regression.RegressionBasis` in the cumulative Brownian
values and the cumulative group counts at the interval ends. The
coarse coordinates are linear in the fine ones when N and M are
refined by integer factors, so polynomial spans are nested and the
in-sample residual does not increase along such a sequence of levels.
"""

from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb.errors import IllConditionedBasis, InvalidInstance
from jumphjb.regression import RegressionBasis
from jumphjb.util import begin, end

log = Logger()


def mark_groups(atoms, groups):
    """The group of every atom.

    >>> mark_groups(4, 2).tolist()
    [0, 0, 1, 1]
    """
    if groups < 1:
        raise InvalidInstance("at least one mark group is needed")
    if atoms and groups > atoms:
        raise InvalidInstance("%d mark groups for %d atoms" % (groups, atoms))
    return (np.arange(atoms) * groups) // max(atoms, 1)


class NoiseProjection(object):
    """Per path Brownian increments and grouped jump counts over the
    intervals of a time partition."""

    def __init__(self, nodes, groups, brownian, counts):
        #: Partition times, N + 1 of them.
        self.nodes = nodes
        #: Group index of every atom.
        self.groups = groups
        #: Brownian increments, shape ``(P, N, d)``.
        self.brownian = brownian
        #: Jump counts, shape ``(P, N, M)``.
        self.counts = counts

    @property
    def intervals(self):
        return self.brownian.shape[1]

    @property
    def group_count(self):
        return self.counts.shape[2]

    def features(self):
        """Cylinder coordinates: cumulative Brownian values and
        cumulative group counts at the interval ends."""
        count = self.brownian.shape[0]
        walk = np.cumsum(self.brownian, axis=1).reshape(count, -1)
        jumps = np.cumsum(self.counts, axis=1).reshape(count, -1)
        return np.hstack([walk, jumps.astype(float)])

    def __eq__(self, other):
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.groups, other.groups)
                and np.array_equal(self.brownian, other.brownian)
                and np.array_equal(self.counts, other.counts))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "<NoiseProjection: %d paths, N=%d, M=%d>" % (
            self.brownian.shape[0], self.intervals, self.group_count)


def project_noise(bundle, mm, intervals, groups):
    """Project the noise of *bundle* on *intervals* equal time
    intervals and *groups* mark groups."""
    grid = bundle.grid
    if intervals < 1 or grid.steps % intervals:
        raise InvalidInstance("%d intervals do not divide %d steps"
                              % (intervals, grid.steps))
    index = mark_groups(mm.size, groups)
    count = bundle.n_paths
    width = grid.steps // intervals
    brownian = bundle.brownian_increments.reshape(
        count, intervals, width, -1).sum(axis=2)
    per_step = bundle.jump_counts(mm).reshape(count, intervals, width,
                                              mm.size).sum(axis=2)
    counts = np.zeros((count, intervals, groups), dtype=np.int64)
    for j in range(mm.size):
        counts[:, :, index[j]] += per_step[:, :, j]
    nodes = grid.nodes[::width]
    return NoiseProjection(nodes, index, brownian, counts)


def coarsen(projection, intervals, groups):
    """Aggregate a projection to a coarser level.

    Both *intervals* and *groups* must divide the current ones.
    """
    fine_n, fine_m = projection.intervals, projection.group_count
    if intervals < 1 or fine_n % intervals:
        raise InvalidInstance("%d intervals do not divide %d"
                              % (intervals, fine_n))
    if groups < 1 or fine_m % groups:
        raise InvalidInstance("%d groups do not divide %d" % (groups, fine_m))
    count = projection.brownian.shape[0]
    width, merge = fine_n // intervals, fine_m // groups
    brownian = projection.brownian.reshape(count, intervals, width,
                                           -1).sum(axis=2)
    counts = projection.counts.reshape(count, intervals, width,
                                       fine_m).sum(axis=2)
    counts = counts.reshape(count, intervals, groups, merge).sum(axis=3)
    return NoiseProjection(projection.nodes[::width],
                           projection.groups // merge, brownian, counts)


def cylinder_fit(features, target, basis=None, step=None):
    """Regress *target* on cylinder functions of *features*: the
    functions spanned by *basis* (affine polynomials by default).
    Returns the fit and the residuals.

    >>> x = np.linspace(-1.0, 1.0, 9).reshape(-1, 1)
    >>> fit, residual = cylinder_fit(x, x[:, 0] ** 2,
    ...                              RegressionBasis("polynomial", degree=2))
    >>> bool(np.abs(residual).max() < 1e-10)
    True
    """
    if basis is None:
        basis = RegressionBasis("polynomial", degree=1)
    features = np.asarray(features, dtype=float)
    target = np.asarray(target, dtype=float)
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(target))):
        raise IllConditionedBasis(-1 if step is None else step, np.inf)
    fit = basis.fit(features, target, step)
    return fit, target - fit.predict(features)


def projection_error(target, bundle, projections, basis=None):
    """Regress the per-path *target* on cylinder functions of every
    projection in *projections* (see :func:`project_noise`) and report
    one row per projection.

    The rows carry the number of cylinder coordinates plus the
    constant, the number of basis columns after dropping coordinates
    that are constant over the paths, the root-mean-square residual
    and that residual relative to the spread of the target.
    """
    if basis is None:
        basis = RegressionBasis("polynomial", degree=1)
    target = np.asarray(target, dtype=float).reshape(bundle.n_paths)
    spread = float(np.sqrt(np.mean((target - target.mean()) ** 2)))
    rows = []
    begin(None, "projection")
    for level, projection in enumerate(projections):
        if projection.brownian.shape[0] != bundle.n_paths:
            raise InvalidInstance("projection of %d paths for a bundle of "
                                  "%d" % (projection.brownian.shape[0],
                                          bundle.n_paths))
        features = projection.features()
        fit, residual = cylinder_fit(features, target, basis, level)
        error = float(np.sqrt(np.mean(residual ** 2)))
        row = OrderedDict()
        row["intervals"] = projection.intervals
        row["groups"] = projection.group_count
        row["features"] = features.shape[1] + 1
        row["columns"] = fit.size
        row["residual"] = error
        row["relative"] = error / spread if spread > 0 else 0.0
        rows.append(row)
        log.debug("projection N={n}, M={m}: residual {r:.4g}",
                  n=projection.intervals, m=projection.group_count, r=error)
    end(None, "projection")
    return rows


def nonincreasing(rows, tolerance=1e-9):
    """True if the residuals of *rows* never increase by more than
    *tolerance* relative to the first.

    >>> nonincreasing([{"residual": 2.0}, {"residual": 1.0}])
    True
    """
    values = [row["residual"] for row in rows]
    slack = tolerance * (1 + abs(values[0])) if values else 0.0
    return all(b <= a + slack for a, b in zip(values, values[1:]))
