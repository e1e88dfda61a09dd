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

"""Mollifiers and mollified coefficients.

The standard mollifier is the bump

    rho(y) = c exp(1 / (|y|^2 - 1))  for |y| < 1,  0 otherwise,

with the constant *c* chosen so that rho integrates to one. At level
*l* the rescaled kernel is ``rho_l(x) = l^n rho(l x)`` and the
convolution

    (rho_l * f)(x) = int rho(y) f(x - y / l) dy

is computed by tensor-product Gauss-Legendre quadrature on the unit
cube, where the bump vanishes outside the ball. The normalization is
computed once per dimension and order with the same quadrature, so
constants are reproduced to rounding error and, the nodes being
symmetric, so are affine functions.

>>> spec = MollifierSpec(4, 1)
>>> round(mollify(lambda x: np.full(len(x), 3.0), spec, [0.5]), 10)
3.0
>>> round(mollify(lambda x: 2 * x[:, 0] - 1, spec, [1.0]), 10)
1.0
"""

import itertools
from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb.constants import QUADRATURE_ORDER
from jumphjb.errors import InvalidInstance
from jumphjb.util import as_batch, stream, unbatch

log = Logger()

#: Cached unit-ball rules keyed by ``(dimension, order)``.
_RULES = {}


def bump(points):
    """The unnormalized bump ``exp(1 / (|y|^2 - 1))`` on the unit ball.

    >>> bump(np.array([[0.0], [1.0]])).tolist() == [np.exp(-1.0), 0.0]
    True
    """
    r2 = np.sum(np.asarray(points, dtype=float) ** 2, axis=-1)
    values = np.zeros(r2.shape)
    inside = r2 < 1
    values[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return values


def unit_rule(dimension, order=QUADRATURE_ORDER):
    """Nodes and normalized weights of the mollifier on the unit ball.

    Only nodes where the bump is positive are kept. The weights sum to
    one.
    """
    key = (dimension, order)
    if key not in _RULES:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        grid = np.array(list(itertools.product(nodes, repeat=dimension)))
        product = np.array([np.prod(w) for w in
                            itertools.product(weights, repeat=dimension)])
        mass = product * bump(grid)
        keep = mass > 0
        total = mass[keep].sum()
        _RULES[key] = (grid[keep], mass[keep] / total, 1.0 / total)
        log.debug("mollifier rule for n={n}, order {order}: {nodes} nodes, "
                  "normalization {c:.12g}", n=dimension, order=order,
                  nodes=int(keep.sum()), c=1.0 / total)
    nodes, weights, _ = _RULES[key]
    return nodes, weights


def normalization(dimension, order=QUADRATURE_ORDER):
    """The constant *c* making the bump a probability density.

    >>> 2.2 < normalization(1) < 2.3
    True
    """
    unit_rule(dimension, order)
    return _RULES[(dimension, order)][2]


class MollifierSpec(object):
    """Mollification at *level* l in *dimension* n: the kernel has
    support radius ``1 / l``."""

    def __init__(self, level, dimension, order=QUADRATURE_ORDER):
        if level < 1:
            raise InvalidInstance("mollifier level must be at least 1")
        if dimension < 1:
            raise InvalidInstance("mollifier dimension must be positive")
        if order < 2:
            raise InvalidInstance("quadrature order must be at least 2")
        self.level = int(level)
        self.dimension = int(dimension)
        self.order = int(order)

    @property
    def radius(self):
        return 1.0 / self.level

    def rule(self):
        """Displacements and weights of the rescaled kernel."""
        nodes, weights = unit_rule(self.dimension, self.order)
        return nodes * self.radius, weights

    def __repr__(self):
        return "MollifierSpec(%d, %d)" % (self.level, self.dimension)


def _repeat_history(history, count, size):
    if history is None or len(history) != count or count == 1:
        return history
    return history.rows(np.repeat(np.arange(count), size))


def convolve(evaluate, spec, batch, args=(), history=None):
    """Convolve a batched function with the kernel of *spec*.

    The function is called as ``evaluate(points, *args, history)`` on
    every shifted point, with the per-row *args* and *history* repeated
    to match; its leading axis must be the point axis. The result has
    one row per state.
    """
    shifts, weights = spec.rule()
    count, size = len(batch), len(weights)
    points = (batch[:, None, :] - shifts[None]).reshape(count * size, -1)
    repeated = [np.repeat(np.asarray(a), size, axis=0) for a in args]
    values = np.asarray(evaluate(points, *(repeated + [_repeat_history(
        history, count, size)])), dtype=float)
    values = values.reshape((count, size) + values.shape[1:])
    return np.tensordot(weights, values, axes=([0], [1]))


def mollify(func, spec, x):
    """The mollified value ``(rho_l * func)(x)`` of a batched function
    of the state."""
    batch, single = as_batch(x, spec.dimension)
    return unbatch(convolve(lambda points, history: func(points), spec,
                            batch), single)


def mollified_coefficients(cs, mm, level, order=QUADRATURE_ORDER):
    """The coefficient set with b, sigma, g, h and f mollified in the
    state. The controls, the weight l and the arguments y, z and k of f
    are left alone."""
    spec = MollifierSpec(level, cs.n, order)

    def b(t, x, u, history=None):
        return convolve(lambda pts, uu, hh: cs.drift(t, pts, uu, hh),
                        spec, x, (u,), history)

    def sigma(t, x, u, history=None):
        return convolve(lambda pts, uu, hh: cs.diffusion(t, pts, uu, hh),
                        spec, x, (u,), history)

    def g(t, e, x, u, history=None):
        return convolve(lambda pts, uu, hh: cs.jump(t, e, pts, uu, hh),
                        spec, x, (u,), history)

    def f(t, x, u, y, z, k, history=None):
        return convolve(lambda pts, uu, yy, zz, kk, hh:
                        cs.driver(t, pts, uu, yy, zz, kk, hh),
                        spec, x, (u, y, z, k), history)

    def h(x, history=None):
        return convolve(lambda pts, hh: cs.terminal(pts, hh), spec, x,
                        history=history)

    name = "%s/l=%d" % (cs.name or "anonymous", spec.level)
    return cs.replace(b=b, sigma=sigma, g=g, f=f, h=h, name=name)


def lattice(lower, upper, count):
    """A regular lattice with *count* nodes per axis on a box.

    >>> lattice([-1.0], [1.0], 3).tolist()
    [[-1.0], [0.0], [1.0]]
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def coefficient_errors(cs, mm, spec, probe, times, nodes=41, seed=0,
                       mollified=None):
    """Estimate the mollification errors on the probe box.

    Returns an ordered dictionary with

    * ``delta_h``, the largest of ``|h_l - h| w_p`` over the probe
      lattice, with ``w_p(x) = 1 / (1 + |x|^p)``,
    * ``delta_f``, per time, the largest ``|f_l - f| w_p`` over the
      lattice, the controls and sampled (y, z, k),
    * ``delta_lambda``, per time, the largest
      ``|b_l - b| + |sigma_l - sigma| + |g_l - g|_{L^2(nu)}``.
    """
    if spec.dimension != cs.n:
        raise InvalidInstance("mollifier of dimension %d for states of "
                              "dimension %d" % (spec.dimension, cs.n))
    if mollified is None:
        mollified = mollified_coefficients(cs, mm, spec.level, spec.order)
    states = lattice(probe.lower, probe.upper, nodes)
    count = len(states)
    weight = 1.0 / (1 + np.linalg.norm(states, axis=1) ** cs.p)
    rng = stream(seed, "coefficient-errors")
    y = rng.standard_normal(count)
    z = rng.standard_normal((count, cs.d))
    k = rng.standard_normal(count)

    delta_h = float(np.max(np.abs(mollified.terminal(states)
                                  - cs.terminal(states)) * weight))
    delta_f, delta_lambda = [], []
    for t in np.atleast_1d(times):
        df, dl = 0.0, 0.0
        for u in cs.controls:
            diff_f = (mollified.driver(t, states, u, y, z, k)
                      - cs.driver(t, states, u, y, z, k))
            df = max(df, float(np.max(np.abs(diff_f) * weight)))
            diff_b = np.linalg.norm(mollified.drift(t, states, u)
                                    - cs.drift(t, states, u), axis=1)
            diff_s = np.linalg.norm((mollified.diffusion(t, states, u)
                                     - cs.diffusion(t, states, u)).reshape(
                                         count, -1), axis=1)
            jumps = np.zeros(count)
            for j, mark in enumerate(mm.marks):
                diff_g = (mollified.jump(t, mark, states, u)
                          - cs.jump(t, mark, states, u))
                jumps += mm.weights[j] * np.sum(diff_g ** 2, axis=1)
            dl = max(dl, float(np.max(diff_b + diff_s + np.sqrt(jumps))))
        delta_f.append(df)
        delta_lambda.append(dl)

    report = OrderedDict()
    report["level"] = spec.level
    report["delta_h"] = delta_h
    report["delta_f"] = np.array(delta_f)
    report["delta_lambda"] = np.array(delta_lambda)
    log.info("mollification level {mollifier}: dh={dh:.3e}, max df={df:.3e}, "
             "max dL={dl:.3e}", mollifier=spec.level, dh=delta_h,
             df=max(delta_f), dl=max(delta_lambda))
    return report
