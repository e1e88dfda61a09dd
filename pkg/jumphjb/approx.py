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

"""Bounding equations, the localising penalty and the Lyapunov weight.

The comparison between a solution and its mollified approximation is
controlled by the bounding equation

    -dY = (df(s) + C_V dL(s) + (L_y + C_phi) Y) ds,    Y(T) = dh,

driven by the deterministic error envelopes of
:mod:`jumphjb.mollify`. It is solved backward with the trapezoid rule
on a time grid:

>>> from jumphjb.forward import TimeGrid
>>> y = bounding_bsde(1.0, 0.0, 0.0, 0.0, 0.0, 0.5, TimeGrid(0.0, 1.0, 64))
>>> abs(y[0] - np.exp(0.5)) < 1e-4
True

The weight ``phi(x) = 1 + |x|^p`` satisfies the Lyapunov condition
``L^u phi <= C_phi phi`` under the linear growth of the coefficients;
:func:`lyapunov_check` estimates C_phi on a probe box. The strictly
convex penalty ``chi(x) = (1 + |x|^2)^((p + 2) / 2) - 1`` localises
maxima of fields with growth p.
"""

from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb.coefficients import generator_L
from jumphjb.errors import InvalidInstance
from jumphjb.field import AnalyticField, Field
from jumphjb.mollify import lattice
from jumphjb.util import as_batch, unbatch

log = Logger()


def _series(values, count, name):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(count, float(values))
    if values.shape != (count,):
        raise InvalidInstance("%s needs one value per grid node" % name)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidInstance("%s must be finite and non-negative" % name)
    return values


def _sources(delta_f, delta_lambda, c_v, grid):
    count = grid.steps + 1
    return (_series(delta_f, count, "delta_f")
            + c_v * _series(delta_lambda, count, "delta_lambda"))


def bounding_bsde(delta_h, delta_f, delta_lambda, c_v, l_y, c_phi, grid):
    """Solve the bounding equation backward; returns Y at every node.

    *delta_f* and *delta_lambda* are numbers or series over the grid
    nodes.
    """
    for name, value in (("delta_h", delta_h), ("C_V", c_v), ("L_y", l_y),
                        ("C_phi", c_phi)):
        if not value >= 0:
            raise InvalidInstance("%s must be non-negative, got %r"
                                  % (name, value))
    source = _sources(delta_f, delta_lambda, c_v, grid)
    rate, dt = l_y + c_phi, grid.dt
    if rate * dt >= 2:
        raise InvalidInstance("time step %g too large for the rate %g"
                              % (dt, rate))
    y = np.empty(grid.steps + 1)
    y[-1] = delta_h
    for i in reversed(range(grid.steps)):
        y[i] = (y[i + 1] * (1 + 0.5 * rate * dt)
                + 0.5 * dt * (source[i] + source[i + 1])) \
            / (1 - 0.5 * rate * dt)
    return y


def envelope_drift_residual(y, delta_f, delta_lambda, c_v, l_y, c_phi, grid,
                            states, p):
    """The discrete drift of the envelope ``Y phi`` minus the terms it
    has to absorb.

    Along the trapezoid solution the drift ``(Y_i - Y_{i+1}) phi / dt``
    of the envelope equals the error source plus ``L_y Y phi`` plus the
    Lyapunov allowance ``C_phi Y phi`` at the step midpoints. The
    largest difference relative to the size of the terms is returned;
    it vanishes up to rounding.
    """
    source = _sources(delta_f, delta_lambda, c_v, grid)
    y = np.asarray(y, dtype=float)
    phi = weight_derivatives(states, p)[0]
    phi = np.atleast_1d(phi)
    dt = grid.dt
    worst = 0.0
    for i in range(grid.steps):
        middle = 0.5 * (y[i] + y[i + 1])
        drift = (y[i] - y[i + 1]) / dt * phi
        absorbed = (0.5 * (source[i] + source[i + 1]) * phi
                    + l_y * middle * phi + c_phi * middle * phi)
        scale = 1 + np.abs(drift) + np.abs(absorbed)
        worst = max(worst, float(np.max(np.abs(drift - absorbed) / scale)))
    return worst


def weight_derivatives(x, p):
    """Value, gradient and Hessian of ``phi(x) = 1 + |x|^p``.

    >>> value, gradient, hessian = weight_derivatives([1.0, 0.0], 2)
    >>> value, gradient.tolist(), hessian.tolist()
    (2.0, [2.0, 0.0], [[2.0, 0.0], [0.0, 2.0]])
    """
    batch, single = as_batch(x)
    count, n = batch.shape
    r = np.linalg.norm(batch, axis=1)
    safe = np.where(r > 0, r, 1.0)
    value = 1 + r ** p
    gradient = (p * r ** (p - 2))[:, None] * batch
    outer = np.einsum("pi,pj->pij", batch, batch)
    curvature = np.where(r > 0, p * (p - 2) * safe ** (p - 4), 0.0)
    hessian = ((p * r ** (p - 2))[:, None, None] * np.eye(n)
               + curvature[:, None, None] * outer)
    if single:
        return float(value[0]), gradient[0], hessian[0]
    return value, gradient, hessian


def weight_field(p, dimension):
    """The weight ``1 + |x|^p`` as a field with exact derivatives."""
    return AnalyticField(lambda t, x: weight_derivatives(x, p)[0], dimension,
                         gradient=lambda t, x: weight_derivatives(x, p)[1],
                         hessian=lambda t, x: weight_derivatives(x, p)[2])


def penalty_hessian(x, center, p):
    """The Hessian of the penalty at *x*."""
    batch, single = as_batch(x)
    y = batch - np.asarray(center, dtype=float)
    n = batch.shape[1]
    base = 1 + np.sum(y * y, axis=1)
    q = 0.5 * (p + 2)
    hessian = ((2 * q * base ** (q - 1))[:, None, None] * np.eye(n)
               + (4 * q * (q - 1) * base ** (q - 2))[:, None, None]
               * np.einsum("pi,pj->pij", y, y))
    return unbatch(hessian, single)


def penalty_chi(x, center, p):
    """The penalty ``chi(x - center)`` with its gradient and the
    smallest eigenvalue of its Hessian.

    The Hessian is bounded below by ``(p + 2) (1 + |x - center|^2)^(p/2)``
    times the identity.

    >>> value, gradient, smallest = penalty_chi([1.0], [0.0], 2)
    >>> value, gradient.tolist()
    (3.0, [8.0])
    """
    if p < 2:
        raise InvalidInstance("the penalty needs p >= 2")
    batch, single = as_batch(x)
    y = batch - np.asarray(center, dtype=float)
    base = 1 + np.sum(y * y, axis=1)
    q = 0.5 * (p + 2)
    value = base ** q - 1
    gradient = (2 * q * base ** (q - 1))[:, None] * y
    hessian = penalty_hessian(batch, center, p)
    smallest = np.linalg.eigvalsh(hessian).min(axis=1)
    bound = (p + 2) * base ** (0.5 * p)
    assert np.all(smallest >= bound * (1 - 1e-12) - 1e-8), \
        "Penalty Hessian below its convexity bound."
    if single:
        return float(value[0]), gradient[0], float(smallest[0])
    return value, gradient, smallest


def penalty_derivative_check(points, center, p, step=1e-5):
    """Compare the gradient of :func:`penalty_chi` and
    :func:`penalty_hessian` with central differences at *points*.

    Errors are relative to ``max(1, |exact|)`` per entry. The report
    also carries the smallest margin of the Hessian's least eigenvalue
    over the convexity bound.
    """
    batch, _ = as_batch(points)
    count, n = batch.shape
    _, gradient, smallest = penalty_chi(batch, center, p)
    gradient = np.asarray(gradient).reshape(count, n)
    hessian = np.asarray(penalty_hessian(batch, center, p)).reshape(count, n,
                                                                     n)
    numeric_gradient = np.empty((count, n))
    numeric_hessian = np.empty((count, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        up, down = penalty_chi(batch + e, center, p), \
            penalty_chi(batch - e, center, p)
        numeric_gradient[:, k] = (up[0] - down[0]) / (2 * step)
        numeric_hessian[:, :, k] = ((np.asarray(up[1]) - np.asarray(down[1]))
                                    / (2 * step))
    y = batch - np.asarray(center, dtype=float)
    bound = (p + 2) * (1 + np.sum(y * y, axis=1)) ** (0.5 * p)
    report = OrderedDict()
    report["p"] = p
    report["points"] = count
    report["gradient_error"] = float(np.max(
        np.abs(numeric_gradient - gradient)
        / np.maximum(1.0, np.abs(gradient))))
    report["hessian_error"] = float(np.max(
        np.abs(numeric_hessian - hessian)
        / np.maximum(1.0, np.abs(hessian))))
    report["convexity_margin"] = float(np.min(np.atleast_1d(smallest)
                                              - bound))
    return report


def _field_values(field, batch, t):
    if isinstance(field, Field):
        return np.asarray(field.value(t, batch), dtype=float).reshape(
            len(batch))
    return np.asarray(field(batch), dtype=float).reshape(len(batch))


def penalty_argmax(field, center, p, epsilon, lower, upper, nodes=101,
                   t=0.0):
    """Locate the maximum of ``field(x) - epsilon chi(x - center)`` on a
    lattice over the box ``[lower, upper]``.

    The report tells whether the maximum lies strictly inside the box.
    """
    states = lattice(lower, upper, nodes)
    values = (_field_values(field, states, t)
              - epsilon * penalty_chi(states, center, p)[0])
    best = int(np.argmax(values))
    point = states[best]
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    report = OrderedDict()
    report["epsilon"] = epsilon
    report["argmax"] = point.tolist()
    report["maximum"] = float(values[best])
    report["interior"] = bool(np.all(point > lower) and np.all(point < upper))
    return report


def lyapunov_check(cs, mm, p, probe, t=0.0, nodes=41, history=None):
    """Fit the Lyapunov constant of the weight ``1 + |x|^p``.

    The generator is applied to the weight at every lattice node of the
    probe box and every control. The report holds the largest ratio
    ``L^u phi / phi`` as ``c_phi``, the largest ratio of the weighted
    bound ``|D phi| + (1 + |x|) |D^2 phi| + L^u phi`` to ``phi`` as
    ``weighted_constant``, the state attaining ``c_phi`` and the number
    of non-finite evaluations.
    """
    cs.require_controls()
    states = lattice(probe.lower, probe.upper, nodes)
    phi = weight_field(p, cs.n)
    value, gradient, hessian = weight_derivatives(states, p)
    value = np.atleast_1d(value)
    derivative_size = (np.linalg.norm(gradient.reshape(len(states), -1),
                                      axis=1)
                       + (1 + np.linalg.norm(states, axis=1))
                       * np.linalg.norm(hessian, ord=2, axis=(1, 2)))
    best, weighted, where, bad = -np.inf, -np.inf, None, 0
    per_control = []
    for u in cs.controls:
        generated = np.asarray(generator_L(cs, mm, t, states, u, phi, history),
                               dtype=float).reshape(len(states))
        finite = np.isfinite(generated)
        bad += int(np.sum(~finite))
        ratio = np.where(finite, generated / value, -np.inf)
        index = int(np.argmax(ratio))
        per_control.append(float(ratio[index]))
        if ratio[index] > best:
            best, where = float(ratio[index]), states[index].tolist()
        weighted = max(weighted, float(np.max(np.where(
            finite, (derivative_size + generated) / value, -np.inf))))
    report = OrderedDict()
    report["p"] = p
    report["c_phi"] = best
    report["weighted_constant"] = weighted
    report["argmax"] = where
    report["per_control"] = per_control
    report["nonfinite"] = bad
    report["points"] = len(states)
    if bad:
        log.warn("Lyapunov check: {bad} non-finite generator values", bad=bad)
    log.info("Lyapunov constant for p={p}: {c:.6g}", p=p, c=best)
    return report
