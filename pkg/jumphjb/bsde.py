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

"""Backward solution of the recursive cost equation by regression.

Given a :class:`jumphjb.forward.PathBundle` the triple (Y, Z, K) is
computed backward from ``Y_N = h(X_N)``. At step *i* the conditional
expectations given ``X_i`` are least-squares fits on a
:class:`jumphjb.regression.RegressionBasis`:

* ``Z_i = E[Y_{i+1} dW_i | X_i] / dt``,
* ``K_i(e_j) = E[Y_{i+1} (N_ij - w_j dt) | X_i] / (w_j dt)`` where
  ``N_ij`` counts the jumps of atom *j* in the step,
* ``Y_i = E[Y_{i+1} + f(t_i, X_i, u_i, Y_{i+1}, Z_i, k_i) dt | X_i]``
  with ``k_i = sum_j K_i(e_j) l(t_i, e_j) w_j``.

The targets for Z and K are centered by the sample mean of
``Y_{i+1}``, which leaves the conditional expectations unchanged and
removes most of their variance. An optional sweep re-evaluates f at
the explicit Y_i.
"""

import numpy as np
from twisted.logger import Logger

from jumphjb.errors import InvalidInstance
from jumphjb.forward import simulate
from jumphjb.util import begin, end, envelope_constant

log = Logger()


class BsdeSolution(object):
    """The discrete triple (Y, Z, K) along a bundle."""

    def __init__(self, grid, y, z, k, k_agg, driver, terminal, fits):
        self.grid = grid
        #: Y per path and node, shape ``(P, steps + 1)``.
        self.y = y
        #: Z per path and step, shape ``(P, steps, d)``.
        self.z = z
        #: K per path, step and atom, shape ``(P, steps, m)``.
        self.k = k
        #: The aggregate passed to f, shape ``(P, steps)``.
        self.k_agg = k_agg
        #: The value of f used at every step, shape ``(P, steps)``.
        self.driver = driver
        #: Terminal values, shape ``(P,)``.
        self.terminal = terminal
        #: The Y regressions, one per node (None at the last node).
        self.fits = fits

    @property
    def y0(self):
        return float(self.y[:, 0].mean())

    def pathwise_cost(self):
        """``Y_N + sum_i f_i dt``, whose mean estimates Y_0."""
        return self.terminal + self.driver.sum(axis=1) * self.grid.dt

    def stderr(self):
        cost = self.pathwise_cost()
        return float(cost.std() / np.sqrt(len(cost)))

    def value_at(self, step, states):
        """The fitted Y at *step* as a function of the state."""
        if step == self.grid.steps:
            raise InvalidInstance("no regression at the terminal node")
        return self.fits[step].predict(states)


def solve(cs, mm, bundle, basis, terminal=None, implicit=False):
    """Solve the recursive cost equation backward along *bundle*.

    The terminal condition is ``h(X_N)`` unless a batched *terminal*
    function of the state is given, as for the backward semigroup.
    """
    grid = bundle.grid
    steps, dt = grid.steps, grid.dt
    states = bundle.states
    count = bundle.n_paths
    increments = bundle.brownian_increments
    counts = bundle.jump_counts(mm)
    history = bundle.history(mm)
    expected = mm.weights * dt

    final = states[:, -1]
    if terminal is None:
        y_next = cs.terminal(final, history.at(steps))
    else:
        y_next = np.asarray(terminal(final), dtype=float).reshape(count)
    terminal_values = y_next.copy()

    y = np.empty((count, steps + 1))
    y[:, -1] = y_next
    z = np.zeros((count, steps, cs.d))
    k = np.zeros((count, steps, mm.size))
    k_agg = np.zeros((count, steps))
    driver = np.zeros((count, steps))
    fits = [None] * (steps + 1)

    begin(None, "backward")
    for i in reversed(range(steps)):
        t = grid.nodes[i]
        x = states[:, i]
        u = bundle.control_trace[:, i]
        now = history.at(i)
        centered = y_next - y_next.mean()

        targets = [centered[:, None] * increments[:, i] / dt]
        live = expected > 0
        if mm.size:
            compensated = np.zeros((count, mm.size))
            compensated[:, live] = ((counts[:, i, live] - expected[live])
                                    / expected[live])
            targets.append(centered[:, None] * compensated)
        fit = basis.fit(x, np.hstack(targets), step=i)
        fitted = fit.predict(x)
        z[:, i] = fitted[:, :cs.d]
        k[:, i] = fitted[:, cs.d:]
        k[:, i, ~live] = 0.0
        k_agg[:, i] = k[:, i].dot(mm.weights * cs.weights(t, mm))

        f = cs.driver(t, x, u, y_next, z[:, i], k_agg[:, i], now)
        fit = basis.fit(x, y_next + f * dt, step=i)
        y_now = fit.predict(x)
        if implicit:
            f = cs.driver(t, x, u, y_now, z[:, i], k_agg[:, i], now)
            fit = basis.fit(x, y_next + f * dt, step=i)
            y_now = fit.predict(x)
        driver[:, i] = f
        fits[i] = fit
        y[:, i] = y_now
        y_next = y_now
    end(None, "backward")
    log.debug("backward sweep over {steps} steps: Y0 = {y0}", steps=steps,
              y0=float(y[:, 0].mean()))
    return BsdeSolution(grid, y, z, k, k_agg, driver, terminal_values, fits)


def recursive_cost_estimate(cs, mm, grid, x0, policy, basis, n_paths,
                            master_seed, threads=None, implicit=False):
    """Simulate and solve; return the cost with its standard error and
    the solution."""
    bundle = simulate(cs, mm, grid, x0, policy, n_paths, master_seed,
                      threads)
    solution = solve(cs, mm, bundle, basis, implicit=implicit)
    return solution.y0, solution.stderr(), solution


def recursive_cost(cs, mm, grid, x0, policy, basis, n_paths, master_seed,
                   threads=None, implicit=False):
    """The recursive cost J = Y(t0) from a deterministic initial state.

    >>> from jumphjb import scenarios
    >>> from jumphjb.forward import TimeGrid, constant_policy
    >>> from jumphjb.regression import RegressionBasis
    >>> sc = scenarios.load("zero")
    >>> recursive_cost(sc.coefficients, sc.marks, TimeGrid(0.0, 1.0, 4),
    ...                [0.0], constant_policy([0.0]), RegressionBasis(),
    ...                16, 0)
    0.0
    """
    return recursive_cost_estimate(cs, mm, grid, x0, policy, basis, n_paths,
                                   master_seed, threads, implicit)[0]


def backward_semigroup(cs, mm, grid, x0, policy, terminal_field, basis,
                       n_paths, master_seed, threads=None, label="semigroup"):
    """The backward semigroup over the segment covered by *grid*: solve
    with ``Y(gamma) = terminal_field(X(gamma))`` and return Y at the
    start of the segment."""
    bundle = simulate(cs, mm, grid, x0, policy, n_paths, master_seed,
                      threads, label)
    return solve(cs, mm, bundle, basis, terminal=terminal_field).y0


def martingale_residuals(solution, cs, mm, bundle):
    """Per-step residuals

        Y_{i+1} - Y_i + f_i dt - Z_i dW_i - sum_j K_ij (N_ij - w_j dt)

    summarized by their mean and standard error."""
    dt = bundle.grid.dt
    counts = bundle.jump_counts(mm)
    rows = []
    for i in range(bundle.grid.steps):
        jump_term = (solution.k[:, i]
                     * (counts[:, i] - mm.weights * dt)).sum(axis=1)
        residual = (solution.y[:, i + 1] - solution.y[:, i]
                    + solution.driver[:, i] * dt
                    - np.einsum("pd,pd->p", solution.z[:, i],
                                bundle.brownian_increments[:, i])
                    - jump_term)
        rows.append({"step": i, "mean": float(residual.mean()),
                     "stderr": float(residual.std()
                                     / np.sqrt(len(residual)))})
    return rows


def apriori_report(solution, cs, bundle, other=None):
    """A priori diagnostics of a solved instance.

    Reports |Y(0)| with the fitted constant of the envelope
    ``C (1 + |x0|^p)``. When *other* is a ``(solution, bundle)`` pair
    from a nearby initial state, the cost difference is also reported
    with the constant of ``C (1 + |x|^{p-1} + |x'|^{p-1}) |x - x'|``.
    """
    x0 = bundle.states[0, 0]
    y0 = solution.y0
    report = {"y0": y0, "abs_y0": abs(y0),
              "envelope": 1 + np.linalg.norm(x0) ** cs.p,
              "envelope_constant": envelope_constant(y0, x0, cs.p),
              "z_norm": float(np.sqrt(np.mean(np.sum(solution.z ** 2,
                                                     axis=2)))),
              "k_norm": float(np.sqrt(np.mean(solution.k ** 2)))
              if solution.k.size else 0.0}
    if other is not None:
        other_solution, other_bundle = other
        x1 = other_bundle.states[0, 0]
        distance = float(np.linalg.norm(x1 - x0))
        weight = (1 + np.linalg.norm(x0) ** (cs.p - 1)
                  + np.linalg.norm(x1) ** (cs.p - 1)) * distance
        difference = abs(other_solution.y0 - y0)
        report["cost_difference"] = difference
        report["stability_constant"] = difference / weight if weight else 0.0
    return report
