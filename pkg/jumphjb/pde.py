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

"""Finite-difference solution of the HJB integro-PDE

    -dV/dt = F(t, x, V, 0, 0),     V(T, x) = h(x),

for coefficients that are deterministic, possibly after freezing a
noise history. Time stepping is explicit and backward:

    V_i = V_{i+1} + dt F(t_{i+1}, x, V_{i+1})

at the interior nodes of a :class:`SpaceBox`, with central differences
for DV and D^2V (see :class:`jumphjb.field.GridField`) and the exact
atom sum for the nonlocal terms. Boundary nodes are refilled by linear
extrapolation from the interior after every step.

The step must satisfy

    dt <= dx^2 / (n max|sigma sigma^T| + dx^2 (nu(E) + max|b| / dx)),

otherwise :exc:`StepTooLarge` is raised with the bound.
"""

from collections import OrderedDict

import numpy as np
from scipy import stats
from twisted.logger import Logger

from jumphjb.approx import bounding_bsde, lyapunov_check
from jumphjb.bsde import BsdeSolution
from jumphjb.coefficients import drift_F, minimize_drift, probe_assumptions
from jumphjb.constants import QUADRATURE_ORDER
from jumphjb.errors import InvalidInstance, StepTooLarge
from jumphjb.field import FieldSequence, GridField
from jumphjb.forward import NoiseHistory, TimeGrid, sample_noise, step_counts
from jumphjb.mollify import (MollifierSpec, coefficient_errors,
                              mollified_coefficients)
from jumphjb.util import as_batch, begin, end, stream, unbatch

log = Logger()


class SpaceBox(object):
    """A uniform grid on the box ``[lower, upper]`` with *counts* nodes
    per axis.

    >>> box = SpaceBox([-1.0], [1.0], [5])
    >>> box.spacing.tolist()
    [0.5]
    >>> box.interior().tolist()
    [False, True, True, True, False]
    """

    def __init__(self, lower, upper, counts, collar=None):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.counts = tuple(int(c) for c in np.atleast_1d(counts))
        if len(self.counts) != len(self.lower):
            raise InvalidInstance("node counts do not match the box")
        if min(self.counts) < 3:
            raise InvalidInstance("the space grid needs three nodes per axis")
        self.collar = collar
        self.shell = GridField(self.lower, self.upper, np.zeros(self.counts),
                               collar)
        self.spacing = self.shell.spacing

    @property
    def dimension(self):
        return len(self.lower)

    def nodes(self):
        return self.shell.nodes()

    def field(self, values):
        return self.shell.with_values(np.asarray(values).reshape(self.counts))

    def interior(self):
        """Mask of the interior nodes in C order."""
        index = np.indices(self.counts).reshape(self.dimension, -1)
        inside = np.ones(index.shape[1], dtype=bool)
        for k, c in enumerate(self.counts):
            inside &= (index[k] > 0) & (index[k] < c - 1)
        return inside

    def refine(self):
        """The box with every spacing halved."""
        return SpaceBox(self.lower, self.upper,
                        [2 * c - 1 for c in self.counts], self.collar)

    def clip(self, batch):
        return np.minimum(np.maximum(batch, self.lower), self.upper)


def extrapolate_boundary(values):
    """Refill the boundary of a nodal array by linear extrapolation.

    >>> extrapolate_boundary(np.array([0.0, 1.0, 4.0, 9.0, 0.0])).tolist()
    [-2.0, 1.0, 4.0, 9.0, 14.0]
    """
    values = np.array(values, dtype=float)
    for axis in range(values.ndim):
        moved = np.moveaxis(values, axis, 0)
        moved[0] = 2 * moved[1] - moved[2]
        moved[-1] = 2 * moved[-2] - moved[-3]
    return values


def ellipticity(cs, t, batch, history=None):
    """Smallest eigenvalue of sigma sigma^T over the states and controls."""
    smallest = np.inf
    for u in cs.controls:
        sigma = cs.diffusion(t, batch, u, history)
        a = np.einsum("pik,pjk->pij", sigma, sigma)
        smallest = min(smallest, float(np.linalg.eigvalsh(a).min()))
    return smallest


def stability_bound(cs, mm, times, box, history=None):
    """The largest admissible explicit time step."""
    nodes = box.nodes()
    dx = float(box.spacing.min())
    diffusion, transport = 0.0, 0.0
    for t in times:
        for u in cs.controls:
            sigma = cs.diffusion(t, nodes, u, history)
            a = np.einsum("pik,pjk->pij", sigma, sigma)
            norm = np.linalg.norm(a, ord=2, axis=(1, 2))
            diffusion = max(diffusion, float(norm.max()))
            transport = max(transport, float(np.abs(
                cs.drift(t, nodes, u, history)).max()))
    denominator = (box.dimension * diffusion
                   + dx ** 2 * (mm.total_mass + transport / dx))
    if denominator == 0:
        return np.inf
    return dx ** 2 / denominator


def stable_time_grid(cs, mm, t0, T, box, safety=0.9, minimum=1):
    """The coarsest uniform grid on ``[t0, T]`` with at least *minimum*
    steps whose step is within *safety* times the stability bound."""
    bound = stability_bound(cs, mm, (t0, 0.5 * (t0 + T), T), box)
    steps = minimum if np.isinf(bound) else \
        max(minimum, int(np.ceil((T - t0) / (safety * bound))))
    return TimeGrid(t0, T, steps)


class PdeSolution(FieldSequence):
    """The solved field at every node of the time grid."""

    def __init__(self, grid, box, fields):
        FieldSequence.__init__(self, grid.nodes, fields)
        self.grid = grid
        self.box = box

    def initial_value(self, x0):
        return self.fields[0].value(self.grid.t0, x0)


def solve_pde(cs, mm, grid, box, terminal=None, history=None,
              check_stability=True):
    """Solve the integro-PDE backward on *grid* over *box*.

    The terminal condition is h unless a batched *terminal* function of
    the state is given. A *history* with a single row freezes the noise
    of random coefficients; its steps follow *grid*.
    """
    if box.dimension != cs.n:
        raise InvalidInstance("space box of dimension %d for states of "
                              "dimension %d" % (box.dimension, cs.n))
    nodes = box.nodes()
    if cs.random and history is None:
        raise InvalidInstance("random coefficients need a frozen noise "
                              "history, see solve_conditional")
    snapshot = history.at(grid.steps) if history is not None else None
    delta = ellipticity(cs, grid.T, nodes, snapshot)
    if not delta > 0:
        raise InvalidInstance("sigma sigma^T is not uniformly elliptic on "
                              "the box (smallest eigenvalue %g)" % delta)
    if check_stability:
        bound = stability_bound(cs, mm, (grid.t0, grid.nodes[grid.steps // 2],
                                         grid.T), box, snapshot)
        if grid.dt > bound:
            raise StepTooLarge(grid.dt, bound)

    if terminal is None:
        values = cs.terminal(nodes, snapshot)
    else:
        values = np.asarray(terminal(nodes), dtype=float).reshape(len(nodes))
    inside = box.interior()
    fields = [box.field(values)]
    begin(None, "pde")
    for i in reversed(range(grid.steps)):
        t = grid.nodes[i + 1]
        current = fields[-1]
        now = history.at(i + 1) if history is not None else None
        rate = drift_F(cs, mm, t, nodes[inside], current, history=now)
        flat = current.values.reshape(-1).copy()
        flat[inside] += grid.dt * rate
        fields.append(box.field(extrapolate_boundary(
            flat.reshape(box.counts))))
    end(None, "pde")
    fields.reverse()
    return PdeSolution(grid, box, fields)


def heat_solution(a, s, tau, x):
    """Closed-form heat flow of the Gaussian ``exp(-|x|^2 / (2 a^2))``
    under ``-dV/dt = s^2 / 2 Laplace V`` after time *tau*.

    >>> round(heat_solution(1.0, 1.0, 0.0, [0.0]), 12)
    1.0
    """
    batch, single = as_batch(x)
    n = batch.shape[1]
    var = a * a + s * s * tau
    value = (a * a / var) ** (n / 2.0) * np.exp(
        -np.sum(batch * batch, axis=1) / (2 * var))
    return unbatch(value, single)


def heat_error(solution, width, volatility, scale=1.0, fraction=0.5):
    """Sup-norm distance at the start time between a solved field and
    the heat flow of ``scale exp(-|x|^2 / (2 width^2))`` on the inner
    box of side *fraction*, absolute and relative to the largest exact
    value there."""
    box, grid = solution.box, solution.grid
    inner = box.shell.inner_mask(fraction).reshape(-1)
    nodes = box.nodes()[inner]
    exact = scale * np.asarray(heat_solution(width, volatility,
                                             grid.T - grid.t0, nodes))
    solved = solution.fields[0].values.reshape(-1)[inner]
    error = float(np.max(np.abs(solved - exact)))
    report = OrderedDict()
    report["sup_error"] = error
    report["relative"] = error / float(np.max(np.abs(exact)))
    report["spacing"] = float(box.spacing.max())
    return report


def compound_poisson_expectation(h, x, drift, jump, rate, horizon,
                                 terms=None):
    """``E h(x + drift T + jump N_T)`` with N_T Poisson(rate T), by
    direct series summation.

    >>> round(compound_poisson_expectation(lambda y: y, 1.0, -0.5, 0.5,
    ...                                    1.0, 1.0), 12)
    1.0
    """
    mean = rate * horizon
    if terms is None:
        terms = int(mean + 12 * np.sqrt(mean + 1) + 20)
    k = np.arange(terms + 1)
    weights = stats.poisson.pmf(k, mean)
    values = np.array([h(x + drift * horizon + jump * j) for j in k])
    return float(np.dot(weights, values))


def jump_term_split(field, cs, mm, t, x, u, history=None):
    """The nonlocal second-order remainder
    ``int_E |V(x + g) - V(x) - <DV, g>| nu(de)`` split into the atoms
    with rho < 1 and those with rho >= 1."""
    batch, single = as_batch(x)
    base = np.asarray(field.value(t, batch)).reshape(len(batch))
    grad = np.asarray(field.gradient(t, batch)).reshape(batch.shape)
    low = np.zeros(len(batch))
    high = np.zeros(len(batch))
    for j, mark in enumerate(mm.marks):
        g = cs.jump(t, mark, batch, u, history)
        moved = np.asarray(field.value(t, batch + g)).reshape(len(batch))
        term = mm.weights[j] * np.abs(moved - base
                                      - np.einsum("pn,pn->p", grad, g))
        if mm.rho[j] < 1:
            low += term
        else:
            high += term
    return unbatch(low, single), unbatch(high, single)


def evaluate_field_along_path(fields, bundle, cs, mm):
    """The triple induced by a solved field along simulated paths:
    ``Y = V(t, X)``, ``Z = sigma^T DV(t, X)`` and
    ``K(e) = V(t, X + g(e)) - V(t, X)``, in the layout of
    :class:`jumphjb.bsde.BsdeSolution`."""
    grid = bundle.grid
    count, steps = bundle.n_paths, grid.steps
    history = bundle.history(mm)
    y = np.empty((count, steps + 1))
    z = np.zeros((count, steps, cs.d))
    k = np.zeros((count, steps, mm.size))
    k_agg = np.zeros((count, steps))
    driver = np.zeros((count, steps))
    for i in range(steps + 1):
        t = grid.nodes[i]
        x = bundle.states[:, i]
        y[:, i] = fields.value(t, x)
        if i == steps:
            break
        u = bundle.control_trace[:, i]
        now = history.at(i)
        sigma = cs.diffusion(t, x, u, now)
        z[:, i] = np.einsum("pnd,pn->pd", sigma, fields.gradient(t, x))
        for j, mark in enumerate(mm.marks):
            moved = x + cs.jump(t, mark, x, u, now)
            k[:, i, j] = fields.value(t, moved) - y[:, i]
        k_agg[:, i] = k[:, i].dot(mm.weights * cs.weights(t, mm))
        driver[:, i] = cs.driver(t, x, u, y[:, i], z[:, i], k_agg[:, i], now)
    return BsdeSolution(grid, y, z, k, k_agg, driver, y[:, -1].copy(),
                        [None] * (steps + 1))


def feedback_policy(solution, cs, mm):
    """The control minimizing the drift operator of the solved field at
    the current state. States are clipped to the space box."""

    def play(t, x, history):
        field = solution.at(t)
        clipped = solution.box.clip(x)
        _, index = minimize_drift(cs, mm, t, clipped, field)
        return cs.controls[index]
    return play


def comparison_check(cs, mm, grid, box, shift=0.1, relaxation=0.1,
                     tolerance=1e-9):
    """Check the ordering of solutions under a lowered terminal and
    running cost.

    The problem is solved together with a relaxed problem whose
    terminal cost is ``h - shift`` and running cost ``f - relaxation``.
    Three quantities are reported, each of which must stay below
    *tolerance*:

    ``max_violation``
        the largest excess of the relaxed solution over V;
    ``shifted_violation``
        the largest scheme residual of ``W = V - shift`` as a
        supersolution of the relaxed problem,
        ``dt (F_relaxed(W_{i+1}) - F(V_{i+1}))`` at the interior nodes;
    ``below_shifted``
        the largest excess of the relaxed solution over W.

    A negative *relaxation* raises the running cost, and the relaxed
    problem is then no longer dominated.
    """
    if shift <= 0:
        raise InvalidInstance("the shift must be positive")
    solved = solve_pde(cs, mm, grid, box)
    f = cs.f

    def relaxed_f(*args, **kwargs):
        return f(*args, **kwargs) - relaxation

    relaxed_cs = cs.replace(f=relaxed_f)
    relaxed = solve_pde(relaxed_cs, mm, grid, box,
                        terminal=lambda x: cs.terminal(x) - shift)
    violation = max(float(np.max(w.values - v.values))
                    for w, v in zip(relaxed.fields, solved.fields))
    nodes = box.nodes()[box.interior()]
    shifted = -np.inf
    for i in range(grid.steps):
        t = grid.nodes[i + 1]
        current = solved.fields[i + 1]
        lowered = box.field(current.values - shift)
        rate = (drift_F(relaxed_cs, mm, t, nodes, lowered)
                - drift_F(cs, mm, t, nodes, current))
        shifted = max(shifted, float(np.max(grid.dt * rate)))
    below = max(float(np.max(w.values - (v.values - shift)))
                for w, v in zip(relaxed.fields, solved.fields))
    log.debug("comparison: violation {v:.3g}, shifted {s:.3g}",
              v=violation, s=shifted)
    return {"max_violation": violation, "shifted_violation": shifted,
            "below_shifted": below,
            "dominated": (violation <= tolerance and shifted <= tolerance
                          and below <= tolerance),
            "value": float(solved.fields[0].values.max())}


def solve_conditional(cs, mm, grid, box, samples, seed, threads=None):
    """Average of the fields solved for *samples* frozen noise
    histories drawn on *grid*."""
    if samples < 1:
        raise InvalidInstance("at least one conditional sample is needed")
    increments, jumps = sample_noise(grid, cs.d, mm, samples, seed,
                                     "conditional", threads)
    counts = step_counts(grid, jumps, mm.size)
    total = None
    for sample in range(samples):
        history = NoiseHistory.from_increments(
            grid, increments[sample:sample + 1], counts[sample:sample + 1])
        solved = solve_pde(cs, mm, grid, box, history=history)
        values = [field.values for field in solved.fields]
        if total is None:
            total = values
        else:
            total = [a + b for a, b in zip(total, values)]
    return PdeSolution(grid, box, [box.field(v / samples) for v in total])


def cross_check(cs, mm, t0, T, box, x0, estimate, std_error,
                safety=0.9, minimum=1):
    """Compare a Monte Carlo value with the PDE value at ``(t0, x0)``.

    The PDE is solved on *box* and on its refinement; the difference of
    the two is the discretization allowance. The methods agree when the
    gap is within the allowance plus three standard errors.
    """
    values = []
    for level_box in (box, box.refine()):
        grid = stable_time_grid(cs, mm, t0, T, level_box, safety, minimum)
        solved = solve_pde(cs, mm, grid, level_box)
        values.append(float(solved.initial_value(x0)))
    allowance = abs(values[1] - values[0])
    gap = abs(values[1] - estimate)
    return {"pde_value": values[1], "pde_coarse": values[0],
            "mc_value": estimate, "mc_stderr": std_error,
            "allowance": allowance, "gap": gap,
            "agree": gap <= allowance + 3 * std_error}


def envelope_sandwich(cs, mm, grid, box, levels, probe, seed=0,
                      fraction=0.5, tolerance=0.05,
                      order=QUADRATURE_ORDER):
    """Bracket the solved field by the envelopes of its mollified
    approximations.

    For every mollification level l the mollified problem is solved on
    the same grids and the bounding equation of
    :func:`jumphjb.approx.bounding_bsde` is driven by the coefficient
    errors. Its constants are fitted: C_V as the largest
    ``(|DV| + |D^2 V|) / phi`` on the inner box before the terminal
    time, L_y from the assumption probe and C_phi from the Lyapunov
    check. The envelopes ``V_l -+ Y phi`` with ``phi = 1 + |x|^p``
    should contain V at every inner node and time, and their width
    should shrink as l grows.
    """
    solved = solve_pde(cs, mm, grid, box)
    nodes = box.nodes()
    inner = box.shell.inner_mask(fraction).reshape(-1)
    phi = 1 + np.linalg.norm(nodes[inner], axis=1) ** cs.p
    c_v = 0.0
    for t, field in zip(grid.nodes[:-1], solved.fields[:-1]):
        gradient = np.asarray(field.gradient(t, nodes[inner]))
        hessian = np.asarray(field.hessian(t, nodes[inner]))
        size = (np.linalg.norm(gradient.reshape(len(phi), -1), axis=1)
                + np.linalg.norm(hessian.reshape(len(phi), -1), axis=1))
        c_v = max(c_v, float(np.max(size / phi)))
    probed = probe_assumptions(cs, mm, probe, stream(seed, "envelope-probe"))
    l_y = probed["ratios"]["lipschitz_f_yzk"]
    c_phi = max(lyapunov_check(cs, mm, cs.p, probe)["c_phi"], 0.0)

    rows = []
    for level in levels:
        spec = MollifierSpec(level, cs.n, order)
        mollified = mollified_coefficients(cs, mm, level, order)
        approximation = solve_pde(mollified, mm, grid, box)
        errors = coefficient_errors(cs, mm, spec, probe, grid.nodes, seed=seed,
                                    mollified=mollified)
        y = bounding_bsde(errors["delta_h"], errors["delta_f"],
                          errors["delta_lambda"], c_v, l_y, c_phi, grid)
        gap, excess = 0.0, -np.inf
        for i, (exact, smooth) in enumerate(zip(solved.fields,
                                                approximation.fields)):
            distance = np.abs(exact.values.reshape(-1)[inner]
                              - smooth.values.reshape(-1)[inner])
            gap = max(gap, float(distance.max()))
            excess = max(excess, float(np.max(distance - y[i] * phi)))
        row = OrderedDict()
        row["level"] = level
        row["delta_h"] = errors["delta_h"]
        row["delta_f"] = float(errors["delta_f"].max())
        row["delta_lambda"] = float(errors["delta_lambda"].max())
        row["y0"] = float(y[0])
        row["gap"] = gap
        row["width"] = float(2 * y.max() * phi.max())
        row["bracketed"] = excess <= 1e-9
        rows.append(row)
        log.info("envelope at level {envelope}: gap {gap:.3e}, width "
                 "{width:.3e}", envelope=level, gap=gap, width=row["width"])

    widths = [row["width"] for row in rows]
    report = OrderedDict()
    report["c_v"] = c_v
    report["l_y"] = l_y
    report["c_phi"] = c_phi
    report["levels"] = rows
    report["bracketed"] = all(row["bracketed"] for row in rows)
    report["shrinking"] = all(b <= a * (1 + tolerance)
                              for a, b in zip(widths, widths[1:]))
    return report
