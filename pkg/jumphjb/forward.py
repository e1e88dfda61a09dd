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

"""Forward simulation of the controlled state equation.

The state is advanced by an explicit Euler step on a uniform
:class:`TimeGrid`:

    X_{i+1} = X_i + b dt + sigma dW_i
              + sum_{jumps in step} g(t_j, e_j, X_i, u_i)
              - dt sum_e g(t_i, e, X_i, u_i) nu(e).

Coefficients are evaluated at the left node, which keeps the jump
integrand predictable, and the compensator is the exact quadrature
over the marks. All noise of a path comes from its own named stream so
a :class:`PathBundle` is a deterministic function of the master seed.

The constant drift example is exact:

>>> from jumphjb import scenarios
>>> sc = scenarios.load("constant-drift")
>>> bundle = simulate(sc.coefficients, sc.marks, TimeGrid(0.0, 1.0, 8),
...                   [0.0], constant_policy([0.0]), 4, 1)
>>> bundle.states[:, -1, 0].tolist()
[1.0, 1.0, 1.0, 1.0]
"""

import numpy as np
from twisted.logger import Logger

from jumphjb.errors import (InvalidInstance, InvalidInterval,
                            SimulationBlowUp)
from jumphjb.util import (as_batch, envelope_constant, parallel_map, stream,
                          begin, end)

log = Logger()


class TimeGrid(object):
    """A uniform time grid with *steps* steps from *t0* to *T*.

    >>> grid = TimeGrid(0.0, 1.0, 4)
    >>> grid.nodes.tolist()
    [0.0, 0.25, 0.5, 0.75, 1.0]
    >>> grid.step_of(0.25), grid.step_of(0.3)
    (0, 1)
    """

    def __init__(self, t0, T, steps):
        if T < t0:
            raise InvalidInterval(t0, T)
        if T == t0 or int(steps) != steps or steps < 1:
            raise InvalidInstance("a time grid needs T > t0 and a positive "
                                  "number of steps")
        self.t0 = float(t0)
        self.T = float(T)
        self.steps = int(steps)
        self.dt = (self.T - self.t0) / self.steps
        self.nodes = self.t0 + self.dt * np.arange(self.steps + 1)
        self.nodes[-1] = self.T
        self.nodes.flags.writeable = False

    def step_of(self, time):
        """The index i of the step ``(t_i, t_{i+1}]`` containing *time*."""
        i = int(np.searchsorted(self.nodes, time, side="left")) - 1
        return min(max(i, 0), self.steps - 1)

    def refine(self, factor=2):
        return TimeGrid(self.t0, self.T, self.steps * factor)

    def segment(self, start, stop):
        """The sub-grid between node indices *start* and *stop*."""
        if not 0 <= start < stop <= self.steps:
            raise InvalidInstance("invalid grid segment [%d, %d]"
                                  % (start, stop))
        return TimeGrid(self.nodes[start], self.nodes[stop], stop - start)

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and self.t0 == other.t0
                and self.T == other.T and self.steps == other.steps)

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.t0, self.T, self.steps))

    def __repr__(self):
        return "TimeGrid(%r, %r, %d)" % (self.t0, self.T, self.steps)


class NoiseHistory(object):
    """Read-only view of the driving noise up to a grid node: the
    Brownian path and the cumulative jump counts per atom.

    This is the handle passed to policies and to random coefficients.
    Rows correspond to paths.
    """

    def __init__(self, grid, brownian, counts, step=0):
        #: Cumulative Brownian path, shape ``(P, steps + 1, d)``.
        self._brownian = brownian
        #: Cumulative jump counts, shape ``(P, steps + 1, m)``.
        self._counts = counts
        self.grid = grid
        self.step = step

    @classmethod
    def from_increments(cls, grid, increments, step_counts, step=0,
                        origin=None):
        """Cumulate per-step noise. The path starts at zero, or at the
        Brownian values and counts of the history *origin* when the grid
        continues an earlier one."""
        count, steps, d = increments.shape
        brownian = np.zeros((count, steps + 1, d))
        np.cumsum(increments, axis=1, out=brownian[:, 1:])
        counts = np.zeros((count, steps + 1, step_counts.shape[2]),
                          dtype=np.int64)
        np.cumsum(step_counts, axis=1, out=counts[:, 1:])
        if origin is not None:
            if len(origin) != count:
                raise InvalidInstance("noise origin of %d paths for %d"
                                      % (len(origin), count))
            brownian += origin.brownian()[:, np.newaxis]
            counts += origin.counts()[:, np.newaxis]
        brownian.flags.writeable = False
        counts.flags.writeable = False
        return cls(grid, brownian, counts, step)

    @property
    def time(self):
        return self.grid.nodes[self.step]

    @property
    def key(self):
        """Identifies the noise paths, shared by every view of them."""
        return id(self._brownian)

    def at(self, step):
        return NoiseHistory(self.grid, self._brownian, self._counts, step)

    def rows(self, index):
        return NoiseHistory(self.grid, self._brownian[index],
                            self._counts[index], self.step)

    def brownian(self):
        """W at the current node, shape ``(P, d)``."""
        return self._brownian[:, self.step]

    def counts(self):
        """Jumps per atom up to the current node, shape ``(P, m)``."""
        return self._counts[:, self.step]

    def brownian_path(self):
        return self._brownian[:, :self.step + 1]

    def count_path(self):
        return self._counts[:, :self.step + 1]

    def __len__(self):
        return len(self._brownian)


def constant_policy(u):
    """The policy that always plays the control point *u*."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return lambda t, x, history: u


class PathBundle(object):
    """A batch of simulated paths on a shared grid."""

    def __init__(self, grid, states, brownian_increments, jumps,
                 control_trace, seed=None, label=None):
        self.grid = grid
        #: States, shape ``(P, steps + 1, n)``.
        self.states = states
        #: Brownian increments, shape ``(P, steps, d)``.
        self.brownian_increments = brownian_increments
        #: Per path, the list of :class:`jumphjb.marks.JumpRecord`.
        self.jumps = jumps
        #: Controls played, shape ``(P, steps, k)``.
        self.control_trace = control_trace
        self.seed = seed
        self.label = label
        #: History the noise continues from, or None.
        self.origin = None
        self._counts = None

    @property
    def n_paths(self):
        return self.states.shape[0]

    def jump_counts(self, mm):
        """Jumps per step and atom, shape ``(P, steps, m)``."""
        if self._counts is None:
            self._counts = step_counts(self.grid, self.jumps, mm.size)
        return self._counts

    def history(self, mm, step=0):
        return NoiseHistory.from_increments(self.grid,
                                            self.brownian_increments,
                                            self.jump_counts(mm), step,
                                            self.origin)

    def terminal_states(self):
        return self.states[:, -1]

    def __repr__(self):
        return "<PathBundle: %d paths, %d steps>" % (self.n_paths,
                                                      self.grid.steps)


def step_counts(grid, jumps, atoms):
    """Tabulate jump records per path, step and atom."""
    counts = np.zeros((len(jumps), grid.steps, atoms), dtype=np.int64)
    for p, records in enumerate(jumps):
        for record in records:
            counts[p, grid.step_of(record.time), record.mark_index] += 1
    return counts


def _jump_table(grid, jumps):
    """Flatten jump records into arrays sorted by step."""
    rows = [(grid.step_of(r.time), p, r.time, r.mark_index)
            for p, records in enumerate(jumps) for r in records]
    rows.sort()
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0), empty
    step, path, time, atom = zip(*rows)
    return (np.array(step, dtype=np.int64), np.array(path, dtype=np.int64),
            np.array(time), np.array(atom, dtype=np.int64))


def sample_noise(grid, d, mm, n_paths, master_seed, label="simulate",
                 threads=None):
    """Draw the Brownian increments and jump records of every path.

    Each path uses the stream ``(master_seed, label, path index)`` and
    draws its increments before its jumps.
    """
    scale = np.sqrt(grid.dt)

    def draw(index):
        rng = stream(master_seed, label, index)
        increments = rng.standard_normal((grid.steps, d)) * scale
        return increments, mm.sample_jumps(grid.t0, grid.T, rng)

    drawn = parallel_map(draw, range(n_paths), threads)
    increments = np.array([inc for inc, _ in drawn]).reshape(n_paths,
                                                             grid.steps, d)
    return increments, [records for _, records in drawn]


def _integrate(cs, mm, grid, start_states, policy, increments, jumps,
               history, start=0):
    """Run the Euler recursion from node *start* to the end of the grid.

    Returns the states at nodes ``start, ..., steps`` and the controls
    played. The arithmetic for a given step depends only on the state
    at that step and the stored noise, so a restart from a stored state
    reproduces the original path exactly.
    """
    count = len(start_states)
    steps = grid.steps - start
    states = np.empty((count, steps + 1, cs.n))
    states[:, 0] = start_states
    controls = np.empty((count, steps, cs.control_dimension))
    table_step, table_path, table_time, table_atom = _jump_table(grid, jumps)
    bounds = np.searchsorted(table_step, np.arange(grid.steps + 1))
    dt = grid.dt

    for offset in range(steps):
        i = start + offset
        t = grid.nodes[i]
        x = states[:, offset]
        now = history.at(i)
        u = cs.control_batch(policy(t, x, now), count)
        controls[:, offset] = u

        drift = cs.drift(t, x, u, now)
        sigma = cs.diffusion(t, x, u, now)
        compensator = np.zeros((count, cs.n))
        for j, mark in enumerate(mm.marks):
            compensator += mm.weights[j] * cs.jump(t, mark, x, u, now)
        jumped = np.zeros((count, cs.n))
        for row in range(bounds[i], bounds[i + 1]):
            p = table_path[row]
            jumped[p] += cs.jump(table_time[row], mm.marks[table_atom[row]],
                                 x[p:p + 1], u[p:p + 1],
                                 now.rows(slice(p, p + 1)))[0]
        new = (x + drift * dt
               + np.einsum("pnd,pd->pn", sigma, increments[:, i])
               + jumped - dt * compensator)
        bad = ~np.all(np.isfinite(new), axis=1)
        if np.any(bad):
            raise SimulationBlowUp(int(np.argmax(bad)), i + 1)
        states[:, offset + 1] = new
    return states, controls


def _start_states(cs, x0, n_paths):
    batch, _ = as_batch(x0)
    cs.check_states(batch)
    if len(batch) == 1:
        return np.repeat(batch, n_paths, axis=0)
    if len(batch) != n_paths:
        raise InvalidInstance("%d initial states for %d paths"
                              % (len(batch), n_paths))
    return batch.copy()


def simulate(cs, mm, grid, x0, policy, n_paths, master_seed,
             threads=None, label="simulate", origin=None):
    """Simulate *n_paths* paths from *x0* under *policy*.

    The initial state is a single vector or one vector per path. The
    *policy* maps ``(t, states, history)`` to control points. Paths
    restarted at a node of an earlier simulation pass that simulation's
    history at the node as *origin*, one row per path, so that random
    coefficients see the Brownian path and jump counts accumulated so
    far.
    """
    if n_paths < 1:
        raise InvalidInstance("at least one path is needed")
    begin(None, label)
    starts = _start_states(cs, x0, n_paths)
    increments, jumps = sample_noise(grid, cs.d, mm, n_paths, master_seed,
                                     label, threads)
    counts = step_counts(grid, jumps, mm.size)
    history = NoiseHistory.from_increments(grid, increments, counts,
                                           origin=origin)
    states, controls = _integrate(cs, mm, grid, starts, policy, increments,
                                  jumps, history)
    bundle = PathBundle(grid, states, increments, jumps, controls,
                        master_seed, label)
    bundle.origin = origin
    bundle._counts = counts
    log.debug("simulated {paths} paths with {jumps} jumps",
              paths=n_paths, jumps=int(counts.sum()))
    return end(bundle, label)


def resimulate(cs, mm, bundle, start, start_states, policy):
    """Re-run the Euler recursion of *bundle* from node *start* and the
    given states, reusing the stored noise."""
    history = bundle.history(mm)
    return _integrate(cs, mm, bundle.grid, start_states, policy,
                      bundle.brownian_increments, bundle.jumps, history,
                      start)


def flow_check(cs, mm, grid, x0, policy, split_node, n_paths, master_seed,
               threads=None):
    """Largest deviation between the simulated paths and the paths
    restarted at *split_node* from their own states with the same noise.
    """
    if not 0 < split_node < grid.steps:
        raise InvalidInstance("split node %d is not interior" % split_node)
    bundle = simulate(cs, mm, grid, x0, policy, n_paths, master_seed,
                      threads)
    restarted, _ = resimulate(cs, mm, bundle, split_node,
                              bundle.states[:, split_node], policy)
    deviation = float(np.max(np.abs(restarted
                                    - bundle.states[:, split_node:])))
    log.info("flow check at node {node}: deviation {deviation:.3g}",
             node=split_node, deviation=deviation)
    return deviation


def moment_report(bundle, exponents, lags=None):
    """Moment estimates of the simulated paths.

    For every exponent q this reports ``E[sup_s |X(s)|^q]`` with its
    standard error and the increment moments ``E|X(s + h) - X(s)|^q``
    for lags *h* that are powers of two of the grid step, together with
    the slope of a log-log fit of the increment moments against *h*.
    """
    states = bundle.states
    count, nodes = states.shape[0], states.shape[1]
    if count == 0:
        raise InvalidInstance("empty bundle")
    if lags is None:
        lags, lag = [], 1
        while lag <= max(1, (nodes - 1) // 2):
            lags.append(lag)
            lag *= 2
    norms = np.linalg.norm(states, axis=2)
    report = {"sup_moment": {}, "sup_moment_stderr": {}, "slope": {},
              "increments": []}
    for q in exponents:
        sup = np.max(norms, axis=1) ** q
        report["sup_moment"][q] = float(sup.mean())
        report["sup_moment_stderr"][q] = float(sup.std() / np.sqrt(count))
        points = []
        for lag in lags:
            diff = np.linalg.norm(states[:, lag:] - states[:, :-lag], axis=2)
            moment = float(np.mean(diff ** q))
            h = lag * bundle.grid.dt
            report["increments"].append({"q": q, "lag": h,
                                         "moment": moment})
            if moment > 0:
                points.append((np.log(h), np.log(moment)))
        if len(points) >= 2:
            xs, ys = zip(*points)
            report["slope"][q] = float(np.polyfit(xs, ys, 1)[0])
        else:
            report["slope"][q] = 0.0
    return report


def sup_moment_envelope(bundle, q, exponent):
    """The constant C of ``E sup |X|^q <= C (1 + |x0|^exponent)``
    fitted on the bundle."""
    moments = np.max(np.linalg.norm(bundle.states, axis=2), axis=1) ** q
    return envelope_constant(moments.mean(), bundle.states[0, 0], exponent)


def coarsen_noise(increments, factor):
    """Sum Brownian increments over groups of *factor* steps."""
    count, steps, d = increments.shape
    assert steps % factor == 0, "Grid not divisible by %d." % factor
    return increments.reshape(count, steps // factor, factor, d).sum(axis=2)


def refinement_study(cs, mm, grid, x0, policy, phi, levels, n_paths,
                     master_seed, threads=None):
    """Weak refinement study with shared noise.

    The noise is drawn once on the finest grid (``levels - 1`` halvings
    of *grid*); coarser levels sum its Brownian increments and reuse
    its jump records. For every level the report gives ``E[phi(X(T))]``
    with its standard error, the difference to the previous level and
    the ratio of successive differences.
    """
    if levels < 1:
        raise InvalidInstance("at least one level is needed")
    finest = grid.refine(2 ** (levels - 1))
    increments, jumps = sample_noise(finest, cs.d, mm, n_paths, master_seed,
                                     "refinement", threads)
    starts = _start_states(cs, x0, n_paths)
    rows = []
    for level in range(levels):
        level_grid = grid.refine(2 ** level)
        level_increments = coarsen_noise(increments,
                                         2 ** (levels - 1 - level))
        counts = step_counts(level_grid, jumps, mm.size)
        history = NoiseHistory.from_increments(level_grid, level_increments,
                                               counts)
        states, _ = _integrate(cs, mm, level_grid, starts, policy,
                               level_increments, jumps, history)
        values = np.asarray(phi(states[:, -1]), dtype=float).reshape(n_paths)
        row = {"steps": level_grid.steps, "dt": level_grid.dt,
               "mean": float(values.mean()),
               "stderr": float(values.std() / np.sqrt(n_paths)),
               "difference": None, "ratio": None}
        if rows:
            row["difference"] = abs(row["mean"] - rows[-1]["mean"])
            previous = rows[-1]["difference"]
            if previous is not None and row["difference"] > 0:
                row["ratio"] = previous / row["difference"]
        rows.append(row)
        log.debug("refinement level {refinement}: mean {mean}",
                  refinement=level,
                  mean=row["mean"])
    return rows
