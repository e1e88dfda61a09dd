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

"""Value functions and the dynamic programming principle.

Controls are piecewise constant between the nodes of a decision grid.
The value is estimated in one of two ways:

open-loop
  Every control sequence of the :class:`PolicyFamily` is evaluated with
  :func:`jumphjb.bsde.recursive_cost` on common random numbers and the
  smallest cost wins. Ties go to the first sequence in lexicographic
  order.

feedback
  A backward recursion over the decision nodes. From states spread by a
  randomized reference policy, every control is run to the next
  decision node and the backward semigroup with the next value field as
  terminal condition is fitted as a function of the state. The value
  field at the node is the pointwise minimum of these fits.

The ``auto`` mode enumerates when the number of sequences is within the
budget and falls back to the feedback recursion otherwise.
"""

import itertools
import threading

import numpy as np
from twisted.logger import Logger

from jumphjb.bsde import recursive_cost_estimate, solve
from jumphjb.constants import ENUMERATION_BUDGET
from jumphjb.errors import EnumerationTooLarge, InvalidInstance
from jumphjb.forward import TimeGrid, constant_policy, simulate
from jumphjb.util import begin, end, parallel_map, stream

log = Logger()


class PolicyFamily(object):
    """Piecewise-constant policies on the decision nodes of a grid.

    >>> family = PolicyFamily([0, 2], [[-1.0], [1.0]])
    >>> family.size
    4
    >>> list(family.sequences())
    [(0, 0), (0, 1), (1, 0), (1, 1)]
    """

    def __init__(self, decision_nodes, controls):
        nodes = sorted(set(int(i) for i in decision_nodes))
        if not nodes or nodes[0] != 0:
            raise InvalidInstance("decision nodes must start at node 0")
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        if len(controls) == 0:
            raise InvalidInstance("the control set is empty")
        self.decision_nodes = nodes
        self.controls = controls

    @property
    def size(self):
        return len(self.controls) ** len(self.decision_nodes)

    def sequences(self):
        """All control index sequences in lexicographic order."""
        return itertools.product(range(len(self.controls)),
                                 repeat=len(self.decision_nodes))

    def policy(self, sequence):
        """The policy playing ``controls[sequence[j]]`` from decision node
        j until the next one."""
        nodes = np.array(self.decision_nodes)
        points = self.controls[list(sequence)]

        def play(t, x, history):
            j = int(np.searchsorted(nodes, history.step, side="right")) - 1
            return points[j]
        return play

    def before(self, node):
        """The family restricted to the decision nodes before *node*."""
        return PolicyFamily([i for i in self.decision_nodes if i < node],
                            self.controls)

    def describe(self, sequence):
        return {"decision_nodes": list(self.decision_nodes),
                "sequence": [int(j) for j in sequence],
                "controls": self.controls[list(sequence)].tolist()}


class ValueEstimate(object):
    """A value with the policy attaining it and a standard error."""

    def __init__(self, value, optimizer, std_error, mode, policy=None):
        assert std_error >= 0
        self.value = value
        self.optimizer = optimizer
        self.std_error = std_error
        self.mode = mode
        self.policy = policy

    def as_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "mode": self.mode, "optimizer": self.optimizer}

    def __repr__(self):
        return "<ValueEstimate %s: %.6g +- %.2g>" % (self.mode, self.value,
                                                     self.std_error)


class ValueField(object):
    """The pointwise minimum of per-control fits at a decision node."""

    def __init__(self, node, fits, stderr=None):
        self.node = node
        self.fits = fits
        #: Standard errors of the per-control costs.
        self.stderr = stderr or [0.0] * len(fits)

    def candidates(self, states):
        return np.array([fit.predict(states) for fit in self.fits])

    def __call__(self, states):
        return self.candidates(states).min(axis=0)

    def argmin(self, states):
        return np.argmin(self.candidates(states), axis=0)


class TerminalField(object):
    """The terminal cost h as a field on the final node."""

    def __init__(self, cs):
        self.cs = cs

    def __call__(self, states):
        return self.cs.terminal(states)


class FeedbackPolicy(object):
    """Plays at every decision node the control minimizing the fitted
    per-control values at the current state and holds it until the
    next decision node.

    The held controls are kept per simulation, keyed by the noise
    history driving it, so one instance may drive simulations running
    in several threads. A simulation that traverses the grid again
    from an earlier node starts afresh.
    """

    def __init__(self, controls, fields):
        self.controls = controls
        self.fields = dict((field.node, field) for field in fields)
        self._held = {}
        self._lock = threading.Lock()

    def __call__(self, t, x, history):
        step, key = history.step, history.key
        with self._lock:
            last, held = self._held.pop(key, (None, None))
        if last is None or step <= last:
            held = None
        if step in self.fields or held is None:
            nodes = [node for node in self.fields if node <= step]
            field = self.fields[max(nodes)] if nodes else \
                self.fields[min(self.fields)]
            held = self.controls[field.argmin(x)]
        if step < history.grid.steps - 1:
            with self._lock:
                self._held[key] = (step, held)
        return held


class RandomizedPolicy(object):
    """Draws a uniformly random control at every decision node, from a
    named stream. An instance drives a single simulation."""

    def __init__(self, family, seed, label="reference"):
        self.family = family
        self.rng = stream(seed, label)
        self._held = None

    def __call__(self, t, x, history):
        if history.step in self.family.decision_nodes or self._held is None:
            index = self.rng.integers(len(self.family.controls), size=len(x))
            self._held = self.family.controls[index]
        return self._held


def _open_loop(cs, mm, grid, x0, family, basis, n_paths, seed, threads,
               implicit=False):
    sequences = list(family.sequences())

    def evaluate(sequence):
        value, stderr, _ = recursive_cost_estimate(
            cs, mm, grid, x0, family.policy(sequence), basis, n_paths, seed,
            threads=1, implicit=implicit)
        return value, stderr

    results = parallel_map(evaluate, sequences, threads)
    costs = np.array([value for value, _ in results])
    # argmin keeps the first minimum, the lexicographically smallest.
    best = int(np.argmin(costs))
    sequence = sequences[best]
    log.info("open-loop value {value} from {count} sequences",
             value=costs[best], count=len(sequences))
    optimizer = family.describe(sequence)
    if len(costs) <= 64:
        optimizer["costs"] = costs.tolist()
    return ValueEstimate(float(costs[best]), optimizer, results[best][1],
                         "open-loop", family.policy(sequence))


def value_fields(cs, mm, grid, x0, family, basis, n_paths, seed,
                 threads=None, down_to=0, terminal=None):
    """The feedback recursion: value fields at the decision nodes at or
    after *down_to*, latest first.

    The states at every decision node are spread by a
    :class:`RandomizedPolicy`. Each (node, control) pair is simulated on
    common random numbers to the next decision node and solved with the
    next value field as terminal condition.
    """
    nodes = [i for i in family.decision_nodes if i >= down_to]
    if down_to not in nodes:
        nodes.insert(0, down_to)
    reference = simulate(cs, mm, grid, x0, RandomizedPolicy(family, seed),
                         n_paths, seed, threads, "reference")
    following = terminal if terminal is not None else TerminalField(cs)
    stops = nodes[1:] + [grid.steps]
    fields = []
    for node, stop in reversed(list(zip(nodes, stops))):
        segment = grid.segment(node, stop)
        starts = reference.states[:, node]

        origin = reference.history(mm, node) if cs.random else None

        def fit_control(u, segment=segment, starts=starts,
                        following=following, node=node, origin=origin):
            bundle = simulate(cs, mm, segment, starts, constant_policy(u),
                              n_paths, seed, 1, "feedback-%d" % node, origin)
            solution = solve(cs, mm, bundle, basis, terminal=following)
            return solution.fits[0], solution.stderr()

        fitted = parallel_map(fit_control, list(family.controls), threads)
        field = ValueField(node, [fit for fit, _ in fitted],
                           [err for _, err in fitted])
        fields.append(field)
        following = field
        log.debug("value field at node {node}", node=node)
    return fields


def _feedback(cs, mm, grid, x0, family, basis, n_paths, seed, threads):
    fields = value_fields(cs, mm, grid, x0, family, basis, n_paths, seed,
                          threads)
    first = fields[-1]
    start = np.atleast_2d(np.asarray(x0, dtype=float))[:1]
    candidates = first.candidates(start)[:, 0]
    best = int(np.argmin(candidates))
    optimizer = {"decision_nodes": list(family.decision_nodes),
                 "first_control": family.controls[best].tolist(),
                 "costs": candidates.tolist()}
    log.info("feedback value {value}", value=candidates[best])
    return ValueEstimate(float(candidates[best]), optimizer,
                         float(first.stderr[best]), "feedback",
                         feedback_policy(family, fields))


def feedback_policy(family, fields):
    """The argmin policy induced by a list of value fields."""
    return FeedbackPolicy(family.controls, fields)


def value(cs, mm, grid, x0, family, basis, n_paths, seed, mode="auto",
          budget=ENUMERATION_BUDGET, threads=None):
    """Estimate the value at ``(t0, x0)`` over *family*."""
    if mode not in ("auto", "open-loop", "feedback"):
        raise InvalidInstance("unknown value mode %r" % mode)
    begin(None, "value")
    if mode == "open-loop" or (mode == "auto" and family.size <= budget):
        if family.size > budget:
            raise EnumerationTooLarge(family.size, budget)
        estimate = _open_loop(cs, mm, grid, x0, family, basis, n_paths,
                              seed, threads)
    else:
        estimate = _feedback(cs, mm, grid, x0, family, basis, n_paths, seed,
                             threads)
    return end(estimate, "value")


def dpp_check(cs, mm, grid, x0, family, split, basis, n_paths, seed,
              mode="auto", budget=ENUMERATION_BUDGET, threads=None):
    """Compare the value with the backward semigroup over ``[t0, t_split]``
    applied to the value field at *split*.

    The outer minimum runs over the piecewise-constant policies on the
    decision nodes before *split*, enumerated on common random numbers.
    """
    if not 0 < split < grid.steps:
        raise InvalidInstance("split node %d is not interior" % split)
    full = value(cs, mm, grid, x0, family, basis, n_paths, seed, mode,
                 budget, threads)
    inner = value_fields(cs, mm, grid, x0, family, basis, n_paths, seed,
                         threads, down_to=split)[-1]
    outer_family = family.before(split)
    if outer_family.size > budget:
        raise EnumerationTooLarge(outer_family.size, budget)
    segment = grid.segment(0, split)
    sequences = list(outer_family.sequences())

    def evaluate(sequence):
        bundle = simulate(cs, mm, segment, x0, outer_family.policy(sequence),
                          n_paths, seed, 1, "outer")
        solution = solve(cs, mm, bundle, basis, terminal=inner)
        return solution.y0, solution.stderr()

    outer = parallel_map(evaluate, sequences, threads)
    best = int(np.argmin([y for y, _ in outer]))
    outer_value, outer_stderr = outer[best]
    residual = abs(full.value - outer_value)
    log.info("dpp residual {residual:.4g} at node {split}",
             residual=residual, split=split)
    return {"split": split, "value": full.value,
            "value_stderr": full.std_error, "composed": outer_value,
            "composed_stderr": outer_stderr, "residual": residual,
            "combined_stderr": float(np.hypot(full.std_error,
                                              outer_stderr)),
            "optimizer": full.optimizer,
            "outer_optimizer": outer_family.describe(sequences[best])}


def dpp_refinement(cs, mm, grid, x0, family, split, basis, n_paths, seed,
                   mode="auto", budget=ENUMERATION_BUDGET, threads=None):
    """Run :func:`dpp_check` on the grid with half as many steps and on
    *grid*.

    The decision nodes and the split node are halved with the grid, so
    both checks split at the same time and play the same policies. The
    report lists both checks, coarse first, and tells whether the
    residual decreased.
    """
    if grid.steps % 2 or split % 2 or \
            any(i % 2 for i in family.decision_nodes):
        raise InvalidInstance("halving the grid needs an even step count, "
                              "split node and decision nodes")
    coarse_grid = TimeGrid(grid.t0, grid.T, grid.steps // 2)
    coarse_family = PolicyFamily([i // 2 for i in family.decision_nodes],
                                 family.controls)
    checks = [dpp_check(cs, mm, coarse_grid, x0, coarse_family, split // 2,
                        basis, n_paths, seed, mode, budget, threads),
              dpp_check(cs, mm, grid, x0, family, split, basis, n_paths,
                        seed, mode, budget, threads)]
    for level, check in zip((coarse_grid, grid), checks):
        check["steps"] = level.steps
        check["dt"] = level.dt
    decreasing = checks[1]["residual"] < checks[0]["residual"]
    log.info("dpp residual {coarse:.4g} at dt {dt0:.4g}, {fine:.4g} at "
             "dt {dt1:.4g}", coarse=checks[0]["residual"],
             fine=checks[1]["residual"], dt0=coarse_grid.dt, dt1=grid.dt)
    return {"levels": checks, "decreasing": decreasing}


def dpp_residual(cs, mm, grid, x0, family, split, basis, n_paths, seed,
                 mode="auto", threads=None):
    """The residual ``|V(t0, x0) - min_u G_{t0, t_split}[V(t_split, .)]|``."""
    return dpp_check(cs, mm, grid, x0, family, split, basis, n_paths, seed,
                     mode, threads=threads)["residual"]
