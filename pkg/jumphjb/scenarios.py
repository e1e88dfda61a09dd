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

"""Coefficient families and the built-in scenarios.

A :class:`Scenario` turns a validated scenario document into the
objects the solvers work with. The ``[coefficients]`` section selects
one of four families:

``linear``
    ``b = b0 + a x + a' |x| + c u (+ s W(t))``, diagonal volatility
    ``sigma = v0 + v x + v' |x|``, additive (``g = s e``) or
    multiplicative (``g = s e x``) jumps.
``geometric``
    ``b = a x + c u x``, ``sigma = v x``, ``g = s e x``.
``lq``
    linear dynamics with constant volatility and quadratic costs.
``table``
    one-dimensional drift, volatility and terminal cost tabulated at
    increasing states and interpolated linearly.

All families share the running cost

    f = f0 + q |x|^2 + q' |x| + r |u|^2 + beta y + gamma sum(z) + kappa k,

the terminal cost (a polynomial, a Gaussian bump or the norm) and the
weight ``l(t, e) = l0 + l1 |e|``. An atom without *rho* gets
``rho(e) = |s| |e|``, which dominates the jump size of both jump modes.

>>> sc = load("constant-drift")
>>> sc.coefficients
<CoefficientSet constant-drift: n=1, d=1, p=2, 1 controls>
>>> len(list_scenarios()) >= 6
True
"""

import copy
import hashlib
import json
import os
from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb.coefficients import CoefficientSet, ProbeSpec
from jumphjb.config import load_config, scenario_digest
from jumphjb.dpp import PolicyFamily
from jumphjb.errors import InvalidScenario
from jumphjb.forward import TimeGrid, constant_policy
from jumphjb.marks import MarkMeasure
from jumphjb.pde import SpaceBox
from jumphjb.regression import RegressionBasis

log = Logger()


def _vector(section, key, n, problems, prefix="coefficients"):
    values = np.asarray(section[key], dtype=float)
    if len(values) == 1:
        return np.repeat(values, n)
    if len(values) != n:
        problems.append(("%s.%s" % (prefix, key),
                         "expected 1 or %d values" % n))
        return np.zeros(n)
    return values


def _unused(section, keys, family, problems):
    for key in keys:
        value = np.asarray(section[key], dtype=float)
        if value.size and np.any(value != 0):
            problems.append(("coefficients.%s" % key, "not used by the %s "
                             "family" % family))


class Family(object):
    """Shared parts of the coefficient families: running cost,
    terminal cost, jumps and weight."""

    def __init__(self, section, controls, problems):
        self.n = n = section["dimension"]
        self.d = section["noise_dimension"]
        self.random = section["random"]
        self.params = dict(section)
        self.eye = np.eye(n, self.d)
        if controls.shape[1] not in (1, n):
            problems.append(("controls.dimension", "controls must have "
                             "dimension 1 or %d" % n))
        if self.params["drift_noise"] and not self.random:
            problems.append(("coefficients.drift_noise",
                             "needs random = True"))
        self.problems = problems

    def gain(self, u):
        return self.params["control_gain"] * u

    def b(self, t, x, u, history=None):
        raise NotImplementedError

    def level(self, x):
        raise NotImplementedError

    def sigma(self, t, x, u, history=None):
        return self.level(x)[:, :, None] * self.eye

    def _mark(self, e):
        e = np.asarray(e, dtype=float)
        return e if len(e) == self.n else e[0]

    def g(self, t, e, x, u, history=None):
        size = self.params["jump_scale"] * self._mark(e)
        if self.params["jump_mode"] == "multiplicative":
            return size * x
        return np.broadcast_to(size, x.shape)

    def f(self, t, x, u, y, z, k, history=None):
        q = self.params
        r2 = np.sum(x * x, axis=1)
        return (q["cost_constant"] + q["cost_state"] * r2
                + q["cost_abs"] * np.sqrt(r2)
                + q["cost_control"] * np.sum(u * u, axis=1)
                + q["discount"] * y + q["cost_z"] * np.sum(z, axis=1)
                + q["cost_k"] * k)

    def h(self, x, history=None):
        q = self.params
        r2 = np.sum(x * x, axis=1)
        if q["terminal"] == "gaussian":
            width = q["terminal_width"]
            return q["terminal_scale"] * np.exp(-r2 / (2 * width * width))
        if q["terminal"] == "absolute":
            return q["terminal_scale"] * np.sqrt(r2)
        coefficients = q["terminal_coefficients"]
        value = np.full(len(x), float(coefficients[0]))
        for power, c in enumerate(coefficients[1:], 1):
            value += c * np.sum(x ** power, axis=1)
        return value

    def l_weight(self, t, e):
        return (self.params["weight_constant"]
                + self.params["weight_mark"] * float(np.linalg.norm(e)))


class LinearFamily(Family):

    def __init__(self, section, controls, problems):
        Family.__init__(self, section, controls, problems)
        self.b0 = _vector(section, "drift_constant", self.n, problems)
        _unused(section, ("table_states", "table_drift", "table_vol",
                          "table_terminal"), "linear", problems)

    def b(self, t, x, u, history=None):
        q = self.params
        value = (self.b0 + q["drift_linear"] * x + q["drift_abs"] * np.abs(x)
                 + self.gain(u))
        if q["drift_noise"] and history is not None:
            value = value + q["drift_noise"] * history.brownian()[:, :1]
        return value

    def level(self, x):
        q = self.params
        return (q["vol_constant"] + q["vol_linear"] * x
                + q["vol_abs"] * np.abs(x))


class GeometricFamily(LinearFamily):

    def __init__(self, section, controls, problems):
        LinearFamily.__init__(self, section, controls, problems)
        _unused(section, ("drift_constant", "drift_abs", "drift_noise",
                          "vol_constant", "vol_abs"), "geometric", problems)
        if section["jump_mode"] != "multiplicative":
            problems.append(("coefficients.jump_mode", "the geometric "
                             "family has multiplicative jumps"))

    def b(self, t, x, u, history=None):
        return self.params["drift_linear"] * x + self.gain(u) * x

    def level(self, x):
        return self.params["vol_linear"] * x


class LqFamily(LinearFamily):

    def __init__(self, section, controls, problems):
        LinearFamily.__init__(self, section, controls, problems)
        _unused(section, ("drift_abs", "drift_noise", "vol_linear", "vol_abs",
                          "cost_abs", "discount", "cost_z", "cost_k"), "lq",
                problems)
        if section["terminal"] != "polynomial" or \
                len(section["terminal_coefficients"]) > 3:
            problems.append(("coefficients.terminal", "the lq family has a "
                             "polynomial terminal cost of degree at most 2"))


class TableFamily(Family):

    def __init__(self, section, controls, problems):
        Family.__init__(self, section, controls, problems)
        if self.n != 1:
            problems.append(("coefficients.dimension", "the table family is "
                             "one-dimensional"))
        self.states = np.asarray(section["table_states"], dtype=float)
        if len(self.states) < 2 or np.any(np.diff(self.states) <= 0):
            problems.append(("coefficients.table_states", "expected at least "
                             "two increasing states"))
        for key in ("table_drift", "table_vol", "table_terminal"):
            if len(section[key]) != len(self.states):
                problems.append(("coefficients.%s" % key, "expected %d values"
                                 % len(self.states)))

    def _interp(self, x, key):
        return np.interp(x[:, 0], self.states, self.params[key])[:, None]

    def b(self, t, x, u, history=None):
        return self._interp(x, "table_drift") + self.gain(u)

    def level(self, x):
        return self._interp(x, "table_vol")

    def h(self, x, history=None):
        return self._interp(x, "table_terminal")[:, 0]


FAMILIES = {"linear": LinearFamily, "geometric": GeometricFamily,
            "lq": LqFamily, "table": TableFamily}


class Scenario(object):
    """A validated scenario with its coefficients, marks and grids."""

    def __init__(self, config):
        self.config = config
        self.name = config["name"]
        self.description = config["description"]
        self.master_seed = config["master_seed"]
        self.solver = config["solver"]
        self.grids = grids = config["grids"]
        problems = []

        section = config["controls"]
        points = np.asarray(section["points"], dtype=float)
        if len(points) % section["dimension"]:
            problems.append(("controls.points", "%d values do not split "
                             "into controls of dimension %d"
                             % (len(points), section["dimension"])))
            points = points[:section["dimension"]]
        self.controls = points.reshape(-1, section["dimension"])

        coefficients = config["coefficients"]
        family = FAMILIES[coefficients["family"]](coefficients, self.controls,
                                                  problems)
        self.family_name = coefficients["family"]
        n = family.n
        for key in ("initial_state", "space_lower", "space_upper",
                    "space_counts", "probe_lower", "probe_upper"):
            if len(grids[key]) != n:
                problems.append(("grids.%s" % key, "expected %d values" % n))
        if grids["horizon"] <= grids["start"]:
            problems.append(("grids.horizon", "must exceed grids.start"))
        if grids["split_node"] is not None and \
                grids["split_node"] >= grids["steps"]:
            problems.append(("grids.split_node", "must be an interior node"))
        if self.solver["policy_control"] >= len(self.controls):
            problems.append(("solver.policy_control", "no such control"))

        atoms, rho = [], []
        for key in config["marks"].sections:
            atom = config["marks"][key]
            atoms.append((atom["mark"], atom["weight"]))
            if atom["rho"] is None:
                rho.append(abs(coefficients["jump_scale"])
                           * float(np.linalg.norm(atom["mark"])))
            else:
                rho.append(atom["rho"])
        if problems:
            raise InvalidScenario(problems)

        self.marks = MarkMeasure(atoms, rho)
        self.coefficients = CoefficientSet(
            family.b, family.sigma, family.g, family.f, family.h, n=n,
            d=family.d, l_weight=family.l_weight, p=coefficients["p"],
            controls=self.controls, random=family.random, name=self.name)

    @property
    def x0(self):
        return np.asarray(self.grids["initial_state"], dtype=float)

    @property
    def n_paths(self):
        return self.solver["paths"]

    def grid(self, steps=None):
        return TimeGrid(self.grids["start"], self.grids["horizon"],
                        steps or self.grids["steps"])

    @property
    def split_node(self):
        split = self.grids["split_node"]
        return self.grids["steps"] // 2 if split is None else split

    def policy(self):
        """The constant policy playing the configured control."""
        return constant_policy(self.controls[self.solver["policy_control"]])

    def family(self):
        return PolicyFamily(self.grids["decision_nodes"], self.controls)

    def space_box(self):
        return SpaceBox(self.grids["space_lower"], self.grids["space_upper"],
                        self.grids["space_counts"], self.grids["collar"])

    def probe(self, scale=1.0):
        """The probe box, optionally scaled about its center."""
        lower = np.asarray(self.grids["probe_lower"], dtype=float)
        upper = np.asarray(self.grids["probe_upper"], dtype=float)
        center, half = 0.5 * (lower + upper), 0.5 * (upper - lower)
        return ProbeSpec(center - scale * half, center + scale * half,
                         self.grids["probe_pairs"], self.grids["probe_bound"],
                         self.grids["horizon"])

    def basis(self):
        return RegressionBasis(self.solver["basis"], self.solver["degree"],
                               self.solver["cells"])

    def heat_flow(self):
        """``(width, volatility, scale)`` when the scenario is the pure
        heat flow of a Gaussian terminal cost, otherwise None."""
        q = self.config["coefficients"]
        if (q["family"] != "linear" or q["random"] or self.marks.size
                or q["terminal"] != "gaussian"
                or q["noise_dimension"] != q["dimension"]):
            return None
        idle = ("drift_linear", "drift_abs", "drift_noise", "control_gain",
                "vol_linear", "vol_abs", "cost_constant", "cost_state",
                "cost_abs", "cost_control", "discount", "cost_z")
        if any(q[key] for key in idle) or any(q["drift_constant"]):
            return None
        return (q["terminal_width"], q["vol_constant"], q["terminal_scale"])

    def digest(self):
        return scenario_digest(self.config)

    def __repr__(self):
        return "<Scenario %s: %s>" % (self.name, self.coefficients)


def _builtin(name, description, coefficients=None, marks=None, controls=None,
             grids=None, solver=None):
    return OrderedDict([("name", name), ("description", description),
                        ("schema_version", 1), ("master_seed", 20260101),
                        ("coefficients", coefficients or {}),
                        ("marks", marks or {}),
                        ("controls", controls or {}),
                        ("grids", grids or {}),
                        ("solver", solver or {})])


#: The built-in scenarios, in listing order.
BUILTINS = OrderedDict((sc["name"], sc) for sc in [
    _builtin("zero", "All coefficients vanish; states and costs stay zero.",
             grids={"steps": 16}, solver={"paths": 64}),
    _builtin("constant-drift", "Unit drift without noise; X(T) = x0 + T.",
             coefficients={"drift_constant": [1.0]},
             grids={"steps": 8}, solver={"paths": 64}),
    _builtin("geometric-jump", "Geometric jump-diffusion with four jump "
             "sizes; E X(T) = x0 exp(a T).",
             coefficients={"family": "geometric", "drift_linear": 0.05,
                           "vol_linear": 0.2, "jump_mode": "multiplicative",
                           "terminal_coefficients": [0.0, 1.0]},
             marks={"down2": {"mark": [-0.2], "weight": 0.2},
                    "down1": {"mark": [-0.1], "weight": 0.4},
                    "up1": {"mark": [0.1], "weight": 0.3},
                    "up2": {"mark": [0.2], "weight": 0.2}},
             grids={"initial_state": [1.0], "space_lower": [0.25],
                    "space_upper": [3.0], "space_counts": [45],
                    "probe_lower": [0.25], "probe_upper": [3.0]},
             solver={"projection_intervals": [2, 4, 8],
                     "projection_groups": [1, 2, 4]}),
    _builtin("linear-bsde", "Cost equation f = y / 2 with h = 1; "
             "Y(0) = exp(T / 2).",
             coefficients={"vol_constant": 0.3, "discount": 0.5,
                           "terminal_coefficients": [1.0]}),
    _builtin("two-control-1d", "Drift u in {-1, 1} steering x^2 toward "
             "zero, with small jumps.",
             coefficients={"control_gain": 1.0, "vol_constant": 0.2,
                           "terminal_coefficients": [0.0, 0.0, 1.0]},
             marks={"jump": {"mark": [0.2], "weight": 0.5}},
             controls={"points": [-1.0, 1.0]},
             grids={"initial_state": [2.0], "decision_nodes": [0, 16, 32, 48],
                    "split_node": 32, "space_lower": [-3.0],
                    "space_upper": [6.0], "space_counts": [145]}),
    _builtin("heat-reduction", "Pure heat flow of a Gaussian terminal cost.",
             coefficients={"vol_constant": 1.0, "terminal": "gaussian",
                           "terminal_width": 0.5},
             grids={"horizon": 0.25, "space_lower": [-2.0],
                    "space_upper": [2.0], "space_counts": [257]}),
    _builtin("jump-transport", "Compensated jumps of size 1/2 with a "
             "vanishing diffusion floor.",
             coefficients={"vol_constant": 0.001,
                           "terminal_coefficients": [0.0, 0.0, 1.0]},
             marks={"jump": {"mark": [0.5], "weight": 1.0}},
             grids={"initial_state": [0.5], "space_counts": [97]}),
    _builtin("lipschitz-mollify", "Lipschitz coefficients with kinks at the "
             "origin, for mollification.",
             coefficients={"drift_abs": -0.5, "vol_constant": 0.5,
                           "vol_abs": 0.1, "cost_abs": 1.0,
                           "terminal": "absolute"},
             marks={"jump": {"mark": [0.3], "weight": 0.5}},
             grids={"horizon": 0.5, "space_counts": [97]}),
    _builtin("random-drift", "Drift driven by the Brownian path, "
             "b = W(t) / 2.",
             coefficients={"random": True, "drift_noise": 0.5,
                           "vol_constant": 0.3,
                           "terminal_coefficients": [0.0, 0.0, 1.0]},
             grids={"steps": 32, "space_counts": [49]},
             solver={"conditional_samples": 4}),
])


def load(source):
    """Load a built-in scenario by name, or a scenario file."""
    if isinstance(source, str) and source in BUILTINS:
        document = copy.deepcopy(BUILTINS[source])
    elif isinstance(source, str) and not os.path.exists(source):
        raise InvalidScenario([(source, "neither a built-in scenario nor "
                                "a file")])
    else:
        document = source
    return Scenario(load_config(document))


def list_scenarios():
    """Names and descriptions of the built-in scenarios."""
    return [(name, sc["description"]) for name, sc in BUILTINS.items()]


def registry_digest():
    """SHA-256 digest of the built-in registry."""
    text = json.dumps(BUILTINS, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
