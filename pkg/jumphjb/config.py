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

"""Loading and validating scenario documents.

A scenario is a ConfigObj document: an INI file, a JSON file with the
same structure or a Python dictionary. Every document is validated
against :data:`CONFIGSPEC` before use. Values are converted to their
declared types and defaults are filled in; unknown keys, unknown
sections, type errors and range errors are all reported together
with their key paths:

>>> load_config({"name": "demo", "schema_version": 1,
...              "coefficients": {"drift": 1.0}})
Traceback (most recent call last):
    ...
jumphjb.errors.InvalidScenario: coefficients.drift: unknown key

In JSON documents the ``marks`` section may be a list of atoms; they
are named ``atom1``, ``atom2`` and so on in list order.
"""

import hashlib
import json
import os

from configobj import ConfigObj, ConfigObjError, flatten_errors, \
    get_extra_values
from twisted.logger import Logger

try:
    from configobj.validate import Validator
except ImportError:
    from validate import Validator

from jumphjb.constants import SCHEMA_VERSION
from jumphjb.errors import InvalidScenario

log = Logger()

#: The scenario schema.
CONFIGSPEC = """
name = string(min=1)
description = string(default="")
schema_version = integer(min=1)
master_seed = integer(min=0, default=0)

[coefficients]
family = option("linear", "geometric", "lq", "table", default="linear")
dimension = integer(min=1, max=2, default=1)
noise_dimension = integer(min=1, max=2, default=1)
p = float(min=2.0, default=2.0)
random = boolean(default=False)
drift_constant = float_list(default=list(0.0))
drift_linear = float(default=0.0)
drift_abs = float(default=0.0)
drift_noise = float(default=0.0)
control_gain = float(default=0.0)
vol_constant = float(default=0.0)
vol_linear = float(default=0.0)
vol_abs = float(default=0.0)
jump_mode = option("additive", "multiplicative", default="additive")
jump_scale = float(default=1.0)
cost_constant = float(default=0.0)
cost_state = float(default=0.0)
cost_abs = float(default=0.0)
cost_control = float(default=0.0)
discount = float(default=0.0)
cost_z = float(default=0.0)
cost_k = float(min=0.0, default=0.0)
terminal = option("polynomial", "gaussian", "absolute", default="polynomial")
terminal_coefficients = float_list(default=list(0.0))
terminal_width = float(min=0.0, default=1.0)
terminal_scale = float(default=1.0)
weight_constant = float(min=0.0, default=1.0)
weight_mark = float(min=0.0, default=0.0)
table_states = float_list(default=list())
table_drift = float_list(default=list())
table_vol = float_list(default=list())
table_terminal = float_list(default=list())

[marks]
[[__many__]]
mark = float_list(min=1)
weight = float(min=0.0)
rho = float(min=0.0, default=None)

[controls]
points = float_list(min=1, default=list(0.0))
dimension = integer(min=1, default=1)

[grids]
start = float(default=0.0)
horizon = float(default=1.0)
steps = integer(min=1, default=64)
initial_state = float_list(min=1, default=list(0.0))
decision_nodes = int_list(min=1, default=list(0))
split_node = integer(min=1, default=None)
space_lower = float_list(min=1, default=list(-3.0))
space_upper = float_list(min=1, default=list(3.0))
space_counts = int_list(min=1, default=list(97))
collar = float(min=0.0, default=None)
pde_safety = float(min=0.0, max=1.0, default=0.9)
probe_lower = float_list(min=1, default=list(-2.0))
probe_upper = float_list(min=1, default=list(2.0))
probe_pairs = integer(min=1, default=200)
probe_bound = float(min=0.0, default=100.0)
probe_nodes = integer(min=2, default=41)

[solver]
policy_control = integer(min=0, default=0)
paths = integer(min=2, default=4096)
basis = option("polynomial", "local", default="polynomial")
degree = integer(min=0, max=8, default=3)
cells = integer(min=1, default=8)
implicit = boolean(default=False)
value_mode = option("auto", "open-loop", "feedback", default="auto")
enumeration_budget = integer(min=1, default=1000000)
mollifier_levels = int_list(min=1, default=list(4, 8, 16))
quadrature_order = integer(min=2, max=64, default=16)
projection_intervals = int_list(min=1, default=list(2, 4, 8))
projection_groups = int_list(min=1, default=list(1, 2, 4))
projection_degree = integer(min=1, max=4, default=1)
conditional_samples = integer(min=1, default=8)
refinement_levels = integer(min=1, max=8, default=3)
moment_exponents = float_list(min=1, default=list(2.0))
lyapunov_p = float_list(min=1, default=list(2.0, 3.0))
penalty_epsilon = float_list(min=1, default=list(0.1, 0.01))
comparison_shift = float(min=0.0, default=0.1)
comparison_relaxation = float(default=0.1)
dpp_allowance = float(min=0.0, default=0.0)
dpp_refinement = boolean(default=True)
tolerance = float(min=0.0, default=1e-8)
""".splitlines()


def _from_json(path):
    with open(path) as stream:
        try:
            document = json.load(stream)
        except ValueError as e:
            raise InvalidScenario([(os.path.basename(path),
                                    "invalid JSON: %s" % e)])
    if not isinstance(document, dict):
        raise InvalidScenario([(os.path.basename(path),
                                "expected a JSON object")])
    marks = document.get("marks")
    if isinstance(marks, list):
        document["marks"] = dict(("atom%d" % (i + 1), atom)
                                 for i, atom in enumerate(marks))
    return document


def load_source(source):
    """Read a scenario document without validating it.

    The *source* is a path to an ``.ini`` or ``.json`` file, a
    dictionary or a :class:`ConfigObj`.
    """
    if isinstance(source, ConfigObj):
        source = source.dict()
    elif not isinstance(source, dict):
        if not os.path.exists(source):
            raise InvalidScenario([(source, "no such scenario file")])
        if source.endswith(".json"):
            source = _from_json(source)
    try:
        return ConfigObj(source, configspec=CONFIGSPEC, file_error=True,
                         interpolation=False)
    except (ConfigObjError, IOError) as e:
        raise InvalidScenario([(str(getattr(source, "name", "scenario")),
                                str(e))])


def _path(sections, key):
    return ".".join(list(sections) + ([key] if key else []))


def validate_config(config):
    """Validate a loaded document in place and return it.

    Raises :exc:`jumphjb.errors.InvalidScenario` listing every problem.
    """
    result = config.validate(Validator(), preserve_errors=True, copy=True)
    problems = []
    if result is not True:
        for sections, key, error in flatten_errors(config, result):
            if error is False:
                problems.append((_path(sections, key), "missing"))
            else:
                problems.append((_path(sections, key), str(error)))
    for sections, name in get_extra_values(config):
        problems.append((_path(sections, name), "unknown key"))
    if not problems and config["schema_version"] != SCHEMA_VERSION:
        problems.append(("schema_version", "version %d is not supported, "
                         "expected %d" % (config["schema_version"],
                                          SCHEMA_VERSION)))
    if problems:
        raise InvalidScenario(sorted(problems))
    return config


def load_config(source):
    """Load and validate a scenario document."""
    config = validate_config(load_source(source))
    log.debug("loaded scenario {name}", name=config["name"])
    return config


def canonical(config):
    """The validated document as canonical JSON text."""
    return json.dumps(config.dict(), sort_keys=True, separators=(",", ":"))


def scenario_digest(config):
    """SHA-256 digest of the canonical form of a validated document."""
    return hashlib.sha256(canonical(config).encode("utf-8")).hexdigest()
