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

"""Command line harness.

Every experiment is one invocation::

  jumphjb <command> --scenario <name or file> --out <dir>
          [--threads N] [--seed S] [--verbose | --quiet]

The commands are listed in :data:`COMMANDS`. Each writes
``results.csv``, ``report.json`` and ``manifest.json`` into the output
directory. A failure writes ``error.json`` there and to stdout and
exits with the code of the error family (2 for schema errors, 3 for
numerical failures, 4 for exceeded budgets).

The command ``list`` prints the built-in scenarios and needs neither a
scenario nor an output directory.
"""

import json
import os
import sys
from collections import OrderedDict
from optparse import OptionGroup, OptionParser

import numpy as np
from twisted.logger import (FilteringLogObserver, Logger, LogLevel,
                            LogLevelFilterPredicate, globalLogBeginner,
                            textFileLogObserver)

from jumphjb import __version__, scenarios
from jumphjb.approx import (bounding_bsde, lyapunov_check, penalty_argmax,
                            penalty_derivative_check)
from jumphjb.bsde import apriori_report, martingale_residuals, solve
from jumphjb.coefficients import probe_assumptions
from jumphjb.constants import EXIT_OK
from jumphjb.dpp import dpp_check, dpp_refinement, value
from jumphjb.errors import ArithmeticFailure, InvalidInstance, JumpHJBError
from jumphjb.forward import flow_check, moment_report, refinement_study, \
    simulate
from jumphjb.mollify import MollifierSpec, coefficient_errors
from jumphjb.pde import (comparison_check, cross_check, envelope_sandwich,
                         heat_error, solve_conditional, solve_pde,
                         stability_bound, stable_time_grid)
from jumphjb.projection import coarsen, nonincreasing, project_noise, \
    projection_error
from jumphjb.regression import RegressionBasis
from jumphjb.report import RunManifest, write_csv, write_json
from jumphjb.util import master_seed, reset_stages, stream, thread_count

log = Logger()


def add_options(parser):
    group = OptionGroup(parser, "JumpHJB Options")
    parser.add_option_group(group)

    group.add_option("-s", "--scenario", metavar="SCENARIO",
                     help="Built-in scenario name or scenario file "
                     "(.ini or .json).")
    group.add_option("-o", "--out", metavar="DIR",
                     help="Directory for the result files.")
    group.add_option("-t", "--threads", type="int", metavar="N",
                     help="Cap on worker threads. Falls back to "
                     "JUMPHJB_THREADS, then 1.")
    group.add_option("--seed", type="int", metavar="S",
                     help="Master seed. Falls back to JUMPHJB_SEED, then "
                     "the scenario's master_seed.")
    group.add_option("-v", "--verbose", action="store_const", const="debug",
                     dest="log_level", help="Log stage details.")
    group.add_option("-q", "--quiet", action="store_const", const="warn",
                     dest="log_level", help="Log warnings and errors only.")

    parser.set_defaults(scenario=None,
                        out=None,
                        threads=None,
                        seed=None,
                        log_level="info")


def start_logging(level="info", stream=None):
    """Send log events at *level* and above to *stream* (stderr)."""
    predicate = LogLevelFilterPredicate(
        defaultLogLevel=LogLevel.levelWithName(level))
    observer = FilteringLogObserver(
        textFileLogObserver(stream or sys.stderr), [predicate])
    globalLogBeginner.beginLoggingTo([observer], redirectStandardIO=False,
                                     discardBuffer=True)


class Run(object):
    """The resolved inputs of one command."""

    def __init__(self, scenario, seed, threads):
        self.scenario = scenario
        self.seed = seed
        self.threads = threads
        self.cs = scenario.coefficients
        self.mm = scenario.marks
        self.solver = scenario.solver
        self.grids = scenario.grids

    def simulate(self, label="simulate"):
        sc = self.scenario
        return simulate(self.cs, self.mm, sc.grid(), sc.x0, sc.policy(),
                        sc.n_paths, self.seed, self.threads, label)

    def value(self):
        sc = self.scenario
        return value(self.cs, self.mm, sc.grid(), sc.x0, sc.family(),
                     sc.basis(), sc.n_paths, self.seed,
                     self.solver["value_mode"],
                     self.solver["enumeration_budget"], self.threads)

    def pde_grid(self, box):
        return stable_time_grid(self.cs, self.mm, self.grids["start"],
                                self.grids["horizon"], box,
                                self.grids["pde_safety"],
                                self.grids["steps"])


def _state_header(prefix, n):
    return ["%s%d" % (prefix, i + 1) for i in range(n)]


def run_simulate(run):
    """Paths of the configured policy, with moments, the flow property
    and a weak refinement study of ``E[X_1(T)]``."""
    bundle = run.simulate()
    grid = bundle.grid
    header = ["path", "step", "time"] + _state_header("x", run.cs.n)
    rows = [[p, i, grid.nodes[i]] + list(bundle.states[p, i])
            for p in range(bundle.n_paths) for i in range(grid.steps + 1)]

    sc = run.scenario
    final = bundle.terminal_states()
    report = OrderedDict()
    report["paths"] = bundle.n_paths
    report["steps"] = grid.steps
    report["mean_terminal"] = final.mean(axis=0)
    report["mean_terminal_stderr"] = final.std(axis=0) / np.sqrt(len(final))
    report["jumps"] = int(bundle.jump_counts(run.mm).sum())
    report["moments"] = moment_report(bundle,
                                      run.solver["moment_exponents"])
    report["flow_deviation"] = flow_check(run.cs, run.mm, grid, sc.x0,
                                          sc.policy(), sc.split_node,
                                          sc.n_paths, run.seed, run.threads)
    report["refinement"] = refinement_study(
        run.cs, run.mm, grid, sc.x0, sc.policy(), lambda x: x[:, 0],
        run.solver["refinement_levels"], sc.n_paths, run.seed, run.threads)
    return header, rows, report


def run_solve_bsde(run):
    """The recursive cost of the configured policy with its martingale
    residuals."""
    bundle = run.simulate()
    solution = solve(run.cs, run.mm, bundle, run.scenario.basis(),
                     implicit=run.solver["implicit"])
    residuals = martingale_residuals(solution, run.cs, run.mm, bundle)
    grid = bundle.grid
    header = ["step", "time", "y_mean", "residual_mean", "residual_stderr"]
    rows = [[r["step"], grid.nodes[r["step"]],
             float(solution.y[:, r["step"]].mean()), r["mean"], r["stderr"]]
            for r in residuals]

    report = OrderedDict()
    report["y0"] = solution.y0
    report["stderr"] = solution.stderr()
    report["implicit"] = run.solver["implicit"]
    report["largest_residual"] = max(abs(r["mean"]) for r in residuals)
    report["apriori"] = apriori_report(solution, run.cs, bundle)
    return header, rows, report


def run_value(run):
    estimate = run.value()
    header = ["value", "std_error", "mode"]
    rows = [[estimate.value, estimate.std_error, estimate.mode]]
    report = OrderedDict(sorted(estimate.as_dict().items()))
    report["policies"] = run.scenario.family().size
    return header, rows, report


def run_dpp_check(run):
    """The dynamic programming residual at the split node. With
    ``dpp_refinement`` the check also runs on the grid with half as
    many steps, and the report tells whether the residual decreased."""
    sc = run.scenario
    grid, family, split = sc.grid(), sc.family(), sc.split_node
    arguments = (run.cs, run.mm, grid, sc.x0, family, split, sc.basis(),
                 sc.n_paths, run.seed, run.solver["value_mode"],
                 run.solver["enumeration_budget"], run.threads)
    halvable = (grid.steps % 2 == 0 and split % 2 == 0
                and all(i % 2 == 0 for i in family.decision_nodes))
    refinement = None
    if run.solver["dpp_refinement"] and halvable:
        refinement = dpp_refinement(*arguments)
        checks = refinement["levels"]
    else:
        if run.solver["dpp_refinement"]:
            log.warn("grid of {steps} steps split at {split} cannot be "
                     "halved, refinement skipped", steps=grid.steps,
                     split=split)
        check = dpp_check(*arguments)
        check["steps"], check["dt"] = grid.steps, grid.dt
        checks = [check]

    header = ["steps", "split", "value", "composed", "residual",
              "combined_stderr", "bound"]
    rows = []
    for check in checks:
        check["bound"] = (2 * check["combined_stderr"]
                          + run.solver["dpp_allowance"])
        check["within"] = check["residual"] <= check["bound"]
        rows.append([check[name] for name in header])
    report = OrderedDict(sorted(checks[-1].items()))
    if refinement is not None:
        report["coarse"] = OrderedDict(sorted(checks[0].items()))
        report["decreasing"] = refinement["decreasing"]
    return header, rows, report


def run_solve_pde(run):
    """The field at the start time on the space box. Random coefficients
    are solved conditionally on frozen noise histories and averaged.
    A pure heat flow is also measured against its closed form."""
    sc = run.scenario
    box = sc.space_box()
    grid = run.pde_grid(box)
    report = OrderedDict()
    if run.cs.random:
        solved = solve_conditional(run.cs, run.mm, grid, box,
                                   run.solver["conditional_samples"],
                                   run.seed, run.threads)
        report["conditional_samples"] = run.solver["conditional_samples"]
    else:
        solved = solve_pde(run.cs, run.mm, grid, box)
        report["comparison"] = comparison_check(
            run.cs, run.mm, grid, box, run.solver["comparison_shift"],
            run.solver["comparison_relaxation"], run.solver["tolerance"])
    nodes = box.nodes()
    values = solved.fields[0].values.reshape(-1)
    header = _state_header("x", run.cs.n) + ["value"]
    rows = [list(x) + [v] for x, v in zip(nodes, values)]

    report["value"] = float(solved.initial_value(sc.x0))
    report["steps"] = grid.steps
    report["dt"] = grid.dt
    if not run.cs.random:
        report["stability_bound"] = stability_bound(
            run.cs, run.mm, (grid.t0, grid.T), box)
    heat = sc.heat_flow()
    if heat is not None:
        oracle = heat_error(solved, *heat)
        oracle["within"] = oracle["relative"] <= 0.01
        report["heat_oracle"] = oracle
    return header, rows, report


def run_cross_check(run):
    """Monte Carlo value against the PDE value at the initial state."""
    if run.cs.random:
        raise InvalidInstance("the cross-check needs deterministic "
                              "coefficients")
    sc = run.scenario
    estimate = run.value()
    result = cross_check(run.cs, run.mm, run.grids["start"],
                         run.grids["horizon"], sc.space_box(), sc.x0,
                         estimate.value, estimate.std_error,
                         run.grids["pde_safety"], run.grids["steps"])
    header = ["pde_value", "pde_coarse", "mc_value", "mc_stderr",
              "allowance", "gap", "agree"]
    rows = [[result[name] for name in header]]
    report = OrderedDict(sorted(result.items()))
    report["mode"] = estimate.mode
    return header, rows, report


def _decay(rows, names, slack=0.2):
    """Ratios of successive errors and whether each at least halves
    within *slack*."""
    decay = OrderedDict()
    for name in names:
        ratios = [a[name] / b[name] if b[name] > 0 else None
                  for a, b in zip(rows, rows[1:])]
        decay[name] = OrderedDict([
            ("ratios", ratios),
            ("halving", all(r is None or r >= 2 * (1 - slack)
                            for r in ratios))])
    return decay


def run_mollify_report(run):
    """Coefficient errors and bounding envelopes per mollification
    level.

    With deterministic elliptic coefficients the mollified problems are
    solved and :func:`jumphjb.pde.envelope_sandwich` brackets the field.
    Otherwise the bounding equation is driven by the coefficient errors
    alone, with a unit derivative constant.
    """
    sc = run.scenario
    probe = sc.probe()
    levels = run.solver["mollifier_levels"]
    order = run.solver["quadrature_order"]
    report = OrderedDict()
    if not run.cs.random:
        box = sc.space_box()
        sandwich = envelope_sandwich(run.cs, run.mm, run.pde_grid(box), box,
                                     levels, probe, run.seed, order=order)
        rows = sandwich["levels"]
        report["envelope"] = sandwich
    else:
        grid = sc.grid()
        probed = probe_assumptions(run.cs, run.mm, probe,
                                   stream(run.seed, "envelope-probe"))
        l_y = probed["ratios"]["lipschitz_f_yzk"]
        c_phi = max(lyapunov_check(run.cs, run.mm, run.cs.p, probe,
                                   nodes=run.grids["probe_nodes"])["c_phi"],
                    0.0)
        rows = []
        for level in levels:
            spec = MollifierSpec(level, run.cs.n, order)
            errors = coefficient_errors(run.cs, run.mm, spec, probe,
                                        grid.nodes,
                                        run.grids["probe_nodes"], run.seed)
            y = bounding_bsde(errors["delta_h"], errors["delta_f"],
                              errors["delta_lambda"], 1.0, l_y, c_phi, grid)
            row = OrderedDict()
            row["level"] = level
            row["delta_h"] = errors["delta_h"]
            row["delta_f"] = float(errors["delta_f"].max())
            row["delta_lambda"] = float(errors["delta_lambda"].max())
            row["y0"] = float(y[0])
            rows.append(row)
        report["l_y"] = l_y
        report["c_phi"] = c_phi
    header = ["level", "delta_h", "delta_f", "delta_lambda", "y0"]
    report["decay"] = _decay(rows, ("delta_h", "delta_f", "delta_lambda"))
    report["y0_decreasing"] = all(b["y0"] <= a["y0"]
                                  for a, b in zip(rows, rows[1:]))
    return header, rows, report


def run_lyapunov_report(run):
    """Lyapunov constants on the probe box and its double, and the
    localisation of the penalised terminal cost."""
    sc = run.scenario
    nodes = run.grids["probe_nodes"]
    probe, doubled = sc.probe(), sc.probe(2.0)
    rows = []
    for p in run.solver["lyapunov_p"]:
        base = lyapunov_check(run.cs, run.mm, p, probe, nodes=nodes)
        wide = lyapunov_check(run.cs, run.mm, p, doubled, nodes=nodes)
        change = abs(wide["c_phi"] - base["c_phi"])
        scale = max(abs(base["c_phi"]), run.solver["tolerance"])
        row = OrderedDict()
        row["p"] = p
        row["c_phi"] = base["c_phi"]
        row["c_phi_doubled"] = wide["c_phi"]
        row["relative_change"] = change / scale
        row["weighted_constant"] = base["weighted_constant"]
        row["stable"] = (change <= 0.1 * abs(base["c_phi"])
                         or change <= run.solver["tolerance"])
        row["nonfinite"] = base["nonfinite"] + wide["nonfinite"]
        rows.append(row)
    header = list(rows[0].keys())

    report = OrderedDict()
    report["constants"] = rows
    report["finite"] = all(row["nonfinite"] == 0
                           and np.isfinite(row["c_phi"]) for row in rows)
    report["stable"] = all(row["stable"] for row in rows)
    report["penalty"] = [
        penalty_argmax(run.cs.terminal, sc.x0, run.cs.p, epsilon,
                       probe.lower, probe.upper, nodes)
        for epsilon in run.solver["penalty_epsilon"]]
    points = probe.lower + (probe.upper - probe.lower) * stream(
        run.seed, "penalty-check").random((100, run.cs.n))
    checks = [penalty_derivative_check(points, sc.x0, p)
              for p in run.solver["lyapunov_p"]]
    report["penalty_derivatives"] = checks
    report["penalty_derivatives_match"] = all(
        check["gradient_error"] <= 1e-6 and check["hessian_error"] <= 1e-6
        and check["convexity_margin"] >= -1e-8 for check in checks)
    return header, rows, report


def run_project_report(run):
    """Residuals of ``X_1(T)`` regressed on polynomials of degree
    ``projection_degree`` in the noise projections of increasing
    resolution."""
    intervals = run.solver["projection_intervals"]
    groups = run.solver["projection_groups"]
    if len(intervals) != len(groups):
        raise InvalidInstance("projection_intervals and projection_groups "
                              "differ in length")
    bundle = run.simulate("project")
    levels = list(zip(intervals, groups))
    projections = [project_noise(bundle, run.mm, n, m) for n, m in levels]
    basis = RegressionBasis("polynomial", run.solver["projection_degree"])
    rows = projection_error(bundle.terminal_states()[:, 0], bundle,
                            projections, basis)
    finest = projections[-1]
    telescoping = all(coarsen(finest, n, m) == projection
                      for (n, m), projection in zip(levels, projections))
    header = ["intervals", "groups", "features", "columns", "residual",
              "relative"]
    report = OrderedDict()
    report["levels"] = rows
    report["nonincreasing"] = nonincreasing(rows)
    report["telescoping"] = telescoping
    return header, rows, report


#: The commands, in listing order.
COMMANDS = OrderedDict([
    ("simulate", run_simulate),
    ("solve-bsde", run_solve_bsde),
    ("value", run_value),
    ("dpp-check", run_dpp_check),
    ("solve-pde", run_solve_pde),
    ("cross-check", run_cross_check),
    ("mollify-report", run_mollify_report),
    ("lyapunov-report", run_lyapunov_report),
    ("project-report", run_project_report),
])


def list_command(out=sys.stdout):
    for name, description in scenarios.list_scenarios():
        out.write("%-18s %s\n" % (name, description))
    out.write("registry %s\n" % scenarios.registry_digest())


def execute(command, options):
    """Run *command* and write its files. Returns the manifest."""
    scenario = scenarios.load(options.scenario)
    if options.seed is not None:
        seed = options.seed
    else:
        seed = master_seed(scenario.master_seed)
    threads = thread_count(options.threads)
    log.info("{command} on {scenario} with seed {seed}, {threads} threads",
             command=command, scenario=scenario.name, seed=seed,
             threads=threads)

    reset_stages()
    header, rows, report = COMMANDS[command](Run(scenario, seed, threads))
    document = OrderedDict()
    document["command"] = command
    document["scenario"] = scenario.name
    document["seed"] = seed
    document["results"] = report

    manifest = RunManifest(command, scenario.name, scenario.digest(), seed,
                           threads)
    manifest.add(write_csv(os.path.join(options.out, "results.csv"), header,
                           rows))
    manifest.add(write_json(os.path.join(options.out, "report.json"),
                            document))
    manifest.write(options.out)
    return manifest


def report_error(error, out_dir=None, out=sys.stdout):
    document = OrderedDict([("error", error.__class__.__name__),
                            ("message", str(error)),
                            ("exit_code", error.exit_code)])
    if out_dir is not None and os.path.isdir(out_dir):
        write_json(os.path.join(out_dir, "error.json"), document)
    out.write(json.dumps(document) + "\n")
    return error.exit_code


def dispatch(command, options, out=sys.stdout):
    """Run *command* and map a failure to its exit code."""
    if not os.path.isdir(options.out):
        os.makedirs(options.out)
    try:
        try:
            execute(command, options)
        except (np.linalg.LinAlgError, FloatingPointError, OverflowError,
                ZeroDivisionError) as e:
            raise ArithmeticFailure(e)
    except JumpHJBError as e:
        log.error("{command} failed: {error}", command=command, error=e)
        return report_error(e, options.out, out)
    return EXIT_OK


def main(argv=None):
    parser = OptionParser(usage="%prog <command> --scenario SCENARIO "
                          "--out DIR [options]\n\ncommands: list, "
                          + ", ".join(COMMANDS),
                          version="%prog " + __version__)
    add_options(parser)
    options, args = parser.parse_args(argv)

    if len(args) != 1:
        parser.error("expected exactly one command")
    command = args[0]
    if command == "list":
        list_command()
        return EXIT_OK
    if command not in COMMANDS:
        parser.error("unknown command %r" % command)
    if options.scenario is None or options.out is None:
        parser.error("--scenario and --out are required")

    start_logging(options.log_level)
    return dispatch(command, options)


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
