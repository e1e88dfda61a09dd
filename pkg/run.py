#!/usr/bin/env python

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

"""Developer helper for JumpHJB.

Runs the unit tests, coverage, the manual build, static checks and the
acceptance sweep over the shipped scenarios with one command each.
"""

import os
import shutil
import sys
from os.path import isdir, join
from subprocess import Popen
from pprint import pprint
from textwrap import wrap

from twisted.python.procutils import which


def abort(msg, *args, **kwargs):
    if args:
        msg = msg % args
    print()
    print("*** %s" % msg)
    sys.exit(kwargs.get('exit_code', 1))


def find_program(program):
    possibilities = which(program)
    if not possibilities:
        abort("Could not find '%s' in PATH", program)
    return possibilities[0]


def execute(args, env=None, work_dir=None, check=True):
    env = dict(env or {})
    print("Executing")
    pprint(args)
    if env:
        print("in environment")
        pprint(env)
    if work_dir:
        print("in working directory '%s'" % work_dir)
    print()

    for name in ('PATH', 'PYTHONPATH'):
        if name in os.environ:
            if name in env:
                env[name] += os.pathsep + os.environ[name]
            else:
                env[name] = os.environ[name]

    try:
        p = Popen(args, env=env, cwd=work_dir)
        rc = p.wait()
        if check and rc != 0:
            abort("Exited with exit code %d", rc, exit_code=rc)
        return rc
    except OSError as e:
        abort(e)
    except KeyboardInterrupt:
        abort("Interrupted")


def ensure_dir(path):
    if not isdir(path):
        try:
            os.makedirs(path)
        except OSError as e:
            abort(e)


# Dictionary mapping command line arguments to [function, arguments]
# lists.
command_table = {}


def command(name, *required_args):
    def wrapper(func):
        command_table[name] = [func, required_args]
        return func
    return wrapper


@command('sphinx', 'target')
def sphinx(target):
    """Generate the JumpHJB manual using Sphinx."""
    ensure_dir(target)
    execute(["sphinx-build", "-N", "doc", target])


@command('coverage', 'target')
def coverage(target):
    """Run Trial unit tests and write an HTML coverage report."""
    ensure_dir(target)
    trial = find_program("trial")
    execute([sys.executable, "-m", "coverage", "run", "--source=jumphjb",
             "--omit=jumphjb/test/*", trial, "jumphjb"])
    execute([sys.executable, "-m", "coverage", "html", "-d", target])


@command('pyflakes')
def pyflakes():
    """Find static errors using Pyflakes."""
    pyfiles = []
    for root, dirs, files in os.walk('jumphjb'):
        pyfiles.extend([join(root, name) for name in files
                        if name.endswith('.py')])
    execute([sys.executable, '-m', 'pyflakes', 'setup.py', 'run.py']
            + pyfiles)


@command('trial')
def trial():
    """Execute Trial on the unit tests and doctests."""
    trial = find_program("trial")
    execute([sys.executable, trial, '--reporter=bwverbose', 'jumphjb'])


@command('acceptance', 'target')
def acceptance(target):
    """Run every command on the scenarios it is meant for, writing one
    output directory per run below target."""
    runs = [("simulate", "zero"), ("simulate", "geometric-jump"),
            ("solve-bsde", "linear-bsde"), ("dpp-check", "two-control-1d"),
            ("cross-check", "heat-reduction"),
            ("cross-check", "jump-transport"),
            ("cross-check", "two-control-1d"),
            ("solve-pde", "heat-reduction"),
            ("mollify-report", "lipschitz-mollify"),
            ("lyapunov-report", "geometric-jump"),
            ("project-report", "geometric-jump")]
    failed = []
    for name, scenario in runs:
        out = join(target, "%s-%s" % (name, scenario))
        if isdir(out):
            shutil.rmtree(out)
        rc = execute([sys.executable, "-m", "jumphjb.harness", name,
                      "--scenario", scenario, "--out", out], check=False)
        if rc != 0:
            failed.append((name, scenario, rc))
    for name, scenario, rc in failed:
        print("%s on %s exited with %d" % (name, scenario, rc))
    if failed:
        abort("%d of %d runs failed", len(failed), len(runs))


@command('help')
def usage():
    """Show this help message and exit."""
    try:
        width = int(os.environ['COLUMNS'])
    except (KeyError, ValueError):
        width = 80
    width -= 4 # Indent two spaces on each side.

    def format(command, args):
        if args:
            return "%s <%s>" % (command, "> <".join(args))
        else:
            return "%s" % command

    commands = sorted((format(com, args), func.__doc__)
                      for (com, (func, args)) in command_table.items())

    command_width = max(len(com) for com, _ in commands) + 2
    doc_width = width - command_width

    print("JumpHJB Developer Tool")
    print()
    print("Available commands (the arguments in angle brackets are "
          "required):")
    for command, doc in commands:
        # The docstring might contain newlines followed by an
        # indention, so we join its stripped lines.
        doc = " ".join(line.strip() for line in doc.splitlines())
        lines = wrap(doc, doc_width)
        print("  %-*s%s" % (command_width, command, lines[0]))
        for line in lines[1:]:
            print("  %-*s%s" % (command_width, '', line))


if __name__ == "__main__":
    try:
        command = sys.argv[1]
    except IndexError:
        usage()
        abort("Please specify a command")

    args = sys.argv[2:]

    if command in command_table:
        func, required_args = command_table[command]
        if len(args) == len(required_args):
            func(*args)
        else:
            usage()
            plural = len(required_args) == 1 and 'argument' or 'arguments'
            abort("%s needs exactly %d %s, but %d was given",
                  command, len(required_args), plural, len(args))
    else:
        usage()
        abort("Unknown command: %s", command)
