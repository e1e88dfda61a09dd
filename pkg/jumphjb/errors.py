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

"""Exceptions raised by JumpHJB. Every exception derives from
:exc:`JumpHJBError` and belongs to one of three families, each with
the exit code the command line harness reports for it:

>>> SimulationBlowUp(3, 17).exit_code
3
>>> str(SimulationBlowUp(3, 17))
'non-finite state on path 3 at step 17'
>>> EnumerationTooLarge(2**30, 10**6).exit_code
4
"""

from jumphjb.constants import EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_BUDGET


class JumpHJBError(Exception):
    """Base class for all errors signalled by JumpHJB."""

    #: Exit code used by :mod:`jumphjb.harness`.
    exit_code = 1


class SchemaError(JumpHJBError):
    """A scenario or problem instance is malformed."""

    exit_code = EXIT_SCHEMA


class NumericalError(JumpHJBError):
    """A numerical procedure failed."""

    exit_code = EXIT_NUMERICAL


class BudgetError(JumpHJBError):
    """A configured work budget would be exceeded."""

    exit_code = EXIT_BUDGET


class InvalidInterval(SchemaError):
    """A time interval with its end before its start."""

    def __init__(self, t0, t1):
        SchemaError.__init__(self, "invalid interval [%r, %r]" % (t0, t1))
        self.t0 = t0
        self.t1 = t1


class InvalidInstance(SchemaError):
    """Inconsistent dimensions or an empty control set."""


class SimulationBlowUp(NumericalError):
    """A simulated state left the finite numbers."""

    def __init__(self, path, step):
        NumericalError.__init__(self, "non-finite state on path %d at step %d"
                                % (path, step))
        self.path = path
        self.step = step


class IllConditionedBasis(NumericalError):
    """The regression normal equations could not be solved."""

    def __init__(self, step, condition):
        NumericalError.__init__(self, "ill-conditioned regression at step %d "
                                "(condition number %.3g)" % (step, condition))
        self.step = step
        self.condition = condition


class StepTooLarge(NumericalError):
    """An explicit time step violates the CFL bound."""

    def __init__(self, step, bound):
        NumericalError.__init__(self, "time step %.6g exceeds the stability "
                                "bound %.6g" % (step, bound))
        self.step = step
        self.bound = bound


class DomainTooSmall(NumericalError):
    """A displaced point fell outside the extended space box."""


class ArithmeticFailure(NumericalError):
    """A linear algebra or floating point failure inside a computation.

    >>> str(ArithmeticFailure(ZeroDivisionError("float division by zero")))
    'ZeroDivisionError: float division by zero'
    """

    def __init__(self, cause):
        NumericalError.__init__(self, "%s: %s" % (cause.__class__.__name__,
                                                  cause))
        self.cause = cause


class EnumerationTooLarge(BudgetError):
    """Open-loop enumeration would exceed the configured budget."""

    def __init__(self, count, budget):
        BudgetError.__init__(self, "%d candidate policies exceed the budget "
                             "of %d" % (count, budget))
        self.count = count
        self.budget = budget


class InvalidScenario(SchemaError):
    """A scenario document failed validation. The *problems* are
    ``(key path, message)`` pairs."""

    def __init__(self, problems):
        SchemaError.__init__(self, "; ".join("%s: %s" % item
                                             for item in problems))
        self.problems = problems
