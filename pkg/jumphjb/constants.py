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

# Exit codes of the command line harness.
EXIT_OK        = 0
EXIT_SCHEMA    = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET    = 4

# Relative finite-difference step, scaled by (1 + |x|).
FD_STEP = 1e-4

# Regression safeguards.
RIDGE_FACTOR       = 1e-8
RIDGE_CONDITION    = 1e10
SINGULAR_CONDITION = 1e14

# Default open-loop enumeration budget.
ENUMERATION_BUDGET = 10**6

# Scenario schema version understood by this release.
SCHEMA_VERSION = 1

# Gauss-Legendre nodes per axis for mollifier convolutions.
QUADRATURE_ORDER = 16
