# This is the JumpHJB setup script.
#
# For a global install by root, use:    python setup.py install
# For a local install into ~/opt, use:  python setup.py --home=~/opt
# For more options, use:                python setup.py --help

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

import sys
if sys.version_info < (3, 8):
    raise SystemExit("JumpHJB requires Python version 3.8 or later.")

from setuptools import setup

import jumphjb

setup(name='jumphjb',
      version=jumphjb.__version__,
      author='JumpHJB Development Team',
      description='Controlled jump-diffusions with recursive costs',
      long_description="""\
JumpHJB is a numerical toolkit for controlled jump-diffusions whose
costs are defined recursively by backward stochastic differential
equations. Features include:

* Euler simulation of state equations driven by Brownian motion and a
  Poisson random measure with finitely many marks.

* regression Monte Carlo for the recursive cost (Y, Z, K) and the
  backward semigroup.

* value functions over piecewise-constant policies and numerical
  checks of the dynamic programming principle.

* an explicit finite-difference solver for the HJB integro-PDE with
  deterministic coefficients, cross-checked against Monte Carlo.

* mollification, bounding equations, Lyapunov weights, penalty
  functions and noise projections as numerical diagnostics.

Every experiment is a command of the ``jumphjb`` program driven by a
scenario file and a master seed, and writes CSV and JSON results with
a manifest of digests.
""",
      keywords=['stochastic control', 'jump-diffusion', 'BSDE', 'HJB',
                'Monte Carlo', 'regression', 'integro-PDE'],
      license=jumphjb.__license__,
      packages=['jumphjb', 'jumphjb.test'],
      install_requires=['numpy', 'scipy', 'Twisted', 'configobj'],
      entry_points={'console_scripts': ['jumphjb = jumphjb.harness:run']},
      platforms=['any'],
      classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
        ],
      )
