# -*- coding: utf-8 -*-
#
# JumpHJB documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import sys
import os

# Ensure we load JumpHJB from the parent directory.
sys.path.insert(0, os.path.abspath('../'))

# General configuration
# ---------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.ifconfig',
              'sphinx.ext.mathjax']

templates_path = []

# The suffix of source filenames.
source_suffix = '.txt'

# The master toctree document.
master_doc = 'index'

# General substitutions.
project = 'JumpHJB'
copyright = '2026, JumpHJB Development Team'

import jumphjb

# The short X.Y version.
version = jumphjb.__version__
# The full version, including alpha/beta/rc tags.
release = jumphjb.release()

today_fmt = '%B %d, %Y'

# The name of the Pygments (syntax highlighting) style to use.
pygments_style = 'sphinx'


# Options for HTML output
# -----------------------

html_static_path = []
html_last_updated_fmt = '%b %d, %Y'
htmlhelp_basename = 'JumpHJBdoc'


# Options for LaTeX output
# ------------------------

latex_documents = [
  ('index', 'JumpHJB.tex', 'JumpHJB Documentation',
   'JumpHJB Development Team', 'manual'),
]
