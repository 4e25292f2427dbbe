#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# NeuroTrain documentation build configuration file.

import sys
import os

sys.path.insert(0, os.path.abspath('../..'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'NeuroTrain'
copyright = '2026, the NeuroTrain developers'
author = 'the NeuroTrain developers'

# The short X.Y version.
version = '0.1'
# The full version, including alpha/beta/rc tags.
release = '0.1.0'

rst_prolog = """
.. |name| replace:: {name}
.. |license| replace:: {license}
""".format(name=project, license="BSD")

language = 'en'
exclude_patterns = []
pygments_style = 'sphinx'
todo_include_todos = False


# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []
htmlhelp_basename = 'NeuroTraindoc'


# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    (master_doc, 'NeuroTrain.tex', 'NeuroTrain Documentation',
     author, 'manual'),
]


# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'neurotrain', 'NeuroTrain Documentation',
     [author], 1)
]
