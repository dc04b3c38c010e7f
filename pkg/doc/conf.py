# -*- coding: utf-8 -*-
#
# styletween documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import sys, os
sys.path.insert(0, os.path.abspath('../src'))
import styletween

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.doctest', 'sphinx.ext.coverage', 'sphinx.ext.viewcode',
              'sphinx.ext.autosummary', 'sphinx.ext.intersphinx']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'contents'

project = u'styletween'
copyright = u'2024, styletween contributors'

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
    }

# The short X.Y version.
version = styletween.__version__
# The full version, including alpha/beta/rc tags.
release = version

exclude_patterns = ['_build']

pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'alabaster'

html_static_path = ['_static']

htmlhelp_basename = 'styletweendoc'

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
  ('contents', 'styletween.tex', u'styletween Documentation',
   u'styletween contributors', 'manual'),
]

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('man/styletween', 'styletween', u'styletween command', [u'styletween contributors'], 1)
]
