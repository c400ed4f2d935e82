# -*- coding: utf-8 -*-
#
# TDOA-Homotopy documentation build configuration file.

import sys, os

sys.path.insert(0, os.path.abspath('..'))

extensions = ['sphinx.ext.autodoc']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = u'TDOA-Homotopy'
copyright = u'TDOA-Homotopy developers'

exclude_patterns = ['_build']

pygments_style = 'sphinx'

html_theme = 'alabaster'

html_static_path = ['_static']

htmlhelp_basename = 'TDOA-Homotopydoc'

latex_elements = {
}

latex_documents = [
  ('index', 'TDOA-Homotopy.tex', u'TDOA-Homotopy Documentation',
   u'TDOA-Homotopy developers', 'manual'),
]

man_pages = [
    ('index', 'tdoa-homotopy', u'TDOA-Homotopy Documentation',
     [u'TDOA-Homotopy developers'], 1)
]
