# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/master/config

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

# -- Project information -----------------------------------------------------

project = u"crowdcast"
copyright = u"2024, Crowdcast Development Team"
author = u"Crowdcast Development Team"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.napoleon",
]

source_suffix = [".rst"]
master_doc = "index"
exclude_patterns = [u"_build", "Thumbs.db", ".DS_Store"]

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
htmlhelp_basename = "crowdcastdoc"

# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, "crowdcast", u"crowdcast Documentation", [author], 1)
]
