from __future__ import annotations

import os
import sys
from datetime import date

# If extensions (or modules to document with autodoc) are in another directory,
# add these directories to sys.path here.
root_path = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, os.path.join(root_path, "src"))

# https://docs.readthedocs.io/en/stable/builds.html#build-environment
if "READTHEDOCS" in os.environ:
    import glob

    if glob.glob("../changelog/*.*.rst"):
        print("-- Found changes; running towncrier --", flush=True)
        import subprocess

        subprocess.run(
            ["towncrier", "--yes", "--date", "not released yet"], cwd="..", check=True
        )

import jumpcontrol

# -- General configuration -----------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx_copybutton",
    "sphinx.ext.doctest",
    "sphinx.ext.intersphinx",
]

# Test code blocks only when explicitly specified
doctest_test_doctest_blocks = ""

source_suffix = ".rst"
master_doc = "index"

project = "jumpcontrol"
copyright = f"{date.today().year}, the jumpcontrol developers"

# The short X.Y version.
version = jumpcontrol.__version__
# The full version, including alpha/beta/rc tags.
release = version

exclude_patterns = ["_build"]
pygments_style = "friendly"
html_theme = "furo"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}

# Show typehints as content of the function or method
autodoc_typehints = "description"

# Warn about all references to unknown targets
nitpicky = True
# Except for these ones, which we expect to point to unknown targets:
nitpick_ignore = [
    ("py:class", "CMatrix"),
    ("py:class", "SuperOp"),
    ("py:class", "FloatArray"),
    ("py:class", "BlockState"),
    ("py:class", "EigenMode"),
    ("py:class", "InitialState"),
    ("py:class", "ScgfFunction"),
    ("py:class", "npt.ArrayLike"),
    ("py:class", "numpy.typing.ArrayLike"),
    ("py:class", "Literal"),
    ("py:class", "_Grid"),
]
