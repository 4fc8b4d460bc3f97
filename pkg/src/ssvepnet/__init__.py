"""SSVEP classification toolkit: preprocessing, CCA baselines, a compact CNN
trained with hand-written backpropagation, a leave-one-subject-out harness
and interpretability analyses.

Submodules load on first attribute access so that importing the package
(e.g. from the command line) does not pull in numpy before thread settings
are applied.
"""
from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = ("analysis", "cca", "combined_cca", "config", "datastore", "harness", "nnet",
               "pipeline", "signal", "stimulus", "synthgen")


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = ["__version__", *_SUBMODULES]
