"""Experiment toolkit for metric sub-regularity of optimality systems.

The compiled core lives in ``_mrlab``; this package re-exports its public
functions.  In an installed wheel the extension sits inside the package, in
a build tree it sits next to it on ``PYTHONPATH``.
"""

try:
    from ._mrlab import (
        cone_residual,
        eval_norm,
        fit_regularity,
        list_problems,
        run_experiment,
    )
except ImportError:  # build-tree layout
    from _mrlab import (
        cone_residual,
        eval_norm,
        fit_regularity,
        list_problems,
        run_experiment,
    )

__all__ = [
    "cone_residual",
    "eval_norm",
    "fit_regularity",
    "list_problems",
    "run_experiment",
]
