"""Independent feasibility replay for solver output.

Recomputes every block slack from the raw problem data and measures its
cone margin with plain dense linear algebra, sharing nothing with the
interior-point iteration. Meant as the last line of defense against a
solver bug silently returning an infeasible point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cones import cone_margin
from .problem import ConicProblem


class ConeViolation(Exception):
    pass


@dataclass
class VerifyReport:
    ok: bool
    objective: float
    worst_margin: float
    block_margins: list


def verify(problem: ConicProblem, x: np.ndarray, tol: float = 1.0e-7,
           raise_on_fail: bool = True) -> VerifyReport:
    """Check h - G x block by block; margins below -tol fail loudly."""
    G, h, _ = problem.finalize()
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError("solution length disagrees with the problem")
    slack = h - G @ x
    margins = []
    worst = np.inf
    for i, (cone, sl) in enumerate(problem.block_slices()):
        m = cone_margin(cone, slack[sl])
        margins.append((i, type(cone).__name__, float(m)))
        worst = min(worst, m)
    ok = worst >= -tol
    if not ok and raise_on_fail:
        bad = min(margins, key=lambda t: t[2])
        raise ConeViolation(
            f"block {bad[0]} ({bad[1]}) infeasible by {-bad[2]:.3e} "
            f"(tolerance {tol:.1e})")
    return VerifyReport(ok=ok, objective=float(problem.c @ x),
                        worst_margin=float(worst), block_margins=margins)
