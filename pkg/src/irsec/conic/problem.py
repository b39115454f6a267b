"""Problem container for the cone solver.

A problem holds a linear objective c (to maximize), a dense constraint
matrix G, offsets h and an ordered cone list; each block constrains the
slack s = h - G x to its cone. Complex Hermitian matrix constraints are
realified on entry: H -> [[Re H, -Im H], [Im H, Re H]], which preserves
definiteness (each eigenvalue appears twice).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import Cone, NonnegCone, PsdCone, SocCone, cone_dim, svec

HERMITIAN_TOL = 1.0e-12


class VarTable:
    """Registry mapping variable names to index ranges in the x vector."""

    def __init__(self):
        self._slices: dict[str, slice] = {}
        self.n = 0

    def add(self, name: str, size: int = 1) -> slice:
        if name in self._slices:
            raise ValueError(f"variable {name!r} already registered")
        sl = slice(self.n, self.n + size)
        self._slices[name] = sl
        self.n += size
        return sl

    def add_scalar(self, name: str) -> int:
        return self.add(name, 1).start

    def slice(self, name: str) -> slice:
        return self._slices[name]

    def index(self, name: str) -> int:
        sl = self._slices[name]
        if sl.stop - sl.start != 1:
            raise ValueError(f"variable {name!r} is not a scalar")
        return sl.start

    def names(self):
        return list(self._slices)

    def value(self, name: str, x: np.ndarray) -> np.ndarray | float:
        sl = self._slices[name]
        if sl.stop - sl.start == 1:
            return float(x[sl.start])
        return np.asarray(x[sl])


def realify_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric image of a Hermitian matrix (eigenvalues doubled)."""
    H = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(H))) if H.size else 1.0)
    if float(np.max(np.abs(H - H.conj().T))) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian to working tolerance")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if float(np.max(np.abs(A - A.T))) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not symmetric to working tolerance")
    return 0.5 * (A + A.T)


@dataclass
class ConicSolution:
    """Solver output. objective is c @ x for the returned (scaled) x."""

    x: np.ndarray
    objective: float
    status: str                  # Optimal | Infeasible | MaxIter | NumericalFailure
    primal_res: float
    dual_res: float
    gap: float
    iterations: int
    wall_time: float
    message: str = ""


class ConicProblem:
    """Cone program: maximize c @ x subject to h - G x in K.

    Rows are appended block by block through add_nonneg / add_soc /
    add_psd*; the row order fixes the cone list. Variables may be named
    through an attached VarTable for readable assembly and extraction.
    """

    def __init__(self, n_vars: int, names: VarTable | None = None):
        if names is not None and names.n != n_vars:
            raise ValueError("name table size disagrees with n_vars")
        self.n = n_vars
        self.names = names
        self.c = np.zeros(n_vars)
        self._rows: list[np.ndarray] = []
        self._offsets: list[np.ndarray] = []
        self.cones: list[Cone] = []
        self._G: np.ndarray | None = None
        self._h: np.ndarray | None = None

    # -- objective -------------------------------------------------------

    def maximize(self, c: np.ndarray):
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise ValueError("objective length mismatch")
        self.c = c.copy()

    def add_objective(self, idx: int, coeff: float):
        self.c[idx] += coeff

    # -- constraint blocks ----------------------------------------------

    def _append(self, cone: Cone, A: np.ndarray, b: np.ndarray):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape != (cone_dim(cone), self.n) or b.shape != (cone_dim(cone),):
            raise ValueError("constraint block has inconsistent shape")
        self._rows.append(A)
        self._offsets.append(b)
        self.cones.append(cone)
        self._G = None

    def add_nonneg(self, A, b):
        """Rows of A x <= b (slack b - A x >= 0)."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self._append(NonnegCone(A.shape[0]), A, b)

    def add_soc(self, A, b):
        """b - A x constrained to the Lorentz cone (first row is the bound)."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self._append(SocCone(A.shape[0]), A, b)

    def add_psd_svec(self, A, b, order: int):
        self._append(PsdCone(order), A, b)

    def add_psd(self, const: np.ndarray, coeffs: dict[int, np.ndarray]):
        """Affine matrix constraint const + sum_i x_i coeffs[i] >= 0 (PSD).

        Accepts complex Hermitian or real symmetric matrices; complex
        input is realified entrywise before vectorization.
        """
        const = np.asarray(const)
        entries = {int(i): np.asarray(C) for i, C in coeffs.items()}
        is_complex = np.iscomplexobj(const) or any(
            np.iscomplexobj(C) for C in entries.values())
        if is_complex:
            const_r = realify_hermitian(const)
            entries_r = {i: realify_hermitian(C) for i, C in entries.items()}
        else:
            const_r = _check_symmetric(const)
            entries_r = {i: _check_symmetric(C) for i, C in entries.items()}
        order = const_r.shape[0]
        d = order * (order + 1) // 2
        A = np.zeros((d, self.n))
        for i, C in entries_r.items():
            if C.shape != const_r.shape:
                raise ValueError("coefficient and constant orders differ")
            A[:, i] = -svec(C)
        self.add_psd_svec(A, svec(const_r), order)

    # -- assembly --------------------------------------------------------

    def finalize(self):
        if self._G is None:
            if not self._rows:
                raise ValueError("problem has no constraints")
            self._G = np.vstack(self._rows)
            self._h = np.concatenate(self._offsets)
        return self._G, self._h, list(self.cones)

    @property
    def G(self) -> np.ndarray:
        return self.finalize()[0]

    @property
    def h(self) -> np.ndarray:
        return self.finalize()[1]

    def block_slices(self):
        out = []
        start = 0
        for cone in self.cones:
            d = cone_dim(cone)
            out.append((cone, slice(start, start + d)))
            start += d
        return out
