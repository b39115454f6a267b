"""Worst-case secrecy designs under norm-bounded channel estimate errors.

Each cascaded surface-to-node row is known only up to an error vector
confined to a euclidean ball; every guarantee produced here holds for
all error vectors in all balls simultaneously.  The toolkit: an affine
lower bound on received-power quadratics, ball implications through the
S-procedure, operator-norm implications through Nemirovski's lemma, a
direct interval certificate used both to seed the convexified programs
and to safeguard acceptance, and a penalized convex-concave loop that
walks the reflection profile back onto the unit-modulus manifold.

Internally all receive quantities are noise-normalized: node rows are
divided by the root noise power so every SINR is a plain power ratio
with unit noise, which keeps the matrix blocks free of per-node scale
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import (MONOTONE_TOL, REL_FLOOR, IterationRow, RunTrace,
                         _monotone_check, evaluate, init_state, make_state,
                         penalty_weights, pre_step_perfect)
from .channel import ChannelSet, Scenario, phasor, sample_error_ball, wrap_phases
from .conic import ConicProblem, VarTable, get_solver
from .metrics import dispersion, rate
from .surrogate import V_FLOOR

HERM_TOL = 1.0e-12
MODULUS_GATE = 0.05       # max | |v_m| - 1 | tolerated before projection
PROJECTION_GATE = 0.02    # relative certified-metric change from projection


def _check_hermitian(A, what: str) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{what} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 0.0)
    if float(np.max(np.abs(A - A.conj().T))) > HERM_TOL * scale:
        raise ValueError(f"{what} is not Hermitian")
    return A


# -- domain types --------------------------------------------------------

@dataclass
class AffineHermitianBlock:
    """Hermitian-valued affine map over the real decision vector.

    Represents const + sum_i x[i] * coeffs[i]; feasibility means the
    value is positive semidefinite.  partition records the row group
    sizes of the block layout for auditing dumps.
    """

    order: int
    const: np.ndarray
    coeffs: dict[int, np.ndarray]
    partition: tuple[int, ...]
    tag: str = ""

    def __post_init__(self):
        label = self.tag or "block"
        self.const = _check_hermitian(self.const, f"{label} constant")
        if self.const.shape != (self.order, self.order):
            raise ValueError(f"{label} constant order mismatch")
        if sum(self.partition) != self.order:
            raise ValueError(f"{label} partition must sum to the order")
        for i in list(self.coeffs):
            C = _check_hermitian(self.coeffs[i], f"{label} coefficient {i}")
            if C.shape != (self.order, self.order):
                raise ValueError(f"{label} coefficient order mismatch")
            self.coeffs[i] = C

    def value_at(self, x: np.ndarray) -> np.ndarray:
        H = self.const.copy()
        for i, C in self.coeffs.items():
            H = H + float(x[i]) * C
        return H

    def min_eig_at(self, x: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.value_at(x))[0])

    def add_to(self, problem: ConicProblem):
        problem.add_psd(self.const, self.coeffs)


class SlackRegistry:
    """Named decision variables for the worst-case programs.

    Three kinds: vector decision blocks (beam or profile components),
    nonnegative slacks and multipliers, and free auxiliaries.  The
    nonnegative index set is tracked so all sign constraints can be
    emitted as one batch of rows.
    """

    def __init__(self):
        self.table = VarTable()
        self.nonneg: list[int] = []

    def block(self, name: str, size: int) -> slice:
        return self.table.add(name, size)

    def slack(self, name: str) -> int:
        idx = self.table.add_scalar(name)
        self.nonneg.append(idx)
        return idx

    def aux(self, name: str, nonneg: bool = False) -> int:
        idx = self.table.add_scalar(name)
        if nonneg:
            self.nonneg.append(idx)
        return idx

    @property
    def n(self) -> int:
        return self.table.n


@dataclass
class BeamMap:
    """One receive-space beam column as an affine map of the decisions.

    The column at decision vector x is sum over dirs of x[i] * d_i; bar
    is its value at the expansion point, which some admissible x must
    reproduce (the builders lean on that for tightness).
    """

    bar: np.ndarray
    dirs: list[tuple[int, np.ndarray]]

    def column_at(self, x: np.ndarray) -> np.ndarray:
        c = np.zeros_like(self.bar)
        for i, d in self.dirs:
            c = c + float(x[i]) * d
        return c


# -- elementary certified embeddings ------------------------------------

def magnitude_sq_affine_lb(c, c_bar) -> np.ndarray:
    """Hermitian A with l^H A l <= |l^H c|^2 for every vector l.

    A = c c_bar^H + c_bar c^H - c_bar c_bar^H; the gap is
    |l^H (c - c_bar)|^2 >= 0, so the bound is exact when c equals the
    expansion column.  A is linear in c, which is what keeps received
    powers certifiable once the beams or the profile become decision
    variables.
    """
    c = np.asarray(c, dtype=complex).reshape(-1)
    c_bar = np.asarray(c_bar, dtype=complex).reshape(-1)
    if c.shape != c_bar.shape:
        raise ValueError("column and expansion column differ in length")
    cross = np.outer(c, c_bar.conj())
    return cross + cross.conj().T - np.outer(c_bar, c_bar.conj())


def _pack_quadratic(U, u, t) -> np.ndarray:
    m = U.shape[0]
    out = np.zeros((m + 1, m + 1), dtype=complex)
    out[:m, :m] = U
    out[:m, m] = u
    out[m, :m] = u.conj()
    out[m, m] = t
    return out


def s_procedure_embed(U0, u0, t0, U1, u1, t1, mult: float) -> np.ndarray:
    """Combined block certifying f0 >= 0 wherever f1 >= 0.

    f(v) = v^H U v + 2 Re{u^H v} + t packs as [[U, u], [u^H, t]]; the
    return value is pack(f0) - mult * pack(f1) with mult >= 0.  If the
    result is PSD and f1 is strictly positive somewhere, f0 is
    nonnegative on the whole region f1 >= 0.
    """
    if mult < 0.0:
        raise ValueError("multiplier must be nonnegative")
    U0 = _check_hermitian(U0, "first quadratic")
    U1 = _check_hermitian(U1, "second quadratic")
    u0 = np.asarray(u0, dtype=complex).reshape(-1)
    u1 = np.asarray(u1, dtype=complex).reshape(-1)
    if U0.shape != U1.shape or u0.shape != u1.shape or len(u0) != U0.shape[0]:
        raise ValueError("quadratic pieces disagree in dimension")
    return (_pack_quadratic(U0, u0, float(t0))
            - mult * _pack_quadratic(U1, u1, float(t1)))


def schur_embed(Z, Y) -> np.ndarray:
    """Block [[Z, Y^H], [Y, I]]; PSD exactly when Z - Y^H Y is PSD."""
    Z = _check_hermitian(np.atleast_2d(np.asarray(Z, dtype=complex)),
                         "corner block")
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    if Y.shape[1] != Z.shape[0]:
        raise ValueError("row map width must match the corner order")
    d, r = Z.shape[0], Y.shape[0]
    out = np.zeros((d + r, d + r), dtype=complex)
    out[:d, :d] = Z
    out[:d, d:] = Y.conj().T
    out[d:, :d] = Y
    out[d:, d:] = np.eye(r)
    return out


def nemirovski_embed(A, B, C, t: float, a: float) -> np.ndarray:
    """Operator-norm robust block [[A - a C^H C, t B^H], [t B, a I]].

    PSD of the result with a >= 0 certifies
    A >= B^H X C + C^H X^H B for every X with spectral norm at most t.
    """
    if t < 0.0:
        raise ValueError("norm bound must be nonnegative")
    if a < 0.0:
        raise ValueError("multiplier must be nonnegative")
    A = _check_hermitian(A, "center block")
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    d = A.shape[0]
    if B.shape[1] != d or C.shape[1] != d:
        raise ValueError("factor widths must match the center order")
    p = B.shape[0]
    out = np.zeros((d + p, d + p), dtype=complex)
    out[:d, :d] = A - a * (C.conj().T @ C)
    out[:d, d:] = t * B.conj().T
    out[d:, :d] = t * B
    out[d:, d:] = a * np.eye(p)
    return out


def sca_bilinear_ub(i_u: int, i_v: int, u_bar: float, v_bar: float):
    """First-order expansion of the product u*v around (u_bar, v_bar).

    Returns (const, coeffs) encoding v_bar*u + u_bar*v - u_bar*v_bar,
    exact at the expansion point.  The product surface is saddle shaped,
    so the plane is not a one-sided bound globally; the alternation
    re-expands every round, and the sampling checks assert the resulting
    affine claims directly at each accepted solution.
    """
    return (-float(u_bar) * float(v_bar),
            {int(i_u): float(v_bar), int(i_v): float(u_bar)})


def _exp_product_lin(i_a: int, i_b: int, a_bar: float, b_bar: float):
    """Expansion of a * exp(b): exp(b_bar) * (a + a_bar * (b - b_bar)).

    Exact along a at fixed b = b_bar; along b at fixed a = a_bar it is
    the tangent of a convex function and therefore an underestimate.
    The joint direction is not one-sided, which the sampling soundness
    tests account for by checking the affine corners of the accepted
    solutions rather than the replaced products.
    """
    eb = math.exp(b_bar)
    return (-a_bar * b_bar * eb, {int(i_a): eb, int(i_b): a_bar * eb})


# -- direct interval certification --------------------------------------

@dataclass
class RobustCertificate:
    """Worst-case performance box for one fixed design.

    Powers live in the noise-normalized receive space (unit noise).
    per_user holds the certified secrecy floors in nats, unclipped; the
    remaining fields are the interval endpoints that produced them and
    double as expansion seeds for the convexified programs.
    """

    per_user: np.ndarray
    gamma_user_lo: np.ndarray
    gamma_user_hi: np.ndarray
    gamma_eve_hi: np.ndarray
    signal_user_hi: np.ndarray
    signal_eve_hi: np.ndarray
    interf_user_hi: np.ndarray
    interf_eve_lo: np.ndarray
    rxpow_user_lo: np.ndarray
    rxpow_eve_lo: float

    @property
    def value_min(self) -> float:
        return float(np.min(self.per_user))

    @property
    def value_sum(self) -> float:
        return float(np.sum(self.per_user))


def cascade_columns(channels: ChannelSet, W: np.ndarray,
                    profile: np.ndarray) -> np.ndarray:
    """Receive-space columns diag(profile) L w_j, one column per beam."""
    return np.asarray(profile).reshape(-1)[:, None] * (channels.L_ar @ W)


def certify_design(channels: ChannelSet, W: np.ndarray, profile: np.ndarray,
                   xi_user: float, xi_eve: float) -> RobustCertificate:
    """Hard worst-case bounds for a fixed design by direct norm algebra.

    Node i sees powers |(x_i + v)^H c_j|^2 with ||v|| <= radius_i after
    noise normalization; triangle and operator-norm inequalities give
    two-sided bounds on every signal, interference, and total-power
    term, which fold into certified SINR and secrecy intervals.  Zero
    radii collapse the box onto the nominal point.  The profile may be
    any complex vector, not necessarily unit modulus.
    """
    W = np.asarray(W, dtype=complex)
    K = W.shape[1]
    C = cascade_columns(channels, W, profile)
    root = np.sqrt(channels.sigma)
    inner = (channels.l_hat @ C) / root[:, None]          # (K+1, K) nominal
    radius = channels.omega / root
    col_norm = np.linalg.norm(C, axis=0)
    smax_all = float(np.linalg.svd(C, compute_uv=False)[0]) if C.size else 0.0

    sig_hi = np.zeros(K)
    sig_eve_hi = np.zeros(K)
    sig_lo = np.zeros(K)
    int_hi = np.zeros(K)
    int_lo_eve = np.zeros(K)
    int_lo_own = np.zeros(K)
    gamma_hi = np.zeros(K)
    gamma_eve_hi = np.zeros(K)

    def band(i: int, j: int) -> tuple[float, float]:
        lo = max(abs(inner[i, j]) - radius[i] * col_norm[j], 0.0)
        hi = abs(inner[i, j]) + radius[i] * col_norm[j]
        return lo * lo, hi * hi

    def interference_band(i: int, k: int) -> tuple[float, float]:
        mask = [j for j in range(K) if j != k]
        if not mask:
            return 0.0, 0.0
        rest = C[:, mask]
        smax = float(np.linalg.svd(rest, compute_uv=False)[0])
        nominal = float(np.linalg.norm(inner[i, mask]))
        lo = max(nominal - radius[i] * smax, 0.0)
        hi = nominal + radius[i] * smax
        return lo * lo, hi * hi

    total_lo = np.zeros(K + 1)
    for i in range(K + 1):
        nominal = float(np.linalg.norm(inner[i]))
        total_lo[i] = max(nominal - radius[i] * smax_all, 0.0) ** 2 + 1.0

    for k in range(K):
        s_lo, s_hi = band(k, k)
        e_lo, e_hi = band(K, k)
        i_lo, i_hi = interference_band(k, k)
        ie_lo, ie_hi = interference_band(K, k)
        sig_lo[k], sig_hi[k] = s_lo, s_hi
        sig_eve_hi[k] = e_hi
        int_hi[k] = i_hi
        int_lo_own[k] = i_lo
        int_lo_eve[k] = ie_lo
        gamma_hi[k] = s_hi / (i_lo + 1.0)
        gamma_eve_hi[k] = e_hi / (ie_lo + 1.0)

    gamma_lo = sig_lo / (int_hi + 1.0)
    per_user = (rate(gamma_lo) - rate(gamma_eve_hi)
                - xi_user * np.sqrt(dispersion(gamma_hi))
                - xi_eve * np.sqrt(dispersion(gamma_eve_hi)))
    return RobustCertificate(
        per_user=np.asarray(per_user, dtype=float),
        gamma_user_lo=gamma_lo,
        gamma_user_hi=gamma_hi,
        gamma_eve_hi=gamma_eve_hi,
        signal_user_hi=sig_hi,
        signal_eve_hi=sig_eve_hi,
        interf_user_hi=int_hi,
        interf_eve_lo=int_lo_eve,
        rxpow_user_lo=total_lo[:K],
        rxpow_eve_lo=float(total_lo[K]))


def sample_worst_secrecy(channels: ChannelSet, W: np.ndarray,
                         theta: np.ndarray, xi_user: float, xi_eve: float,
                         rng: np.random.Generator,
                         n_samples: int = 1000) -> np.ndarray:
    """Exact per-user secrecy under sampled in-ball estimate errors.

    Every node row is perturbed independently inside its ball for each
    draw and the exact finite-blocklength secrecy expression is
    recomputed.  Returns an (n_samples, K) array, unclipped; any sound
    certificate must sit at or below its minimum.
    """
    K = W.shape[1]
    phi_l = phasor(theta)[:, None] * channels.L_ar        # (M, N)
    powers = []
    for i in range(K + 1):
        err = sample_error_ball(float(channels.omega[i]), channels.n_irs,
                                rng, n=n_samples)
        rows = channels.l_hat[i][None, :] + err           # (n, M)
        powers.append(np.abs((rows @ phi_l) @ W) ** 2)    # (n, K)
    out = np.zeros((n_samples, K))
    for k in range(K):
        pu = powers[k]
        pe = powers[K]
        gamma_u = pu[:, k] / (pu.sum(axis=1) - pu[:, k] + channels.sigma[k])
        gamma_e = pe[:, k] / (pe.sum(axis=1) - pe[:, k] + channels.sigma[K])
        out[:, k] = (rate(gamma_u) - rate(gamma_e)
                     - xi_user * np.sqrt(dispersion(gamma_u))
                     - xi_eve * np.sqrt(dispersion(gamma_e)))
    return out


# -- block assembly ------------------------------------------------------

class _BlockAssembler:
    """Accumulates one Hermitian affine block entry group by entry group."""

    def __init__(self, order: int, partition: tuple[int, ...], tag: str):
        self.order = order
        self.partition = tuple(partition)
        self.tag = tag
        self.const = np.zeros((order, order), dtype=complex)
        self.coeffs: dict[int, np.ndarray] = {}

    def _buf(self, var: int | None) -> np.ndarray:
        if var is None:
            return self.const
        if var not in self.coeffs:
            self.coeffs[var] = np.zeros((self.order, self.order),
                                        dtype=complex)
        return self.coeffs[var]

    def herm(self, r0: int, M, var: int | None = None):
        """Add a Hermitian submatrix on the diagonal at offset r0."""
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        m = M.shape[0]
        self._buf(var)[r0:r0 + m, r0:r0 + m] += M

    def scalar(self, pos: int, val: float, var: int | None = None):
        self._buf(var)[pos, pos] += val

    def off(self, r0: int, c0: int, M, var: int | None = None):
        """Add an off-diagonal submatrix together with its conjugate mirror."""
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        m, w = M.shape
        buf = self._buf(var)
        buf[r0:r0 + m, c0:c0 + w] += M
        buf[c0:c0 + w, r0:r0 + m] += M.conj().T

    def done(self) -> AffineHermitianBlock:
        return AffineHermitianBlock(self.order, self.const, self.coeffs,
                                    self.partition, self.tag)


def _power_lb_terms(maps: list[BeamMap], m: int):
    """Summed affine lower-bound matrices for a set of beam columns.

    Returns (A0, dA) with A(x) = A0 + sum_i x[i] dA[i] satisfying
    l^H A(x) l <= sum_j |l^H c_j(x)|^2 for every l, exact at the
    expansion point (each beam contributes its magnitude-square bound).
    """
    A0 = np.zeros((m, m), dtype=complex)
    dA: dict[int, np.ndarray] = {}
    for bm in maps:
        A0 -= np.outer(bm.bar, bm.bar.conj())
        for i, d in bm.dirs:
            if i not in dA:
                dA[i] = np.zeros((m, m), dtype=complex)
            dA[i] += np.outer(d, bm.bar.conj()) + np.outer(bm.bar, d.conj())
    return A0, dA


def _ball_quad_block(tag: str, A0, dA, x_node, t0: float, t_coeffs,
                     slack: int, radius: float, m: int) -> AffineHermitianBlock:
    """S-procedure block: (x+v)^H A (x+v) + t >= 0 for all ||v|| <= radius.

    A is affine (A0, dA), t is an affine scalar (t0, t_coeffs), and the
    layout is [[A + s I, A x], [x^H A, x^H A x + t - s radius^2]] with
    the ball multiplier s attached to the given slack variable.
    """
    asm = _BlockAssembler(m + 1, (m, 1), tag)
    asm.herm(0, A0)
    asm.off(0, m, (A0 @ x_node)[:, None])
    asm.scalar(m, float(np.real(x_node.conj() @ A0 @ x_node)) + float(t0))
    for i, dAi in dA.items():
        asm.herm(0, dAi, var=i)
        asm.off(0, m, (dAi @ x_node)[:, None], var=i)
        asm.scalar(m, float(np.real(x_node.conj() @ dAi @ x_node)), var=i)
    for i, coef in t_coeffs.items():
        asm.scalar(m, float(coef), var=i)
    asm.herm(0, np.eye(m), var=slack)
    asm.scalar(m, -radius * radius, var=slack)
    return asm.done()


def _interference_cap_block(tag: str, maps: list[BeamMap], x_node,
                            bound0: float, bound_coeffs, slack: int | None,
                            radius: float, m: int) -> AffineHermitianBlock:
    """Cap sum_j |(x+v)^H c_j|^2 by an affine bound on the whole ball.

    Schur layout [[bound, y^H], [y, I]] with y_j = c_j^H (x + v); the
    error enters only the corner row, so Nemirovski's lemma absorbs it
    with one multiplier on a trailing identity.  Layout (1, J, m); at
    zero radius the multiplier and its rows are dropped entirely (a
    free multiplier with nothing to price is a recession direction the
    interior-point method cannot tolerate).
    """
    J = len(maps)
    ball = radius > 0.0
    parts = (1, J, m) if ball else (1, J)
    asm = _BlockAssembler(sum(parts), parts, tag)
    asm.scalar(0, float(bound0))
    for i, coef in bound_coeffs.items():
        asm.scalar(0, float(coef), var=i)
    if J:
        asm.herm(1, np.eye(J))
    for p, bm in enumerate(maps):
        for i, d in bm.dirs:
            asm.off(0, 1 + p, np.array([[np.vdot(x_node, d)]]), var=i)
    if ball:
        asm.scalar(0, -1.0, var=slack)
        asm.herm(1 + J, np.eye(m), var=slack)
        for p, bm in enumerate(maps):
            for i, d in bm.dirs:
                asm.off(1 + p, 1 + J, radius * d.conj()[None, :], var=i)
    return asm.done()


def _dispersion_cap_block(tag: str, bm: BeamMap, x_node, i_zeta: int,
                          i_t: int, zeta_bar: float, t_bar: float,
                          slack: int, radius: float,
                          m: int) -> AffineHermitianBlock:
    """Certify |(x+v)^H c|^2 <= zeta * t for all ||v|| <= radius.

    Writes zeta*t = ((zeta+t)/2)^2 - ((zeta-t)/2)^2, replaces the
    convex square by its tangent plane (a global underestimate, so the
    constraint only tightens), and closes the rest as a Schur block
    with the ball absorbed through Nemirovski's lemma.  Layout
    (1, 1, 1, m): corner, signal row, difference row, ball rows; at
    zero radius the multiplier and the ball rows are dropped.
    """
    s_bar = 0.5 * (zeta_bar + t_bar)
    g0, g_coeffs = sca_bilinear_ub(i_zeta, i_t, s_bar, s_bar)
    ball = radius > 0.0
    parts = (1, 1, 1, m) if ball else (1, 1, 1)
    asm = _BlockAssembler(sum(parts), parts, tag)
    asm.scalar(0, g0)
    for i, coef in g_coeffs.items():
        asm.scalar(0, coef, var=i)
    for i, d in bm.dirs:
        asm.off(0, 1, np.array([[np.vdot(x_node, d)]]), var=i)
    asm.off(0, 2, np.array([[0.5]]), var=i_zeta)
    asm.off(0, 2, np.array([[-0.5]]), var=i_t)
    asm.scalar(1, 1.0)
    asm.scalar(2, 1.0)
    if ball:
        asm.scalar(0, -1.0, var=slack)
        for i, d in bm.dirs:
            asm.off(1, 3, radius * d.conj()[None, :], var=i)
        asm.herm(3, np.eye(m), var=slack)
    return asm.done()


# -- full program assembly ----------------------------------------------

@dataclass
class RobustModel:
    """One assembled worst-case subproblem around an expansion point."""

    problem: ConicProblem
    registry: SlackRegistry
    blocks: list[AffineHermitianBlock]
    maps: list[BeamMap]
    target: str
    objective: str
    fbr: bool
    seeds: dict
    n_tx: int
    n_irs: int
    n_users: int

    def extract_beams(self, x: np.ndarray) -> np.ndarray:
        sl = self.registry.table.slice("w")
        n, K = self.n_tx, self.n_users
        W = np.zeros((n, K), dtype=complex)
        for j in range(K):
            off = sl.start + 2 * n * j
            W[:, j] = x[off:off + n] + 1j * x[off + n:off + 2 * n]
        return W

    def extract_profile(self, x: np.ndarray) -> np.ndarray:
        sl = self.registry.table.slice("v")
        m = self.n_irs
        return x[sl.start:sl.start + m] + 1j * x[sl.start + m:sl.stop]

    def penalty_value(self, x: np.ndarray) -> float:
        if self.target != "phases":
            return 0.0
        hi = self.registry.table.slice("pen_hi")
        lo = self.registry.table.slice("pen_lo")
        return float(np.sum(x[hi]) + np.sum(x[lo]))

    def debug_dump(self, x: np.ndarray | None = None) -> str:
        lines = [(f"robust {self.target} step, objective {self.objective}, "
                  f"{self.registry.n} variables, {len(self.blocks)} "
                  f"matrix blocks")]
        for blk in self.blocks:
            part = "+".join(str(p) for p in blk.partition)
            line = (f"  {blk.tag:<18s} order {blk.order:3d} ({part}) "
                    f"affine vars {len(blk.coeffs)}")
            if x is not None:
                line += f"  min-eig {blk.min_eig_at(x):+.3e}"
            lines.append(line)
        return "\n".join(lines)


def build_robust_constraints(channels: ChannelSet, W_bar: np.ndarray,
                             profile_bar: np.ndarray, xi_user: float,
                             xi_eve: float, target: str = "beams",
                             objective: str = "maxmin",
                             power: float | None = None,
                             penalty_weight: float | None = None
                             ) -> RobustModel:
    """Assemble the certified secrecy program around one expansion point.

    target "beams" optimizes the transmit beams at a fixed reflection
    profile under the power budget; target "phases" optimizes the
    profile at fixed beams with the penalized unit-modulus relaxation
    (penalty_weight required).  objective "maxmin" raises the worst
    certified secrecy floor, "ssr" the sum of per-user floors.  Every
    uncertain inequality becomes one Hermitian block whose PSD
    feasibility implies the inequality on the whole error ball; the
    expansion constants come from the direct interval certificate of
    the expansion design, which keeps the program feasible there.
    """
    if target not in ("beams", "phases"):
        raise ValueError(f"unknown target {target!r}")
    if objective not in ("maxmin", "ssr"):
        raise ValueError(f"unknown objective {objective!r}")
    if target == "beams" and power is None:
        raise ValueError("the beam step needs the power budget")
    if target == "phases" and penalty_weight is None:
        raise ValueError("the phase step needs a penalty weight")

    W_bar = np.asarray(W_bar, dtype=complex)
    profile_bar = np.asarray(profile_bar, dtype=complex).reshape(-1)
    n, K = W_bar.shape
    m = channels.n_irs
    fbr = xi_user > 0.0 or xi_eve > 0.0

    cert = certify_design(channels, W_bar, profile_bar, xi_user, xi_eve)
    root = np.sqrt(channels.sigma)
    x_nodes = channels.l_hat.conj() / root[:, None]
    radius = channels.omega / root

    reg = SlackRegistry()
    maps: list[BeamMap] = []
    if target == "beams":
        sl_dec = reg.block("w", 2 * n * K)
        T = profile_bar[:, None] * channels.L_ar
        for j in range(K):
            off = sl_dec.start + 2 * n * j
            dirs = [(off + p, T[:, p]) for p in range(n)]
            dirs += [(off + n + p, 1j * T[:, p]) for p in range(n)]
            maps.append(BeamMap(T @ W_bar[:, j], dirs))
    else:
        sl_dec = reg.block("v", 2 * m)
        for j in range(K):
            gain = channels.L_ar @ W_bar[:, j]
            dirs = []
            for p in range(m):
                e = np.zeros(m, dtype=complex)
                e[p] = gain[p]
                dirs.append((sl_dec.start + p, e))
            for p in range(m):
                e = np.zeros(m, dtype=complex)
                e[p] = 1j * gain[p]
                dirs.append((sl_dec.start + m + p, e))
            maps.append(BeamMap(gain * profile_bar, dirs))

    # expansion constants, all from the direct certificate of the
    # incumbent design so the incumbent itself stays feasible
    alpha_u = cert.interf_user_hi + 1.0
    beta_u = np.log1p(cert.gamma_user_lo)
    alpha_e = cert.interf_eve_lo + 1.0
    upsilon_e = np.log1p(cert.gamma_eve_hi)
    vbar_u = np.maximum(dispersion(cert.gamma_user_hi), V_FLOOR)
    vbar_e = np.maximum(dispersion(cert.gamma_eve_hi), V_FLOOR)
    disp_const_u = xi_user * np.sqrt(vbar_u) / 2.0
    disp_slope_u = xi_user / np.sqrt(vbar_u)
    disp_const_e = xi_eve * np.sqrt(vbar_e) / 2.0
    disp_slope_e = xi_eve / np.sqrt(vbar_e)
    zeta_u_bar = cert.rxpow_user_lo
    t_u_bar = cert.signal_user_hi / zeta_u_bar
    zeta_e_bar = cert.rxpow_eve_lo
    t_e_bar = cert.signal_eve_hi / zeta_e_bar

    i_alpha = [reg.aux(f"denom_hi{k}") for k in range(K)]
    i_beta = [reg.aux(f"rate_lo{k}", nonneg=True) for k in range(K)]
    i_alpha_e = [reg.aux(f"denom_lo_e{k}", nonneg=True) for k in range(K)]
    i_upsilon = [reg.aux(f"rate_hi_e{k}", nonneg=True) for k in range(K)]
    if fbr:
        i_t_u = [reg.aux(f"vratio_u{k}", nonneg=True) for k in range(K)]
        i_t_e = [reg.aux(f"vratio_e{k}", nonneg=True) for k in range(K)]
        i_zeta_u = [reg.aux(f"rxpow_lo{k}", nonneg=True) for k in range(K)]
        i_zeta_e = reg.aux("rxpow_lo_e", nonneg=True)
    if objective == "maxmin":
        i_z = [reg.aux("secrecy_lo")] * K
    else:
        i_z = [reg.aux(f"secrecy_lo{k}") for k in range(K)]
    if target == "phases":
        sl_hi = reg.block("pen_hi", m)
        sl_lo = reg.block("pen_lo", m)
        reg.nonneg.extend(range(sl_hi.start, sl_hi.stop))
        reg.nonneg.extend(range(sl_lo.start, sl_lo.stop))

    blocks: list[AffineHermitianBlock] = []
    # congruence scaling per node: a unit node vector with the norm
    # folded into the quadratic terms keeps every block entry on the
    # receive-power scale instead of mixing raw channel-gain magnitudes
    node_scale = np.linalg.norm(x_nodes, axis=1)
    node_scale[node_scale == 0.0] = 1.0
    x_hat = x_nodes / node_scale[:, None]
    r_hat = radius / node_scale

    extra_rows: list[tuple[dict, float]] = []

    def ball_block(tag, maps_list, node, t0, t_coeffs, slackname):
        A0, dA = _power_lb_terms(maps_list, m)
        s2 = float(node_scale[node]) ** 2
        xh = x_hat[node]
        if r_hat[node] == 0.0:
            # no error ball: the quadratic claim at the node itself is
            # one affine inequality, no matrix block and no multiplier
            co = dict(t_coeffs)
            for i, Ai in dA.items():
                co[i] = co.get(i, 0.0) \
                    + s2 * float(np.real(xh.conj() @ Ai @ xh))
            extra_rows.append(
                (co, s2 * float(np.real(xh.conj() @ A0 @ xh)) + float(t0)))
            return None
        return _ball_quad_block(tag, s2 * A0,
                                {i: s2 * Ai for i, Ai in dA.items()},
                                xh, t0, t_coeffs, reg.slack(slackname),
                                float(r_hat[node]), m)

    def cap_slack(name, node):
        return None if r_hat[node] == 0.0 else reg.slack(name)

    def keep(block):
        if block is not None:
            blocks.append(block)

    x_eve = x_nodes[K]
    r_eve = float(radius[K])
    for k in range(K):
        xk = x_nodes[k]
        rk = float(radius[k])
        others = [maps[j] for j in range(K) if j != k]

        # certified signal floor: worst-case own power at least the
        # linearized alpha * exp(beta) - alpha
        lc, lco = _exp_product_lin(i_alpha[k], i_beta[k],
                                   float(alpha_u[k]), float(beta_u[k]))
        t_coeffs = {i_alpha[k]: 1.0 - lco[i_alpha[k]],
                    i_beta[k]: -lco[i_beta[k]]}
        keep(ball_block(
            "user-signal", [maps[k]], k, -lc, t_coeffs, f"mult_sig{k}"))

        # certified interference cap: alpha - 1 dominates the worst sum
        blocks.append(_interference_cap_block(
            "user-interference", others, xk, -1.0, {i_alpha[k]: 1.0},
            cap_slack(f"mult_int{k}", k), rk, m))

        # eavesdropper signal cap against the linearized product bound
        lc3, lco3 = _exp_product_lin(i_alpha_e[k], i_upsilon[k],
                                     float(alpha_e[k]), float(upsilon_e[k]))
        blocks.append(_interference_cap_block(
            "eve-signal", [maps[k]], x_eve, lc3,
            {i_alpha_e[k]: lco3[i_alpha_e[k]] - 1.0,
             i_upsilon[k]: lco3[i_upsilon[k]]},
            cap_slack(f"mult_sig_e{k}", K), r_eve, m))

        # eavesdropper interference floor keeps alpha_e honest from below
        keep(ball_block(
            "eve-interference", others, K, 1.0, {i_alpha_e[k]: -1.0},
            f"mult_int_e{k}"))

        if fbr:
            keep(ball_block(
                "user-power", maps, k, 1.0, {i_zeta_u[k]: -1.0},
                f"mult_pow{k}"))
            blocks.append(_dispersion_cap_block(
                "user-dispersion", maps[k], xk, i_zeta_u[k], i_t_u[k],
                float(zeta_u_bar[k]), float(t_u_bar[k]),
                cap_slack(f"mult_disp{k}", k), rk, m))
            blocks.append(_dispersion_cap_block(
                "eve-dispersion", maps[k], x_eve, i_zeta_e, i_t_e[k],
                float(zeta_e_bar), float(t_e_bar[k]),
                cap_slack(f"mult_disp_e{k}", K), r_eve, m))
    if fbr:
        keep(ball_block(
            "eve-power", maps, K, 1.0, {i_zeta_e: -1.0},
            "mult_pow_e"))

    problem = ConicProblem(reg.n, reg.table)

    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add_row(coeffs: dict[int, float], bound: float):
        r = np.zeros(reg.n)
        for i, coef in coeffs.items():
            r[i] += coef
        rows.append(r)
        rhs.append(bound)

    for idx in reg.nonneg:
        add_row({idx: -1.0}, 0.0)
    for co, const in extra_rows:
        add_row({i: -c for i, c in co.items()}, const)
    for k in range(K):
        co = {i_z[k]: 1.0, i_beta[k]: -1.0, i_upsilon[k]: 1.0}
        bound = 0.0
        if fbr:
            co[i_t_u[k]] = float(disp_slope_u[k])
            co[i_t_e[k]] = float(disp_slope_e[k])
            bound = -float(disp_const_u[k] + disp_const_e[k])
        add_row(co, bound)
    if target == "phases":
        # supporting half-space of |v_m|^2 >= 1 at the expansion profile
        for p in range(m):
            vb = profile_bar[p]
            add_row({sl_dec.start + p: -2.0 * float(vb.real),
                     sl_dec.start + m + p: -2.0 * float(vb.imag),
                     sl_lo.start + p: -1.0},
                    -1.0 - float(abs(vb)) ** 2)
    problem.add_nonneg(np.vstack(rows), np.asarray(rhs))

    if target == "beams":
        dim = 2 * n * K
        A = np.zeros((1 + dim, reg.n))
        for j in range(dim):
            A[1 + j, sl_dec.start + j] = -1.0
        b = np.zeros(1 + dim)
        b[0] = math.sqrt(power)
        problem.add_soc(A, b)
    else:
        # |v_m|^2 <= 1 + pen_m, one rotated-style cone per element
        for p in range(m):
            A = np.zeros((4, reg.n))
            b = np.zeros(4)
            A[0, sl_hi.start + p] = -1.0
            b[0] = 2.0
            A[1, sl_dec.start + p] = -2.0
            A[2, sl_dec.start + m + p] = -2.0
            A[3, sl_hi.start + p] = -1.0
            problem.add_soc(A, b)

    for blk in blocks:
        blk.add_to(problem)

    problem.add_objective(i_z[0], 1.0)
    if objective == "ssr":
        for k in range(1, K):
            problem.add_objective(i_z[k], 1.0)
    if target == "phases":
        for p in range(m):
            problem.add_objective(sl_hi.start + p, -float(penalty_weight))
            problem.add_objective(sl_lo.start + p, -float(penalty_weight))

    seeds = {"denom_hi": alpha_u, "rate_lo": beta_u,
             "denom_lo_e": alpha_e, "rate_hi_e": upsilon_e,
             "rxpow_lo": zeta_u_bar, "vratio_u": t_u_bar,
             "rxpow_lo_e": zeta_e_bar, "vratio_e": t_e_bar,
             "disp_const_u": disp_const_u, "disp_slope_u": disp_slope_u,
             "disp_const_e": disp_const_e, "disp_slope_e": disp_slope_e,
             "certificate": cert}
    return RobustModel(problem=problem, registry=reg, blocks=blocks,
                       maps=maps, target=target, objective=objective,
                       fbr=fbr, seeds=seeds, n_tx=n, n_irs=m, n_users=K)


# -- alternation drivers -------------------------------------------------

def robust_beam_step(scenario: Scenario, channels: ChannelSet, state,
                     xi_user: float, xi_eve: float,
                     objective: str = "maxmin", solver: str = "builtin"):
    """One certified beam update at the current reflection profile.

    Returns (W_new or None, solution, model).  The candidate is handed
    back even when the solver stopped short of full accuracy: the
    caller accepts or rejects on the direct certificate, which does
    not depend on the solver's own claims.  None only when no usable
    iterate exists.  A small power overshoot from an unconverged
    iterate is projected back onto the budget.
    """
    model = build_robust_constraints(
        channels, state.W, phasor(state.theta), xi_user, xi_eve,
        target="beams", objective=objective, power=scenario.power)
    sol = get_solver(solver)(model.problem)
    if sol.x is None or not np.all(np.isfinite(sol.x)):
        return None, sol, model
    W = model.extract_beams(sol.x)
    norm = math.sqrt(float(np.sum(np.abs(W) ** 2)))
    budget = math.sqrt(scenario.power)
    if norm > budget:
        W *= budget / norm
    return W, sol, model


@dataclass
class PhaseStepResult:
    """Outcome of one penalized convex-concave profile update."""

    theta: np.ndarray
    profile_raw: np.ndarray
    penalty: float
    modulus_dev: float
    iterations: int
    converged: bool
    weight_final: float
    cert_raw: float
    cert_projected: float
    solver_status: str = ""
    solver_iterations: int = 0


def run_pccp_pre(scenario: Scenario, channels: ChannelSet, W: np.ndarray,
                 theta_start: np.ndarray, xi_user: float, xi_eve: float,
                 objective: str = "maxmin",
                 solver: str = "builtin") -> PhaseStepResult:
    """Penalized convex-concave profile update at fixed beams.

    The unit-modulus set is relaxed elementwise: |v_m|^2 <= 1 + slack
    from above (a cone), >= 1 - slack from below (a supporting
    half-space at the incumbent), with the slack total priced into the
    objective at a weight that grows geometrically to its cap.  The
    loop ends once the slack total is under its threshold and either
    the projected phasors stop moving or the certified metric stalls
    at the outer relative tolerance (the weight bounds the step length
    from above, so on flat valleys the move test alone can stay out of
    reach while nothing is left to gain); the result is projected onto
    exact unit modulus.
    """
    v_bar = phasor(np.asarray(theta_start, dtype=float))
    weight = scenario.a_init
    solve_fn = get_solver(solver)
    metric = (lambda c: c.value_min) if objective == "maxmin" \
        else (lambda c: c.value_sum)
    cert_prev = metric(certify_design(channels, W, v_bar, xi_user, xi_eve))
    penalty = math.inf
    converged = False
    status = ""
    solver_its = 0
    failures = 0
    iterations = 0
    for it in range(1, scenario.pccp_max_iter + 1):
        iterations = it
        model = build_robust_constraints(
            channels, W, v_bar, xi_user, xi_eve, target="phases",
            objective=objective, penalty_weight=weight)
        sol = solve_fn(model.problem)
        status = sol.status
        solver_its += sol.iterations
        usable = sol.x is not None and bool(np.all(np.isfinite(sol.x)))
        if usable:
            v_new = model.extract_profile(sol.x)
            cert_now = metric(certify_design(channels, W, v_new,
                                             xi_user, xi_eve))
            # a reduced-accuracy iterate is fine as long as it does not
            # walk the certified metric downhill
            if sol.status != "Optimal" and cert_now < cert_prev:
                usable = False
        if not usable:
            # keep the incumbent, raise the price, give up after a streak
            failures += 1
            weight = min(weight * scenario.a_growth, scenario.a_max)
            if failures >= 3:
                break
            continue
        failures = 0
        penalty = model.penalty_value(sol.x)
        move = float(np.sum(np.abs(phasor(np.angle(v_new))
                                   - phasor(np.angle(v_bar)))))
        gain = abs(cert_now - cert_prev) / max(abs(cert_prev), 1.0)
        v_bar = v_new
        cert_prev = cert_now
        if penalty <= scenario.eps_penalty \
                and (move <= scenario.eps_move or gain <= scenario.eps_outer):
            converged = True
            break
        weight = min(weight * scenario.a_growth, scenario.a_max)
    theta = wrap_phases(np.angle(v_bar))
    modulus_dev = float(np.max(np.abs(np.abs(v_bar) - 1.0)))
    cert_raw = metric(certify_design(channels, W, v_bar, xi_user, xi_eve))
    cert_proj = metric(certify_design(channels, W, phasor(theta),
                                      xi_user, xi_eve))
    return PhaseStepResult(theta=theta, profile_raw=v_bar,
                           penalty=float(penalty), modulus_dev=modulus_dev,
                           iterations=iterations, converged=converged,
                           weight_final=float(weight), cert_raw=cert_raw,
                           cert_projected=cert_proj, solver_status=status,
                           solver_iterations=solver_its)


def run_robust(scenario: Scenario, channels: ChannelSet, fbr: bool = True,
               rng: np.random.Generator | None = None,
               init_mode: str = "random", objective: str = "maxmin",
               solver: str = "builtin", warm_state=None):
    """Alternating certified beam and profile optimization.

    The driving metric is the certified worst-case secrecy floor (min
    or sum of the per-user floors); candidate steps are accepted only
    when that certificate does not degrade, which keeps the trace
    monotone regardless of any surrogate mismatch.  Returns
    (trace, state); the trace rows report the nominal secrecy of each
    iterate alongside the certified objective, and the final
    certificate is attached to the trace.
    """
    if objective not in ("maxmin", "ssr"):
        raise ValueError(f"unknown objective {objective!r}")
    xi_user, xi_eve = penalty_weights(scenario, fbr)
    if warm_state is not None:
        state = make_state(channels, np.array(warm_state.W, dtype=complex),
                           np.array(warm_state.theta, dtype=float))
    elif init_mode == "lbr-warm" and fbr:
        _, state = run_robust(scenario, channels, fbr=False, rng=rng,
                              init_mode="random", objective=objective,
                              solver=solver)
    elif init_mode == "lbr-warm":
        state = init_state(scenario, channels, "random", rng, fbr=False,
                           objective=objective)
    else:
        state = init_state(scenario, channels, init_mode, rng, fbr=fbr,
                           objective=objective)
    metric_of = (lambda c: c.value_min) if objective == "maxmin" \
        else (lambda c: c.value_sum)
    cert = certify_design(channels, state.W, phasor(state.theta),
                          xi_user, xi_eve)
    metric = metric_of(cert)
    trace = RunTrace(objective=objective, csi="robust", fbr=fbr)
    prev = metric

    for it in range(1, scenario.ao_max_iter + 1):
        W_prev = state.W.copy()
        theta_prev = state.theta.copy()
        w_rejected = True
        W_new, sol_w, _ = robust_beam_step(scenario, channels, state,
                                           xi_user, xi_eve, objective, solver)
        if W_new is not None:
            # the full step can overshoot the exact certificate (the
            # signal floors carry a Taylor term), so scan dampings
            # toward the incumbent and take the best certified one;
            # the power ball is convex, so every damped W stays inside
            best = None
            for damp in (1.0, 0.5, 0.25, 0.1):
                W_try = state.W + damp * (W_new - state.W)
                cand = certify_design(channels, W_try, phasor(state.theta),
                                      xi_user, xi_eve)
                if metric_of(cand) >= metric and \
                        (best is None or metric_of(cand) > best[1]):
                    best = (W_try, metric_of(cand), cand)
            if best is not None:
                state = make_state(channels, best[0], state.theta)
                cert, metric = best[2], best[1]
                w_rejected = False

        # profile update, cheapest candidate first: the nominal
        # per-element sweep is closed form and global in character, so
        # when it certifies a meaningful gain the penalized step is
        # skipped for this round; otherwise the convexified loop runs
        # and its (proximally short) direction is extrapolated with
        # doubling multiples under the exact certificate
        theta_rejected = True
        ph = None
        shift = 0.0
        theta_nom, _, _ = pre_step_perfect(state, channels, xi_user, xi_eve,
                                           objective)
        cand_nom = certify_design(channels, state.W, phasor(theta_nom),
                                  xi_user, xi_eve)
        nom_gain = metric_of(cand_nom) - metric
        if nom_gain > scenario.eps_outer * max(abs(metric), REL_FLOOR):
            state = make_state(channels, state.W, theta_nom)
            cert, metric = cand_nom, metric_of(cand_nom)
            theta_rejected = False
        else:
            ph = run_pccp_pre(scenario, channels, state.W, state.theta,
                              xi_user, xi_eve, objective, solver)
            shift = abs(ph.cert_projected - ph.cert_raw) \
                / max(abs(ph.cert_raw), 1.0e-3)
            if (ph.penalty <= scenario.eps_penalty
                    and ph.modulus_dev <= MODULUS_GATE
                    and shift <= PROJECTION_GATE):
                base = state.theta
                step = np.angle(np.exp(1j * (ph.theta - base)))
                best = None
                for mult in (1.0, 2.0, 4.0, 8.0, 16.0):
                    cand_theta = base + mult * step
                    cand = certify_design(channels, state.W,
                                          phasor(cand_theta),
                                          xi_user, xi_eve)
                    val = metric_of(cand)
                    if val >= metric and (best is None or val > best[1]):
                        best = (cand_theta, val, cand)
                    elif best is not None:
                        break
                if best is not None:
                    state = make_state(channels, state.W, best[0])
                    cert, metric = best[2], best[1]
                    theta_rejected = False
            # a sub-threshold nominal gain still beats standing still
            # when the penalized step produced nothing
            if metric_of(cand_nom) > metric:
                state = make_state(channels, state.W, theta_nom)
                cert, metric = cand_nom, metric_of(cand_nom)
                theta_rejected = False

        # the alternation zigzags along valleys that couple beams and
        # profile; extend the combined displacement of this round with
        # doubling multiples while the exact certificate keeps improving
        if not (w_rejected and theta_rejected):
            dW = state.W - W_prev
            dth = np.angle(np.exp(1j * (state.theta - theta_prev)))
            budget = math.sqrt(scenario.power)
            for t in (1.0, 3.0, 7.0, 15.0):
                W_try = state.W + t * dW
                nrm = float(np.linalg.norm(W_try))
                if nrm > budget:
                    W_try = W_try * (budget / nrm)
                th_try = state.theta + t * dth
                cand = certify_design(channels, W_try, phasor(th_try),
                                      xi_user, xi_eve)
                if metric_of(cand) <= metric:
                    break
                state = make_state(channels, W_try, th_try)
                cert, metric = cand, metric_of(cand)

        _monotone_check(metric, prev, f"certified iteration {it}")
        report = evaluate(state, channels, xi_user, xi_eve)
        trace.rows.append(IterationRow(
            index=it,
            min_secrecy=report.min_secrecy_raw,
            min_secrecy_clipped=report.min_secrecy,
            sum_secrecy=report.sum_secrecy_raw,
            sum_secrecy_clipped=report.sum_secrecy,
            objective=metric,
            penalty=float(ph.penalty) if ph is not None else 0.0,
            regularizer=float(ph.weight_final) if ph is not None else 0.0,
            phase_modulus_dev=float(ph.modulus_dev) if ph is not None else 0.0,
            phase_project_shift=float(shift),
            solver_status=sol_w.status,
            solver_iterations=sol_w.iterations
            + (ph.solver_iterations if ph is not None else 0),
            w_rejected=w_rejected,
            theta_rejected=theta_rejected,
        ))
        rel = abs(metric - prev) / max(abs(prev), REL_FLOOR)
        prev = metric
        if rel <= scenario.eps_outer:
            trace.status = "Converged"
            break
    trace.certificate = cert
    return trace, state
