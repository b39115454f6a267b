"""Concave minorants of the finite-blocklength secrecy rate.

Both alternating-optimization steps maximize the same lower bound, once
as a function of the beams with phases frozen and once as a function of
the phases with beams frozen. The bound is assembled per target user
from four pieces, each globally valid on its domain and exact at the
expansion point:

  own rate        ln(1+|q|^2/rho) is jointly convex in (q, upsilon)
                  through -ln(1 - |q|^2/upsilon), so its tangent is a
                  global lower bound;
  leakage rate    -C_e = ln rho_e - ln upsilon_e: the first term gets the
                  same tangent treatment with the noise as denominator,
                  the second the plain -ln tangent;
  dispersion      sqrt(V) <= sqrt(Vb)/2 + V/(2 sqrt(Vb)) (concavity) and
                  rho/upsilon bounded below by its quadratic-over-linear
                  tangent, giving a linear-minus-convex-quadratic bound.

Every quadratic coefficient lands on a PSD rank-one channel outer
product with a nonnegative scalar, so the assembled bound is concave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import wrap_phases

V_FLOOR = 1.0e-8


@dataclass
class NodeStats:
    """Expansion quantities of one receiver for one target user.

    q is the (K,) vector of beam gains h w_j at this node; rho excludes
    the target beam, upsilon includes every beam plus noise. disp is the
    dispersion after flooring (flag records whether the floor engaged).
    """

    q: np.ndarray
    rho: float
    upsilon: float
    gamma: float
    rate: float
    disp: float
    floored: bool


def node_stats(q: np.ndarray, sigma: float, k: int) -> NodeStats:
    q = np.asarray(q, dtype=complex)
    powers = np.abs(q) ** 2
    total = float(np.sum(powers))
    rho = total - float(powers[k]) + sigma
    upsilon = total + sigma
    gamma = float(powers[k]) / rho
    disp = 2.0 * gamma / (1.0 + gamma)
    floored = disp < V_FLOOR
    return NodeStats(q=q, rho=rho, upsilon=upsilon, gamma=gamma,
                     rate=math.log1p(gamma), disp=max(disp, V_FLOOR),
                     floored=floored)


@dataclass
class PieceCoeffs:
    """Scalar weights of the assembled minorant for one target user.

    lin_own         weight of Re{qb* q} on the user's own beam
    lin_cross_user  weight of Re{qb* q} on interfering beams at the user
    lin_cross_eve   weight of Re{qb* q} on interfering beams at Eve
    quad_user       weight of |q|^2 at the user (all beams)
    quad_eve        weight of |q|^2 at Eve (all beams)
    quad_eve_cross  extra weight of |q|^2 at Eve (interfering beams only)
    const           additive constant
    """

    lin_own: float
    lin_cross_user: float
    lin_cross_eve: float
    quad_user: float
    quad_eve: float
    quad_eve_cross: float
    const: float
    floored: bool


def piece_coeffs(user: NodeStats, eve: NodeStats, sigma_user: float,
                 sigma_eve: float, xi_user: float, xi_eve: float) -> PieceCoeffs:
    """Assemble the scalar coefficients of the minorant for one user."""
    # own-rate tangent
    z1 = 1.0 / user.rho - 1.0 / user.upsilon
    x1 = user.rate - user.gamma - sigma_user * z1

    # leakage tangent: ln rho_e with the noise as denominator, -ln ups_e
    k1 = (eve.rho - sigma_eve) / (sigma_eve * eve.rho)
    k2 = 1.0 / eve.upsilon
    x_e = (math.log(eve.rho) - math.log(eve.upsilon)
           - (eve.rho - sigma_eve) / sigma_eve
           - (eve.rho - sigma_eve) / eve.rho
           - sigma_eve / eve.upsilon + 1.0)

    def disp_terms(st: NodeStats, sigma: float, xi: float):
        if xi == 0.0:
            return 0.0, 0.0, 0.0
        sv = math.sqrt(st.disp)
        x2 = xi * (sv / 2.0 + (st.upsilon ** 2 - 2.0 * sigma * st.upsilon
                               + st.rho * sigma) / (st.upsilon ** 2 * sv))
        lin = 2.0 * xi / (st.upsilon * sv)
        z2 = xi * st.rho / (st.upsilon ** 2 * sv)
        return x2, lin, z2

    x2u, lin_u, z2u = disp_terms(user, sigma_user, xi_user)
    x2e, lin_e, z2e = disp_terms(eve, sigma_eve, xi_eve)

    return PieceCoeffs(
        lin_own=2.0 / user.rho,
        lin_cross_user=lin_u,
        lin_cross_eve=2.0 / sigma_eve + lin_e,
        quad_user=z1 + z2u,
        quad_eve=k2 + z2e,
        quad_eve_cross=k1,
        const=x1 + x_e - x2u - x2e,
        floored=user.floored or eve.floored,
    )


@dataclass
class WSurrogate:
    """Minorant of one user's secrecy rate as a function of the beams.

    value(W) = const + sum_j [ 2 Re{lin[:, j]^H w_j} - w_j^H quad[j] w_j ]
    with quad[j] PSD, so the bound is concave in W.
    """

    const: float
    lin: np.ndarray    # (N, K) complex
    quad: np.ndarray   # (K, N, N) complex Hermitian PSD
    user: int
    floor_applied: bool

    def value(self, W: np.ndarray) -> float:
        W = np.asarray(W, dtype=complex)
        val = self.const
        for j in range(W.shape[1]):
            wj = W[:, j]
            val += 2.0 * float(np.real(np.vdot(self.lin[:, j], wj)))
            val -= float(np.real(np.vdot(wj, self.quad[j] @ wj)))
        return val


def build_w_surrogate(h_rows: np.ndarray, W_bar: np.ndarray,
                      sigma: np.ndarray, xi_user: float, xi_eve: float,
                      k: int) -> WSurrogate:
    """Minorant of user k's secrecy rate around the beams W_bar.

    h_rows is the (K+1, N) stack of effective channels (Eve last); the
    phases are frozen inside these rows.
    """
    h_rows = np.asarray(h_rows, dtype=complex)
    W_bar = np.asarray(W_bar, dtype=complex)
    K = W_bar.shape[1]
    N = W_bar.shape[0]
    hk = h_rows[k]
    he = h_rows[K]
    user = node_stats(hk @ W_bar, float(sigma[k]), k)
    eve = node_stats(he @ W_bar, float(sigma[K]), k)
    co = piece_coeffs(user, eve, float(sigma[k]), float(sigma[K]),
                      xi_user, xi_eve)

    lin = np.zeros((N, K), dtype=complex)
    quad = np.zeros((K, N, N), dtype=complex)
    outer_user = np.outer(hk.conj(), hk)
    outer_eve = np.outer(he.conj(), he)
    for j in range(K):
        if j == k:
            lin[:, j] = (co.lin_own / 2.0) * hk.conj() * user.q[j]
            quad[j] = co.quad_user * outer_user + co.quad_eve * outer_eve
        else:
            lin[:, j] = ((co.lin_cross_user / 2.0) * hk.conj() * user.q[j]
                         + (co.lin_cross_eve / 2.0) * he.conj() * eve.q[j])
            quad[j] = (co.quad_user * outer_user
                       + (co.quad_eve + co.quad_eve_cross) * outer_eve)
    return WSurrogate(const=co.const, lin=lin, quad=quad, user=k,
                      floor_applied=co.floored)


@dataclass
class ThetaSurrogate:
    """Minorant of one user's secrecy rate as a function of the phases.

    value(theta) = const + 2 sum_m Re{y[m] exp(j theta[m])}, valid on the
    unit-modulus torus; the quadratic part has been linearized against
    the largest eigenvalue of its PSD kernel, keeping the bound exact at
    the expansion phases.
    """

    const: float
    y: np.ndarray   # (M,) complex
    user: int
    floor_applied: bool

    def value(self, theta: np.ndarray) -> float:
        u = np.exp(1j * np.asarray(theta, dtype=float))
        return self.const + 2.0 * float(np.real(self.y @ u))


def build_theta_surrogate(l_rows: np.ndarray, L_ar: np.ndarray,
                          W_bar: np.ndarray, u_bar: np.ndarray,
                          sigma: np.ndarray, xi_user: float, xi_eve: float,
                          k: int) -> ThetaSurrogate:
    """Minorant of user k's secrecy rate around the phasor vector u_bar.

    l_rows is the (K+1, M) stack of reflected links (Eve last). u_bar is
    exp(j*theta_bar). The beam gain at node i through beam j is a_{i,j}^T u
    with a_{i,j} = l_i * (L_ar w_j) elementwise.
    """
    l_rows = np.asarray(l_rows, dtype=complex)
    W_bar = np.asarray(W_bar, dtype=complex)
    u_bar = np.asarray(u_bar, dtype=complex)
    K = W_bar.shape[1]
    M = L_ar.shape[0]
    LW = L_ar @ W_bar                     # (M, K)
    a_user = l_rows[k][:, None] * LW      # (M, K), column j is a_{k,j}
    a_eve = l_rows[K][:, None] * LW
    q_user = a_user.T @ u_bar
    q_eve = a_eve.T @ u_bar
    user = node_stats(q_user, float(sigma[k]), k)
    eve = node_stats(q_eve, float(sigma[K]), k)
    co = piece_coeffs(user, eve, float(sigma[k]), float(sigma[K]),
                      xi_user, xi_eve)

    g = np.zeros(M, dtype=complex)
    phi = np.zeros((M, M), dtype=complex)
    for j in range(K):
        au = a_user[:, j]
        ae = a_eve[:, j]
        qu = np.outer(au.conj(), au)      # |a^T u|^2 = u^H qu u
        qe = np.outer(ae.conj(), ae)
        if j == k:
            g += (co.lin_own / 2.0) * user.q[j].conjugate() * au
            phi += co.quad_user * qu + co.quad_eve * qe
        else:
            g += ((co.lin_cross_user / 2.0) * user.q[j].conjugate() * au
                  + (co.lin_cross_eve / 2.0) * eve.q[j].conjugate() * ae)
            phi += (co.quad_user * qu
                    + (co.quad_eve + co.quad_eve_cross) * qe)

    lam = float(np.linalg.eigvalsh(phi)[-1])
    shift = lam * np.eye(M) - phi         # PSD by construction
    sv = shift @ u_bar
    const = (co.const - lam * M - float(np.real(np.vdot(u_bar, sv))))
    y = g + sv.conj()
    return ThetaSurrogate(const=const, y=y, user=k, floor_applied=co.floored)


def closed_form_theta(surrogates: list[ThetaSurrogate],
                      theta_bar: np.ndarray,
                      objective: str = "min"):
    """Pick the best per-element phase candidate for a set of minorants.

    Each minorant is separable over elements, so its unconstrained
    maximizer is elementwise theta_m = -arg(y_m). The candidate set is
    every per-user maximizer plus the incumbent theta_bar (and, for the
    sum objective, the maximizer of the summed minorant); ranking uses
    the requested aggregate of the minorant values, so the winner never
    scores below the incumbent.

    Returns (theta, score, candidate_index) with phases in [0, 2*pi).
    """
    if objective not in ("min", "sum"):
        raise ValueError(f"unknown objective {objective!r}")

    def maximizer(y):
        ang = np.where(np.abs(y) > 0.0, -np.angle(y), 0.0)
        return wrap_phases(ang)

    candidates = [wrap_phases(np.asarray(theta_bar, dtype=float))]
    candidates.extend(maximizer(s.y) for s in surrogates)
    if objective == "sum":
        candidates.append(maximizer(sum(s.y for s in surrogates)))

    agg = min if objective == "min" else sum
    best_idx = 0
    best_score = -math.inf
    for idx, cand in enumerate(candidates):
        score = agg(s.value(cand) for s in surrogates)
        if score > best_score:
            best_score = score
            best_idx = idx
    return candidates[best_idx], best_score, best_idx
