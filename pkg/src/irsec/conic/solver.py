"""Dense primal-dual interior-point solver on the self-dual embedding.

Solves  maximize c @ x  subject to  h - G x in K  (internally minimizing
-c) together with its dual, using Nesterov-Todd scalings and a Mehrotra
predictor-corrector. The homogeneous embedding carries two extra scalars
(tau, kappa); their ratio collapsing one way or the other separates
optimality from the two degenerate outcomes, so infeasibility is detected
by certificate rather than by iteration failure.

The iteration is deterministic: no randomness, fixed elimination order,
so repeated solves of one problem return bitwise-identical iterates.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .cones import (GroupScalings, NonnegCone, cone_degree, cone_identity,
                    cone_margin, group_blocks)
from .problem import ConicProblem, ConicSolution

STEP_FRAC = 0.99
MIN_STEP = 1.0e-10
TAU_FLOOR = 1.0e-12
RELAXED_FACTOR = 100.0
EQUIL_ROUNDS = 4


def _push_interior(vec, blocks):
    for cone, sl in blocks:
        m = cone_margin(cone, vec[sl])
        if m < 1.0:
            vec[sl] = vec[sl] + (1.0 - m) * cone_identity(cone)
    return vec


def _equilibrate(G, h, chat, blocks):
    """Ruiz-style balancing of (G, h, c) before the iteration.

    Column scales act per variable; row scales are uniform inside each
    Lorentz and semidefinite block (membership is invariant under a
    single positive factor, not under per-row ones), per-row on the
    nonnegative cone. Returns scaled copies plus both scale vectors so
    the solution can be mapped back.
    """
    p, n = G.shape
    Gw = G.copy()
    d_row = np.ones(p)
    d_col = np.ones(n)
    for _ in range(EQUIL_ROUNDS):
        cmax = np.abs(Gw).max(axis=0)
        sc = np.where(cmax > 0.0, 1.0 / np.sqrt(cmax), 1.0)
        Gw *= sc[None, :]
        d_col *= sc
        for cone, sl in blocks:
            absblock = np.abs(Gw[sl])
            if isinstance(cone, NonnegCone):
                rmax = absblock.max(axis=1)
                sr = np.where(rmax > 0.0, 1.0 / np.sqrt(rmax), 1.0)
            else:
                bmax = float(absblock.max())
                sr = np.full(sl.stop - sl.start,
                             1.0 / math.sqrt(bmax) if bmax > 0.0 else 1.0)
            Gw[sl] *= sr[:, None]
            d_row[sl] *= sr
    return Gw, d_row * h, d_col * chat, d_row, d_col


def solve(problem: ConicProblem, tol: float = 1.0e-8,
          max_iter: int = 100) -> ConicSolution:
    t0 = time.perf_counter()
    G0, h0, cones = problem.finalize()
    chat0 = -problem.c
    p, n = G0.shape
    blocks = problem.block_slices()
    G, h, chat, d_row, d_col = _equilibrate(G0, h0, chat0, blocks)
    deg = sum(cone_degree(c) for c in cones)
    hnorm = float(np.linalg.norm(h))
    cnorm = float(np.linalg.norm(chat))
    hnorm0 = max(1.0, float(np.linalg.norm(h0)))
    cnorm0 = max(1.0, float(np.linalg.norm(chat0)))
    groups = group_blocks(blocks)
    psd_cache = None

    x = np.linalg.lstsq(G, h, rcond=None)[0]
    s = _push_interior(h - G @ x, blocks)
    z = _push_interior(np.linalg.lstsq(G.T, -chat, rcond=None)[0], blocks)
    tau = 1.0
    kappa = 1.0

    best = None
    best_score = math.inf

    def finish(status, it, message="", use_best=False):
        nonlocal x, s, z, tau, kappa
        if use_best and best is not None:
            x, s, z, tau, kappa = best
            if best_score <= RELAXED_FACTOR * tol:
                status = "Optimal"
                note = "reduced accuracy: residuals at the floating point floor"
                message = f"{message}; {note}" if message else note
        t = tau if tau > 0 else 1.0
        # map back to the caller's variables and report residuals
        # against the unscaled data
        xs = d_col * (x / t)
        ss = (s / t) / d_row
        zs = d_row * (z / t)
        pres = float(np.linalg.norm(G0 @ xs + ss - h0)) / hnorm0
        dres = float(np.linalg.norm(G0.T @ zs + chat0)) / cnorm0
        gap = float(s @ z) / tau ** 2 if tau > 0 else float("inf")
        obj = float(problem.c @ xs)
        if status == "Infeasible":
            obj = float("nan")
        return ConicSolution(x=xs, objective=obj, status=status,
                             primal_res=pres, dual_res=dres, gap=gap,
                             iterations=it, wall_time=time.perf_counter() - t0,
                             message=message)

    for it in range(max_iter + 1):
        rx = G.T @ z + chat * tau
        rz = G @ x + s - h * tau
        rtau = float(chat @ x + h @ z + kappa)
        mu = (float(s @ z) + tau * kappa) / (deg + 1)

        xs = x / tau
        pres = float(np.linalg.norm(G @ xs + s / tau - h)) / max(1.0, hnorm)
        dres = float(np.linalg.norm(G.T @ (z / tau) + chat)) / max(1.0, cnorm)
        pcost = float(chat @ xs)
        gap = float(s @ z) / tau ** 2
        relgap = gap / max(1.0, abs(pcost))
        score = max(pres, dres, min(gap, relgap))
        if score < best_score:
            best_score = score
            best = (x.copy(), s.copy(), z.copy(), tau, kappa)
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            return finish("Optimal", it)

        hz = float(h @ z)
        if hz < 0.0 and float(np.linalg.norm(G.T @ z)) <= tol * (-hz):
            return finish("Infeasible", it,
                          "dual improving ray certifies primal infeasibility")
        cx = float(chat @ x)
        if cx < 0.0 and float(np.linalg.norm(G @ x + s)) <= tol * (-cx):
            return finish("NumericalFailure", it,
                          "primal improving ray: objective unbounded above")
        if tau < TAU_FLOOR * max(1.0, kappa):
            return finish("NumericalFailure", it,
                          "self-dual scaling collapsed without a certificate")
        if it == max_iter:
            return finish("MaxIter", it, use_best=True)

        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                scals = GroupScalings(groups, s, z)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            return finish("NumericalFailure", it,
                          f"scaling breakdown: {exc}", use_best=True)

        def apply(fn, vec):
            return scals.apply(fn, vec)

        if psd_cache is None:
            psd_cache = scals.psd_row_cache(G)
        Gt = scals.scaled_rows(G, psd_cache)

        H = Gt.T @ Gt
        reg = 1.0e-12 * max(1.0, float(np.trace(H)) / max(n, 1))
        for attempt in range(4):
            try:
                np.linalg.cholesky(H + reg * np.eye(n))
                break
            except np.linalg.LinAlgError:
                reg *= 1.0e3
        # one dense inverse per iteration; every KKT solve after that is
        # a matvec, and solve_xz runs a refinement pass anyway
        Hinv = np.linalg.inv(H + reg * np.eye(n))

        def solve_xz(bx, bz):
            # K (ux, uz) = (bx, bz) with K = [[0, G^T], [G, -W^T W]]
            t = apply("winvt", bz)
            ux = Hinv @ (bx + Gt.T @ t)
            uz = apply("winv", Gt @ ux - t)
            e1 = bx - G.T @ uz
            e2 = bz - (G @ ux - apply("wt", apply("w", uz)))
            t2 = apply("winvt", e2)
            dx2 = Hinv @ (e1 + Gt.T @ t2)
            return ux + dx2, uz + apply("winv", Gt @ dx2 - t2)

        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                vx, vz = solve_xz(-chat, h)

                def direction(sig, ds_extra, dtau_extra):
                    # rhs for the combined (or affine, sig=0) system
                    f = 1.0 - sig
                    bx = -f * rx
                    bz = -f * rz
                    # the tau row is stated negated, so its rhs keeps the + sign
                    btau1 = f * rtau
                    r_s = scals.ds_rhs(p, sig * mu, ds_extra)
                    btau2 = -tau * kappa
                    if sig > 0.0:
                        btau2 += sig * mu
                    if dtau_extra is not None:
                        btau2 -= dtau_extra
                    bz_t = bz - apply("wt", r_s)
                    ux, uz = solve_xz(bx, bz_t)
                    denom = kappa / tau - float(chat @ vx + h @ vz)
                    dtau = (btau1 + btau2 / tau + float(chat @ ux + h @ uz)) / denom
                    dx = ux + dtau * vx
                    dz = uz + dtau * vz
                    ds = apply("wt", r_s - apply("w", dz))
                    dkappa = (btau2 - kappa * dtau) / tau
                    return dx, dz, ds, dtau, dkappa

                dxa, dza, dsa, dtaua, dkappaa = direction(0.0, None, None)

                alpha_aff = min(1.0,
                                scals.alpha_to_boundary(s, dsa),
                                scals.alpha_to_boundary(z, dza))
                if dtaua < 0.0:
                    alpha_aff = min(alpha_aff, -tau / dtaua)
                if dkappaa < 0.0:
                    alpha_aff = min(alpha_aff, -kappa / dkappaa)

                sigma = min(1.0, max(0.0, (1.0 - alpha_aff))) ** 3

                corr = scals.corrector(p, dsa, dza)
                dx, dz, ds, dtau, dkappa = direction(sigma, corr, dtaua * dkappaa)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            return finish("NumericalFailure", it,
                          f"direction solve failed: {exc}", use_best=True)

        alpha = min(scals.alpha_to_boundary(s, ds),
                    scals.alpha_to_boundary(z, dz))
        if dtau < 0.0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0.0:
            alpha = min(alpha, -kappa / dkappa)
        alpha = min(1.0, STEP_FRAC * alpha)
        if not math.isfinite(alpha) or alpha <= MIN_STEP:
            return finish("NumericalFailure", it,
                          f"step length collapsed to {alpha:.2e}",
                          use_best=True)

        # the boundary distance is exact in exact arithmetic, but near a
        # degenerate face rounding in s + alpha ds can land outside; shrink
        # until both iterates keep a strictly positive margin
        while alpha > MIN_STEP:
            s_new = s + alpha * ds
            z_new = z + alpha * dz
            if scals.margins_ok(s_new) and scals.margins_ok(z_new):
                break
            alpha *= 0.9
        else:
            return finish("NumericalFailure", it,
                          "could not keep the iterate interior",
                          use_best=True)

        x = x + alpha * dx
        z = z_new
        s = s_new
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    return finish("MaxIter", max_iter)
