"""Cone descriptions and the Jordan/Nesterov-Todd algebra behind the solver.

Symmetric matrices travel through the solver in scaled vector form (svec):
lower triangle stacked column by column with off-diagonal entries scaled
by sqrt(2), so the Frobenius inner product becomes the ordinary dot
product and cone dimensions stay at n*(n+1)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class NonnegCone:
    dim: int


@dataclass(frozen=True)
class SocCone:
    dim: int  # 1 + length of the vector part


@dataclass(frozen=True)
class PsdCone:
    order: int

    @property
    def svec_dim(self) -> int:
        return self.order * (self.order + 1) // 2


Cone = NonnegCone | SocCone | PsdCone


def cone_dim(cone: Cone) -> int:
    if isinstance(cone, PsdCone):
        return cone.svec_dim
    return cone.dim


def cone_degree(cone: Cone) -> int:
    """Barrier degree: dim for the orthant, 1 per Lorentz cone, order for PSD."""
    if isinstance(cone, NonnegCone):
        return cone.dim
    if isinstance(cone, SocCone):
        return 1
    return cone.order


_TRI_CACHE: dict[int, tuple] = {}


def _tri(n: int):
    try:
        return _TRI_CACHE[n]
    except KeyError:
        rows, cols = np.tril_indices(n)
        w = np.where(rows == cols, 1.0, SQRT2)
        _TRI_CACHE[n] = (rows, cols, w)
        return _TRI_CACHE[n]


def svec(X: np.ndarray) -> np.ndarray:
    """Symmetric (..., n, n) -> (..., n(n+1)/2) with sqrt(2) off-diagonals."""
    n = X.shape[-1]
    rows, cols, w = _tri(n)
    return X[..., rows, cols] * w


def smat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of svec: (..., d) -> symmetric (..., n, n)."""
    d = v.shape[-1]
    if n is None:
        n = int(round((math.sqrt(8.0 * d + 1.0) - 1.0) / 2.0))
    rows, cols, w = _tri(n)
    out = np.zeros(v.shape[:-1] + (n, n), dtype=v.dtype)
    vals = v / w
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def cone_margin(cone: Cone, v: np.ndarray) -> float:
    """Distance-like interiority measure; positive strictly inside."""
    if isinstance(cone, NonnegCone):
        return float(np.min(v))
    if isinstance(cone, SocCone):
        return float(v[0] - np.linalg.norm(v[1:]))
    w = np.linalg.eigvalsh(smat(v, cone.order))
    return float(w[0])


def cone_identity(cone: Cone) -> np.ndarray:
    """Interior point e with margin 1: ones, (1,0,..), svec(I)."""
    if isinstance(cone, NonnegCone):
        return np.ones(cone.dim)
    if isinstance(cone, SocCone):
        e = np.zeros(cone.dim)
        e[0] = 1.0
        return e
    return svec(np.eye(cone.order))


def step_to_boundary(cone: Cone, s: np.ndarray, ds: np.ndarray) -> float:
    """Largest alpha with s + alpha*ds still in the cone (s strictly inside)."""
    if isinstance(cone, NonnegCone):
        neg = ds < 0.0
        if not np.any(neg):
            return math.inf
        return float(np.min(-s[neg] / ds[neg]))
    if isinstance(cone, SocCone):
        c0 = float(s[0] ** 2 - s[1:] @ s[1:])
        c1 = 2.0 * float(s[0] * ds[0] - s[1:] @ ds[1:])
        c2 = float(ds[0] ** 2 - ds[1:] @ ds[1:])
        roots = []
        if abs(c2) < 1.0e-300:
            if c1 < 0.0:
                roots.append(-c0 / c1)
        else:
            disc = c1 * c1 - 4.0 * c2 * c0
            if disc >= 0.0:
                sq = math.sqrt(disc)
                q = -(c1 + math.copysign(sq, c1 if c1 != 0.0 else 1.0)) / 2.0
                if q != 0.0:
                    roots.extend([q / c2, c0 / q])
                else:
                    roots.append(0.0)
        pos = [r for r in roots if r > 0.0]
        if not pos:
            return math.inf
        alpha = min(pos)
        # the first coordinate must stay positive too
        if ds[0] < 0.0:
            alpha = min(alpha, -s[0] / ds[0])
        return alpha
    S = smat(s, cone.order)
    D = smat(ds, cone.order)
    L = np.linalg.cholesky(S)
    A = np.linalg.solve(L, D)
    B = np.linalg.solve(L, A.T).T
    lam_min = float(np.linalg.eigvalsh(0.5 * (B + B.T))[0])
    if lam_min >= 0.0:
        return math.inf
    return -1.0 / lam_min


def _col(v, x):
    """Broadcast a (d,) factor over (d,) or (d, m) arrays."""
    return x if v.ndim == 1 else x[:, None]


class BlockScaling:
    """Nesterov-Todd scaling of one cone block at the point (s, z).

    Provides the scaling actions W, W^T, W^{-1}, W^{-T} on svec-space
    vectors (or column stacks), the scaled point lam = W z = W^{-T} s,
    and the Jordan products needed by the corrector.
    """

    def __init__(self, cone: Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        if isinstance(cone, NonnegCone):
            self._wv = np.sqrt(s / z)
            self.lam = np.sqrt(s * z)
        elif isinstance(cone, SocCone):
            js = float(s[0] ** 2 - s[1:] @ s[1:])
            jz = float(z[0] ** 2 - z[1:] @ z[1:])
            if js <= 0.0 or jz <= 0.0:
                raise FloatingPointError("Lorentz iterate left the cone")
            sb = s / math.sqrt(js)
            zb = z / math.sqrt(jz)
            # exact bound: sb@zb >= 0 inside the cone, so gamma^2 >= 1/2;
            # near the boundary cancellation can push the computed product
            # below -1, which only ever means "boundary" here
            gamma = math.sqrt(max((1.0 + float(sb @ zb)) / 2.0, 0.5))
            wb = sb.copy()
            wb[0] += zb[0]
            wb[1:] -= zb[1:]
            wb /= 2.0 * gamma
            self._wb = wb
            self._eta = (js / jz) ** 0.25
            self.lam = self.apply_w(z)
        else:
            n = cone.order
            S = smat(s, n)
            Z = smat(z, n)
            Ls = np.linalg.cholesky(S)
            Lz = np.linalg.cholesky(Z)
            U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
            self._R = Ls @ Vt.T / np.sqrt(sig)[None, :]
            self._Rinv = (U.T @ Lz.T) / np.sqrt(sig)[:, None]
            self._sig = sig
            rows, cols, _ = _tri(n)
            self._pair_mean = 0.5 * (sig[rows] + sig[cols])
            self.lam = svec(np.diag(sig))

    # -- scaling actions ------------------------------------------------

    def apply_w(self, v):
        cone = self.cone
        if isinstance(cone, NonnegCone):
            return v * _col(v, self._wv)
        if isinstance(cone, SocCone):
            return self._eta * self._wbar_mul(v, +1.0)
        return self._psd_congruence(v, self._R.T, self._R)

    def apply_wt(self, v):
        cone = self.cone
        if isinstance(cone, PsdCone):
            return self._psd_congruence(v, self._R, self._R.T)
        return self.apply_w(v)

    def apply_winv(self, v):
        cone = self.cone
        if isinstance(cone, NonnegCone):
            return v / _col(v, self._wv)
        if isinstance(cone, SocCone):
            return self._wbar_mul(v, -1.0) / self._eta
        return self._psd_congruence(v, self._Rinv.T, self._Rinv)

    def apply_winvt(self, v):
        cone = self.cone
        if isinstance(cone, PsdCone):
            return self._psd_congruence(v, self._Rinv, self._Rinv.T)
        return self.apply_winv(v)

    def _wbar_mul(self, v, sign):
        wb = self._wb
        v0 = v[0]
        v1 = v[1:]
        dot = wb[1:] @ v1
        out = np.empty_like(v)
        out[0] = wb[0] * v0 + sign * dot
        out[1:] = v1 + _col(v, wb[1:]) * (sign * v0 + dot / (1.0 + wb[0]))
        return out

    def _psd_congruence(self, v, A, B):
        """svec(A @ mat(v) @ B) columnwise, for (d,) or (d, m) input."""
        n = self.cone.order
        if v.ndim == 1:
            return svec(A @ smat(v, n) @ B)
        return self.congruence_cached(smat(v.T, n), A, B)

    def congruence_cached(self, mats, A, B):
        """Same as _psd_congruence on a precomputed (m, n, n) matrix stack."""
        out = np.matmul(np.matmul(A, mats), B)
        return svec(0.5 * (out + np.swapaxes(out, 1, 2))).T

    def apply_winvt_cached(self, mats):
        return self.congruence_cached(mats, self._Rinv, self._Rinv.T)

    # -- Jordan algebra at lam ------------------------------------------

    def jprod(self, u, v):
        """Jordan product u o v in this cone's algebra."""
        cone = self.cone
        if isinstance(cone, NonnegCone):
            return u * v
        if isinstance(cone, SocCone):
            out = np.empty_like(u)
            out[0] = u @ v
            out[1:] = u[0] * v[1:] + v[0] * u[1:]
            return out
        n = cone.order
        U = smat(u, n)
        V = smat(v, n)
        return svec(0.5 * (U @ V + V @ U))

    def lam_sq(self):
        return self.jprod(self.lam, self.lam)

    def lam_solve(self, d):
        """Solve lam o x = d for x."""
        cone = self.cone
        if isinstance(cone, NonnegCone):
            return d / self.lam
        if isinstance(cone, SocCone):
            l0 = self.lam[0]
            l1 = self.lam[1:]
            det = l0 * l0 - l1 @ l1
            x0 = (l0 * d[0] - l1 @ d[1:]) / det
            x1 = (d[1:] - x0 * l1) / l0
            return np.concatenate([[x0], x1])
        return d / self._pair_mean


# -- batched scalings over same-shape block groups ----------------------
#
# The interior-point loop touches every block several times per
# iteration; doing that through per-block python calls costs more than
# the arithmetic at the sizes this solver sees.  Blocks of equal shape
# are gathered into stacks once and every sweep becomes a handful of
# batched LAPACK calls.

def _T(a):
    return np.swapaxes(a, -1, -2)


class _BlockGroup:
    """Index bookkeeping for one batch of same-shape blocks."""

    __slots__ = ("kind", "dim", "order", "count", "idx")

    def __init__(self, kind, dim, order, slices):
        self.kind = kind
        self.dim = dim
        self.order = order
        self.count = len(slices)
        self.idx = np.concatenate([np.arange(sl.start, sl.stop)
                                   for sl in slices])

    def gather(self, vec):
        g = vec[self.idx]
        if self.kind == "nn":
            return g
        if vec.ndim == 1:
            return g.reshape(self.count, self.dim)
        return g.reshape(self.count, self.dim, vec.shape[1])

    def scatter(self, out, val):
        if out.ndim == 1:
            out[self.idx] = val.reshape(self.idx.size)
        else:
            out[self.idx] = val.reshape(self.idx.size, out.shape[1])


def group_blocks(blocks):
    """Partition (cone, slice) pairs into same-shape batches.

    All nonnegative rows land in one flat group; Lorentz and PSD blocks
    group by dimension.  Order follows first appearance, so the result
    is deterministic for a fixed problem.
    """
    table = {}
    for cone, sl in blocks:
        if isinstance(cone, NonnegCone):
            key = ("nn", 0)
        elif isinstance(cone, SocCone):
            key = ("soc", cone.dim)
        else:
            key = ("psd", cone.order)
        table.setdefault(key, []).append(sl)
    out = []
    for (kind, kdim), sls in table.items():
        if kind == "psd":
            out.append(_BlockGroup(kind, kdim * (kdim + 1) // 2, kdim, sls))
        else:
            out.append(_BlockGroup(kind, kdim, 0, sls))
    return out


def _soc_wbar(wb, v, sign):
    """Batched reflector product for (c, d) or (c, d, m) stacks."""
    if v.ndim == 2:
        dot = np.sum(wb[:, 1:] * v[:, 1:], axis=1)
        out = np.empty_like(v)
        out[:, 0] = wb[:, 0] * v[:, 0] + sign * dot
        out[:, 1:] = v[:, 1:] + wb[:, 1:] * (
            sign * v[:, 0] + dot / (1.0 + wb[:, 0]))[:, None]
        return out
    dot = np.sum(wb[:, 1:, None] * v[:, 1:, :], axis=1)
    out = np.empty_like(v)
    out[:, 0] = wb[:, 0, None] * v[:, 0] + sign * dot
    out[:, 1:] = v[:, 1:] + wb[:, 1:, None] * (
        sign * v[:, 0] + dot / (1.0 + wb[:, 0, None]))[:, None, :]
    return out


def _psd_cong_batch(mats, A, B):
    """svec(A @ mats @ B), symmetrized, over (c, [m,] n, n) stacks."""
    if mats.ndim == 4:
        out = np.matmul(np.matmul(A[:, None], mats), B[:, None])
    else:
        out = np.matmul(np.matmul(A, mats), B)
    return svec(0.5 * (out + _T(out)))


class GroupScalings:
    """Nesterov-Todd scalings for every block, batched by shape."""

    def __init__(self, groups, s, z):
        self.groups = groups
        self.state = []
        for g in groups:
            self.state.append(self._build(g, g.gather(s), g.gather(z)))

    def _build(self, g, sg, zg):
        if g.kind == "nn":
            return {"wv": np.sqrt(sg / zg), "lam": np.sqrt(sg * zg)}
        if g.kind == "soc":
            js = sg[:, 0] ** 2 - np.sum(sg[:, 1:] ** 2, axis=1)
            jz = zg[:, 0] ** 2 - np.sum(zg[:, 1:] ** 2, axis=1)
            if np.any(js <= 0.0) or np.any(jz <= 0.0):
                raise FloatingPointError("Lorentz iterate left the cone")
            sb = sg / np.sqrt(js)[:, None]
            zb = zg / np.sqrt(jz)[:, None]
            # exact bound: sb@zb >= 0 inside the cone, so gamma^2 >= 1/2;
            # cancellation near the boundary only ever means "boundary"
            gamma = np.sqrt(np.maximum(
                (1.0 + np.sum(sb * zb, axis=1)) / 2.0, 0.5))
            wb = sb.copy()
            wb[:, 0] += zb[:, 0]
            wb[:, 1:] -= zb[:, 1:]
            wb /= (2.0 * gamma)[:, None]
            eta = (js / jz) ** 0.25
            st = {"wb": wb, "eta": eta}
            st["lam"] = eta[:, None] * _soc_wbar(wb, zg, +1.0)
            return st
        n = g.order
        S = smat(sg, n)
        Z = smat(zg, n)
        Ls = np.linalg.cholesky(S)
        Lz = np.linalg.cholesky(Z)
        U, sig, Vt = np.linalg.svd(np.matmul(_T(Lz), Ls))
        R = np.matmul(Ls, _T(Vt)) / np.sqrt(sig)[:, None, :]
        Rinv = np.matmul(_T(U), _T(Lz)) / np.sqrt(sig)[:, :, None]
        rows, cols, _ = _tri(n)
        lam = np.zeros((g.count, g.dim))
        diag = rows == cols
        lam[:, diag] = sig
        lamsq = np.zeros_like(lam)
        lamsq[:, diag] = sig ** 2
        return {"R": R, "Rinv": Rinv, "lam": lam, "lamsq": lamsq,
                "pair": 0.5 * (sig[:, rows] + sig[:, cols]),
                "eye": svec(np.eye(n))}

    def _apply_group(self, g, st, name, vg):
        if g.kind == "nn":
            wv = st["wv"] if vg.ndim == 1 else st["wv"][:, None]
            return vg * wv if name in ("w", "wt") else vg / wv
        if g.kind == "soc":
            sign = 1.0 if name in ("w", "wt") else -1.0
            out = _soc_wbar(st["wb"], vg, sign)
            eta = st["eta"][:, None] if vg.ndim == 2 \
                else st["eta"][:, None, None]
            return out * eta if sign > 0 else out / eta
        R, Rinv = st["R"], st["Rinv"]
        A, B = {"w": (_T(R), R), "wt": (R, _T(R)),
                "winv": (_T(Rinv), Rinv), "winvt": (Rinv, _T(Rinv))}[name]
        if vg.ndim == 2:
            return _psd_cong_batch(smat(vg, g.order), A, B)
        mats = smat(np.moveaxis(vg, 1, 2), g.order)
        return np.moveaxis(_psd_cong_batch(mats, A, B), 1, 2)

    def apply(self, name, vec):
        out = np.empty_like(vec)
        for g, st in zip(self.groups, self.state):
            g.scatter(out, self._apply_group(g, st, name, g.gather(vec)))
        return out

    def psd_row_cache(self, G):
        """Matrix images of each PSD group's rows of G, built once."""
        cache = {}
        for gi, g in enumerate(self.groups):
            if g.kind != "psd":
                continue
            rows = G[g.idx].reshape(g.count, g.dim, G.shape[1])
            cache[gi] = smat(np.moveaxis(rows, 1, 2), g.order)
        return cache

    def scaled_rows(self, G, cache):
        """W^{-T} applied to every row block of G."""
        Gt = np.empty_like(G)
        for gi, (g, st) in enumerate(zip(self.groups, self.state)):
            if g.kind == "psd":
                out = _psd_cong_batch(cache[gi], st["Rinv"], _T(st["Rinv"]))
                Gt[g.idx] = np.moveaxis(out, 1, 2).reshape(g.idx.size, -1)
            else:
                g.scatter(Gt, self._apply_group(g, st, "winvt", g.gather(G)))
        return Gt

    def ds_rhs(self, p, sig_mu, extra):
        """lam^{-1} o (-lam o lam + sig*mu*e - extra), over all blocks."""
        out = np.empty(p)
        for g, st in zip(self.groups, self.state):
            lam = st["lam"]
            if g.kind == "nn":
                d = -lam * lam + sig_mu
                if extra is not None:
                    d = d - g.gather(extra)
                g.scatter(out, d / lam)
                continue
            if g.kind == "soc":
                d = np.empty((g.count, g.dim))
                d[:, 0] = sig_mu - np.sum(lam * lam, axis=1)
                d[:, 1:] = -2.0 * lam[:, 0, None] * lam[:, 1:]
                if extra is not None:
                    d = d - g.gather(extra)
                det = lam[:, 0] ** 2 - np.sum(lam[:, 1:] ** 2, axis=1)
                x0 = (lam[:, 0] * d[:, 0]
                      - np.sum(lam[:, 1:] * d[:, 1:], axis=1)) / det
                x1 = (d[:, 1:] - x0[:, None] * lam[:, 1:]) \
                    / lam[:, 0, None]
                g.scatter(out, np.concatenate([x0[:, None], x1], axis=1))
                continue
            d = -st["lamsq"] + sig_mu * st["eye"][None, :]
            if extra is not None:
                d = d - g.gather(extra)
            g.scatter(out, d / st["pair"])
        return out

    def corrector(self, p, dsa, dza):
        """Jordan product (W^{-T} ds) o (W dz), over all blocks."""
        out = np.empty(p)
        for g, st in zip(self.groups, self.state):
            u = self._apply_group(g, st, "winvt", g.gather(dsa))
            v = self._apply_group(g, st, "w", g.gather(dza))
            if g.kind == "nn":
                g.scatter(out, u * v)
                continue
            if g.kind == "soc":
                j = np.empty_like(u)
                j[:, 0] = np.sum(u * v, axis=1)
                j[:, 1:] = u[:, 0, None] * v[:, 1:] + v[:, 0, None] * u[:, 1:]
                g.scatter(out, j)
                continue
            U = smat(u, g.order)
            V = smat(v, g.order)
            g.scatter(out, svec(0.5 * (np.matmul(U, V) + np.matmul(V, U))))
        return out

    def alpha_to_boundary(self, vec, dvec):
        """Largest step keeping every block inside its cone."""
        alpha = math.inf
        for g in self.groups:
            vg = g.gather(vec)
            dg = g.gather(dvec)
            if g.kind == "nn":
                neg = dg < 0.0
                if np.any(neg):
                    alpha = min(alpha, float(np.min(-vg[neg] / dg[neg])))
                continue
            if g.kind == "soc":
                alpha = min(alpha, _soc_alpha(vg, dg))
                continue
            S = smat(vg, g.order)
            D = smat(dg, g.order)
            L = np.linalg.cholesky(S)
            A = np.linalg.solve(L, D)
            B = _T(np.linalg.solve(L, _T(A)))
            lam_min = np.linalg.eigvalsh(0.5 * (B + _T(B)))[:, 0]
            bad = lam_min < 0.0
            if np.any(bad):
                alpha = min(alpha, float(np.min(-1.0 / lam_min[bad])))
        return alpha

    def margins_ok(self, vec):
        """True when every block sits strictly inside its cone."""
        for g in self.groups:
            vg = g.gather(vec)
            if g.kind == "nn":
                if float(np.min(vg)) <= 0.0:
                    return False
            elif g.kind == "soc":
                m = vg[:, 0] - np.linalg.norm(vg[:, 1:], axis=1)
                if float(np.min(m)) <= 0.0:
                    return False
            else:
                w = np.linalg.eigvalsh(smat(vg, g.order))
                if float(np.min(w[:, 0])) <= 0.0:
                    return False
        return True


def _soc_alpha(vg, dg):
    """Batched positive-root search for Lorentz boundary crossings."""
    c0 = vg[:, 0] ** 2 - np.sum(vg[:, 1:] ** 2, axis=1)
    c1 = 2.0 * (vg[:, 0] * dg[:, 0] - np.sum(vg[:, 1:] * dg[:, 1:], axis=1))
    c2 = dg[:, 0] ** 2 - np.sum(dg[:, 1:] ** 2, axis=1)
    lin = np.abs(c2) < 1.0e-300
    disc = c1 * c1 - 4.0 * c2 * c0
    sq = np.sqrt(np.maximum(disc, 0.0))
    sgn = np.where(c1 != 0.0, np.sign(c1), 1.0)
    q = -(c1 + sgn * sq) / 2.0
    r1 = np.where(q != 0.0, q / np.where(lin, 1.0, c2), np.inf)
    r2 = c0 / np.where(q != 0.0, q, 1.0)
    r2 = np.where(q != 0.0, r2, np.inf)
    best = np.minimum(np.where(r1 > 0.0, r1, np.inf),
                      np.where(r2 > 0.0, r2, np.inf))
    best = np.where(disc >= 0.0, best, np.inf)
    lroot = -c0 / np.where(c1 < 0.0, c1, -1.0)
    best = np.where(lin, np.where(c1 < 0.0, lroot, np.inf), best)
    # the first coordinate must stay positive too
    head = -vg[:, 0] / np.where(dg[:, 0] < 0.0, dg[:, 0], -1.0)
    best = np.where(dg[:, 0] < 0.0, np.minimum(best, head), best)
    return float(np.min(best)) if best.size else math.inf
