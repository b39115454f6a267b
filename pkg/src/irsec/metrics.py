"""Exact performance metrics for the finite-blocklength secure downlink.

All rates are computed and stored in nats. Conversion to bit/s/Hz happens
only at reporting boundaries (CSV, plots) through NATS_TO_BITS.

The finite-blocklength secrecy rate of user k against the eavesdropper is

    S_k = [ ln(1+g_k) - ln(1+g_e) - xi_k*sqrt(V(g_k)) - xi_e*sqrt(V(g_e)) ]^+

where V(g) = 2g/(1+g) is the channel dispersion and the penalty weights
xi collect the blocklength and the decoding/leakage tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NATS_TO_BITS = 1.0 / math.log(2.0)

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Rational approximation for the inverse standard normal CDF (relative error
# below 1.15e-9 everywhere), refined below by Newton steps on the exact CDF.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_PPF_PLOW = 0.02425


def _norm_ppf_approx(p: float) -> float:
    """Initial rational approximation to the standard normal quantile."""
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    if p < _PPF_PLOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p > 1.0 - _PPF_PLOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)


def norm_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


def qfunc(x: float) -> float:
    """Gaussian tail probability Q(x) = P(Z > x)."""
    return 0.5 * math.erfc(x / _SQRT2)


def qfunc_inv(p: float) -> float:
    """Inverse Gaussian tail function, Q^{-1}(p) for p in (0, 1).

    Rational seed plus two Newton corrections on the exact tail probability;
    absolute error well below 1e-12 over the range used here.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"qfunc_inv requires p in (0, 1), got {p}")
    # Q^{-1}(p) = -Phi^{-1}(p); evaluating the approximation at p itself
    # keeps full precision in the small-p tail.
    x = -_norm_ppf_approx(p)
    for _ in range(2):
        pdf = math.exp(-0.5 * x * x) / _SQRT_2PI
        if pdf <= 0.0:
            break
        x += (qfunc(x) - p) / pdf
    return x


def penalty_xi(tau: float, n_t: float) -> float:
    """Finite-blocklength penalty weight Q^{-1}(tau) / (ln2 * sqrt(n_t)).

    tau is a decoding-error or leakage tolerance in (0, 0.5]; the upper end
    gives Q^{-1}(0.5) = 0 and hence a vanishing penalty. n_t is the number
    of channel uses in the transmission phase (bandwidth times duration).
    """
    if not 0.0 < tau <= 0.5:
        raise ValueError(f"penalty_xi requires tau in (0, 0.5], got {tau}")
    if n_t < 1.0:
        raise ValueError(f"penalty_xi requires n_t >= 1, got {n_t}")
    if tau == 0.5:
        return 0.0
    return qfunc_inv(tau) / (math.log(2.0) * math.sqrt(n_t))


def rate(gamma) -> np.ndarray | float:
    """Shannon rate ln(1 + gamma) in nats per channel use."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0.0):
        raise ValueError("rate requires gamma >= 0")
    out = np.log1p(g)
    return out if out.shape else float(out)


def dispersion(gamma) -> np.ndarray | float:
    """Channel dispersion V(gamma) = 2*gamma/(1+gamma), in [0, 2)."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0.0):
        raise ValueError("dispersion requires gamma >= 0")
    out = 2.0 * g / (1.0 + g)
    return out if out.shape else float(out)


def jain_index(values) -> float:
    """Jain fairness index (sum v)^2 / (n * sum v^2) for nonnegative values."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("jain_index expects a nonempty 1-d array")
    if np.any(v < 0.0):
        raise ValueError("jain_index requires nonnegative values")
    ssq = float(np.sum(v * v))
    if ssq == 0.0:
        raise ValueError("jain_index undefined for all-zero rates")
    s = float(np.sum(v))
    return s * s / (v.size * ssq)


def beam_powers(h_row: np.ndarray, W: np.ndarray) -> np.ndarray:
    """|h w_j|^2 for every beam column of W, at one receiver."""
    return np.abs(h_row @ W) ** 2


def sinr(h_row: np.ndarray, W: np.ndarray, sigma: float, k: int) -> float:
    """SINR of beam k at the receiver with effective channel row h_row.

    Interference is every other beam plus noise power sigma (watts).
    """
    if sigma <= 0.0:
        raise ValueError("sinr requires sigma > 0")
    p = beam_powers(h_row, W)
    denom = float(np.sum(p)) - float(p[k]) + sigma
    return float(p[k]) / denom


@dataclass
class DesignState:
    """One operating point of the link: beams, phases, cached channels.

    W        (N, K) complex, column j is the beam for user j
    theta    (M,) reflection phases in [0, 2*pi)
    h        (K+1, N) cached effective channels, users first, eavesdropper
             in the last row; rebuilt whenever theta changes
    """

    W: np.ndarray
    theta: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        self.theta = np.asarray(self.theta, dtype=float)
        self.h = np.asarray(self.h, dtype=complex)
        if self.W.ndim != 2:
            raise ValueError("W must be (N, K)")
        if self.theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if self.h.shape != (self.h.shape[0], self.W.shape[0]):
            raise ValueError("h must be (K+1, N)")
        if self.h.shape[0] != self.W.shape[1] + 1:
            raise ValueError("h must have one row per user plus the eavesdropper")

    @property
    def n_users(self) -> int:
        return self.W.shape[1]

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))


@dataclass
class SecrecyReport:
    """Exact per-user metrics at one design point. Rates in nats."""

    gamma_user: np.ndarray      # (K,) SINR of user k on its own beam
    gamma_eve: np.ndarray       # (K,) eavesdropper SINR on beam k
    rate_user: np.ndarray       # (K,) ln(1+gamma_user)
    rate_eve: np.ndarray        # (K,)
    disp_user: np.ndarray       # (K,) V(gamma_user)
    disp_eve: np.ndarray        # (K,)
    secrecy_fbr: np.ndarray     # (K,) clipped at zero
    secrecy_fbr_raw: np.ndarray  # (K,) before clipping
    secrecy_lbr: np.ndarray     # (K,) clipped, xi = 0
    xi_user: float = 0.0
    xi_eve: float = 0.0

    @property
    def min_secrecy(self) -> float:
        return float(np.min(self.secrecy_fbr))

    @property
    def min_secrecy_raw(self) -> float:
        return float(np.min(self.secrecy_fbr_raw))

    @property
    def sum_secrecy(self) -> float:
        return float(np.sum(self.secrecy_fbr))

    @property
    def sum_secrecy_raw(self) -> float:
        return float(np.sum(self.secrecy_fbr_raw))

    def fairness(self) -> float:
        """Jain index of the clipped secrecy rates; NaN when all are zero."""
        if float(np.sum(self.secrecy_fbr ** 2)) == 0.0:
            return float("nan")
        return jain_index(self.secrecy_fbr)


def secrecy_report(state: DesignState, sigma: np.ndarray,
                   xi_user: float, xi_eve: float) -> SecrecyReport:
    """Evaluate exact secrecy metrics at a design point.

    sigma is the (K+1,) vector of receiver noise powers in watts, users
    first and the eavesdropper last, matching the rows of state.h.
    """
    K = state.n_users
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (K + 1,):
        raise ValueError("sigma must be (K+1,)")
    g_u = np.array([sinr(state.h[k], state.W, sigma[k], k) for k in range(K)])
    g_e = np.array([sinr(state.h[K], state.W, sigma[K], k) for k in range(K)])
    c_u = np.log1p(g_u)
    c_e = np.log1p(g_e)
    v_u = 2.0 * g_u / (1.0 + g_u)
    v_e = 2.0 * g_e / (1.0 + g_e)
    raw = c_u - c_e - xi_user * np.sqrt(v_u) - xi_eve * np.sqrt(v_e)
    lbr = np.maximum(c_u - c_e, 0.0)
    return SecrecyReport(
        gamma_user=g_u, gamma_eve=g_e,
        rate_user=c_u, rate_eve=c_e,
        disp_user=v_u, disp_eve=v_e,
        secrecy_fbr=np.maximum(raw, 0.0), secrecy_fbr_raw=raw,
        secrecy_lbr=lbr, xi_user=xi_user, xi_eve=xi_eve,
    )


def fbr_secrecy_value(gamma_user: float, gamma_eve: float,
                      xi_user: float, xi_eve: float) -> float:
    """Unclipped finite-blocklength secrecy rate from a pair of SINRs."""
    return (math.log1p(gamma_user) - math.log1p(gamma_eve)
            - xi_user * math.sqrt(2.0 * gamma_user / (1.0 + gamma_user))
            - xi_eve * math.sqrt(2.0 * gamma_eve / (1.0 + gamma_eve)))
