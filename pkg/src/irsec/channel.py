"""Scenario configuration and channel generation.

Signal model: Alice (N antennas) reaches every receiver only through an
M-element reflecting surface. With per-element phases theta the effective
row channel of node i is

    h_i = l_i * Diag(exp(j*theta)) * L_ar

where L_ar is the (M, N) Alice-to-surface matrix and l_i the (M,) row of
the surface-to-node link. Imperfect CSI lives entirely in l_i: the true
row is l_hat_i + e_i with ||e_i|| <= omega_i.

Path loss (dB, distances in meters):
    Alice -> surface:   G_A + G_IRS - 35.9 - 22.0 * log10(d)
    surface -> node:          G_IRS - 33.05 - 30.0 * log10(d)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi

# An (M,) float array of phases in [0, 2*pi). Unit modulus of the
# reflection coefficients holds by construction of this representation.
PhaseVector = np.ndarray


@dataclass(frozen=True)
class Geometry:
    """Node placement in meters. Heights are z coordinates."""

    alice: tuple = (15.0, 0.0, 15.0)
    irs: tuple = (0.0, 25.0, 40.0)
    user_box: tuple = (15.0, 75.0, 0.0, 60.0)   # xmin, xmax, ymin, ymax
    eve_box: tuple = (0.0, 100.0, 0.0, 100.0)
    node_height: float = 1.5
    eve_guard: float = 5.0                       # min Eve-to-user spacing


@dataclass(frozen=True)
class Scenario:
    """Full system configuration with the defaults used throughout.

    Powers in watts, durations in seconds, bandwidth in Hz, tolerances
    dimensionless. delta_* are relative CSI error radii (omega = delta *
    ||l_hat||), rician_k is the LOS power ratio of the reflected links.
    """

    n_tx: int = 4                 # Alice antennas
    n_irs: int = 16               # reflecting elements
    n_users: int = 2
    power: float = 0.1            # transmit budget, watts (20 dBm)
    noise_dbm_hz: float = -174.0  # noise power spectral density
    bandwidth: float = 1.0e6
    t_transmit: float = 1.0e-4    # transmission phase duration
    tau_user: float = 1.0e-5      # decoding error tolerance
    tau_eve: float = 1.0e-5       # leakage tolerance
    delta_user: float = 0.02
    delta_eve: float = 0.02
    rician_k: float = 3.0
    gain_alice_dbi: float = 5.0
    gain_irs_dbi: float = 5.0
    seed: int = 0
    eps_outer: float = 1.0e-3     # AO relative-change stopping threshold
    eps_penalty: float = 1.0e-3   # PCCP slack-sum threshold
    eps_move: float = 1.0e-3      # PCCP iterate-change threshold (l1)
    a_init: float = 10.0          # PCCP regularizer schedule
    a_max: float = 30.0
    a_growth: float = 2.0
    pccp_max_iter: int = 100
    ao_max_iter: int = 50
    geometry: Geometry = field(default_factory=Geometry)

    def __post_init__(self):
        if self.n_tx < 1 or self.n_irs < 1 or self.n_users < 1:
            raise ValueError("n_tx, n_irs, n_users must be positive")
        if self.power <= 0.0:
            raise ValueError("power must be positive")
        if self.bandwidth <= 0.0 or self.t_transmit <= 0.0:
            raise ValueError("bandwidth and t_transmit must be positive")
        for name in ("tau_user", "tau_eve"):
            tau = getattr(self, name)
            if not 0.0 < tau <= 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5], got {tau}")
        for name in ("delta_user", "delta_eve"):
            d = getattr(self, name)
            if not 0.0 <= d < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {d}")
        if self.rician_k < 0.0:
            raise ValueError("rician_k must be nonnegative")
        if self.a_init <= 0.0 or self.a_init > self.a_max:
            raise ValueError("need 0 < a_init <= a_max")
        if self.a_growth < 1.0:
            raise ValueError("a_growth must be >= 1")
        if self.ao_max_iter < 1 or self.pccp_max_iter < 1:
            raise ValueError("iteration caps must be positive")

    @property
    def n_channel_uses(self) -> float:
        """Blocklength of the transmission phase, bandwidth * duration."""
        return self.bandwidth * self.t_transmit

    @property
    def noise_power(self) -> float:
        """Receiver noise power in watts over the full bandwidth."""
        dbm = self.noise_dbm_hz + 10.0 * math.log10(self.bandwidth)
        return 10.0 ** (dbm / 10.0) * 1.0e-3

    def with_updates(self, **kw) -> "Scenario":
        return replace(self, **kw)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def pathloss_alice_irs_db(d: float, gain_alice_dbi: float,
                          gain_irs_dbi: float) -> float:
    """Alice-to-surface path gain in dB (negative in practice)."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    return gain_alice_dbi + gain_irs_dbi - 35.9 - 22.0 * math.log10(d)


def pathloss_irs_node_db(d: float, gain_irs_dbi: float) -> float:
    """Surface-to-node path gain in dB."""
    if d <= 0.0:
        raise ValueError("distance must be positive")
    return gain_irs_dbi - 33.05 - 30.0 * math.log10(d)


def phasor(theta: PhaseVector) -> np.ndarray:
    """Unit-modulus reflection coefficients exp(j*theta)."""
    return np.exp(1j * np.asarray(theta, dtype=float))


def wrap_phases(theta) -> PhaseVector:
    """Map phases into the canonical interval [0, 2*pi)."""
    return np.mod(np.asarray(theta, dtype=float), TWO_PI)


def cascaded_channel(l_row: np.ndarray, theta: PhaseVector,
                     L_ar: np.ndarray) -> np.ndarray:
    """Effective (N,) row channel l * Diag(exp(j*theta)) * L_ar."""
    l_row = np.asarray(l_row)
    L_ar = np.asarray(L_ar)
    if l_row.shape != (L_ar.shape[0],) or len(theta) != L_ar.shape[0]:
        raise ValueError("l_row, theta, L_ar disagree on the element count")
    return (l_row * phasor(theta)) @ L_ar


@dataclass
class ChannelSet:
    """One realization of every link, users first, eavesdropper last.

    L_ar      (M, N) Alice-to-surface matrix
    l_hat     (K+1, M) estimated surface-to-node rows
    corr      (K+1, M, M) spatial correlation at the surface per node
    omega     (K+1,) CSI error radii, omega_i = delta_i * ||l_hat_i||
    sigma     (K+1,) receiver noise powers, watts
    user_pos  (K, 3), eve_pos (3,) node coordinates, meters
    """

    L_ar: np.ndarray
    l_hat: np.ndarray
    corr: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    user_pos: np.ndarray
    eve_pos: np.ndarray

    @property
    def n_users(self) -> int:
        return self.l_hat.shape[0] - 1

    @property
    def n_irs(self) -> int:
        return self.L_ar.shape[0]

    @property
    def n_tx(self) -> int:
        return self.L_ar.shape[1]

    def effective_rows(self, theta: PhaseVector) -> np.ndarray:
        """(K+1, N) stack of estimated effective channels at phases theta."""
        return np.stack([cascaded_channel(row, theta, self.L_ar)
                         for row in self.l_hat])


def steering_alice_irs(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Draw the (M, N) Alice-to-surface matrix.

    Geometric model: every entry is a unit-magnitude phase term built from
    per-element and per-antenna angles drawn uniformly on [0, 2*pi), scaled
    by the root path gain. Element m and antenna a contribute
    pi * (m * sin(az_m) * sin(el_m) + a * sin(aod_a) * sin(el_m)).
    """
    M, N = scenario.n_irs, scenario.n_tx
    d = float(np.linalg.norm(np.subtract(scenario.geometry.alice,
                                         scenario.geometry.irs)))
    alpha = db_to_linear(pathloss_alice_irs_db(
        d, scenario.gain_alice_dbi, scenario.gain_irs_dbi))
    az = rng.uniform(0.0, TWO_PI, size=M)
    el = rng.uniform(0.0, TWO_PI, size=M)
    aod = rng.uniform(0.0, TWO_PI, size=N)
    m_idx = np.arange(M)[:, None]
    a_idx = np.arange(N)[None, :]
    phase = math.pi * (m_idx * np.sin(az)[:, None] * np.sin(el)[:, None]
                       + a_idx * np.sin(aod)[None, :] * np.sin(el)[:, None])
    return math.sqrt(alpha) * np.exp(1j * phase)


def correlation_from_direction(direction: np.ndarray, m: int) -> np.ndarray:
    """Rank-one spatial correlation seen at the surface toward a node.

    With c = sin(elevation) * sin(azimuth) of the outgoing direction the
    entries are R[l, p] = exp(j*pi*(l - p)*c); unit diagonal, PSD.
    """
    direction = np.asarray(direction, dtype=float)
    d = float(np.linalg.norm(direction))
    if d <= 0.0:
        raise ValueError("direction must be nonzero")
    azimuth = math.atan2(direction[1], direction[0])
    elevation = math.asin(direction[2] / d)
    c = math.sin(elevation) * math.sin(azimuth)
    v = np.exp(1j * math.pi * np.arange(m) * c)
    return np.outer(v, v.conj())


def sqrtm_psd(R: np.ndarray, tol: float = 1.0e-10) -> np.ndarray:
    """Hermitian square root; raises if R is materially non-PSD."""
    w, V = np.linalg.eigh(R)
    if w.min() < -tol * max(1.0, w.max()):
        raise ValueError(f"correlation matrix has negative eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def reflected_link(scenario: Scenario, node_pos: np.ndarray,
                   rng: np.random.Generator):
    """Draw one surface-to-node row: (l_hat, corr, alpha_linear).

    Rician small-scale fading with LOS ratio rician_k; the LOS part has a
    uniform random phase per element, the NLOS part is correlated through
    the rank-one surface correlation of the outgoing direction.
    """
    M = scenario.n_irs
    direction = np.asarray(node_pos, dtype=float) - np.asarray(
        scenario.geometry.irs, dtype=float)
    d = float(np.linalg.norm(direction))
    alpha = db_to_linear(pathloss_irs_node_db(d, scenario.gain_irs_dbi))
    R = correlation_from_direction(direction, M)
    kr = scenario.rician_k
    if math.isinf(kr):
        mu, s = 1.0, 0.0
    else:
        mu = math.sqrt(kr / (kr + 1.0))
        s = math.sqrt(1.0 / (kr + 1.0))
    los = np.exp(1j * rng.uniform(0.0, TWO_PI, size=M))
    nlos = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2.0)
    small = mu * los + s * nlos
    l_hat = math.sqrt(alpha) * (small @ sqrtm_psd(R))
    return l_hat, R, alpha


def draw_positions(scenario: Scenario, rng: np.random.Generator):
    """Place users uniformly in their box and the eavesdropper in its own,
    rejection-sampling Eve until she keeps the guard distance to every user."""
    geo = scenario.geometry
    K = scenario.n_users
    ux = rng.uniform(geo.user_box[0], geo.user_box[1], size=K)
    uy = rng.uniform(geo.user_box[2], geo.user_box[3], size=K)
    users = np.column_stack([ux, uy, np.full(K, geo.node_height)])
    for _ in range(10000):
        ex = rng.uniform(geo.eve_box[0], geo.eve_box[1])
        ey = rng.uniform(geo.eve_box[2], geo.eve_box[3])
        eve = np.array([ex, ey, geo.node_height])
        if np.min(np.linalg.norm(users - eve, axis=1)) >= geo.eve_guard:
            return users, eve
    raise RuntimeError("could not place the eavesdropper outside the guard radius")


def uncertainty_radius(l_hat_row: np.ndarray, delta: float) -> float:
    """CSI error-ball radius omega = delta * ||l_hat||."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    return delta * float(np.linalg.norm(l_hat_row))


def sample_error_ball(omega: float, m: int, rng: np.random.Generator,
                      n: int | None = None) -> np.ndarray:
    """Draw complex error vectors with ||e|| <= omega.

    Mixture: 80 percent uniform in the ball (radius ~ u^{1/(2m)} on the
    norm) and 20 percent exactly on the sphere, so the boundary region
    that decides worst-case feasibility is always well represented.
    """
    if omega < 0.0:
        raise ValueError("omega must be nonnegative")
    count = 1 if n is None else int(n)
    g = rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    dirs = g / norms
    u = rng.uniform(0.0, 1.0, size=(count, 1))
    radial = omega * u ** (1.0 / (2 * m))
    on_sphere = rng.uniform(size=(count, 1)) < 0.2
    radial = np.where(on_sphere, omega, radial)
    out = dirs * radial
    return out[0] if n is None else out


def generate_channels(scenario: Scenario, rng: np.random.Generator) -> ChannelSet:
    """Draw every link for one scenario realization.

    Draw order is fixed (positions, Alice-to-surface, then per-node
    reflected links users first) so a seeded generator reproduces the set.
    """
    K, M = scenario.n_users, scenario.n_irs
    users, eve = draw_positions(scenario, rng)
    L_ar = steering_alice_irs(scenario, rng)
    l_hat = np.zeros((K + 1, M), dtype=complex)
    corr = np.zeros((K + 1, M, M), dtype=complex)
    for k in range(K):
        l_hat[k], corr[k], _ = reflected_link(scenario, users[k], rng)
    l_hat[K], corr[K], _ = reflected_link(scenario, eve, rng)
    deltas = np.array([scenario.delta_user] * K + [scenario.delta_eve])
    omega = np.array([uncertainty_radius(l_hat[i], deltas[i])
                      for i in range(K + 1)])
    sigma = np.full(K + 1, scenario.noise_power)
    return ChannelSet(L_ar=L_ar, l_hat=l_hat, corr=corr, omega=omega,
                      sigma=sigma, user_pos=users, eve_pos=eve)
