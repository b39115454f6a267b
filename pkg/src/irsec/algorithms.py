"""Alternating-optimization drivers for the secure downlink design.

One outer iteration alternates a beamforming step (cone program over the
beams at frozen phases) with a reflection step (closed-form phase update
against the linearized minorant). Every substep is safeguarded: a
candidate that does not improve the true objective is rejected and the
incumbent kept, which makes the per-iteration objective trace provably
non-decreasing; the assertion enforcing that is a hard error because a
violation means a surrogate or solver bug, not a modeling choice.

Objectives: "maxmin" maximizes the worst per-user secrecy rate,
"ssr" the sum. The finite-blocklength penalty weights follow from the
scenario tolerances; fbr=False zeroes them, recovering the long-block
design as a special case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .channel import ChannelSet, Scenario, wrap_phases
from .metrics import DesignState, SecrecyReport, penalty_xi, secrecy_report
from .surrogate import (ThetaSurrogate, WSurrogate, build_theta_surrogate,
                        build_w_surrogate, closed_form_theta)

MONOTONE_TOL = 1.0e-6
REL_FLOOR = 1.0e-8


@dataclass
class IterationRow:
    """One outer iteration of a run, exact metrics recomputed at its end."""

    index: int
    min_secrecy: float            # unclipped worst user, nats
    min_secrecy_clipped: float
    sum_secrecy: float            # unclipped sum, nats
    sum_secrecy_clipped: float
    objective: float              # subproblem objective value
    penalty: float = 0.0          # phase-step slack total (robust runs)
    regularizer: float = 0.0      # phase-step regularizer weight (robust)
    phase_modulus_dev: float = 0.0   # max | |v_m| - 1 | before projection
    phase_project_shift: float = 0.0  # relative metric change from projection
    solver_status: str = ""
    solver_iterations: int = 0
    w_rejected: bool = False
    theta_rejected: bool = False


@dataclass
class RunTrace:
    """Outcome of one alternating-optimization run."""

    rows: list[IterationRow] = field(default_factory=list)
    status: str = "MaxIter"       # Converged | MaxIter | Safeguarded
    objective: str = "maxmin"
    csi: str = "perfect"
    fbr: bool = True
    floor_events: int = 0
    certificate: object | None = None   # worst-case bounds for robust runs

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def metric_series(self) -> np.ndarray:
        """Per-iteration driver metric (certified objective for robust runs,
        exact unclipped aggregate otherwise)."""
        if self.csi == "robust":
            return np.array([r.objective for r in self.rows])
        key = "min_secrecy" if self.objective == "maxmin" else "sum_secrecy"
        return np.array([getattr(r, key) for r in self.rows])


def penalty_weights(scenario: Scenario, fbr: bool) -> tuple[float, float]:
    if not fbr:
        return 0.0, 0.0
    n_t = scenario.n_channel_uses
    return (penalty_xi(scenario.tau_user, n_t),
            penalty_xi(scenario.tau_eve, n_t))


def make_state(channels: ChannelSet, W: np.ndarray,
               theta: np.ndarray) -> DesignState:
    theta = wrap_phases(theta)
    return DesignState(W=np.asarray(W, dtype=complex), theta=theta,
                       h=channels.effective_rows(theta))


def evaluate(state: DesignState, channels: ChannelSet, xi_user: float,
             xi_eve: float) -> SecrecyReport:
    return secrecy_report(state, channels.sigma, xi_user, xi_eve)


def _aggregate(report: SecrecyReport, objective: str) -> float:
    if objective == "maxmin":
        return report.min_secrecy_raw
    return report.sum_secrecy_raw


def init_state(scenario: Scenario, channels: ChannelSet,
               mode: str = "random", rng: np.random.Generator | None = None,
               fbr: bool = True, objective: str = "maxmin") -> DesignState:
    """Starting point for the alternation.

    "random" draws uniform phases and points equal-power matched-filter
    beams at the resulting effective channels, meeting the power budget
    with equality. "lbr-warm" first runs the long-block variant to
    convergence and starts from its design; requesting it for a run that
    is already long-block falls back to "random".
    """
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    if mode == "lbr-warm" and fbr:
        trace, state = run_maxmin_perfect(scenario, channels, fbr=False,
                                          rng=rng, objective=objective)
        return state
    if mode not in ("random", "lbr-warm"):
        raise ValueError(f"unknown init mode {mode!r}")
    theta = rng.uniform(0.0, 2.0 * math.pi, scenario.n_irs)
    rows = channels.effective_rows(theta)
    K = scenario.n_users
    W = np.zeros((scenario.n_tx, K), dtype=complex)
    per_beam = math.sqrt(scenario.power / K)
    for k in range(K):
        hk = rows[k]
        nrm = np.linalg.norm(hk)
        if nrm == 0.0:
            W[:, k] = per_beam / math.sqrt(scenario.n_tx)
        else:
            W[:, k] = per_beam * hk.conj() / nrm
    return make_state(channels, W, theta)


# -- beamforming step (perfect CSI) -------------------------------------

def _beam_subproblem(surrs: list[WSurrogate], power: float,
                     objective: str) -> tuple[conic.ConicProblem, conic.VarTable]:
    """Cone program over realified beams with epigraph objective(s).

    Each user's minorant gives a quadratic-below-affine constraint,
    written as a Lorentz-cone row after factoring the PSD per-beam
    kernels; the power budget is a plain norm bound.
    """
    K = len(surrs)
    N = surrs[0].lin.shape[0]
    nw = 2 * N * K
    names = conic.VarTable()
    names.add("w", nw)
    if objective == "maxmin":
        obj_idx = [names.add_scalar("worst")]
        epi_of = [0] * K
    else:
        obj_idx = [names.add_scalar(f"rate{k}") for k in range(K)]
        epi_of = list(range(K))
    prob = conic.ConicProblem(names.n, names)
    c = np.zeros(names.n)
    for i in obj_idx:
        c[i] = 1.0
    prob.maximize(c)

    for k, s in enumerate(surrs):
        q = np.zeros(names.n)
        for j in range(K):
            y = s.lin[:, j]
            q[2 * N * j: 2 * N * j + N] = 2.0 * y.real
            q[2 * N * j + N: 2 * N * (j + 1)] = 2.0 * y.imag
        q[obj_idx[epi_of[k]]] = -1.0
        factors = []
        for j in range(K):
            Pr = conic.realify_hermitian(s.quad[j])
            vals, vecs = np.linalg.eigh(Pr)
            keep = vals > 1.0e-12 * max(1.0, float(vals[-1]))
            factors.append((j, vecs[:, keep] * np.sqrt(vals[keep])))
        r_total = sum(B.shape[1] for _, B in factors)
        A = np.zeros((2 + r_total, names.n))
        b = np.zeros(2 + r_total)
        A[0] = -q
        b[0] = s.const + 1.0
        row = 1
        for j, B in factors:
            r = B.shape[1]
            A[row: row + r, 2 * N * j: 2 * N * (j + 1)] = -2.0 * B.T
            row += r
        A[row] = -q
        b[row] = s.const - 1.0
        prob.add_soc(A, b)

    A = np.zeros((1 + nw, names.n))
    A[1:, :nw] = -np.eye(nw)
    b = np.zeros(1 + nw)
    b[0] = math.sqrt(power)
    prob.add_soc(A, b)
    return prob, names


def _unpack_beams(wr: np.ndarray, n: int, k: int) -> np.ndarray:
    W = np.zeros((n, k), dtype=complex)
    for j in range(k):
        W[:, j] = wr[2 * n * j: 2 * n * j + n] + 1j * wr[2 * n * j + n: 2 * n * (j + 1)]
    return W


def beamforming_step_perfect(state: DesignState, channels: ChannelSet,
                             scenario: Scenario, xi_user: float, xi_eve: float,
                             objective: str = "maxmin",
                             solver: str = "builtin"):
    """One cone solve over the beams; returns (W, solution, surrogates),
    with W None when the solver did not reach optimality."""
    K = state.n_users
    surrs = [build_w_surrogate(state.h, state.W, channels.sigma,
                               xi_user, xi_eve, k) for k in range(K)]
    prob, names = _beam_subproblem(surrs, scenario.power, objective)
    sol = conic.get_solver(solver)(prob)
    if sol.status != "Optimal":
        return None, sol, surrs
    W = _unpack_beams(names.value("w", sol.x), scenario.n_tx, K)
    return W, sol, surrs


def pre_step_perfect(state: DesignState, channels: ChannelSet,
                     xi_user: float, xi_eve: float,
                     objective: str = "maxmin"):
    """Closed-form phase update against the linearized minorants."""
    K = state.n_users
    u_bar = np.exp(1j * state.theta)
    surrs = [build_theta_surrogate(channels.l_hat, channels.L_ar, state.W,
                                   u_bar, channels.sigma, xi_user, xi_eve, k)
             for k in range(K)]
    mode = "min" if objective == "maxmin" else "sum"
    theta, score, _ = closed_form_theta(surrs, state.theta, mode)
    return theta, score, surrs


# -- outer loops ---------------------------------------------------------

def _monotone_check(metric: float, prev: float, context: str):
    if metric < prev - MONOTONE_TOL:
        raise RuntimeError(
            f"objective decreased during {context}: {prev:.9e} -> "
            f"{metric:.9e}; the safeguards should have made this impossible")


def run_maxmin_perfect(scenario: Scenario, channels: ChannelSet,
                       fbr: bool = True, rng: np.random.Generator | None = None,
                       init_mode: str = "random", objective: str = "maxmin",
                       solver: str = "builtin"):
    """Alternating optimization under perfect channel knowledge.

    Returns (trace, state). The trace metric is the exact unclipped
    aggregate secrecy rate; it never decreases across iterations.
    """
    xi_u, xi_e = penalty_weights(scenario, fbr)
    state = init_state(scenario, channels, init_mode, rng, fbr, objective)
    trace = RunTrace(objective=objective, csi="perfect", fbr=fbr)
    report = evaluate(state, channels, xi_u, xi_e)
    prev = _aggregate(report, objective)
    floor_events = 0

    for it in range(1, scenario.ao_max_iter + 1):
        W_prev = state.W.copy()
        theta_prev = state.theta.copy()
        W_cand, sol, wsurrs = beamforming_step_perfect(
            state, channels, scenario, xi_u, xi_e, objective, solver)
        floor_events += sum(s.floor_applied for s in wsurrs)
        w_rejected = True
        if W_cand is not None:
            cand = make_state(channels, W_cand, state.theta)
            cand_rep = evaluate(cand, channels, xi_u, xi_e)
            if _aggregate(cand_rep, objective) >= prev:
                state, report = cand, cand_rep
                w_rejected = False
        mid = _aggregate(report, objective)

        theta_cand, score, tsurrs = pre_step_perfect(
            state, channels, xi_u, xi_e, objective)
        floor_events += sum(s.floor_applied for s in tsurrs)
        theta_rejected = True
        cand = make_state(channels, state.W, theta_cand)
        cand_rep = evaluate(cand, channels, xi_u, xi_e)
        if _aggregate(cand_rep, objective) >= mid:
            state, report = cand, cand_rep
            theta_rejected = False

        # alternating updates zigzag along valleys that couple beams and
        # profile; extending the round's combined displacement while the
        # exact metric improves costs one closed-form report per try and
        # cuts the crawl to a stride
        if not (w_rejected and theta_rejected):
            cur = _aggregate(report, objective)
            dW = state.W - W_prev
            dth = np.angle(np.exp(1j * (state.theta - theta_prev)))
            budget = math.sqrt(scenario.power)
            for t in (1.0, 3.0, 7.0, 15.0):
                W_try = state.W + t * dW
                nrm = float(np.linalg.norm(W_try))
                if nrm > budget:
                    W_try = W_try * (budget / nrm)
                cand = make_state(channels, W_try, state.theta + t * dth)
                cand_rep = evaluate(cand, channels, xi_u, xi_e)
                if _aggregate(cand_rep, objective) <= cur:
                    break
                state, report = cand, cand_rep
                cur = _aggregate(report, objective)

        metric = _aggregate(report, objective)
        _monotone_check(metric, prev, f"iteration {it}")
        trace.rows.append(IterationRow(
            index=it,
            min_secrecy=report.min_secrecy_raw,
            min_secrecy_clipped=report.min_secrecy,
            sum_secrecy=report.sum_secrecy_raw,
            sum_secrecy_clipped=report.sum_secrecy,
            objective=sol.objective if sol.status == "Optimal" else float("nan"),
            solver_status=sol.status,
            solver_iterations=sol.iterations,
            w_rejected=w_rejected,
            theta_rejected=theta_rejected,
        ))
        rel = abs(metric - prev) / max(abs(prev), REL_FLOOR)
        prev = metric
        if rel <= scenario.eps_outer:
            trace.status = "Converged"
            break
    trace.floor_events = floor_events
    return trace, state


def run_ssr(scenario: Scenario, channels: ChannelSet, csi: str = "perfect",
            fbr: bool = True, rng: np.random.Generator | None = None,
            init_mode: str = "random", solver: str = "builtin"):
    """Sum-secrecy-rate variant of the alternation."""
    if csi == "perfect":
        return run_maxmin_perfect(scenario, channels, fbr=fbr, rng=rng,
                                  init_mode=init_mode, objective="ssr",
                                  solver=solver)
    if csi == "robust":
        return run_maxmin_robust(scenario, channels, fbr=fbr, rng=rng,
                                 init_mode=init_mode, objective="ssr",
                                 solver=solver)
    raise ValueError(f"unknown csi mode {csi!r}")


def run_maxmin_robust(scenario: Scenario, channels: ChannelSet,
                      fbr: bool = True, rng: np.random.Generator | None = None,
                      init_mode: str = "random", objective: str = "maxmin",
                      solver: str = "builtin", warm_state=None):
    """Worst-case design under bounded CSI errors; see the robust module."""
    from .robust import run_robust
    return run_robust(scenario, channels, fbr=fbr, rng=rng,
                      init_mode=init_mode, objective=objective, solver=solver,
                      warm_state=warm_state)
