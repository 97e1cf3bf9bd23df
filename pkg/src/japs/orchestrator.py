"""Alternating optimization driver.

One outer iteration refreshes, in order: the sensing receive filter (a
generalized Rayleigh maximizer, free because it has no objective role), the
transmit covariances (SCA + rank-one penalty given the uplink state), and
one fractional-programming pass over the uplink auxiliaries, receive
filters, and powers.  The loop stops when the relative sum-rate change drops
below the configured threshold.  Scheme variants reuse the same machinery:
receiver masks restrict which stations fuse the echo, the communication-only
variant drops the sensing floor, and the regularized zero-forcing baseline
freezes the transmit side.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import rxopt, txbf
from .metrics import BeamformerSolution, lift_columns, metrics_report, sum_rate
from .scenario import ChannelSet, ScenarioConfig
from .txbf import InfeasibleSensing


class NonMonotoneTrace(RuntimeError):
    """The sum-rate trace decreased beyond tolerance; a solver bug."""


class Scheme(enum.Enum):
    JAPS = "japs"
    ACTIVE_ONLY = "as"
    PASSIVE_ONLY = "ps"
    COMM_ONLY = "comm"
    RZF = "rzf"


@dataclass
class AlgorithmOptions:
    scheme: Scheme = Scheme.JAPS
    max_outer_iters: int = 50
    rzf_comm_fraction: float = 0.8
    # the uplink block is cheap (closed forms), so it runs to its own fixed
    # point inside each outer iteration; the cap is a safety valve
    max_fp_cycles: int = 50
    fp_rel_tol: float = 1e-6

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.max_fp_cycles < 1:
            raise ValueError("max_fp_cycles must be >= 1")


@dataclass
class RunTrace:
    sum_rate: list = field(default_factory=list)
    sensing_sinr: list = field(default_factory=list)
    max_rank_residual: list = field(default_factory=list)
    inner_iter_counts: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    termination_reason: str = ""

    @property
    def iterations(self) -> int:
        # the first row records the initial point
        return max(len(self.sum_rate) - 1, 0)


def receiver_mask(scheme: Scheme, ch: ChannelSet) -> np.ndarray:
    """Boolean support of the fusion/UL receive filters for a scheme."""
    mask = np.ones(ch.n_total, dtype=bool)
    if scheme is Scheme.ACTIVE_ONLY:
        mask[ch.n0:] = False
    elif scheme is Scheme.PASSIVE_ONLY:
        mask[:ch.n0] = False
    return mask


def sensing_constrained(scheme: Scheme) -> bool:
    return scheme is not Scheme.COMM_ONLY


def feasibility_check(ch: ChannelSet, config: ScenarioConfig,
                      options: AlgorithmOptions) -> float:
    """Best sensing SINR under full-power isotropic transmit covariance and
    full UL power; raises if it cannot reach the threshold."""
    mask = receiver_mask(options.scheme, ch)
    cov = (config.p_max_pbs / config.m) * np.eye(config.m, dtype=complex)
    p = np.full(ch.num_ul, config.p_max_ue)
    val = rxopt.max_sensing_sinr(ch, cov, p, mask=mask)
    if sensing_constrained(options.scheme) and val < config.gamma_sense * (1 - 1e-6):
        raise InfeasibleSensing(
            f"max achievable sensing SINR {val:.4g} below threshold "
            f"{config.gamma_sense:.4g}")
    return val


def rzf_beamformer(ch: ChannelSet, config: ScenarioConfig,
                   comm_fraction: float = 0.8):
    """Regularized zero-forcing transmit baseline.

    Columns are rescaled to split comm_fraction of the budget equally; the
    remainder becomes an isotropic radar covariance.
    """
    d = ch.num_dl
    if d < 1:
        raise ValueError("needs at least one DL UE")
    h = ch.h_dl.T  # (M, D)
    reg = d * ch.noise_dl / config.p_max_pbs
    w = h @ np.linalg.inv(h.conj().T @ h + reg * np.eye(d))
    per_col = comm_fraction * config.p_max_pbs / d
    for k in range(d):
        nrm = np.linalg.norm(w[:, k])
        if nrm > 0:
            w[:, k] *= np.sqrt(per_col) / nrm
    v_r = ((1.0 - comm_fraction) * config.p_max_pbs / config.m) * \
        np.eye(config.m, dtype=complex)
    return w, v_r


def initialize(ch: ChannelSet, config: ScenarioConfig,
               options: AlgorithmOptions) -> BeamformerSolution:
    """Feasible starting point: matched-filter beams over 80% of the budget,
    isotropic radar covariance over the rest, full UL power, MMSE-style UL
    filters, and the optimal sensing filter.

    If the matched-filter point misses the sensing floor it is blended
    toward the full-power isotropic covariance until the floor is met.
    """
    m, p_max = config.m, config.p_max_pbs
    mask = receiver_mask(options.scheme, ch)
    dcount, ucount = ch.num_dl, ch.num_ul

    if options.scheme is Scheme.RZF:
        w_c, v_r = rzf_beamformer(ch, config, options.rzf_comm_fraction)
    else:
        w_c = np.zeros((m, dcount), dtype=complex)
        for d in range(dcount):
            h = ch.h_dl[d]
            w_c[:, d] = np.sqrt(0.8 * p_max / dcount) * h / np.linalg.norm(h)
        v_r = (0.2 * p_max / m) * np.eye(m, dtype=complex)

    p = np.full(ucount, config.p_max_ue)
    w_lifted = lift_columns(w_c) if dcount else np.zeros((0, m, m), dtype=complex)

    if sensing_constrained(options.scheme) and options.scheme is not Scheme.RZF:
        iso = (p_max / m) * np.eye(m, dtype=complex)
        for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
            cov = (1 - rho) * (w_lifted.sum(axis=0) + v_r) + rho * iso
            if rxopt.max_sensing_sinr(ch, cov, p, mask=mask) >= config.gamma_sense:
                break
        w_c = np.sqrt(1 - rho) * w_c
        w_lifted = (1 - rho) * w_lifted
        v_r = (1 - rho) * v_r + rho * iso

    cov = w_lifted.sum(axis=0) + v_r
    u = rxopt.optimal_receive_filter(ch, cov, p, mask=mask)

    # MMSE-style UL filters from the initial powers and covariance
    idx = np.flatnonzero(mask)
    base = ch.b0 @ cov @ ch.b0.conj().T
    for up in range(ucount):
        base += p[up] * np.outer(ch.h_ul[up], ch.h_ul[up].conj())
    base += ch.noise_ul * np.eye(ch.n_total)
    v_u = np.zeros((ucount, ch.n_total), dtype=complex)
    sub = base[np.ix_(idx, idx)]
    for uu in range(ucount):
        v = np.zeros(ch.n_total, dtype=complex)
        v[idx] = np.linalg.solve(sub, ch.h_ul[uu][idx])
        v_u[uu] = v
    return BeamformerSolution(w_c=w_c, v_r=v_r, w_lifted=w_lifted, u=u,
                              v_u=v_u, p=p)


def optimize(ch: ChannelSet, config: ScenarioConfig,
             options: AlgorithmOptions = None):
    """Run the alternating loop; returns (BeamformerSolution, RunTrace)."""
    options = options or AlgorithmOptions()
    scheme = options.scheme
    mask = receiver_mask(scheme, ch)
    constrained = sensing_constrained(scheme)
    if constrained:
        feasibility_check(ch, config, options)

    sol = initialize(ch, config, options)
    trace = RunTrace()
    start = time.perf_counter()
    rate = sum_rate(ch, sol)
    trace.sum_rate.append(rate)
    trace.sensing_sinr.append(_safe_sensing(ch, sol))
    trace.max_rank_residual.append(
        max((txbf.rank_one_residual(w) for w in sol.w_lifted), default=0.0))
    trace.inner_iter_counts.append(0)
    trace.wall_time.append(time.perf_counter() - start)

    xi = config.tol.xi_outer
    for it in range(options.max_outer_iters):
        t0 = time.perf_counter()
        u = rxopt.optimal_receive_filter(ch, sol.total_covariance(), sol.p,
                                         mask=mask)
        sol = BeamformerSolution(w_c=sol.w_c, v_r=sol.v_r, w_lifted=sol.w_lifted,
                                 u=u, v_u=sol.v_u, p=sol.p)
        inner = 0
        if scheme is not Scheme.RZF:
            w_lifted, v_r, pstate = txbf.solve_transmit_beamforming(
                ch, sol.u, sol.v_u, sol.p, config,
                (sol.w_lifted, sol.v_r), include_sensing=constrained)
            w_c = np.stack([txbf.extract_rank_one(w) for w in w_lifted]).T \
                if ch.num_dl else sol.w_c
            sol = BeamformerSolution(w_c=w_c, v_r=v_r, w_lifted=w_lifted,
                                     u=sol.u, v_u=sol.v_u, p=sol.p)
            inner = pstate.inner_iterations
            resid = float(pstate.residuals.max()) if pstate.residuals.size else 0.0
        else:
            resid = 0.0

        fp_prev = sum_rate(ch, sol)
        for _ in range(options.max_fp_cycles):
            sol, _aux = rxopt.fp_cycle(ch, sol, config.gamma_sense,
                                       config.p_max_ue, mask=mask,
                                       include_sensing=constrained)
            fp_cur = sum_rate(ch, sol)
            if abs(fp_cur - fp_prev) <= options.fp_rel_tol * max(abs(fp_prev), 1e-12):
                break
            fp_prev = fp_cur

        new_rate = sum_rate(ch, sol)
        trace.sum_rate.append(new_rate)
        trace.sensing_sinr.append(_safe_sensing(ch, sol))
        trace.max_rank_residual.append(resid)
        trace.inner_iter_counts.append(inner)
        trace.wall_time.append(time.perf_counter() - t0)

        if new_rate < rate - 1e-6 * max(abs(rate), 1e-12):
            raise NonMonotoneTrace(
                f"sum rate fell from {rate:.9g} to {new_rate:.9g} at iteration {it + 1}")
        improvement = abs(new_rate - rate) / max(abs(rate), 1e-12)
        rate = new_rate
        if improvement < xi:
            trace.termination_reason = "converged"
            break
    else:
        trace.termination_reason = "max_iterations"
    return sol, trace


def _safe_sensing(ch: ChannelSet, sol: BeamformerSolution) -> float:
    from .metrics import sensing_sinr
    if np.linalg.norm(sol.u) == 0:
        return 0.0
    return sensing_sinr(ch, sol)
