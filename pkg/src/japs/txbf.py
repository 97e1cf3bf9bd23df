"""Transmit-beamforming stage.

Given the sensing receive filter, UL receive filters, and UL powers, the
lifted covariances (one per DL UE, plus the general-rank radar covariance)
are optimized by successive convex approximation: each rate term is replaced
by the concave surrogate obtained from a first-order expansion of its
interference log, the rank-one requirement on the per-UE covariances enters
as a nuclear-minus-spectral penalty with the spectral norm linearized at the
current point, and the resulting log-affine subproblem goes to the barrier
solver.  A double loop drives it: inner SCA passes at a fixed penalty factor
until the surrogate objective stalls, outer stages shrink the penalty factor
geometrically until every covariance is rank-one to tolerance.

All rates are in bits (base-2 logs); the gradient matrices carry the
matching log2(e) factor, and the solver's natural-log terms get log2(e)
weights so objective values line up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import AffineFunctional, Infeasible, LogAffineSdp, solve
from .scenario import ChannelSet, ScenarioConfig

LOG2E = float(np.log2(np.e))


class DegenerateExpansion(ValueError):
    """A surrogate expansion point has a nonpositive log argument."""


class InfeasibleSensing(RuntimeError):
    """The sensing constraint cannot be met by any admissible covariance."""


class NoRankOneConvergence(RuntimeError):
    """Penalty loop exhausted its stages with residual above tolerance."""

    def __init__(self, residuals):
        super().__init__(f"rank-one residuals {residuals} above tolerance")
        self.residuals = residuals


@dataclass
class SurrogateCoefficients:
    """First-order data of the rate surrogates at one expansion point.

    a_d / a_u are the interference-log constants (bits); b_d / b_u the PSD
    gradient matrices of those logs.  The surrogates are tight at
    expansion_w / expansion_vr and minorize the true rates elsewhere.
    """

    a_d: np.ndarray
    a_u: np.ndarray
    b_d: np.ndarray          # (D, M, M)
    b_u: np.ndarray          # (U, M, M)
    expansion_w: np.ndarray  # (D, M, M)
    expansion_vr: np.ndarray


@dataclass
class PenaltyState:
    """Diagnostics of one double-loop run."""

    eta1: float
    residuals: np.ndarray
    inner_iterations: int
    outer_iterations: int
    eta1_history: list = field(default_factory=list)
    inner_per_stage: list = field(default_factory=list)
    surrogate_objectives: list = field(default_factory=list)
    true_objectives: list = field(default_factory=list)


def dl_channel_outer(ch: ChannelSet, d: int) -> np.ndarray:
    h = ch.h_dl[d]
    return np.outer(h, h.conj())


def ul_quadratic_matrix(ch: ChannelSet, v: np.ndarray) -> np.ndarray:
    """M x M PSD matrix K with v^H B0 X B0^H v = Re tr(K X)."""
    bv = ch.b0.conj().T @ v
    return np.outer(bv, bv.conj())


def dl_interference_constant(ch: ChannelSet, p: np.ndarray, d: int) -> float:
    """Covariance-independent DL interference: UL cross links plus noise."""
    return float(np.sum(p * np.abs(ch.h_cross[d]) ** 2) + ch.noise_dl)


def ul_interference_constant(ch: ChannelSet, v_u: np.ndarray, p: np.ndarray, u: int) -> float:
    """Covariance-independent UL interference: multiuser term plus noise.

    Uses the coherent multiuser form matching the UL SINR definition, shared
    by both logs of the surrogate so the bound is tight at the expansion.
    """
    v = v_u[u]
    others = np.zeros(ch.n_total, dtype=complex)
    for up in range(ch.num_ul):
        if up != u:
            others += np.sqrt(p[up]) * ch.h_ul[up]
    mui = float(np.abs(np.vdot(v, others)) ** 2)
    return mui + ch.noise_ul * float(np.vdot(v, v).real)


def ul_signal_constant(ch: ChannelSet, v_u: np.ndarray, p: np.ndarray, u: int) -> float:
    return float(p[u] * np.abs(np.vdot(v_u[u], ch.h_ul[u])) ** 2)


def _trace(mat: np.ndarray, x: np.ndarray) -> float:
    return float(np.real(np.sum(mat * x.T)))


def theta_dl_true(d: int, ch: ChannelSet, w_lifted, v_r, p) -> float:
    """Exact DL rate term (bits) at the given lifted covariances."""
    hh = dl_channel_outer(ch, d)
    sig = _trace(hh, w_lifted[d])
    psi = sum(_trace(hh, w_lifted[dp]) for dp in range(ch.num_dl) if dp != d)
    psi += _trace(hh, v_r) + dl_interference_constant(ch, p, d)
    return float(np.log2(1.0 + max(sig, 0.0) / psi))


def theta_ul_true(u: int, ch: ChannelSet, w_lifted, v_r, v_u, p) -> float:
    """Exact UL rate term (bits); the covariances enter the denominator."""
    k = ul_quadratic_matrix(ch, v_u[u])
    cov = np.sum(w_lifted, axis=0) + v_r
    psi = max(_trace(k, cov), 0.0) + ul_interference_constant(ch, v_u, p, u)
    return float(np.log2(1.0 + ul_signal_constant(ch, v_u, p, u) / psi))


def surrogate_coefficients(expansion, ch: ChannelSet, v_u: np.ndarray,
                           p: np.ndarray) -> SurrogateCoefficients:
    """Constants and gradients of the interference logs at the expansion."""
    w_exp, vr_exp = expansion
    w_exp = np.asarray(w_exp)
    m = ch.m
    dcount, ucount = ch.num_dl, ch.num_ul
    a_d = np.zeros(dcount)
    b_d = np.zeros((dcount, m, m), dtype=complex)
    for d in range(dcount):
        hh = dl_channel_outer(ch, d)
        psi = sum(_trace(hh, w_exp[dp]) for dp in range(dcount) if dp != d)
        psi += _trace(hh, vr_exp) + dl_interference_constant(ch, p, d)
        if psi <= 0.0:
            raise DegenerateExpansion(f"DL interference log argument {psi} <= 0")
        a_d[d] = np.log2(psi)
        b_d[d] = LOG2E * hh / psi
    a_u = np.zeros(ucount)
    b_u = np.zeros((ucount, m, m), dtype=complex)
    cov = np.sum(w_exp, axis=0) + vr_exp if dcount else vr_exp
    for u in range(ucount):
        k = ul_quadratic_matrix(ch, v_u[u])
        psi = max(_trace(k, cov), 0.0) + ul_interference_constant(ch, v_u, p, u)
        if psi <= 0.0:
            raise DegenerateExpansion(f"UL interference log argument {psi} <= 0")
        a_u[u] = np.log2(psi)
        b_u[u] = LOG2E * k / psi
    return SurrogateCoefficients(a_d=a_d, a_u=a_u, b_d=b_d, b_u=b_u,
                                 expansion_w=w_exp.copy(), expansion_vr=vr_exp.copy())


def theta_dl_lb(d: int, coeffs: SurrogateCoefficients, ch: ChannelSet,
                w_lifted, v_r, p) -> float:
    """DL surrogate (bits): tight at the expansion, a lower bound elsewhere."""
    hh = dl_channel_outer(ch, d)
    total = sum(_trace(hh, w_lifted[dp]) for dp in range(ch.num_dl))
    total += _trace(hh, v_r) + dl_interference_constant(ch, p, d)
    val = np.log2(total) - coeffs.a_d[d]
    for dp in range(ch.num_dl):
        if dp != d:
            val -= _trace(coeffs.b_d[d], w_lifted[dp] - coeffs.expansion_w[dp])
    val -= _trace(coeffs.b_d[d], v_r - coeffs.expansion_vr)
    return float(val)


def theta_ul_lb(u: int, coeffs: SurrogateCoefficients, ch: ChannelSet,
                w_lifted, v_r, v_u, p) -> float:
    k = ul_quadratic_matrix(ch, v_u[u])
    cov = np.sum(w_lifted, axis=0) + v_r
    total = max(_trace(k, cov), 0.0) + ul_signal_constant(ch, v_u, p, u)
    total += ul_interference_constant(ch, v_u, p, u)
    val = np.log2(total) - coeffs.a_u[u]
    for dp in range(ch.num_dl):
        val -= _trace(coeffs.b_u[u], w_lifted[dp] - coeffs.expansion_w[dp])
    val -= _trace(coeffs.b_u[u], v_r - coeffs.expansion_vr)
    return float(val)


def principal_eigenvector(mat: np.ndarray) -> np.ndarray:
    """Unit principal eigenvector with a deterministic phase: the first
    non-negligible entry is made real positive."""
    vals, vecs = np.linalg.eigh((mat + mat.conj().T) / 2.0)
    v = vecs[:, -1]
    idx = np.flatnonzero(np.abs(v) > 1e-12 * max(np.abs(v).max(), 1e-300))
    if len(idx):
        lead = v[idx[0]]
        v = v * (lead.conj() / abs(lead))
    return v


def spectral_penalty_linearization(w_point: np.ndarray):
    """Affine upper bound on -||W||_2 around w_point, as (coeff, const):
    value(W) = Re tr(coeff @ W) + const with coeff = -v v^H for the
    principal eigenvector v.  Exact at w_point for PSD input."""
    v = principal_eigenvector(w_point)
    lmax = float(np.real(v.conj() @ w_point @ v))
    coeff = -np.outer(v, v.conj())
    # the Taylor constant -||w||_2 + v^H w v vanishes for PSD input; keep the
    # exact float value rather than hard-coding zero
    const = -float(np.linalg.norm(w_point, 2)) + lmax
    return coeff, const


def rank_one_residual(w: np.ndarray) -> float:
    """Nuclear-minus-spectral gap of a PSD matrix: zero iff rank <= 1."""
    tr = float(np.trace(w).real)
    lmax = float(np.linalg.eigvalsh((w + w.conj().T) / 2.0)[-1])
    return max(tr - lmax, 0.0)


def sensing_constraint_row(ch: ChannelSet, u: np.ndarray, p: np.ndarray,
                           gamma: float):
    """Linear form of `sensing SINR >= gamma` in the lifted covariances.

    With X the total transmit covariance the constraint reads
    Re tr(K X) <= -gamma * a_s, K = gamma * gu gu^H - au au^H, where
    gu = G^H u, au = A^H u, and a_s collects the UL and noise power at the
    filter output.  The row is normalized to unit max coefficient.
    """
    au = ch.a_stacked.conj().T @ u
    gu = ch.g_effective.conj().T @ u
    a_s = float(sum(p[k] * np.abs(np.vdot(u, ch.h_ul[k])) ** 2
                    for k in range(ch.num_ul)))
    a_s += ch.noise_sense * float(np.vdot(u, u).real)
    k_mat = gamma * np.outer(gu, gu.conj()) - np.outer(au, au.conj())
    bound = -gamma * a_s
    scale = max(float(np.abs(k_mat).max()), abs(bound), 1e-300)
    return k_mat / scale, bound / scale


def assemble_subproblem(coeffs: SurrogateCoefficients, u: np.ndarray,
                        p: np.ndarray, eta1: float, penalty_lins,
                        ch: ChannelSet, config: ScenarioConfig,
                        include_sensing: bool = True,
                        v_u: np.ndarray = None) -> LogAffineSdp:
    """Log-affine form of the penalized surrogate subproblem.

    Blocks are the D per-UE covariances followed by the radar covariance;
    log terms are the signal+interference totals of each rate; the linear
    objective carries the SCA gradients and the penalty terms; constraints
    are the transmit power budget and (optionally) the sensing floor.
    """
    m, dcount, ucount = ch.m, ch.num_dl, ch.num_ul
    nblocks = dcount + 1
    offset = 0.0

    log_terms = []
    for d in range(dcount):
        hh = dl_channel_outer(ch, d)
        fn = AffineFunctional([hh] * nblocks, dl_interference_constant(ch, p, d))
        log_terms.append((LOG2E, fn))
        offset -= coeffs.a_d[d]
        offset += sum(_trace(coeffs.b_d[d], coeffs.expansion_w[dp])
                      for dp in range(dcount) if dp != d)
        offset += _trace(coeffs.b_d[d], coeffs.expansion_vr)
    for uu in range(ucount):
        k = ul_quadratic_matrix(ch, v_u[uu])
        const = ul_signal_constant(ch, v_u, p, uu) + ul_interference_constant(ch, v_u, p, uu)
        log_terms.append((LOG2E, AffineFunctional([k] * nblocks, const)))
        offset -= coeffs.a_u[uu]
        offset += sum(_trace(coeffs.b_u[uu], coeffs.expansion_w[dp])
                      for dp in range(dcount))
        offset += _trace(coeffs.b_u[uu], coeffs.expansion_vr)

    grad_all = coeffs.b_u.sum(axis=0) if ucount else np.zeros((m, m), dtype=complex)
    linear = []
    for dblk in range(dcount):
        lin = -grad_all.copy()
        for d in range(dcount):
            if d != dblk:
                lin -= coeffs.b_d[d]
        pen_coeff, pen_const = penalty_lins[dblk]
        lin -= (np.eye(m) + pen_coeff) / eta1
        offset -= pen_const / eta1
        linear.append(lin)
    linear.append(-grad_all - coeffs.b_d.sum(axis=0) if dcount else -grad_all)

    ineqs = [(AffineFunctional([np.eye(m, dtype=complex)] * nblocks, 0.0),
              config.p_max_pbs)]
    if include_sensing:
        k_mat, bound = sensing_constraint_row(ch, u, p, config.gamma_sense)
        ineqs.append((AffineFunctional([k_mat] * nblocks, 0.0), bound))

    return LogAffineSdp(block_dims=[m] * nblocks, log_terms=log_terms,
                        linear_objective=linear, inequalities=ineqs,
                        offset=offset)


def penalized_true_objective(ch: ChannelSet, w_lifted, v_r, v_u, p,
                             eta1: float) -> float:
    """Exact rate sum minus the exact nuclear-minus-spectral penalty (bits)."""
    val = sum(theta_dl_true(d, ch, w_lifted, v_r, p) for d in range(ch.num_dl))
    val += sum(theta_ul_true(u, ch, w_lifted, v_r, v_u, p) for u in range(ch.num_ul))
    val -= sum(rank_one_residual(w) for w in w_lifted) / eta1
    return float(val)


def _interior_start(w_lifted, v_r, p_max):
    """Pull the expansion point slightly off the boundary (PSD and power)."""
    m = v_r.shape[0]
    nblocks = len(w_lifted) + 1
    sigma = p_max / (4.0 * nblocks * m)
    blocks = [0.98 * np.asarray(w) + 0.02 * sigma * np.eye(m) for w in w_lifted]
    blocks.append(0.98 * np.asarray(v_r) + 0.02 * sigma * np.eye(m))
    return blocks


def solve_transmit_beamforming(ch: ChannelSet, u: np.ndarray, v_u: np.ndarray,
                               p: np.ndarray, config: ScenarioConfig, init,
                               include_sensing: bool = True,
                               conic_tol: float = 3e-9):
    """Double-layer penalty loop; returns (w_lifted, v_r, PenaltyState)."""
    tol = config.tol
    w_exp = np.array([np.asarray(w, dtype=complex) for w in init[0]])
    vr_exp = np.asarray(init[1], dtype=complex)
    eta1 = tol.eta1_init
    state = PenaltyState(eta1=eta1, residuals=np.zeros(ch.num_dl),
                         inner_iterations=0, outer_iterations=0)

    for outer in range(tol.max_outer_iters):
        state.eta1_history.append(eta1)
        obj_prev = None
        stage_inner = 0
        for inner in range(tol.max_inner_iters):
            coeffs = surrogate_coefficients((w_exp, vr_exp), ch, v_u, p)
            pen = [spectral_penalty_linearization(w_exp[d]) for d in range(ch.num_dl)]
            prob = assemble_subproblem(coeffs, u, p, eta1, pen, ch, config,
                                       include_sensing=include_sensing, v_u=v_u)
            if obj_prev is None:
                obj_prev = _surrogate_value(prob, list(w_exp) + [vr_exp])
            start = _interior_start(w_exp, vr_exp, config.p_max_pbs)
            try:
                # inner solves need objective accuracy only; skip the
                # stationarity polish (gap <= conic_tol still guaranteed)
                sol = solve(prob, conic_tol, start=start,
                            stationarity_tol=np.inf)
            except Infeasible as exc:
                raise InfeasibleSensing(str(exc)) from exc
            w_exp = np.array(sol.blocks[:ch.num_dl])
            vr_exp = sol.blocks[ch.num_dl]
            stage_inner += 1
            state.inner_iterations += 1
            state.surrogate_objectives.append(sol.objective)
            state.true_objectives.append(
                penalized_true_objective(ch, w_exp, vr_exp, v_u, p, eta1))
            rel = abs(sol.objective - obj_prev) / max(abs(obj_prev), 1e-12)
            obj_prev = sol.objective
            if rel < tol.eps_inner:
                break
        state.inner_per_stage.append(stage_inner)
        state.outer_iterations = outer + 1
        state.residuals = np.array([rank_one_residual(w) for w in w_exp])
        state.eta1 = eta1
        if state.residuals.size == 0 or state.residuals.max() <= tol.eps_rank_one:
            return w_exp, vr_exp, state
        eta1 *= tol.eta_scale
    raise NoRankOneConvergence(state.residuals)


def _surrogate_value(prob: LogAffineSdp, blocks) -> float:
    val = prob.offset
    for w, fn in prob.log_terms:
        val += w * np.log(fn.value(blocks))
    for k, c in enumerate(prob.linear_objective):
        if c is not None:
            val += _trace(c, blocks[k])
    return float(val)


def extract_rank_one(w_lifted: np.ndarray) -> np.ndarray:
    """Principal-component beamformer sqrt(lmax) * v with a real-positive
    leading entry; the all-zero matrix maps to the zero vector."""
    vals = np.linalg.eigvalsh((w_lifted + w_lifted.conj().T) / 2.0)
    lmax = float(vals[-1])
    if lmax <= 0.0:
        return np.zeros(w_lifted.shape[0], dtype=complex)
    v = principal_eigenvector(w_lifted)
    return np.sqrt(lmax) * v
