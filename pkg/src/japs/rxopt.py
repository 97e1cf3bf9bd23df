"""Receive-side optimization.

Two jobs live here: the sensing receive filter, which maximizes the fused
echo SINR as a generalized Rayleigh quotient over the (optionally masked)
receiver coordinates, and the fractional-programming block updates for the
uplink side: the SINR-valued dual auxiliaries, the complex quadratic-
transform auxiliaries, the per-UE MMSE-style receive filters, and the UL
power allocation solved by dual bisection on its single coupling constraint.

The FP objective and the eta / v / p updates follow the quadratic-transform
form with per-user incoherent interference sums; the delta update equals the
per-UE SINR with its coherent multiuser term.  The two coincide for up to
two uplink UEs, which covers every stock experiment.  Natural-log closed
forms are exact; fp_objective is scaled by log2(e) so its value is in bits
and matches the sum rate at the optimal auxiliaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import BeamformerSolution
from .scenario import ChannelSet

LOG2E = float(np.log2(np.e))


class InfeasiblePower(RuntimeError):
    """Sensing floor unreachable even with all UL transmitters silent."""


@dataclass
class FpAuxiliaries:
    delta_d: np.ndarray   # (D,) nonnegative
    delta_u: np.ndarray   # (U,) nonnegative
    eta_d: np.ndarray     # (D,) complex
    eta_u: np.ndarray     # (U,) complex


@dataclass
class PowerSubproblem:
    """Separable UL power problem: minimize sum(mu1 p - mu2 sqrt(p)) subject
    to sum(mu3 p) + rho3 <= 0 and 0 <= p <= p_max; rho2 is the dropped
    objective constant, kept so traces reconcile."""

    mu1: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray
    rho3: float
    p_max: float
    rho2: float = 0.0


def _masked_indices(n_total: int, mask) -> np.ndarray:
    if mask is None:
        return np.arange(n_total)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n_total,):
        raise ValueError("mask length must match the stacked receiver size")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask removes every receiver coordinate")
    return idx


def _sense_matrices(ch: ChannelSet, cov: np.ndarray, p: np.ndarray):
    q = ch.a_stacked @ cov @ ch.a_stacked.conj().T
    d = ch.g_effective @ cov @ ch.g_effective.conj().T
    for u in range(ch.num_ul):
        d += p[u] * np.outer(ch.h_ul[u], ch.h_ul[u].conj())
    d += ch.noise_sense * np.eye(ch.n_total)
    return q, d


def _top_generalized_eig(q: np.ndarray, d: np.ndarray):
    """Largest eigenpair of d^{-1} q via Cholesky reduction of the PD part."""
    ell = np.linalg.cholesky((d + d.conj().T) / 2.0)
    li = np.linalg.inv(ell)
    m = li @ ((q + q.conj().T) / 2.0) @ li.conj().T
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2.0)
    y = vecs[:, -1]
    u = li.conj().T @ y
    return float(vals[-1]), u


def _normalize_filter(u: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        return u
    u = u / nrm
    idx = np.flatnonzero(np.abs(u) > 1e-12)
    if len(idx):
        lead = u[idx[0]]
        u = u * (lead.conj() / abs(lead))
    return u


def optimal_receive_filter(ch: ChannelSet, cov: np.ndarray, p: np.ndarray,
                           mask=None) -> np.ndarray:
    """Sensing filter maximizing echo SINR on the unmasked coordinates.

    cov is the total transmit covariance.  Returns a unit-norm vector with
    zeros on masked coordinates and a real-positive leading entry.
    """
    idx = _masked_indices(ch.n_total, mask)
    q, d = _sense_matrices(ch, cov, p)
    _, u_sub = _top_generalized_eig(q[np.ix_(idx, idx)], d[np.ix_(idx, idx)])
    u = np.zeros(ch.n_total, dtype=complex)
    u[idx] = u_sub
    return _normalize_filter(u)


def max_sensing_sinr(ch: ChannelSet, cov: np.ndarray, p: np.ndarray,
                     mask=None) -> float:
    """Best achievable sensing SINR over filters supported on the mask."""
    idx = _masked_indices(ch.n_total, mask)
    q, d = _sense_matrices(ch, cov, p)
    val, _ = _top_generalized_eig(q[np.ix_(idx, idx)], d[np.ix_(idx, idx)])
    return max(val, 0.0)


# --- fractional-programming updates ----------------------------------------

def _dl_amplitudes(ch: ChannelSet, sol: BeamformerSolution) -> np.ndarray:
    """(D, D) array of h_d^H w_{c,d'} amplitudes."""
    return ch.h_dl.conj() @ sol.w_c


def _dl_totals(ch: ChannelSet, sol: BeamformerSolution, amps=None) -> np.ndarray:
    """Per-DL-UE total received power (signal + all interference + noise)."""
    amps = _dl_amplitudes(ch, sol) if amps is None else amps
    d_count = ch.num_dl
    out = np.zeros(d_count)
    for d in range(d_count):
        h = ch.h_dl[d]
        out[d] = np.sum(np.abs(amps[d]) ** 2)
        out[d] += float(np.real(h.conj() @ sol.v_r @ h))
        out[d] += float(np.sum(sol.p * np.abs(ch.h_cross[d]) ** 2)) + ch.noise_dl
    return out


def _ul_b_quadratic(ch: ChannelSet, sol: BeamformerSolution, u: int) -> float:
    """v_u^H B0 (sum_d w w^H + V_r) B0^H v_u in the vector representation."""
    bv = ch.b0.conj().T @ sol.v_u[u]
    val = sum(np.abs(np.vdot(bv, sol.w_c[:, d])) ** 2 for d in range(ch.num_dl))
    val += float(np.real(bv.conj() @ sol.v_r @ bv))
    return val


def _ul_totals(ch: ChannelSet, sol: BeamformerSolution) -> np.ndarray:
    """Per-UL-UE total received power with the incoherent multiuser sum."""
    out = np.zeros(ch.num_ul)
    for u in range(ch.num_ul):
        v = sol.v_u[u]
        out[u] = sum(sol.p[up] * np.abs(np.vdot(v, ch.h_ul[up])) ** 2
                     for up in range(ch.num_ul))
        out[u] += _ul_b_quadratic(ch, sol, u)
        out[u] += ch.noise_ul * float(np.vdot(v, v).real)
    return out


def update_delta(ch: ChannelSet, sol: BeamformerSolution) -> FpAuxiliaries:
    """Closed-form dual auxiliaries: each equals its UE's SINR."""
    amps = _dl_amplitudes(ch, sol)
    delta_d = np.zeros(ch.num_dl)
    for d in range(ch.num_dl):
        h = ch.h_dl[d]
        sig = np.abs(amps[d, d]) ** 2
        den = sum(np.abs(amps[d, dp]) ** 2 for dp in range(ch.num_dl) if dp != d)
        den += float(np.real(h.conj() @ sol.v_r @ h))
        den += float(np.sum(sol.p * np.abs(ch.h_cross[d]) ** 2)) + ch.noise_dl
        delta_d[d] = sig / den
    delta_u = np.zeros(ch.num_ul)
    for u in range(ch.num_ul):
        v = sol.v_u[u]
        sig = sol.p[u] * np.abs(np.vdot(v, ch.h_ul[u])) ** 2
        others = np.zeros(ch.n_total, dtype=complex)
        for up in range(ch.num_ul):
            if up != u:
                others += np.sqrt(sol.p[up]) * ch.h_ul[up]
        den = np.abs(np.vdot(v, others)) ** 2
        den += _ul_b_quadratic(ch, sol, u)
        den += ch.noise_ul * float(np.vdot(v, v).real)
        delta_u[u] = sig / den if den > 0 else 0.0
    return FpAuxiliaries(delta_d=delta_d, delta_u=delta_u,
                         eta_d=np.zeros(ch.num_dl, dtype=complex),
                         eta_u=np.zeros(ch.num_ul, dtype=complex))


def update_eta(ch: ChannelSet, sol: BeamformerSolution,
               aux: FpAuxiliaries) -> FpAuxiliaries:
    """Closed-form quadratic-transform auxiliaries at fixed deltas."""
    amps = _dl_amplitudes(ch, sol)
    totals_d = _dl_totals(ch, sol, amps)
    eta_d = np.zeros(ch.num_dl, dtype=complex)
    for d in range(ch.num_dl):
        eta_d[d] = np.sqrt(1.0 + aux.delta_d[d]) * amps[d, d] / totals_d[d]
    totals_u = _ul_totals(ch, sol)
    eta_u = np.zeros(ch.num_ul, dtype=complex)
    for u in range(ch.num_ul):
        sig_amp = np.vdot(sol.v_u[u], ch.h_ul[u])
        if totals_u[u] > 0:
            eta_u[u] = np.sqrt((1.0 + aux.delta_u[u]) * sol.p[u]) * sig_amp / totals_u[u]
    return FpAuxiliaries(delta_d=aux.delta_d, delta_u=aux.delta_u,
                         eta_d=eta_d, eta_u=eta_u)


def fp_objective(ch: ChannelSet, sol: BeamformerSolution,
                 aux: FpAuxiliaries) -> float:
    """Quadratic-transform objective (bits); equals the sum rate when the
    auxiliaries take their closed-form optimal values."""
    amps = _dl_amplitudes(ch, sol)
    totals_d = _dl_totals(ch, sol, amps)
    val = 0.0
    for d in range(ch.num_dl):
        dd, ed = aux.delta_d[d], aux.eta_d[d]
        val += np.log(1.0 + dd) - dd
        val += 2.0 * np.sqrt(1.0 + dd) * np.real(np.conj(ed) * amps[d, d])
        val -= np.abs(ed) ** 2 * totals_d[d]
    totals_u = _ul_totals(ch, sol)
    for u in range(ch.num_ul):
        du, eu = aux.delta_u[u], aux.eta_u[u]
        val += np.log(1.0 + du) - du
        sig_amp = np.vdot(sol.v_u[u], ch.h_ul[u])
        val += 2.0 * np.sqrt((1.0 + du) * sol.p[u]) * np.real(np.conj(eu) * sig_amp)
        val -= np.abs(eu) ** 2 * totals_u[u]
    return LOG2E * float(val)


def update_receive_filters(ch: ChannelSet, sol: BeamformerSolution,
                           aux: FpAuxiliaries, mask=None):
    """Per-UE quadratic minimizers v = Lambda^{-1} lambda on the mask support.

    Returns (filters, degenerate) where degenerate[u] flags a zero eta_u, in
    which case that UE's filter is left unchanged.
    """
    idx = _masked_indices(ch.n_total, mask)
    cov_terms = np.zeros((ch.n_total, ch.n_total), dtype=complex)
    for up in range(ch.num_ul):
        cov_terms += sol.p[up] * np.outer(ch.h_ul[up], ch.h_ul[up].conj())
    bw = np.zeros((ch.n_total, ch.n_total), dtype=complex)
    for d in range(ch.num_dl):
        bwd = ch.b0 @ sol.w_c[:, d]
        bw += np.outer(bwd, bwd.conj())
    bw += ch.b0 @ sol.v_r @ ch.b0.conj().T
    base = cov_terms + bw + ch.noise_ul * np.eye(ch.n_total)

    out = sol.v_u.copy()
    degenerate = np.zeros(ch.num_ul, dtype=bool)
    sub = base[np.ix_(idx, idx)]
    for u in range(ch.num_ul):
        eu = aux.eta_u[u]
        if eu == 0:
            degenerate[u] = True
            continue
        # Lambda^{-1} lambda = (sqrt((1+d)p) conj(eta)/|eta|^2) base^{-1} h;
        # solving in this form stays finite when eta underflows with p
        mag = np.abs(eu)
        coef = (np.sqrt((1.0 + aux.delta_u[u]) * sol.p[u]) / mag) * (np.conj(eu) / mag)
        v = np.zeros(ch.n_total, dtype=complex)
        v[idx] = coef * np.linalg.solve(sub, ch.h_ul[u][idx])
        out[u] = v
    return out, degenerate


def power_subproblem(ch: ChannelSet, sol: BeamformerSolution,
                     aux: FpAuxiliaries, gamma: float, p_max: float,
                     include_sensing: bool = True) -> PowerSubproblem:
    """Coefficients of the UL power subproblem at the current state.

    mu1 collects every |eta|^2-weighted squared channel seen by UE u's
    power; mu2 is the quadratic-transform signal coefficient; mu3 and rho3
    express the sensing floor as sum(mu3 p) + rho3 <= 0.
    """
    ucount = ch.num_ul
    mu1 = np.zeros(ucount)
    mu2 = np.zeros(ucount)
    mu3 = np.zeros(ucount)
    for u in range(ucount):
        mu1[u] = sum(np.abs(aux.eta_d[d]) ** 2 * np.abs(ch.h_cross[d, u]) ** 2
                     for d in range(ch.num_dl))
        mu1[u] += sum(np.abs(aux.eta_u[up]) ** 2 *
                      np.abs(np.vdot(sol.v_u[up], ch.h_ul[u])) ** 2
                      for up in range(ucount))
        mu2[u] = 2.0 * np.sqrt(1.0 + aux.delta_u[u]) * float(
            np.real(np.conj(aux.eta_u[u]) * np.vdot(sol.v_u[u], ch.h_ul[u])))
    rho3 = -np.inf
    if include_sensing:
        cov = sol.total_covariance()
        uf = sol.u
        for u in range(ucount):
            mu3[u] = np.abs(np.vdot(uf, ch.h_ul[u])) ** 2
        gu = ch.g_effective.conj().T @ uf
        au = ch.a_stacked.conj().T @ uf
        rho3 = ch.noise_sense * float(np.vdot(uf, uf).real)
        rho3 += float(np.real(gu.conj() @ cov @ gu))
        rho3 -= float(np.real(au.conj() @ cov @ au)) / gamma
    # dropped constant: objective value with every UL transmitter silent
    zero_p = BeamformerSolution(w_c=sol.w_c, v_r=sol.v_r, w_lifted=sol.w_lifted,
                                u=sol.u, v_u=sol.v_u, p=np.zeros(ucount))
    rho2 = -fp_objective(ch, zero_p, aux) / LOG2E
    return PowerSubproblem(mu1=mu1, mu2=mu2, mu3=mu3, rho3=rho3, p_max=p_max,
                           rho2=rho2)


def _clip_q(mu2, denom, q_max):
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(denom > 0, mu2 / (2.0 * denom), np.inf)
    q = np.where(mu2 <= 0, 0.0, q)
    return np.clip(q, 0.0, q_max)


def update_powers(ps: PowerSubproblem) -> np.ndarray:
    """Exact solve by dual bisection on the coupling multiplier.

    Substituting q = sqrt(p) decouples the users for a fixed multiplier:
    q_u = clip(mu2 / (2 (mu1 + lambda mu3)), 0, sqrt(p_max)).
    """
    if ps.mu3.size and np.isfinite(ps.rho3) and ps.rho3 > 0:
        raise InfeasiblePower(
            f"sensing constraint violated even at zero power (rho3={ps.rho3:.3e})")
    q_max = np.sqrt(ps.p_max)

    def q_of(lam):
        return _clip_q(ps.mu2, ps.mu1 + lam * ps.mu3, q_max)

    def coupling(lam):
        if not np.isfinite(ps.rho3):
            return -np.inf
        return float(ps.mu3 @ q_of(lam) ** 2 + ps.rho3)

    if coupling(0.0) <= 1e-15 * max(abs(ps.rho3), 1.0):
        return _snap(q_of(0.0) ** 2, ps.p_max)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if coupling(hi) <= 0:
            break
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if coupling(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-8 * max(hi, 1.0):
            break
    return _snap(q_of(hi) ** 2, ps.p_max)


def _snap(p: np.ndarray, p_max: float) -> np.ndarray:
    # a power sliding to zero decays geometrically (the signal coefficient
    # scales with sqrt of the previous power); snap it to exactly zero
    # before it degrades into denormals downstream
    return np.where(p < 1e-12 * p_max, 0.0, p)


def fp_cycle(ch: ChannelSet, sol: BeamformerSolution, gamma: float,
             p_max: float, mask=None, include_sensing: bool = True):
    """One delta -> eta -> v -> p block pass; returns (solution, aux)."""
    aux = update_delta(ch, sol)
    aux = update_eta(ch, sol, aux)
    v_new, _ = update_receive_filters(ch, sol, aux, mask=mask)
    sol = BeamformerSolution(w_c=sol.w_c, v_r=sol.v_r, w_lifted=sol.w_lifted,
                             u=sol.u, v_u=v_new, p=sol.p)
    ps = power_subproblem(ch, sol, aux, gamma, p_max, include_sensing=include_sensing)
    p_new = update_powers(ps)
    sol = BeamformerSolution(w_c=sol.w_c, v_r=sol.v_r, w_lifted=sol.w_lifted,
                             u=sol.u, v_u=sol.v_u, p=p_new)
    return sol, aux
