"""Closed-form performance metrics: communication SINRs and rates, sensing
SINR after fusion filtering, and detection probability for the two-DoF
chi-square test at a fixed false-alarm rate.

All quadratic forms consume the lifted transmit covariances (per-UE W_d and
the radar covariance V_r), so the same code is exact for solver iterates and
for extracted rank-one beamformers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelSet


class ZeroFilter(ValueError):
    """Sensing receive filter is identically zero."""


class DomainError(ValueError):
    """Probability argument outside (0, 1)."""


@dataclass
class BeamformerSolution:
    """Full optimization state.

    w_c columns are the per-DL-UE beamformers; w_lifted holds their lifted
    covariances (maintained alongside, not necessarily exact outer products
    while the penalty loop is still tightening); v_r is the general-rank
    radar covariance.  u is the stacked sensing receive filter, v_u the
    per-UL-UE receive filters, p the UL transmit powers (watts).
    """

    w_c: np.ndarray        # (M, D)
    v_r: np.ndarray        # (M, M)
    w_lifted: np.ndarray   # (D, M, M)
    u: np.ndarray          # (N_total,)
    v_u: np.ndarray        # (U, N_total)
    p: np.ndarray          # (U,)

    def total_covariance(self) -> np.ndarray:
        return self.w_lifted.sum(axis=0) + self.v_r

    def validate(self, p_max_pbs: float, p_max_ue: float):
        for name, mat in [("v_r", self.v_r)] + [
                (f"w_lifted[{i}]", w) for i, w in enumerate(self.w_lifted)]:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
                raise ValueError(f"{name} is not Hermitian")
            if np.linalg.eigvalsh(mat).min() < -1e-8:
                raise ValueError(f"{name} is not PSD")
        used = float(np.trace(self.w_lifted.sum(axis=0)).real + np.trace(self.v_r).real)
        if used > p_max_pbs + 1e-8:
            raise ValueError("PBS power budget exceeded")
        if np.any(self.p < -1e-12) or np.any(self.p > p_max_ue + 1e-8):
            raise ValueError("UL power outside its box")


def lift(w: np.ndarray) -> np.ndarray:
    """Rank-one lifted covariance w w^H of a beamforming vector."""
    w = np.asarray(w)
    return np.outer(w, w.conj())


def lift_columns(w_c: np.ndarray) -> np.ndarray:
    """Stack of lifted covariances for each column of an M x D matrix."""
    return np.stack([lift(w_c[:, d]) for d in range(w_c.shape[1])])


@dataclass
class MetricsReport:
    sinr_dl: np.ndarray
    sinr_ul: np.ndarray
    sinr_sense: float
    rate_dl: np.ndarray
    rate_ul: np.ndarray
    sum_rate: float
    omega0: float
    omega1: float
    p_detect: dict = field(default_factory=dict)  # pFa -> P_D


def _quad(h: np.ndarray, mat: np.ndarray) -> float:
    return float(np.real(h.conj() @ mat @ h))


def dl_sinr(d: int, ch: ChannelSet, sol: BeamformerSolution) -> float:
    """Downlink SINR of UE d under the lifted covariances."""
    h = ch.h_dl[d]
    sig = _quad(h, sol.w_lifted[d])
    interf = sum(_quad(h, sol.w_lifted[dp]) for dp in range(ch.num_dl) if dp != d)
    interf += _quad(h, sol.v_r)
    interf += float(np.sum(sol.p * np.abs(ch.h_cross[d]) ** 2))
    return max(sig, 0.0) / (max(interf, 0.0) + ch.noise_dl)


def ul_sinr(u: int, ch: ChannelSet, sol: BeamformerSolution) -> float:
    """Uplink SINR of UE u; 0 for an all-zero receive filter."""
    v = sol.v_u[u]
    nv = float(np.vdot(v, v).real)
    if nv == 0.0:
        return 0.0
    sig = sol.p[u] * np.abs(np.vdot(v, ch.h_ul[u])) ** 2
    others = np.zeros(ch.n_total, dtype=complex)
    for up in range(ch.num_ul):
        if up != u:
            others += np.sqrt(sol.p[up]) * ch.h_ul[up]
    mui = np.abs(np.vdot(v, others)) ** 2
    bv = ch.b0.conj().T @ v
    dfi = _quad(bv, sol.total_covariance())
    return float(sig) / (float(mui) + max(dfi, 0.0) + ch.noise_ul * nv)


def achievable_rate(sinr: float) -> float:
    """Spectral efficiency log2(1 + sinr) in bits/s/Hz."""
    if np.any(np.asarray(sinr) < 0):
        raise ValueError("SINR must be nonnegative")
    return np.log2(1.0 + sinr)


def sum_rate(ch: ChannelSet, sol: BeamformerSolution) -> float:
    dl = sum(achievable_rate(dl_sinr(d, ch, sol)) for d in range(ch.num_dl))
    ul = sum(achievable_rate(ul_sinr(u, ch, sol)) for u in range(ch.num_ul))
    return float(dl + ul)


def _sense_denominator_matrix(ch: ChannelSet, cov: np.ndarray, p: np.ndarray) -> np.ndarray:
    n = ch.n_total
    den = ch.g_effective @ cov @ ch.g_effective.conj().T
    for u in range(ch.num_ul):
        den += p[u] * np.outer(ch.h_ul[u], ch.h_ul[u].conj())
    den += ch.noise_sense * np.eye(n)
    return den


def sensing_sinr(ch: ChannelSet, sol: BeamformerSolution) -> float:
    """Sensing SINR of the fused multi-receiver echo after filtering by u."""
    u = sol.u
    if np.linalg.norm(u) == 0:
        raise ZeroFilter("receive filter u is zero")
    cov = sol.total_covariance()
    num = _quad(ch.a_stacked.conj().T @ u, cov)
    den = _quad(u, _sense_denominator_matrix(ch, cov, sol.p))
    return max(num, 0.0) / den


def omegas(ch: ChannelSet, sol: BeamformerSolution):
    """Received test-statistic powers under target-absent / target-present."""
    u = sol.u
    cov = sol.total_covariance()
    om0 = _quad(u, _sense_denominator_matrix(ch, cov, sol.p))
    om1 = om0 + max(_quad(ch.a_stacked.conj().T @ u, cov), 0.0)
    return float(om0), float(om1)


def detection_probability(sinr_sense: float, p_fa: float) -> float:
    """Detection probability at false-alarm rate p_fa.

    The test statistic is chi-square with two DoF under both hypotheses, so
    with F(x) = 1 - exp(-x/2) and F^{-1}(1 - p_fa) = -2 ln p_fa the round
    trip collapses to p_fa ** (Omega0/Omega1) with Omega0/Omega1 =
    1/(1 + sinr); the power form is exact and branch-free.
    """
    p_fa = np.asarray(p_fa, dtype=float)
    if np.any(p_fa <= 0.0) or np.any(p_fa >= 1.0):
        raise DomainError("p_fa must lie in (0, 1)")
    s = np.asarray(sinr_sense, dtype=float)
    if np.any(s < 0):
        raise ValueError("sensing SINR must be nonnegative")
    ratio = 1.0 / (1.0 + s)
    out = np.power(p_fa, ratio)
    return float(out) if out.ndim == 0 else out


def metrics_report(ch: ChannelSet, sol: BeamformerSolution,
                   p_fa_grid=(1e-4, 1e-3, 1e-2, 1e-1)) -> MetricsReport:
    sd = np.array([dl_sinr(d, ch, sol) for d in range(ch.num_dl)])
    su = np.array([ul_sinr(u, ch, sol) for u in range(ch.num_ul)])
    ss = sensing_sinr(ch, sol)
    rd = achievable_rate(sd)
    ru = achievable_rate(su)
    om0, om1 = omegas(ch, sol)
    return MetricsReport(
        sinr_dl=sd, sinr_ul=su, sinr_sense=ss,
        rate_dl=rd, rate_ul=ru, sum_rate=float(rd.sum() + ru.sum()),
        omega0=om0, omega1=om1,
        p_detect={pf: detection_probability(ss, pf) for pf in p_fa_grid})
