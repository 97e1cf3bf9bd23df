"""Shared fixtures: hand-built channel sets and random solutions small
enough for brute-force cross-checks."""

import numpy as np
import pytest

from japs.metrics import BeamformerSolution, lift_columns
from japs.scenario import ChannelSet


def tiny_channels(m=2, n0=2, n1=2, j=1, d=1, u=0, noise_dl=1.0, noise_ul=1.0,
                  noise_sense=1.0, rng=None, si_scale=0.0):
    """Small fully-random channel set with controllable noise floors."""
    rng = rng or np.random.default_rng(0)
    ntot = n0 + j * n1

    def cvec(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    h_dl = cvec(d, m) if d else np.zeros((0, m), dtype=complex)
    h_ul = cvec(u, ntot) if u else np.zeros((0, ntot), dtype=complex)
    h_si = si_scale * cvec(n0, m)
    h_cross = cvec(d, u) if d and u else np.zeros((d, u), dtype=complex)
    alpha = cvec(j + 1)
    a_t = cvec(m)
    a_t /= np.linalg.norm(a_t)
    a_blocks = []
    for i in range(j + 1):
        nr = n0 if i == 0 else n1
        a_r = cvec(nr)
        a_r /= np.linalg.norm(a_r)
        a_blocks.append(alpha[i] * np.outer(a_r, a_t.conj()))
    a_stacked = np.vstack(a_blocks)
    g_eff = np.zeros((ntot, m), dtype=complex)
    g_eff[:n0] = h_si
    return ChannelSet(n0=n0, n1=n1, j=j, h_dl=h_dl, h_ul=h_ul, h_si=h_si,
                      h_cross=h_cross, alpha=alpha, a_blocks=a_blocks,
                      a_stacked=a_stacked, g_effective=g_eff, b0=a_stacked + g_eff,
                      noise_dl=noise_dl, noise_ul=noise_ul, noise_sense=noise_sense)


def random_solution(ch, rng=None, p_scale=1.0, power=1.0):
    """Random exactly-lifted solution (w_lifted = w w^H) within power `power`."""
    rng = rng or np.random.default_rng(1)
    m, d, u = ch.m, ch.num_dl, ch.num_ul

    def cvec(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    w_c = cvec(m, d) if d else np.zeros((m, 0), dtype=complex)
    vr_root = cvec(m, m)
    v_r = vr_root @ vr_root.conj().T
    total = sum(np.linalg.norm(w_c[:, k]) ** 2 for k in range(d)) + np.trace(v_r).real
    scale = power / max(total, 1e-30)
    w_c = w_c * np.sqrt(scale)
    v_r = v_r * scale
    uvec = cvec(ch.n_total)
    v_u = cvec(u, ch.n_total) if u else np.zeros((0, ch.n_total), dtype=complex)
    p = p_scale * rng.uniform(0.1, 1.0, size=u) if u else np.zeros(0)
    return BeamformerSolution(
        w_c=w_c, v_r=v_r,
        w_lifted=lift_columns(w_c) if d else np.zeros((0, m, m), dtype=complex),
        u=uvec, v_u=v_u, p=p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
