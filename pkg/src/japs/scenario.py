"""Scenario generation for the cooperative multi-static ISAC network.

One scenario realization = geometry (positions and angles of the PBS, SBSs,
UEs, and the point target) plus one draw of every channel: Rician downlink
and uplink links, the deterministic residual self-interference channel,
UE-to-UE cross links, and the rank-one sensing matrices seen by each
receiver.  Everything is driven by an explicit numpy Generator so a
(config, seed) pair reproduces bit-identical output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

MAX_RESAMPLE = 1000
# Hard-wired layout constants for the non-random topologies.
CIRCLE_RADIUS_M = 200.0
LINEAR_SBS_SPACING_M = 60.0
LINEAR_PBS_OFFSET_M = 200.0
LINEAR_TARGET_OFFSET_M = 80.0


class RegionTooSmall(ValueError):
    """Mandated topology placements do not fit inside the region."""


class Topology(enum.Enum):
    RANDOM = "random"
    CIRCULAR = "circular"
    LINEAR = "linear"


def db_to_linear(db: float) -> float:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class PathLossExponents:
    """Per link-class distance exponents.

    pbs_target / target_sbs are carried for completeness; the sensing gains
    use the explicit alpha = sigma/(2 d) model, so they do not enter the
    generated channels.
    """

    pbs_target: float = 2.3
    target_sbs: float = 2.3
    bs_ue: float = 2.4
    ue_sbs: float = 2.5
    ue_ue: float = 2.5


@dataclass(frozen=True)
class Tolerances:
    """Algorithm tolerances: penalty schedule, loop caps, stop thresholds.

    max_outer_iters / max_inner_iters cap the penalty stages and the SCA
    passes inside the transmit-beamforming solver (the alternating loop has
    its own cap in AlgorithmOptions).
    """

    eta1_init: float = 1e4
    eta_scale: float = 0.7
    eps_inner: float = 1e-2
    eps_rank_one: float = 1e-5
    xi_outer: float = 1e-4
    max_outer_iters: int = 50
    max_inner_iters: int = 30

    def __post_init__(self):
        if self.eta1_init <= 0:
            raise ValueError("eta1_init must be positive")
        if not 0 < self.eta_scale < 1:
            raise ValueError("eta_scale must lie in (0, 1)")
        for name in ("eps_inner", "eps_rank_one", "xi_outer"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """Every physical and algorithmic knob for one scenario.

    Antenna counts: m transmit / n0 receive at the PBS, n1 per SBS.
    j, d, u: number of SBSs, downlink UEs, uplink UEs.  Powers and noise
    floors are stored in dBm, ratios in dB; use the *_linear properties.
    """

    m: int = 6
    n0: int = 6
    n1: int = 6
    j: int = 3
    d: int = 2
    u: int = 2
    p_max_pbs_dbm: float = 30.0
    p_max_ue_dbm: float = 16.0
    noise_dl_dbm: float = -80.0
    noise_ul_dbm: float = -80.0
    noise_sense_dbm: float = -80.0
    gamma_sense_db: float = 10.0
    rician_db: float = 3.0
    c0_db: float = -30.0
    l0: float = 1.0
    kappa: PathLossExponents = field(default_factory=PathLossExponents)
    beta_si_db: float = -110.0
    sigma0: float = 1.0
    spacing: float = 0.5
    wavelength: float = 0.1
    array_separation: float = 2.0
    topology: Topology = Topology.RANDOM
    region_size: float = 500.0
    seed: int = 0
    tol: Tolerances = field(default_factory=Tolerances)
    # Optional fixed UE directions (degrees, PBS frame); None = uniform draw.
    dl_ue_angles_deg: tuple | None = (-55.0, 30.0)
    ul_ue_angles_deg: tuple | None = (-70.0, 20.0)

    def __post_init__(self):
        for name in ("m", "n0", "n1", "j", "d", "u"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("p_max_pbs_dbm", "p_max_ue_dbm", "noise_dl_dbm",
                     "noise_ul_dbm", "noise_sense_dbm", "gamma_sense_db",
                     "rician_db", "c0_db", "beta_si_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.spacing <= 0:
            raise ValueError("antenna spacing must be positive")
        if self.gamma_sense <= 0:
            raise ValueError("linear sensing SINR threshold must be positive")
        if self.l0 <= 0 or self.region_size <= 0 or self.wavelength <= 0:
            raise ValueError("l0, region_size, wavelength must be positive")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.dl_ue_angles_deg is not None and len(self.dl_ue_angles_deg) != self.d:
            raise ValueError("dl_ue_angles_deg length must match d")
        if self.ul_ue_angles_deg is not None and len(self.ul_ue_angles_deg) != self.u:
            raise ValueError("ul_ue_angles_deg length must match u")

    # linear-unit views
    @property
    def p_max_pbs(self) -> float:
        return float(dbm_to_watt(self.p_max_pbs_dbm))

    @property
    def p_max_ue(self) -> float:
        return float(dbm_to_watt(self.p_max_ue_dbm))

    @property
    def noise_dl(self) -> float:
        return float(dbm_to_watt(self.noise_dl_dbm))

    @property
    def noise_ul(self) -> float:
        return float(dbm_to_watt(self.noise_ul_dbm))

    @property
    def noise_sense(self) -> float:
        return float(dbm_to_watt(self.noise_sense_dbm))

    @property
    def gamma_sense(self) -> float:
        return float(db_to_linear(self.gamma_sense_db))

    @property
    def rician(self) -> float:
        return float(db_to_linear(self.rician_db))

    @property
    def c0(self) -> float:
        return float(db_to_linear(self.c0_db))

    @property
    def beta_si(self) -> float:
        return float(db_to_linear(self.beta_si_db))

    @property
    def n_total(self) -> int:
        return self.n0 + self.j * self.n1


@dataclass
class Geometry:
    """Positions (2-D, metres) and the derived angles/distances.

    All angles are measured from the owning array's broadside and lie in
    (-pi/2, pi/2); facing vectors record each array's broadside direction.
    """

    pbs: np.ndarray
    sbs: np.ndarray          # (J, 2)
    dl_ue: np.ndarray        # (D, 2)
    ul_ue: np.ndarray        # (U, 2)
    target: np.ndarray
    pbs_facing: np.ndarray
    sbs_facing: np.ndarray   # (J, 2)
    theta: float = 0.0                 # target angle at the PBS
    phi: np.ndarray = None             # (J,) target angle at each SBS
    theta_dl: np.ndarray = None        # (D,)
    theta_ul_pbs: np.ndarray = None    # (U,)
    theta_ul_sbs: np.ndarray = None    # (J, U)
    dist_target: np.ndarray = None     # (J+1,) PBS->target, then SBS->target
    dist_dl: np.ndarray = None         # (D,)
    dist_ul_pbs: np.ndarray = None     # (U,)
    dist_ul_sbs: np.ndarray = None     # (J, U)
    dist_cross: np.ndarray = None      # (D, U) UL UE -> DL UE

    def finalize(self):
        """Fill every derived angle/distance from the stored positions."""
        self.theta = angle_in_frame(self.pbs, self.pbs_facing, self.target)
        self.phi = np.array([
            angle_in_frame(self.sbs[k], self.sbs_facing[k], self.target)
            for k in range(len(self.sbs))])
        self.theta_dl = np.array([
            angle_in_frame(self.pbs, self.pbs_facing, p) for p in self.dl_ue])
        self.theta_ul_pbs = np.array([
            angle_in_frame(self.pbs, self.pbs_facing, p) for p in self.ul_ue])
        # SBS arrays only resolve the broadside-symmetric angle (ULA
        # front-back ambiguity), so UE links use the effective angle.
        self.theta_ul_sbs = np.array([
            [effective_ula_angle(angle_in_frame(self.sbs[k], self.sbs_facing[k], p))
             for p in self.ul_ue] for k in range(len(self.sbs))])
        self.dist_target = np.array(
            [np.linalg.norm(self.target - self.pbs)]
            + [np.linalg.norm(self.target - s) for s in self.sbs])
        self.dist_dl = np.linalg.norm(self.dl_ue - self.pbs, axis=1)
        self.dist_ul_pbs = np.linalg.norm(self.ul_ue - self.pbs, axis=1)
        self.dist_ul_sbs = np.linalg.norm(
            self.ul_ue[None, :, :] - self.sbs[:, None, :], axis=2)
        self.dist_cross = np.linalg.norm(
            self.dl_ue[:, None, :] - self.ul_ue[None, :, :], axis=2)
        self._check()
        return self

    def _check(self):
        dists = np.concatenate([
            self.dist_target, self.dist_dl, self.dist_ul_pbs,
            self.dist_ul_sbs.ravel(), self.dist_cross.ravel()])
        if np.any(dists <= 0):
            raise ValueError("degenerate geometry: zero distance")
        angles = np.concatenate([
            [self.theta], self.phi, self.theta_dl, self.theta_ul_pbs,
            self.theta_ul_sbs.ravel()])
        if np.any(np.abs(angles) >= np.pi / 2):
            raise ValueError("angle outside (-pi/2, pi/2)")


@dataclass
class ChannelSet:
    """One realization of every channel and sensing matrix.

    h_ul rows are stacked receiver blocks [PBS | SBS_1 | ... | SBS_J];
    g_effective is the residual SI channel on the PBS rows and zero on the
    SBS rows; b0 = a_stacked + g_effective is the combined interference
    channel seen by the uplink receive filters.
    """

    n0: int
    n1: int
    j: int
    h_dl: np.ndarray         # (D, M)
    h_ul: np.ndarray         # (U, N_total)
    h_si: np.ndarray         # (N0, M)
    h_cross: np.ndarray      # (D, U) complex scalars
    alpha: np.ndarray        # (J+1,) complex sensing coefficients
    a_blocks: list           # [N0 x M, N1 x M, ...]
    a_stacked: np.ndarray    # (N_total, M)
    g_effective: np.ndarray  # (N_total, M)
    b0: np.ndarray           # (N_total, M)
    noise_dl: float
    noise_ul: float
    noise_sense: float
    spacing: float = 0.5

    @property
    def n_total(self) -> int:
        return self.n0 + self.j * self.n1

    @property
    def num_dl(self) -> int:
        return self.h_dl.shape[0]

    @property
    def num_ul(self) -> int:
        return self.h_ul.shape[0]

    @property
    def m(self) -> int:
        return self.h_dl.shape[1] if self.num_dl else self.a_stacked.shape[1]


def steering_vector(angle: float, n: int, spacing: float) -> np.ndarray:
    """Unit-norm ULA steering vector, element k = exp(j 2 pi k spacing sin(angle)) / sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    k = np.arange(n)
    return np.exp(2j * np.pi * k * spacing * np.sin(angle)) / np.sqrt(n)


def path_loss(distance: float, exponent: float, c0_linear: float, l0: float) -> float:
    """Distance-power-law gain c0 * (distance / l0) ** (-exponent)."""
    if np.any(np.asarray(distance) <= 0):
        raise ValueError("distance must be positive")
    return c0_linear * (np.asarray(distance, dtype=float) / l0) ** (-exponent)


def draw_rician(los: np.ndarray, rician_linear: float, rng: np.random.Generator) -> np.ndarray:
    """Small-scale Rician draw around a unit-norm line-of-sight vector."""
    los = np.asarray(los)
    if rician_linear >= 1e12:
        # LoS-only limit; skip the (negligible) scattered draw entirely.
        return los.astype(complex).copy()
    n = los.shape[0]
    nlos = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    k = rician_linear
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * nlos


def angle_in_frame(origin: np.ndarray, facing: np.ndarray, point: np.ndarray) -> float:
    """Angle of `point` measured from the broadside direction `facing`."""
    v = np.asarray(point, dtype=float) - np.asarray(origin, dtype=float)
    f = np.asarray(facing, dtype=float)
    f = f / np.linalg.norm(f)
    ct = float(v @ f)
    st = float(f[0] * v[1] - f[1] * v[0])
    return math.atan2(st, ct)


def effective_ula_angle(raw: float) -> float:
    """Fold an arbitrary bearing into the ULA-resolvable range (-pi/2, pi/2):
    a linear array sees angle theta and pi - theta identically."""
    return math.asin(max(-1.0 + 1e-15, min(1.0 - 1e-15, math.sin(raw))))


def _valid_angle(origin, facing, point, margin=1e-9) -> bool:
    return abs(angle_in_frame(origin, facing, point)) < np.pi / 2 - margin


def _uniform_point(rng, size):
    return rng.uniform(0.0, size, size=2)


def _place_on_ray(origin, facing, angle_rad, dist):
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    f = np.asarray(facing, dtype=float)
    f = f / np.linalg.norm(f)
    left = np.array([-f[1], f[0]])
    return np.asarray(origin) + dist * (c * f + s * left)


def _max_ray_dist(origin, facing, angle_rad, size):
    """Largest distance along the ray that stays inside [0, size]^2."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    f = np.asarray(facing, dtype=float)
    f = f / np.linalg.norm(f)
    left = np.array([-f[1], f[0]])
    d = c * f + s * left
    tmax = math.inf
    for axis in range(2):
        if abs(d[axis]) > 1e-12:
            for bound in (0.0, size):
                t = (bound - origin[axis]) / d[axis]
                if t > 0:
                    tmax = min(tmax, t)
    return tmax if math.isfinite(tmax) else size


def _draw_ues(cfg: ScenarioConfig, pbs, pbs_facing, rng):
    """UE positions: fixed directions when configured, else uniform.  Only
    the PBS frame constrains placements; SBS-side angles fold through the
    ULA front-back ambiguity."""
    size = cfg.region_size

    def ok_dl(p):
        return _valid_angle(pbs, pbs_facing, p)

    ok_ul = ok_dl

    def draw(angles_deg, count, ok):
        pts = []
        for i in range(count):
            for attempt in range(MAX_RESAMPLE):
                if angles_deg is not None:
                    ang = math.radians(angles_deg[i])
                    rmax = _max_ray_dist(pbs, pbs_facing, ang, size)
                    lo, hi = 0.2 * size, max(0.45 * size, 0.25 * size)
                    hi = min(hi, 0.95 * rmax)
                    lo = min(lo, 0.5 * hi)
                    p = _place_on_ray(pbs, pbs_facing, ang, rng.uniform(lo, hi))
                else:
                    p = _uniform_point(rng, size)
                if ok(p):
                    pts.append(p)
                    break
            else:
                raise RegionTooSmall("could not place a UE in front of every array")
        return np.array(pts).reshape(count, 2)

    dl = draw(cfg.dl_ue_angles_deg, cfg.d, ok_dl)
    ul = draw(cfg.ul_ue_angles_deg, cfg.u, ok_ul)
    return dl, ul


def generate_topology(kind: Topology, cfg: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    """Lay out the PBS, SBSs, UEs, and target for one trial."""
    size = cfg.region_size
    center = np.array([size / 2.0, size / 2.0])

    if kind is Topology.RANDOM:
        pbs = np.array([0.0, size / 2.0])
        pbs_facing = np.array([1.0, 0.0])
        target = center.copy()
        # UEs are drawn before the SBSs so that, for a fixed seed, the UE
        # geometry is identical across station counts (clean paired sweeps)
        dl, ul = _draw_ues(cfg, pbs, pbs_facing, rng)
        sbs = np.empty((cfg.j, 2))
        sbs_facing = np.empty((cfg.j, 2))
        for k in range(cfg.j):
            for attempt in range(MAX_RESAMPLE):
                p = _uniform_point(rng, size)
                f = center - p
                nf = np.linalg.norm(f)
                if nf < 1e-6:
                    continue
                f = f / nf
                if _valid_angle(p, f, target):
                    sbs[k], sbs_facing[k] = p, f
                    break
            else:
                raise RegionTooSmall("could not place an SBS facing the target")
        geo = Geometry(pbs=pbs, sbs=sbs, dl_ue=dl, ul_ue=ul, target=target,
                       pbs_facing=pbs_facing, sbs_facing=sbs_facing)
        return geo.finalize()

    elif kind is Topology.CIRCULAR:
        if size / 2.0 < CIRCLE_RADIUS_M:
            raise RegionTooSmall(
                f"region {size} m cannot contain a {CIRCLE_RADIUS_M} m radius circle")
        pbs = center.copy()
        pbs_facing = np.array([1.0, 0.0])
        offset = rng.uniform(0.0, 2.0 * np.pi)
        ang = offset + 2.0 * np.pi * np.arange(cfg.j) / cfg.j
        sbs = pbs + CIRCLE_RADIUS_M * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        sbs_facing = (pbs - sbs) / CIRCLE_RADIUS_M
        for attempt in range(MAX_RESAMPLE):
            r = CIRCLE_RADIUS_M * np.sqrt(rng.uniform(0.02, 1.0))
            a = rng.uniform(0.0, 2.0 * np.pi)
            target = pbs + r * np.array([np.cos(a), np.sin(a)])
            if _valid_angle(pbs, pbs_facing, target) and all(
                    _valid_angle(sbs[k], sbs_facing[k], target) for k in range(cfg.j)):
                break
        else:
            raise RegionTooSmall("could not draw a target inside the circle")

    elif kind is Topology.LINEAR:
        span = LINEAR_SBS_SPACING_M * max(cfg.j - 1, 1)
        y_sbs = size / 2.0 + 100.0
        y_pbs = y_sbs - LINEAR_PBS_OFFSET_M
        y_tgt = y_sbs - LINEAR_TARGET_OFFSET_M
        xs = size / 2.0 + (np.arange(cfg.j) - (cfg.j - 1) / 2.0) * LINEAR_SBS_SPACING_M
        if xs.min() < 0 or xs.max() > size or y_sbs > size or y_pbs < 0:
            raise RegionTooSmall("linear layout does not fit in the region")
        pbs = np.array([size / 2.0, y_pbs])
        pbs_facing = np.array([0.0, 1.0])
        sbs = np.stack([xs, np.full(cfg.j, y_sbs)], axis=1)
        sbs_facing = np.tile(np.array([0.0, -1.0]), (cfg.j, 1))
        target = np.array([size / 2.0 + rng.uniform(-span / 2.0, span / 2.0), y_tgt])

    else:
        raise ValueError(f"unknown topology {kind!r}")

    dl, ul = _draw_ues(cfg, pbs, pbs_facing, rng)
    geo = Geometry(pbs=pbs, sbs=sbs, dl_ue=dl, ul_ue=ul, target=target,
                   pbs_facing=pbs_facing, sbs_facing=sbs_facing)
    return geo.finalize()


def build_channels(geo: Geometry, cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw every channel for one realization of the given geometry."""
    m, n0, n1, nj = cfg.m, cfg.n0, cfg.n1, cfg.j
    kap = cfg.kappa

    # Swerling-I sensing coefficients: exponential magnitude, uniform phase,
    # one draw per receiver per realization; alpha = sigma / (2 d).
    mags = rng.exponential(cfg.sigma0, size=nj + 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=nj + 1)
    sigma = mags * np.exp(1j * phases)
    alpha = sigma / (2.0 * geo.dist_target)

    h_dl = np.empty((cfg.d, m), dtype=complex)
    for d in range(cfg.d):
        beta = path_loss(geo.dist_dl[d], kap.bs_ue, cfg.c0, cfg.l0)
        los = steering_vector(geo.theta_dl[d], m, cfg.spacing)
        h_dl[d] = np.sqrt(beta) * draw_rician(los, cfg.rician, rng)

    h_ul = np.empty((cfg.u, cfg.n_total), dtype=complex)
    for u in range(cfg.u):
        beta0 = path_loss(geo.dist_ul_pbs[u], kap.bs_ue, cfg.c0, cfg.l0)
        los0 = steering_vector(geo.theta_ul_pbs[u], n0, cfg.spacing)
        blocks = [np.sqrt(beta0) * draw_rician(los0, cfg.rician, rng)]
        for k in range(nj):
            betak = path_loss(geo.dist_ul_sbs[k, u], kap.ue_sbs, cfg.c0, cfg.l0)
            losk = steering_vector(geo.theta_ul_sbs[k, u], n1, cfg.spacing)
            blocks.append(np.sqrt(betak) * draw_rician(losk, cfg.rician, rng))
        h_ul[u] = np.concatenate(blocks)

    # UL UE -> DL UE cross channel: Rayleigh small-scale, UE-UE exponent.
    g = (rng.standard_normal((cfg.d, cfg.u)) + 1j * rng.standard_normal((cfg.d, cfg.u))) / np.sqrt(2.0)
    beta_cross = path_loss(geo.dist_cross, kap.ue_ue, cfg.c0, cfg.l0)
    h_cross = np.sqrt(beta_cross) * g

    # Residual SI: two parallel ULAs separated by array_separation wavelengths;
    # every entry has magnitude sqrt(beta_si), phase set by element spacing.
    lam = cfg.wavelength
    tx_pos = np.arange(m) * cfg.spacing * lam
    rx_pos = np.arange(n0) * cfg.spacing * lam
    sep = cfg.array_separation * lam
    r_lm = np.sqrt(sep ** 2 + (rx_pos[:, None] - tx_pos[None, :]) ** 2)
    h_si = np.sqrt(cfg.beta_si) * np.exp(-2j * np.pi * r_lm / lam)

    a_t = steering_vector(geo.theta, m, cfg.spacing)
    a_blocks = [alpha[0] * np.outer(steering_vector(geo.theta, n0, cfg.spacing), a_t.conj())]
    for k in range(nj):
        a_r = steering_vector(geo.phi[k], n1, cfg.spacing)
        a_blocks.append(alpha[k + 1] * np.outer(a_r, a_t.conj()))
    a_stacked = np.vstack(a_blocks)

    g_effective = np.zeros((cfg.n_total, m), dtype=complex)
    g_effective[:n0, :] = h_si

    return ChannelSet(
        n0=n0, n1=n1, j=nj,
        h_dl=h_dl, h_ul=h_ul, h_si=h_si, h_cross=h_cross,
        alpha=alpha, a_blocks=a_blocks, a_stacked=a_stacked,
        g_effective=g_effective, b0=a_stacked + g_effective,
        noise_dl=cfg.noise_dl, noise_ul=cfg.noise_ul, noise_sense=cfg.noise_sense,
        spacing=cfg.spacing)


def make_scenario(cfg: ScenarioConfig):
    """Geometry + channels for one trial, from the config's seed."""
    rng = np.random.default_rng(cfg.seed)
    geo = generate_topology(cfg.topology, cfg, rng)
    return geo, build_channels(geo, cfg, rng)
