"""Experiment harness and command-line entry point.

Reproduces the stock experiment set at desk scale: seeded Monte Carlo
sweeps over the sensing threshold, transmit power, station/antenna counts
and topology; convergence traces; detection curves; and beampattern
exports.  Every experiment writes a plot-ready CSV (deterministic bytes for
a fixed spec) plus a JSON metadata file carrying the full config echo,
per-trial seeds, and timings.

Usage:  japs run <experiment> [--config FILE] [--trials N] [--seed S]
                 [--out DIR] [--schemes a,b,c] [--grid v1,v2,...]
                 [--jobs N] [--pfa P]
Exit codes: 0 success, 2 config error, 3 more than 10% of trials infeasible.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import detection_probability, metrics_report
from .orchestrator import AlgorithmOptions, NonMonotoneTrace, Scheme, optimize
from .rxopt import InfeasiblePower
from .scenario import (PathLossExponents, ScenarioConfig, Tolerances, Topology,
                       make_scenario, steering_vector)
from .txbf import InfeasibleSensing, NoRankOneConvergence

log = logging.getLogger("japs")

EXPERIMENTS = ("detection_curve", "convergence", "tx_beampattern",
               "rx_beampattern", "rate_vs_gamma", "rate_vs_pmax", "rate_vs_J",
               "rate_vs_M", "rate_vs_N", "topology_compare")

SCHEME_NAMES = {s.value: s for s in Scheme}

CSV_HEADER = ("sweep_value,scheme,trial_seed,sum_rate_bits_per_s_per_hz,"
              "rate_dl_bits_per_s_per_hz,rate_ul_bits_per_s_per_hz,"
              "sensing_sinr_linear,p_detect,iterations,status")


class ConfigError(ValueError):
    """Bad config file or overrides (unknown key, unparsable value)."""


class SchemaMismatch(ValueError):
    """Result tables with incompatible layouts."""


@dataclass
class ExperimentSpec:
    name: str
    trials: int = 20
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    schemes: tuple = ("japs",)
    sweep_grid: tuple = ()
    output_dir: str = "out"
    p_fa: float = 1e-4
    jobs: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for s in self.schemes:
            if s not in SCHEME_NAMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from "
                                  f"{sorted(SCHEME_NAMES)}")


@dataclass
class ResultRow:
    sweep_value: float | str
    scheme: str
    trial_seed: int
    sum_rate: float
    rate_dl_total: float
    rate_ul_total: float
    sensing_sinr: float
    p_detect: float
    iterations: int
    wall_time: float
    status: str = "ok"


@dataclass
class ResultTable:
    rows: list
    aggregates: list = field(default_factory=list)  # (sweep, scheme, stat, value)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Stable per-trial stream: master XOR a splitmix-style mix of the index."""
    mask = (1 << 64) - 1
    z = (trial_index + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    z ^= z >> 31
    return (master_seed ^ z) & mask


# --- config file ------------------------------------------------------------

_INT_KEYS = {"m", "n0", "n1", "j", "d", "u", "seed", "max_outer_iters",
             "max_inner_iters"}
_FLOAT_KEYS = {"p_max_pbs_dbm", "p_max_ue_dbm", "noise_dl_dbm", "noise_ul_dbm",
               "noise_sense_dbm", "gamma_sense_db", "rician_db", "c0_db", "l0",
               "beta_si_db", "sigma0", "spacing", "wavelength",
               "array_separation", "region_size", "eta1_init", "eta_scale",
               "eps_inner", "eps_rank_one", "xi_outer", "kappa_pbs_target",
               "kappa_target_sbs", "kappa_bs_ue", "kappa_ue_sbs", "kappa_ue_ue"}
_LIST_KEYS = {"dl_ue_angles_deg", "ul_ue_angles_deg"}
_TOL_KEYS = {"eta1_init", "eta_scale", "eps_inner", "eps_rank_one", "xi_outer",
             "max_outer_iters", "max_inner_iters"}
_KAPPA_KEYS = {"kappa_pbs_target": "pbs_target", "kappa_target_sbs": "target_sbs",
               "kappa_bs_ue": "bs_ue", "kappa_ue_sbs": "ue_sbs",
               "kappa_ue_ue": "ue_ue"}


def parse_config_text(text: str) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key] = val
    return out


def _parse_value(key: str, val):
    if not isinstance(val, str):
        return val
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _LIST_KEYS:
        if val.lower() in ("none", ""):
            return None
        return tuple(float(x) for x in val.split(","))
    if key == "topology":
        try:
            return Topology(val.lower())
        except ValueError as exc:
            raise ConfigError(f"unknown topology {val!r}") from exc
    raise ConfigError(f"unknown config key {key!r}")


def build_config(overrides: dict) -> ScenarioConfig:
    """Default scenario config with overrides applied; conversions logged."""
    plain = {}
    tol_kw = {}
    kappa_kw = {}
    for key, raw in overrides.items():
        if key == "topology" or key in _INT_KEYS or key in _FLOAT_KEYS \
                or key in _LIST_KEYS:
            val = _parse_value(key, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _TOL_KEYS:
            tol_kw[key] = val
        elif key in _KAPPA_KEYS:
            kappa_kw[_KAPPA_KEYS[key]] = val
        else:
            plain[key] = val
    try:
        cfg = ScenarioConfig(
            **plain,
            tol=Tolerances(**{**dataclasses.asdict(Tolerances()), **tol_kw}),
            kappa=PathLossExponents(
                **{**dataclasses.asdict(PathLossExponents()), **kappa_kw}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    log.info("config: p_max_pbs=%.6g W, p_max_ue=%.6g W, noise=(%.3g, %.3g, %.3g) W, "
             "gamma_sense=%.6g (linear)", cfg.p_max_pbs, cfg.p_max_ue,
             cfg.noise_dl, cfg.noise_ul, cfg.noise_sense, cfg.gamma_sense)
    return cfg


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# --- sweep parameter application --------------------------------------------

def _apply_sweep(cfg: ScenarioConfig, experiment: str, value):
    if experiment == "rate_vs_gamma":
        return dataclasses.replace(cfg, gamma_sense_db=float(value))
    if experiment == "rate_vs_pmax":
        return dataclasses.replace(cfg, p_max_pbs_dbm=float(value))
    if experiment == "rate_vs_J":
        return dataclasses.replace(cfg, j=int(value))
    if experiment == "rate_vs_M":
        return dataclasses.replace(cfg, m=int(value))
    if experiment == "rate_vs_N":
        return dataclasses.replace(cfg, n0=int(value), n1=int(value))
    if experiment == "topology_compare":
        return dataclasses.replace(cfg, topology=Topology(str(value)))
    return cfg


_DEFAULT_GRIDS = {
    "rate_vs_gamma": (6.0, 8.0, 10.0, 12.0),
    "rate_vs_pmax": (26.0, 28.0, 30.0, 32.0),
    "rate_vs_J": (1, 2, 3, 4),
    "rate_vs_M": (4, 6, 8),
    "rate_vs_N": (4, 6, 8),
    "topology_compare": ("random", "circular", "linear"),
    "detection_curve": tuple(np.linspace(0.0, 18.0, 10)),
}


# --- core runners -----------------------------------------------------------

def _run_one_trial(args):
    """One (sweep value, trial) cell: every scheme on the same channels."""
    cfg_dict, experiment, sweep_value, t_seed, schemes, p_fa = args
    cfg = _rebuild_config(cfg_dict)
    cfg = _apply_sweep(cfg, experiment, sweep_value)
    cfg = dataclasses.replace(cfg, seed=t_seed)
    rows = []
    traces = {}
    try:
        _, ch = make_scenario(cfg)
    except Exception as exc:  # geometry cannot be drawn: config-level failure
        raise ConfigError(f"scenario generation failed: {exc}") from exc
    for name in schemes:
        scheme = SCHEME_NAMES[name]
        t0 = time.perf_counter()
        try:
            sol, trace = optimize(ch, cfg, AlgorithmOptions(scheme=scheme))
            rep = metrics_report(ch, sol, p_fa_grid=(p_fa,))
            rows.append(ResultRow(
                sweep_value=sweep_value, scheme=name, trial_seed=t_seed,
                sum_rate=rep.sum_rate, rate_dl_total=float(rep.rate_dl.sum()),
                rate_ul_total=float(rep.rate_ul.sum()),
                sensing_sinr=rep.sinr_sense, p_detect=rep.p_detect[p_fa],
                iterations=trace.iterations,
                wall_time=time.perf_counter() - t0))
            traces[name] = trace
        except (InfeasibleSensing, InfeasiblePower, NoRankOneConvergence) as exc:
            rows.append(ResultRow(
                sweep_value=sweep_value, scheme=name, trial_seed=t_seed,
                sum_rate=float("nan"), rate_dl_total=float("nan"),
                rate_ul_total=float("nan"), sensing_sinr=float("nan"),
                p_detect=float("nan"), iterations=0,
                wall_time=time.perf_counter() - t0,
                status=f"infeasible:{type(exc).__name__}"))
    return rows, traces


def _rebuild_config(cfg_dict):
    d = dict(cfg_dict)
    d["tol"] = Tolerances(**d.pop("tol"))
    d["kappa"] = PathLossExponents(**d.pop("kappa"))
    d["topology"] = Topology(d["topology"])
    for key in ("dl_ue_angles_deg", "ul_ue_angles_deg"):
        if d[key] is not None:
            d[key] = tuple(d[key])
    return ScenarioConfig(**d)


def _config_dict(cfg: ScenarioConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["topology"] = cfg.topology.value
    return d


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.12g}"


def _write_rows_csv(path: Path, table: ResultTable):
    lines = [CSV_HEADER]
    for r in table.rows:
        lines.append(",".join([
            _fmt(r.sweep_value), r.scheme, str(r.trial_seed), _fmt(r.sum_rate),
            _fmt(r.rate_dl_total), _fmt(r.rate_ul_total), _fmt(r.sensing_sinr),
            _fmt(r.p_detect), str(r.iterations), r.status]))
    for sweep, scheme, stat, value in table.aggregates:
        lines.append(",".join([
            _fmt(sweep), scheme, stat, _fmt(value), "", "", "", "", "", "aggregate"]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _aggregate(rows) -> list:
    keys = sorted({(r.sweep_value, r.scheme) for r in rows},
                  key=lambda k: (str(k[0]), k[1]))
    out = []
    for sweep, scheme in keys:
        vals = np.array([r.sum_rate for r in rows
                         if r.sweep_value == sweep and r.scheme == scheme
                         and r.status == "ok"])
        if len(vals) == 0:
            continue
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append((sweep, scheme, "mean", mean))
        out.append((sweep, scheme, "se", se))
    return out


def beampattern_export(solution, channels, grid, spacing=None):
    """Angle-domain gains of the optimized solution.

    Returns (angles in radians, curves) where curves maps curve name to gain
    in dB normalized to that curve's maximum: 'tx' is the transmit pattern
    a_t(theta)^H X a_t(theta); 'rx_sense' and 'rx_ul_<u>' are the PBS-block
    receive patterns of the sensing and per-UE uplink filters.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) >= np.pi / 2):
        raise ValueError("beampattern angles must lie inside (-pi/2, pi/2)")
    spacing = channels.spacing if spacing is None else spacing
    m, n0 = channels.m, channels.n0
    cov = solution.total_covariance()
    at = np.stack([steering_vector(a, m, spacing) for a in grid])
    tx = np.einsum("ki,ij,kj->k", at.conj(), cov, at).real
    ar = np.stack([steering_vector(a, n0, spacing) for a in grid])
    curves = {"tx": tx}
    u0 = solution.u[:n0]
    curves["rx_sense"] = np.abs(ar.conj() @ u0) ** 2
    for u in range(solution.v_u.shape[0]):
        curves[f"rx_ul_{u}"] = np.abs(ar.conj() @ solution.v_u[u][:n0]) ** 2

    out = {}
    for name, lin in curves.items():
        peak = max(float(np.max(lin)), 1e-300)
        out[name] = 10.0 * np.log10(np.maximum(lin, 1e-300) / peak)
    return grid, out


def summarize(tables) -> dict:
    """Paired per-trial scheme comparisons with means and standard errors.

    Expected-ordering violations (communication-only above the constrained
    schemes, joint sensing above single-mode sensing) are counted per pair.
    """
    if not tables:
        raise SchemaMismatch("no tables given")
    rows = []
    for t in tables:
        rows.extend(t.rows)
    if not rows:
        raise SchemaMismatch("tables contain no rows")
    schemes = sorted({r.scheme for r in rows})
    expected_above = {("comm", "japs"), ("comm", "as"), ("comm", "ps"),
                      ("japs", "as"), ("japs", "ps")}
    report = {"pairs": {}}
    for i, a in enumerate(schemes):
        for b in schemes[i + 1:]:
            diffs = []
            cells = {(r.sweep_value, r.trial_seed): r.sum_rate
                     for r in rows if r.scheme == a and r.status == "ok"}
            for r in rows:
                if r.scheme == b and r.status == "ok":
                    key = (r.sweep_value, r.trial_seed)
                    if key in cells:
                        diffs.append(cells[key] - r.sum_rate)
            if not diffs:
                continue
            diffs = np.array(diffs)
            se = float(diffs.std(ddof=1) / np.sqrt(len(diffs))) if len(diffs) > 1 else 0.0
            entry = {"mean_diff": float(diffs.mean()), "se": se, "n": len(diffs)}
            if (a, b) in expected_above:
                entry["violations"] = int(np.sum(diffs < -1e-9))
            elif (b, a) in expected_above:
                entry["violations"] = int(np.sum(diffs > 1e-9))
            report["pairs"][f"{a}-{b}"] = entry
    return report


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Execute one experiment; writes results.csv and metadata.json."""
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_cfg = build_config(spec.overrides)
    started = time.time()

    if spec.name == "detection_curve":
        table = _detection_curve(spec, out_dir)
    elif spec.name in ("tx_beampattern", "rx_beampattern"):
        table = _beampattern_experiment(spec, base_cfg, out_dir)
    elif spec.name == "convergence":
        table = _convergence_experiment(spec, base_cfg, out_dir)
    else:
        table = _sweep_experiment(spec, base_cfg, out_dir)

    ok = sum(1 for r in table.rows if r.status == "ok")
    bad = sum(1 for r in table.rows if r.status.startswith("infeasible"))
    meta = {
        "experiment": spec.name,
        "version": __version__,
        "trials": spec.trials,
        "master_seed": spec.seed,
        "schemes": list(spec.schemes),
        "sweep_grid": [str(v) for v in _grid(spec)],
        "p_fa": spec.p_fa,
        "config": _config_dict(base_cfg),
        "trial_seeds": [trial_seed(spec.seed, i) for i in range(spec.trials)],
        "rows_ok": ok,
        "rows_infeasible": bad,
        "failures": [dataclasses.asdict(r) for r in table.rows
                     if r.status != "ok"],
        "wall_times_s": {f"{r.sweep_value}/{r.scheme}/{r.trial_seed}": r.wall_time
                         for r in table.rows},
        "total_wall_time_s": time.time() - started,
    }
    (out_dir / "metadata.json").write_text(
        json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")
    return table


def _grid(spec: ExperimentSpec):
    if spec.sweep_grid:
        return spec.sweep_grid
    return _DEFAULT_GRIDS.get(spec.name, (0,))


def _detection_curve(spec: ExperimentSpec, out_dir: Path) -> ResultTable:
    sinr_db = np.asarray(_grid(spec), dtype=float)
    p_fas = (1e-4, 1e-3, 1e-2, 1e-1)
    lines = ["sensing_sinr_db,p_fa,p_detect"]
    rows = []
    for pfa in p_fas:
        for s_db in sinr_db:
            s_lin = 10.0 ** (s_db / 10.0)
            pd = detection_probability(s_lin, pfa)
            lines.append(f"{_fmt(s_db)},{_fmt(pfa)},{_fmt(pd)}")
            rows.append(ResultRow(
                sweep_value=float(s_db), scheme=f"pfa={pfa:g}", trial_seed=0,
                sum_rate=0.0, rate_dl_total=0.0, rate_ul_total=0.0,
                sensing_sinr=s_lin, p_detect=pd, iterations=0, wall_time=0.0))
    (out_dir / "detection_curve.csv").write_text("\n".join(lines) + "\n",
                                                 encoding="utf-8")
    table = ResultTable(rows=rows)
    _write_rows_csv(out_dir / "results.csv", table)
    return table


def _run_cells(spec: ExperimentSpec, base_cfg, cells):
    """Run (sweep, trial) cells serially or in a process pool."""
    cfg_dict = _config_dict(base_cfg)
    args = [(cfg_dict, spec.name, sweep, trial_seed(spec.seed, t),
             spec.schemes, spec.p_fa) for sweep, t in cells]
    if spec.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.jobs) as ex:
            results = list(ex.map(_run_one_trial, args))
    else:
        results = [_run_one_trial(a) for a in args]
    return results


def _sweep_experiment(spec: ExperimentSpec, base_cfg, out_dir: Path) -> ResultTable:
    grid = _grid(spec)
    cells = [(sweep, t) for sweep in grid for t in range(spec.trials)]
    results = _run_cells(spec, base_cfg, cells)
    rows = [r for rows_i, _ in results for r in rows_i]
    rows.sort(key=lambda r: (str(r.sweep_value), r.scheme, r.trial_seed))
    table = ResultTable(rows=rows, aggregates=_aggregate(rows))
    _write_rows_csv(out_dir / "results.csv", table)
    return table


def _convergence_experiment(spec: ExperimentSpec, base_cfg, out_dir: Path) -> ResultTable:
    cells = [(0, t) for t in range(spec.trials)]
    results = _run_cells(spec, base_cfg, cells)
    lines = ["iteration,scheme,trial_seed,sum_rate_bits_per_s_per_hz,"
             "sensing_sinr_linear,max_rank_residual,wall_time_note"]
    rows = []
    for (trial_rows, traces), (sweep, t) in zip(results, cells):
        rows.extend(trial_rows)
        for name, trace in sorted(traces.items()):
            for k, rate in enumerate(trace.sum_rate):
                lines.append(
                    f"{k},{name},{trial_rows[0].trial_seed},{_fmt(rate)},"
                    f"{_fmt(trace.sensing_sinr[k])},"
                    f"{_fmt(trace.max_rank_residual[k])},in_metadata")
    (out_dir / "convergence.csv").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")
    rows.sort(key=lambda r: (str(r.sweep_value), r.scheme, r.trial_seed))
    table = ResultTable(rows=rows, aggregates=_aggregate(rows))
    _write_rows_csv(out_dir / "results.csv", table)
    return table


def _beampattern_experiment(spec: ExperimentSpec, base_cfg, out_dir: Path) -> ResultTable:
    grid_deg = np.arange(-90.0, 90.0 + 1e-9, 1.0)
    angles = np.radians(np.clip(grid_deg, -89.999, 89.999))
    rows = []
    lines = ["trial_seed,curve,angle_deg,gain_db"]
    for t in range(spec.trials):
        t_seed = trial_seed(spec.seed, t)
        cfg = dataclasses.replace(base_cfg, seed=t_seed)
        _, ch = make_scenario(cfg)
        name = spec.schemes[0]
        t0 = time.perf_counter()
        try:
            sol, trace = optimize(ch, cfg, AlgorithmOptions(scheme=SCHEME_NAMES[name]))
        except (InfeasibleSensing, InfeasiblePower, NoRankOneConvergence) as exc:
            rows.append(ResultRow(sweep_value=0, scheme=name, trial_seed=t_seed,
                                  sum_rate=float("nan"), rate_dl_total=float("nan"),
                                  rate_ul_total=float("nan"), sensing_sinr=float("nan"),
                                  p_detect=float("nan"), iterations=0,
                                  wall_time=time.perf_counter() - t0,
                                  status=f"infeasible:{type(exc).__name__}"))
            continue
        _, curves = beampattern_export(sol, ch, angles)
        wanted = ("tx",) if spec.name == "tx_beampattern" else \
            tuple(k for k in curves if k.startswith("rx"))
        for cname in wanted:
            for adeg, g in zip(grid_deg, curves[cname]):
                lines.append(f"{t_seed},{cname},{_fmt(adeg)},{_fmt(g)}")
        rep = metrics_report(ch, sol, p_fa_grid=(spec.p_fa,))
        rows.append(ResultRow(
            sweep_value=0, scheme=name, trial_seed=t_seed,
            sum_rate=rep.sum_rate, rate_dl_total=float(rep.rate_dl.sum()),
            rate_ul_total=float(rep.rate_ul.sum()), sensing_sinr=rep.sinr_sense,
            p_detect=rep.p_detect[spec.p_fa], iterations=trace.iterations,
            wall_time=time.perf_counter() - t0))
    (out_dir / "beampattern.csv").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")
    table = ResultTable(rows=rows, aggregates=_aggregate(rows))
    _write_rows_csv(out_dir / "results.csv", table)
    return table


# --- entry point ------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="japs", description="Cooperative multi-static ISAC simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="flat key=value config file")
    run.add_argument("--trials", type=int, default=20)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="out")
    run.add_argument("--schemes", default="japs",
                     help="comma list: japs,as,ps,comm,rzf")
    run.add_argument("--grid", default="",
                     help="comma list of sweep values (experiment-specific)")
    run.add_argument("--jobs", type=int, default=1,
                     help="worker processes for independent trials")
    run.add_argument("--pfa", type=float, default=1e-4,
                     help="false-alarm rate for the detection column")
    return parser


def _parse_grid(text: str, experiment: str):
    if not text:
        return ()
    if experiment == "topology_compare":
        return tuple(v.strip() for v in text.split(","))
    return tuple(float(v) for v in text.split(","))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        overrides = load_config_file(args.config) if args.config else {}
        spec = ExperimentSpec(
            name=args.experiment, trials=args.trials, seed=args.seed,
            overrides=overrides,
            schemes=tuple(s.strip() for s in args.schemes.split(",") if s.strip()),
            sweep_grid=_parse_grid(args.grid, args.experiment),
            output_dir=args.out, p_fa=args.pfa, jobs=args.jobs)
        table = run_experiment(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonMonotoneTrace as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    total = len(table.rows)
    bad = sum(1 for r in table.rows if r.status.startswith("infeasible"))
    if total and bad / total > 0.10:
        print(f"warning: {bad}/{total} trials infeasible", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
