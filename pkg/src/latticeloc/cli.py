"""Batch orchestration: config parsing, experiment dispatch, parallel seed
scheduling, CSV persistence and a reproducibility manifest.

Every run is a pure function of (config, artifact version): worker count
and output directory affect neither the manifest hash nor the bytes of any
CSV.  Seed-level tasks always execute in spawned worker processes so the
numerical environment is identical at any worker count.
"""

from __future__ import annotations

import argparse
import functools
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import multiprocessing as mp

import numpy as np

from . import __version__
from .dyadic import build_dyadic_partition
from .dynamics import (
    ContourSpec,
    ShellObservable,
    TorusHamiltonian,
    chebyshev_evolve,
    delta_state,
    filter_sup_error,
    free_evolve,
    shell_mass,
)
from .graphs import (
    AmplitudeParams,
    admissible_tree,
    double_factorial,
    enumerate_pairings,
    mc_wick_oracle,
    remainder_bounds,
    schedule_parameters,
    wick_expectation,
)
from .lattice import DecayProfile, EnergyWindow, LatticeBox, TorusGrid, sample_disorder
from .normbench import (
    ResolventProbe,
    contour_alpha_samples,
    fit_line,
    kappa_gain,
    resolvent_l1,
    smoothed_linf_table,
)
from .spectral import dirichlet_diagonalize, disorder_average, localization_report

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "ConfigError",
    "run",
    "parallel_seed_map",
    "main",
]

_MODES = ("sweep", "verify-wick", "resolvent-norms", "evolve", "diag", "schedule", "bounds")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    out_dir: str = "out"
    workers: int = 1
    # model parameters
    L: int = 12
    sigmas: list = field(default_factory=lambda: [0.25])
    lams: list = field(default_factory=lambda: [0.5])
    tau: float = 0.5
    delta: float = 0.1
    ell: float = 8.0
    eta: float = 0.1
    eps: float | None = None  # shell-mass threshold; default delta^(4/5)
    # seeds
    seed_base: int = 1
    realizations: int = 2
    # numerics
    grid_m: int = 10
    filter_degree: int = 2000
    samples: int = 100_000
    cap: int = 8
    wick_configs: int = 20
    t_values: list = field(default_factory=lambda: [1.0, 3.0])
    js: list = field(default_factory=lambda: [3, 4, 5, 6])
    epsilons: list = field(default_factory=lambda: [2.0**-6])
    kappas: list = field(default_factory=lambda: [4.0, 16.0])

    def validate(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"mode: unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.L < 1 or self.L > 60:
            raise ConfigError(f"L: box half-side {self.L} outside [1, 60]")
        for s in self.sigmas:
            if not (0.0 <= s <= 0.5):
                raise ConfigError(f"sigmas: decay exponent {s} outside [0, 1/2]")
        for lam in self.lams:
            if lam < 0:
                raise ConfigError(f"lams: coupling {lam} must be >= 0")
        if not (0.0 < self.tau < 1.0):
            raise ConfigError(f"tau: window margin {self.tau} outside (0,1)")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta: inner fraction {self.delta} outside (0,1)")
        if self.mode in ("schedule", "bounds"):
            if not (0.0 < self.eta < 0.25):
                raise ConfigError(f"eta: {self.eta} outside (0, 1/4)")
            for lam in self.lams:
                if not (lam < self.tau < self.delta):
                    raise ConfigError(
                        f"lams/tau/delta: need lambda < tau < delta, got ({lam}, {self.tau}, {self.delta})"
                    )
        if self.realizations < 0:
            raise ConfigError("realizations: must be >= 0")
        if not (4 <= self.grid_m <= 13):
            raise ConfigError(f"grid_m: {self.grid_m} outside [4, 13]")
        if self.samples < 1000:
            raise ConfigError("samples: Monte Carlo needs >= 1000 samples")
        if self.cap > 12:
            raise ConfigError("cap: pairing enumeration capped at 12 vertices")

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        d.pop("workers")  # excluded from the hash: results must not depend on it
        return d

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: not valid JSON ({e})") from None
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        if "mode" not in raw:
            raise ConfigError("config: missing required field 'mode'")
        cfg = cls(**raw)
        cfg.validate()
        return cfg


@dataclass
class RunManifest:
    config_hash: str
    version: str
    checksums: dict
    wall_clock: float
    workers: int
    failures: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Seed-level parallel map.


def _worker_shim(payload):
    task, seed = payload
    try:
        return seed, True, task(seed)
    except Exception as e:  # isolate the seed, report, keep going
        return seed, False, f"{type(e).__name__}: {e}"


def parallel_seed_map(task, seeds, workers: int = 1):
    """Run `task(seed)` for each seed in worker processes.

    Returns (results, failures): results is [(seed, value), ...] in the
    canonical order of the input seed list; failures is [(seed, message)].
    A failing seed is reported and skipped; the rest of the run completes.
    """
    seeds = list(seeds)
    results, failures = [], []
    if not seeds:
        return results, failures
    ctx = mp.get_context("spawn")
    payloads = [(task, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=max(1, workers), mp_context=ctx) as pool:
        outs = list(pool.map(_worker_shim, payloads))
    by_seed = {s: (ok, val) for s, ok, val in outs}
    for s in seeds:
        ok, val = by_seed[s]
        if ok:
            results.append((s, val))
        else:
            failures.append((s, val))
    return results, failures


# ---------------------------------------------------------------------------
# Mode implementations.  Each returns (files, ok) with files a dict
# name -> (header, rows) written in a deterministic order.


def _mode_schedule(cfg: ExperimentConfig):
    rows = []
    for sigma in cfg.sigmas:
        for lam in cfg.lams:
            s = schedule_parameters(sigma, lam, cfg.eta, cfg.delta, cfg.tau)
            rows.append(
                (
                    sigma, lam, cfg.eta, s.J, s.N,
                    s.kappa if s.log_kappa is not None else float("nan"),
                    s.epsilon, s.t_star, s.ell_lower,
                    s.regime,
                    (s.log_kappa or 0.0) / math.log(10.0),
                    s.log_ell_lower / math.log(10.0),
                )
            )
    header = [
        "sigma", "lambda", "eta", "J", "N", "kappa", "epsilon", "t_star", "ell_lower",
        "regime", "log10_kappa", "log10_ell_lower",
    ]
    return {"schedule.csv": (header, rows)}, True


def _mode_bounds(cfg: ExperimentConfig):
    rows = []
    ok = True
    for sigma in cfg.sigmas:
        for lam in cfg.lams:
            sched = schedule_parameters(sigma, lam, cfg.eta, cfg.delta, cfg.tau)
            params = AmplitudeParams(sigma=sigma, tau=cfg.tau, J=sched.J, lam=lam)
            report = remainder_bounds(sched, params)
            for t in report.terms:
                rows.append((sigma, lam, t.name, t.log10_value, t.log10_target, t.passed))
                ok = ok and t.passed
    header = ["sigma", "lambda", "term", "log10_value", "log10_target", "passed"]
    return {"bounds.csv": (header, rows)}, ok


def _mode_verify_wick(cfg: ExperimentConfig):
    grid = TorusGrid(m=max(cfg.grid_m, 6))
    profile = DecayProfile(sigma=cfg.sigmas[0])
    J = 2
    partition = build_dyadic_partition(J, profile, grid)
    rng = np.random.default_rng(cfg.seed_base)
    rows = []
    graph_rows = []
    ok = True
    pairs = [(n, npp) for n in range(0, cfg.cap + 1) for npp in range(0, cfg.cap + 1)
             if 2 <= n + npp <= cfg.cap]
    for n, npp in pairs:
        graphs = enumerate_pairings(n, npp)
        expect = double_factorial(n + npp - 1) if (n + npp) % 2 == 0 else 0
        ok = ok and len(graphs) == expect
        if n >= 1 and npp >= 1:
            for gid, g in enumerate(graphs):
                tree = admissible_tree(g)
                graph_rows.append(
                    (n, npp, gid, ";".join(str(k) for k in sorted(tree.tree_lines)))
                )
    cand_sites = [(0, 0), (1, 0), (2, 2), (3, 1)]
    for c in range(cfg.wick_configs):
        m = 2 * int(rng.integers(1, cfg.cap // 2 + 1))
        sites = [cand_sites[int(rng.integers(0, len(cand_sites)))] for _ in range(m)]
        scales = [int(rng.integers(0, J + 2)) for _ in range(m)]
        exact = wick_expectation(sites, scales, partition, profile)
        mean, stderr = mc_wick_oracle(
            sites, scales, partition, profile, cfg.samples, cfg.seed_base + 7 * c + 1
        )
        z = abs(mean - exact) / stderr if stderr > 0 else (0.0 if mean == exact else math.inf)
        rows.append((c, m, exact, mean, stderr, z, z <= 4.0))
        ok = ok and z <= 4.0
    header = ["config", "factors", "graph_sum", "mc_mean", "mc_stderr", "zscore", "passed"]
    files = {
        "wick.csv": (header, rows),
        "graphs.csv": (["n", "np", "graph_id", "tree_lines"], graph_rows),
    }
    return files, ok


def _mode_evolve(cfg: ExperimentConfig):
    grid = TorusGrid(m=cfg.grid_m)
    profile = DecayProfile(sigma=cfg.sigmas[0])
    lam = cfg.lams[0]
    shell = ShellObservable(center=(0, 0), delta=cfg.delta, ell=cfg.ell)
    rows = []
    psi0 = delta_state(grid)
    ham = TorusHamiltonian.from_seed(grid, profile, cfg.seed_base, lam)
    for t in cfg.t_values:
        if lam == 0.0:
            psi = free_evolve(psi0, t)
        else:
            psi = chebyshev_evolve(psi0, ham, t)
        rows.append((t, psi.norm(), shell_mass(psi, shell)))
    window = EnergyWindow(tau=cfg.tau)
    r = ham.spectral_bound * (1.0 + 1e-9)
    filt_rows = [
        (deg, filter_sup_error(window, r, deg))
        for deg in sorted({cfg.filter_degree // 4, cfg.filter_degree // 2, cfg.filter_degree})
    ]
    files = {
        "evolve.csv": (["t", "norm", "shell_mass"], rows),
        "filter_error.csv": (["degree", "sup_error"], filt_rows),
    }
    return files, True


def _diag_seed_task(seed: int, L: int, sigma: float, lam: float, tau: float,
                    delta: float, ell: float, eps: float):
    box = LatticeBox(L=L)
    profile = DecayProfile(sigma=sigma)
    dis = sample_disorder(seed, box, profile)
    sol = dirichlet_diagonalize(box, dis, lam)
    rep = localization_report(sol, EnergyWindow(tau=tau), eps, delta, ell)
    rows = []
    for a in range(sol.size):
        rows.append(
            (
                seed, L, lam, sigma, a, float(sol.eigenvalues[a]),
                float(rep.statistic_interior[a]), float(rep.ipr[a]),
                float(rep.fit_length[a]), bool(rep.in_window[a]),
                bool(rep.in_localized[a]),
            )
        )
    return rows, rep.fraction


def _diag_task_factory(cfg: ExperimentConfig, sigma: float, lam: float):
    eps = cfg.eps if cfg.eps is not None else cfg.delta ** 0.8
    return functools.partial(
        _diag_seed_task, L=cfg.L, sigma=sigma, lam=lam, tau=cfg.tau,
        delta=cfg.delta, ell=cfg.ell, eps=eps,
    )


def _mode_diag(cfg: ExperimentConfig):
    seeds = list(range(cfg.seed_base, cfg.seed_base + cfg.realizations))
    eigen_rows, agg_rows, failures = [], [], []
    for sigma in cfg.sigmas:
        for lam in cfg.lams:
            task = _diag_task_factory(cfg, sigma, lam)
            results, fails = parallel_seed_map(task, seeds, cfg.workers)
            failures.extend(fails)
            fractions = []
            for _seed, (rows, frac) in results:
                eigen_rows.extend(rows)
                fractions.append(frac)
            if fractions:
                mean, stderr = disorder_average(fractions)
                agg_rows.append((sigma, lam, len(fractions), mean, stderr))
    header_e = [
        "seed", "L", "lambda", "sigma", "alpha", "energy", "S_alpha", "IPR",
        "fit_length", "in_window", "in_localized_set",
    ]
    header_a = ["sigma", "lambda", "realizations", "fraction_mean", "fraction_stderr"]
    files = {"eigenstates.csv": (header_e, eigen_rows), "aggregate.csv": (header_a, agg_rows)}
    return files, len(failures) == 0, failures


def _mode_resolvent_norms(cfg: ExperimentConfig):
    grid = TorusGrid(m=cfg.grid_m)
    rows, fit_rows, part_rows = [], [], []
    J = max(cfg.js) + 1
    ok = True
    for sigma in cfg.sigmas:
        profile = DecayProfile(sigma=sigma)
        partition = build_dyadic_partition(J, profile, grid)
        for cert in partition.certificates:
            part_rows.append((sigma, cert.j, cert.jp, cert.max_ratio, cert.l1_norm))
        spec = ContourSpec(tau=cfg.tau, t=1.0 / min(cfg.epsilons))
        alphas = contour_alpha_samples(spec, per_segment=3)
        # L1 growth in log(1/eps)
        for eps in cfg.epsilons:
            val = max(
                resolvent_l1(ResolventProbe(alpha=complex(a.real, 0.0), epsilon=eps, grid=grid))
                for a in alphas
            )
            rows.append((sigma, -1, J, eps, 1.0, float(np.real(alphas[0])), 0.0, "l1", val, grid.m))
        # smoothed sup norms per scale; probe eps at the grid scale so the
        # slope window stays clear of the 1/(eps + 2^-j) saturation
        eps_slope = 2.0**-grid.m
        table = smoothed_linf_table(
            grid, [complex(a.real, 0.0) for a in alphas], eps_slope, cfg.js, partition, profile
        )
        vals = table.max(axis=1)
        for j, v in zip(cfg.js, vals):
            rows.append((sigma, j, J, eps_slope, 1.0, float(np.real(alphas[0])), 0.0, "linf_smoothed", float(v), grid.m))
        fit = fit_line(np.array(cfg.js, float), np.log2(vals))
        fit_rows.append((sigma, "linf_slope", fit.slope, fit.stderr, fit.intercept, fit.r2, 1.0 - 2.0 * sigma))
        ok = ok and abs(fit.slope - (1.0 - 2.0 * sigma)) <= 0.15
        # kappa gains
        for kap in cfg.kappas:
            probe = ResolventProbe(alpha=complex(alphas[0].real, 0.0), epsilon=2.0**-J, grid=grid)
            g = kappa_gain(probe, partition, profile, kap)
            rows.append((sigma, -1, J, 2.0**-J, kap, float(np.real(alphas[0])), 0.0, "kappa_gain", g, grid.m))
    header = ["sigma", "j", "J", "epsilon", "kappa", "alpha_re", "alpha_im", "norm_kind", "value", "grid_m"]
    header_f = ["sigma", "kind", "slope", "slope_stderr", "intercept", "r2", "predicted"]
    header_p = ["sigma", "j", "jp", "max_ratio", "l1_norm"]
    files = {
        "norms.csv": (header, rows),
        "fits.csv": (header_f, fit_rows),
        "partition.csv": (header_p, part_rows),
    }
    return files, ok


def run(config: ExperimentConfig) -> tuple[RunManifest, bool]:
    """Dispatch one experiment; write CSVs and the manifest; return (manifest, ok)."""
    config.validate()
    t0 = time.time()
    os.makedirs(config.out_dir, exist_ok=True)
    failures = []
    if config.mode == "schedule":
        files, ok = _mode_schedule(config)
    elif config.mode == "bounds":
        files, ok = _mode_bounds(config)
    elif config.mode == "verify-wick":
        files, ok = _mode_verify_wick(config)
    elif config.mode == "evolve":
        files, ok = _mode_evolve(config)
    elif config.mode in ("diag", "sweep"):
        files, ok, failures = _mode_diag(config)
    elif config.mode == "resolvent-norms":
        files, ok = _mode_resolvent_norms(config)
    else:  # pragma: no cover - validate() guards this
        raise ConfigError(f"mode: {config.mode}")
    checksums = {}
    for name in sorted(files):
        header, rows = files[name]
        path = os.path.join(config.out_dir, name)
        _write_csv(path, header, rows)
        checksums[name] = _sha256(path)
    cfg_hash = hashlib.sha256(
        (json.dumps(config.canonical(), sort_keys=True) + __version__).encode()
    ).hexdigest()
    manifest = RunManifest(
        config_hash=cfg_hash,
        version=__version__,
        checksums=checksums,
        wall_clock=time.time() - t0,
        workers=config.workers,
        failures=[list(f) for f in failures],
    )
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json())
    return manifest, ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticeloc",
        description="Batch runner for the decaying-disorder lattice verification suite",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed-base", type=int, default=None)
        p.add_argument("--realizations", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = ExperimentConfig.from_json(fh.read())
            if cfg.mode != args.mode:
                raise ConfigError(f"mode: config says {cfg.mode!r} but subcommand is {args.mode!r}")
        else:
            cfg = ExperimentConfig(mode=args.mode)
        for name, val in (
            ("out_dir", args.out),
            ("workers", args.workers),
            ("seed_base", args.seed_base),
            ("realizations", args.realizations),
        ):
            if val is not None:
                setattr(cfg, name, val)
        cfg.validate()
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        manifest, ok = run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(json.dumps({"failure": f"{type(e).__name__}: {e}"}), file=sys.stderr)
        return 1
    print(manifest.to_json())
    if not ok:
        print(json.dumps({"failure": "declared acceptance checks failed; see CSV outputs"}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
