"""Command-line front end: ``kleinbox levels | ldos | pipeline``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 failed acceptance check.  Every run writes ``config.txt`` and
``manifest.json`` into the output directory; ``--manifest`` replays a run
from such a manifest and reproduces its files byte for byte.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import (
    ConfigError,
    DiracParams,
    Geometry,
    dump_json,
    get_preset,
    paper_params,
    params_from_config,
    read_config,
    write_config,
)
from .dirac import NumericalError, DomainError, build_eigenstate, find_levels
from .export import (
    svg_heatmap,
    svg_lines,
    write_eigensystem,
    write_envelope,
    write_field,
    write_map,
    write_table,
    write_trace,
)
from .lattice import (
    LevelMismatchError,
    build_hamiltonian,
    chain_from_params,
    compare_intensities,
    compare_levels,
    eigensolve,
    site_map,
    sublattice_envelopes,
)
from .pipeline import recover_parameters, run_ensemble, split_halves, spectroscopy_round_trip
from .spectroscopy import DEFAULT_GAMMA, SpectrumTrace, detect_peaks, ldos_map, synth_all_sites

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

# Frozen thresholds for in-run checks.
SYMMETRY_TOL = 1e-8
INTENSITY_TOL = 0.03
RECOVERY_TOL = {"hbar_c_rel": 0.05, "mc2_rel": 0.15, "f0_mhz": 2.0, "delta_f_mhz": 3.0}


@dataclass
class Setup:
    preset: str
    params: DiracParams
    geometry: Geometry
    disorder_sigma: float
    seed: int
    permute: bool

    def config_dict(self) -> dict:
        return {
            "preset": self.preset,
            "n_left": self.geometry.n_left,
            "n_right": self.geometry.n_right,
            "disorder_sigma_mhz": float(self.disorder_sigma),
            "seed": int(self.seed),
            "permute": bool(self.permute),
        }


@dataclass
class Options:
    gamma: float = DEFAULT_GAMMA
    noise: float = 0.0
    grid_step: float = 0.02
    fmt: str = "csv"
    svg: bool = True
    seeds: int = 1
    summary: bool = False
    symmetric_check: bool = False
    trace: bool = False


# -- setup ------------------------------------------------------------------


def _setup_from_config(cfg: dict) -> Setup:
    params = params_from_config(cfg)
    try:
        geom = Geometry(int(cfg["n_left"]), int(cfg["n_right"]))
    except KeyError as exc:
        raise ConfigError(f"config needs dimer counts, missing {exc.args[0]!r}") from None
    if abs(geom.step_position(params.lattice_const) - params.step_position) > 1e-9 * params.box_length:
        raise ConfigError("a_mm disagrees with n_left and a0_mm")
    return Setup(
        str(cfg.get("preset", "custom")),
        params,
        geom,
        float(cfg.get("disorder_sigma_mhz", 0.0)),
        int(cfg.get("seed", 0)),
        bool(cfg.get("permute", False)),
    )


def resolve_setup(args) -> Setup:
    if args.config:
        setup = _setup_from_config(read_config(args.config))
    else:
        pre = get_preset(args.preset or "E1")
        setup = Setup(pre.id, paper_params(pre.geometry), pre.geometry, pre.disorder_sigma, pre.seed, pre.permute_flag)
    if args.v0 is not None:
        setup.params = setup.params.replace(step_height=float(args.v0))
    if args.disorder is not None:
        if args.disorder < 0:
            raise ConfigError("--disorder must be >= 0")
        setup.disorder_sigma = float(args.disorder)
    if args.seed is not None:
        setup.seed = int(args.seed)
    return setup


def resolve_options(args) -> Options:
    opt = Options(
        gamma=args.gamma,
        noise=args.noise,
        grid_step=args.grid_step,
        fmt=args.format,
        svg=not args.no_svg,
        seeds=getattr(args, "seeds", 1),
        summary=getattr(args, "summary", False),
        symmetric_check=getattr(args, "symmetric_check", False),
        trace=getattr(args, "trace", False),
    )
    if not opt.gamma > 0:
        raise ConfigError("--gamma must be positive")
    if opt.noise < 0:
        raise ConfigError("--noise must be >= 0")
    if not opt.grid_step > 0:
        raise ConfigError("--grid-step must be positive")
    if opt.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    return opt


# -- output bookkeeping -------------------------------------------------------


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.paths: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, p: Path) -> Path:
        self.paths.append(Path(p))
        return Path(p)

    def json(self, rel: str, obj) -> Path:
        p = self.path(rel)
        dump_json(obj, p)
        return self.add(p)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Outputs, command: str, setup: Setup, opt: Options) -> Path:
    cfg_path = out.path("config.txt")
    write_config(cfg_path, setup.params, **setup.config_dict())
    out.add(cfg_path)
    manifest = {
        "command": command,
        "preset": setup.preset,
        "seed": setup.seed,
        "config": read_config(cfg_path),
        "options": dataclasses.asdict(opt),
        "outputs": [
            {"path": p.relative_to(out.root).as_posix(), "sha256": _sha256(p)}
            for p in sorted(set(out.paths))
        ],
        "versions": {
            "kleinbox": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    path = out.root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path) -> tuple[str, Setup, Options]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        setup = _setup_from_config(data["config"])
        opt = Options(**data["options"])
        return data["command"], setup, opt
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None


# -- commands ---------------------------------------------------------------


def _chain(setup: Setup):
    spec = chain_from_params(setup.geometry, setup.params, setup.disorder_sigma, setup.seed, setup.permute)
    return spec, eigensolve(build_hamiltonian(spec))


def cmd_levels(setup: Setup, opt: Options, out: Outputs, log=print) -> list[str]:
    p = setup.params
    levels = find_levels(p)
    spec, eig = _chain(setup)
    sm = site_map(spec, p.lattice_const)
    failed = []
    try:
        lat = p.dirac_point + compare_levels(eig, p, levels.energies).lattice_energies
    except LevelMismatchError as exc:
        log(f"warning: {exc}")
        failed.append("level_count")
        lat = np.full(len(levels), np.nan)
    rows = []
    for n, (e, r) in enumerate(zip(levels.energies, levels.residuals), 1):
        lf = lat[n - 1]
        rows.append([n, e, p.dirac_point + e, lf, lf - p.dirac_point - e, r])
    cols = ["n", "E_mhz", "f_mhz", "lattice_f_mhz", "delta_mhz", "g_residual"]
    out.add(write_table(out.path("levels"), cols, rows, opt.fmt))
    out.add(write_eigensystem(out.path("eigensystem"), eig, opt.fmt))
    for n, e in enumerate(levels.energies, 1):
        out.add(write_field(out.path(f"fields/level_{n:02d}"), build_eigenstate(e, p), opt.fmt))
    for j, idx in enumerate(eig.window_indices, 1):
        out.add(write_envelope(out.path(f"envelopes/level_{j:02d}"), sublattice_envelopes(eig, idx, sm), opt.fmt))

    log(f"{setup.preset}: {len(levels)} continuum levels, {len(eig.window_indices)} lattice window levels")
    log(f"{'n':>3} {'E_n (MHz)':>14} {'f0+E_n':>14} {'lattice':>14} {'delta':>10}")
    for r in rows:
        log(f"{r[0]:>3d} {r[1]:>14.6f} {r[2]:>14.6f} {r[3]:>14.6f} {r[4]:>10.4f}")

    report = {
        "preset": setup.preset,
        "params": p,
        "n_continuum": len(levels),
        "n_lattice_window": int(len(eig.window_indices)),
        "max_abs_delta_mhz": float(np.nanmax(np.abs([r[4] for r in rows]))) if rows else None,
    }
    if opt.symmetric_check:
        if setup.geometry.n_left != setup.geometry.n_right:
            raise ConfigError("--symmetric-check needs equal halves (n_left == n_right)")
        e = levels.energies
        sym = float(np.max(np.abs(e + e[::-1] - p.step_height)))
        report["symmetry_max_abs_mhz"] = sym
        log(f"max|E_n + E_(N+1-n) - V0| = {sym:.3e} MHz")
        if not sym < SYMMETRY_TOL:
            failed.append("particle_hole_symmetry")
    report["failed_checks"] = failed
    out.json("levels_report.json", report)
    return failed


def _ridges(freq, dos, window) -> int:
    lo, hi = window
    sel = (freq > lo) & (freq < hi)
    if not sel.any():
        return 0
    peaks = detect_peaks(SpectrumTrace(-1, freq, dos), 0.01 * dos[sel].max())
    return sum(lo < q.center < hi for q in peaks)


def cmd_ldos(setup: Setup, opt: Options, out: Outputs, log=print) -> list[str]:
    p = setup.params
    spec, eig = _chain(setup)
    lo, hi = spec.window
    grid = np.arange(lo - 30.0, hi + 30.0, opt.grid_step)
    h_left, h_right = split_halves(spec)
    n_l = 2 * spec.n_left
    parts = {
        "left": (eigensolve(h_left), np.arange(n_l)),
        "right": (eigensolve(h_right), np.arange(spec.n_sites - n_l)),
        "whole": (eig, np.arange(spec.n_sites)),
    }
    counts = {}
    for name, (e, sites) in parts.items():
        m = ldos_map(e, sites, grid, opt.gamma)
        out.add(write_map(out.path(f"ldos_{name}"), grid, sites, m.values.T, opt.fmt))
        counts[name] = _ridges(grid, m.dos, (lo, hi))
        if opt.svg:
            out.add(svg_heatmap(out.path(f"ldos_{name}.svg"), sites, grid, m.values.T,
                                title=f"LDOS {name}", xlabel="site", ylabel="MHz", hlines=(lo, hi)))
    dos = ldos_map(eig, np.arange(n_l), grid, opt.gamma)
    out.add(write_table(out.path("dos"), ["freq_mhz", "dos"], zip(grid, dos.dos), opt.fmt))
    levels = find_levels(p).frequencies(p.dirac_point)
    if opt.svg:
        out.add(svg_lines(out.path("dos.svg"), grid, [dos.dos], ["DOS (left sites)"],
                          "DOS with continuum levels", "MHz", "DOS", vlines=levels))
    report = {"window_mhz": [lo, hi], "ridge_counts": counts, "continuum_levels_mhz": levels,
              "gamma_mhz": opt.gamma, "failed_checks": []}
    out.json("ldos_report.json", report)
    log(f"{setup.preset}: window ({lo:.3f}, {hi:.3f}) MHz, ridges " +
        ", ".join(f"{k}={v}" for k, v in counts.items()))
    return []


def _fit_report(fit, a0, with_trace):
    res = fit.result
    out = {
        "mc2_mhz": fit.mc2,
        "hbar_c_mhz_mm": fit.hbar_c,
        "hbar_c_over_a0_mhz": fit.hbar_c / a0,
        "f0_mhz": fit.dirac_point,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "message": res.message,
        "covariance": res.covariance,
    }
    if with_trace:
        out["trace"] = [{"params": x, "cost": c, "damping": lam} for x, c, lam in res.trace]
    return out


def cmd_pipeline(setup: Setup, opt: Options, out: Outputs, log=print) -> list[str]:
    p = setup.params
    a0 = p.lattice_const
    failed = list(cmd_levels(setup, Options(**{**dataclasses.asdict(opt), "symmetric_check": False}), out, log=lambda *a: None))
    spec, eig = _chain(setup)
    sm = site_map(spec, a0)
    levels = find_levels(p)

    # forward spectroscopy and extraction
    rt = spectroscopy_round_trip(eig, opt.gamma, opt.noise, setup.seed, opt.grid_step)
    lo, hi = spec.window
    grid = np.arange(lo - 20.0, hi + 20.0, opt.grid_step)
    for tr in synth_all_sites(eig, grid, opt.gamma, 1.0, opt.noise, setup.seed):
        out.add(write_trace(out.path(f"traces/site_{tr.probe_site:03d}"), tr, opt.fmt))
    out.add(write_table(
        out.path("peaks"),
        ["level", "true_f_mhz", "fitted_f_mhz", "error_mhz", "intensity_max_abs_error"],
        zip(range(1, len(rt.true_levels) + 1), rt.true_levels, rt.fitted_levels, rt.center_errors, rt.intensity_errors),
        opt.fmt,
    ))
    if len(rt.center_errors) and np.max(np.abs(rt.center_errors)) >= opt.gamma / 10:
        failed.append("peak_centers")

    # 3rd window mode: extracted vs lattice vs continuum
    if len(eig.window_indices) >= 3 and len(levels) >= 3:
        n3 = eig.window_indices[2]
        field = build_eigenstate(levels.energies[2], p)
        cmp = compare_intensities(eig, n3, field, sm)
        ext = rt.profiles[2].intensity
        rows = []
        for j in range(sm.n_dimers):
            rows.append([2 * j, "A", sm.x_a[j], ext[2 * j], cmp.lattice_a[j], cmp.continuum_a[j]])
            rows.append([2 * j + 1, "B", sm.x_b[j], ext[2 * j + 1], cmp.lattice_b[j], cmp.continuum_b[j]])
        out.add(write_table(out.path("intensity_mode3"),
                            ["site", "sublattice", "x_mm", "extracted", "lattice", "continuum"], rows, opt.fmt))
        if opt.svg:
            out.add(svg_lines(out.path("intensity_mode3_A.svg"), sm.x_a,
                              [ext[0::2], cmp.lattice_a, cmp.continuum_a],
                              ["extracted", "lattice", "continuum"], "A sublattice, 3rd mode",
                              "x (mm)", "intensity", vlines=(p.step_position,)))
            out.add(svg_lines(out.path("intensity_mode3_B.svg"), sm.x_b,
                              [ext[1::2], cmp.lattice_b, cmp.continuum_b],
                              ["extracted", "lattice", "continuum"], "B sublattice, 3rd mode",
                              "x (mm)", "intensity", vlines=(p.step_position,)))
        out.json("intensity_comparison.json", {
            "lattice_vs_continuum_max_abs": cmp.max_abs,
            "lattice_vs_continuum_l2": cmp.l2,
            "extracted_vs_lattice_max_abs": float(np.max(np.abs(ext - eig.vectors[:, n3] ** 2))),
            "threshold": INTENSITY_TOL,
            "checked": setup.disorder_sigma == 0,
        })
        if setup.disorder_sigma == 0 and not cmp.max_abs < INTENSITY_TOL:
            failed.append("intensity_comparison")

    # inverse problem for this seed
    rec = recover_parameters(p, setup.geometry, setup.disorder_sigma, setup.seed, setup.permute)
    report = {
        "seed": setup.seed,
        "particle": _fit_report(rec.particle, a0, opt.trace),
        "hole": _fit_report(rec.hole, a0, opt.trace),
        "delta_f_mhz": rec.delta_f,
    }
    if rec.particle_seq is not None:
        report["particle_sequence"] = _fit_report(rec.particle_seq, a0, opt.trace)
        report["hole_sequence"] = _fit_report(rec.hole_seq, a0, opt.trace)
        report["delta_f_sequence_mhz"] = rec.delta_f_seq
    out.json("fit_report.json", report)
    if not (rec.particle.converged and rec.hole.converged):
        raise NumericalError("dispersion fit did not converge: "
                             f"{rec.particle.result.message} / {rec.hole.result.message}")
    log(f"{setup.preset} seed {setup.seed}: mc2={rec.particle.mc2:.3f} MHz, "
        f"hbar_c/a0={rec.particle.hbar_c / a0:.3f} MHz, f0={rec.particle.dirac_point:.3f} MHz, "
        f"delta_f={rec.delta_f:.3f} MHz")

    if opt.seeds > 1 or opt.summary:
        seeds = range(setup.seed, setup.seed + opt.seeds)
        ens = run_ensemble(p, setup.geometry, setup.disorder_sigma, seeds, setup.permute)
        if ens.rows:
            cols = list(ens.rows[0])
            out.add(write_table(out.path("ensemble"), cols, [[r.get(c) for c in cols] for r in ens.rows], opt.fmt))
        out.json("ensemble_summary.json", {"n_seeds": len(ens.rows), "failures": ens.failures,
                                           "table": ens.table()})
        if opt.summary:
            log(f"{'parameter':<24} {'truth':>12} {'median':>12} {'spread':>10}")
            for r in ens.table():
                log(f"{r['parameter']:<24} {r['truth']:>12.4f} {r['median']:>12.4f} {r['spread']:>10.4f}")
            failed += recovery_failures(ens.median, p)
    return failed


def recovery_failures(median: dict, p: DiracParams) -> list[str]:
    """Names of the recovery tolerances missed by the ensemble medians."""
    hc = p.hbar_c / p.lattice_const
    out = []
    if abs(median["hbar_c_over_a0_mhz"] - hc) > RECOVERY_TOL["hbar_c_rel"] * hc:
        out.append("recovery_hbar_c")
    if abs(median["mc2_mhz"] - p.mass_energy) > RECOVERY_TOL["mc2_rel"] * p.mass_energy:
        out.append("recovery_mc2")
    if abs(median["f0_mhz"] - p.dirac_point) > RECOVERY_TOL["f0_mhz"]:
        out.append("recovery_f0")
    if abs(median["delta_f_mhz"] - p.step_height) > RECOVERY_TOL["delta_f_mhz"]:
        out.append("recovery_delta_f")
    return out


COMMANDS = {"levels": cmd_levels, "ldos": cmd_ldos, "pipeline": cmd_pipeline}


# -- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help="experiment preset E1..E4 (default E1)")
    common.add_argument("--config", help="key=value config file (overrides --preset)")
    common.add_argument("--manifest", help="replay the run recorded in this manifest.json")
    common.add_argument("--seed", type=int, help="disorder/noise seed (default: preset seed)")
    common.add_argument("--out-dir", default="kleinbox_out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="resonance FWHM in MHz")
    common.add_argument("--noise", type=float, default=0.0, help="complex noise rms of S")
    common.add_argument("--grid-step", type=float, default=0.02, help="frequency grid step in MHz")
    common.add_argument("--v0", type=float, help="override the step height V0 in MHz")
    common.add_argument("--disorder", type=float, help="override the disorder sigma in MHz")
    common.add_argument("--no-svg", action="store_true", help="skip SVG plots")

    ap = argparse.ArgumentParser(prog="kleinbox", description="Klein-tunneling box: continuum, lattice and synthetic spectroscopy.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    lv = sub.add_parser("levels", parents=[common], help="continuum and lattice levels side by side")
    lv.add_argument("--symmetric-check", action="store_true", help="check |E_n + E_(N+1-n) - V0| < 1e-8")
    sub.add_parser("ldos", parents=[common], help="LDOS maps for left, right and whole chain")
    pl = sub.add_parser("pipeline", parents=[common], help="forward and inverse run with fit summary")
    pl.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds for the ensemble")
    pl.add_argument("--summary", action="store_true", help="print the parameter-recovery table and check it")
    pl.add_argument("--trace", action="store_true", help="include per-iteration fit traces in the report")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.manifest:
            command, setup, opt = load_manifest(args.manifest)
            if command != args.command:
                raise ConfigError(f"manifest records command {command!r}, not {args.command!r}")
        else:
            setup, opt = resolve_setup(args), resolve_options(args)
        out = Outputs(Path(args.out_dir))
        failed = COMMANDS[args.command](setup, opt, out)
        write_manifest(out, args.command, setup, opt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError, LevelMismatchError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if failed:
        print("acceptance check failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
