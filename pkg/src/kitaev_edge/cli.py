"""Command-line driver: prepare, correlate, energy, tau-scan."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cache import ArtifactCache, _lattice_key, cached_ground_state, content_key
from .config import PRESET_NAMES, ConfigError, ExperimentConfig, load_config
from .correlators import (
    StepBackend,
    TrotterBackend,
    asymmetry,
    energy_from_records,
    exact_correlator,
    measure_energy_terms,
    mitarai_correlator,
    postselect_plaquettes,
    sample_energy_shots,
    tune_error_rate,
    write_series_csv,
)
from .evolution import StepPropagator, analytic_times, build_step_circuit, fit_exponent, optimize_t_junction
from .hamiltonian import ConvergenceError, build_hamiltonian
from .lattice import build_lattice
from .plotting import write_svg
from .prep import (
    PRODUCT,
    PROJECTED,
    PrepAnsatz,
    build_u2_circuit,
    default_mode,
    new_ansatz,
    noisy_stage,
    optimize,
    prepare_state,
)
from .statevector import StateVector

log = logging.getLogger("kitaev_edge")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
ANSATZ_FILE = "ansatz.json"


class MissingArtifact(ConfigError):
    pass


# ---------------------------------------------------------------------------
# shared plumbing


def _grid(tau: float, n_steps: int) -> np.ndarray:
    return np.round(tau * np.arange(n_steps + 1), 12)


def _prep_mode(cfg: ExperimentConfig) -> tuple[str, bool]:
    mode, gen = default_mode(cfg.spec)
    if cfg.prep.mode != "auto":
        mode = PROJECTED if cfg.prep.mode == "projected" else PRODUCT
    if cfg.prep.generalized != "auto":
        gen = cfg.prep.generalized == "true"
    return mode, gen


def _ansatz_key(cfg: ExperimentConfig, lat) -> str:
    mode, gen = _prep_mode(cfg)
    prep = {"mode": mode, "generalized": gen, "depth": cfg.prep.depth, "restarts": cfg.prep.restarts,
            "seed": cfg.prep.seed, "strategy": cfg.prep.strategy, "maxiter": cfg.prep.maxiter}
    return content_key("ansatz", lattice=_lattice_key(lat), spec=cfg.spec.to_dict(), prep=prep)


def _load_ansatz(cfg: ExperimentConfig, lat, out: Path, cache: ArtifactCache) -> PrepAnsatz:
    local = out / ANSATZ_FILE
    if local.exists():
        return PrepAnsatz.from_json(local.read_text())
    cached = cache.path(_ansatz_key(cfg, lat), ".ansatz.json")
    if cached.exists():
        return PrepAnsatz.from_json(cached.read_text())
    raise MissingArtifact(f"no prepared ansatz in {out} or the cache; run `kitaev-edge prepare` with the same "
                          "configuration first, or pass --exact-prep")


def _initial_state(cfg, lat, out, cache, exact_prep: bool) -> tuple[StateVector, str]:
    if exact_prep:
        psi, _ = cached_ground_state(lat, cfg.spec, cache)
        return psi, "exact ground state"
    a = _load_ansatz(cfg, lat, out, cache)
    s = prepare_state(a, lat, np.random.default_rng(cfg.prep.seed)).normalize()
    return s, f"prepared ansatz (depth {a.depth}, {a.mode})"


def _step_params(cfg: ExperimentConfig, tau: float):
    if cfg.evolution.params == "t-junction":
        return optimize_t_junction(tau, cfg.spec)
    return analytic_times(tau, cfg.spec)


def _step_backend(cfg, lat, tau: float) -> StepBackend:
    circ = build_step_circuit(_step_params(cfg, tau), lat, cfg.spec)
    return StepBackend(StepPropagator(circ), tau)


def _edge(cfg: ExperimentConfig, lat) -> dict[str, int]:
    c = cfg.edge_override("C")
    sites = lat.edge_sites(c, cfg.edge.distance)
    for key in ("L", "R"):
        v = cfg.edge_override(key)
        if v is not None:
            sites[key] = v
    for key, v in sites.items():
        if not 0 <= v < lat.n_sites:
            raise ConfigError(f"edge site {key}={v} is outside the lattice (0..{lat.n_sites - 1})")
    return sites


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return "nan" if x is None or not np.isfinite(x) else repr(float(x))


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(cfg: ExperimentConfig, out: Path, cache: ArtifactCache, exact_prep: bool = False) -> int:
    lat = build_lattice(cfg.lattice.rows, cfg.lattice.cols)
    hs = build_hamiltonian(cfg.spec, lat)
    psi, meta = cached_ground_state(lat, cfg.spec, cache)
    mode, gen = _prep_mode(cfg)
    res = optimize(new_ansatz(lat, cfg.prep.depth, mode, gen), lat, cfg.spec, psi, strategy=cfg.prep.strategy,
                   restarts=cfg.prep.restarts, seed=cfg.prep.seed, maxiter=cfg.prep.maxiter)
    text = res.ansatz.to_json(lat)
    (out / ANSATZ_FILE).write_text(text)
    cache.root.mkdir(parents=True, exist_ok=True)
    cache.path(_ansatz_key(cfg, lat), ".ansatz.json").write_text(text)
    _write_csv(out / "cgs_vs_depth.csv", ["depth", "C_GS"],
               [(d, _fmt(res.per_depth[d])) for d in sorted(res.per_depth)])
    res.write_trace(out / "cgs_trace.csv")
    state = prepare_state(res.ansatz, lat).normalize()
    n2 = sum(g.pauli.weight == 2 for g in build_u2_circuit(res.ansatz, lat).gates)
    report = {
        "preset": cfg.name,
        "mode": mode,
        "generalized": gen,
        "depth": res.ansatz.depth,
        "two_qubit_rotations": n2,
        "C_GS": res.cost,
        "fidelity": 1.0 - res.cost,
        "optimizer_converged": res.converged,
        "exact_energy": meta["energy"],
        "exact_gap": meta["gap"],
        "prepared_energy": hs.expectation(state),
        "prepared_categories": hs.category_expectations(state),
    }
    (out / "prepare_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"depth {res.ansatz.depth}: {n2} two-qubit rotations, C_GS = {res.cost:.3e}, "
          f"E = {report['prepared_energy']:.8f} (exact {meta['energy']:.8f})")
    if not res.converged:
        log.error("optimizer did not converge; artifacts written to %s", out)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_correlate(cfg: ExperimentConfig, out: Path, cache: ArtifactCache, exact_prep: bool = False) -> int:
    lat = build_lattice(cfg.lattice.rows, cfg.lattice.cols)
    if cfg.measurement.variant == "sampled" and cfg.p_err not in (None, 0.0):
        raise ConfigError("noise injection is supported for energy runs only; set p_err = 0 for correlate")
    hs = build_hamiltonian(cfg.spec, lat)
    psi, origin = _initial_state(cfg, lat, out, cache, exact_prep)
    edge = _edge(cfg, lat)
    grid = _grid(cfg.evolution.tau, cfg.evolution.n_steps)
    sites = range(lat.n_sites)
    variant = cfg.measurement.variant
    if variant == "exact":
        series = exact_correlator(psi, _step_backend(cfg, lat, cfg.evolution.tau), sites, edge["C"], grid)
    else:
        rng = np.random.default_rng(cfg.measurement.seed)
        mode = "noiseless" if variant == "circuit-noiseless" else "sampled"
        series = mitarai_correlator(psi, _step_backend(cfg, lat, cfg.evolution.tau), sites, edge["C"], grid,
                                    mode=mode, shots=cfg.measurement.shots, rng=rng)
        if cfg.measurement.postselect:
            if cfg.spec.J != 0:
                raise ConfigError("correlator postselection needs J = 0, where the plaquettes are conserved")
            # noiseless evolution at J = 0 never leaves the vortex-free sector
            for s in series.values():
                s.retained_fraction = np.ones(len(grid))
    ref = exact_correlator(psi, TrotterBackend(hs, cfg.evolution.reference_dt), sites, edge["C"], grid)
    for s in ref.values():
        s.variant = "reference"
    write_series_csv(out / "correlators.csv", [series[i] for i in sites] + [ref[i] for i in sites])
    L, R = edge["L"], edge["R"]
    plot = {
        f"|ZL ZC| {variant}": (grid, series[L].magnitude),
        f"|ZR ZC| {variant}": (grid, series[R].magnitude),
        "|ZL ZC| reference": (grid, ref[L].magnitude),
        "|ZR ZC| reference": (grid, ref[R].magnitude),
        f"Re ZL ZC {variant}": (grid, series[L].values.real),
        f"Re ZR ZC {variant}": (grid, series[R].values.real),
    }
    write_svg(out / "correlators.svg", plot, title=f"{cfg.name}: C={edge['C']} L={L} R={R}",
              xlabel="t", ylabel="<Z_i(t) Z_C>")
    summary = {
        "initial_state": origin,
        "edge": edge,
        "times": grid.tolist(),
        "asymmetry": asymmetry(series[L], series[R]),
        "asymmetry_reference": asymmetry(ref[L], ref[R]),
        "flags": sorted({f[1] for s in series.values() for f in s.flags}),
    }
    (out / "correlate_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"asymmetry {summary['asymmetry']:+.4f} ({variant}), {summary['asymmetry_reference']:+.4f} (reference)")
    return EXIT_OK


def cmd_energy(cfg: ExperimentConfig, out: Path, cache: ArtifactCache, exact_prep: bool = False) -> int:
    lat = build_lattice(cfg.lattice.rows, cfg.lattice.cols)
    hs = build_hamiltonian(cfg.spec, lat)
    gs, meta = cached_ground_state(lat, cfg.spec, cache)
    rng = np.random.default_rng(cfg.measurement.seed)
    variant = cfg.measurement.variant
    rows = []
    plaquettes = None
    if exact_prep or variant != "sampled":
        psi, origin = _initial_state(cfg, lat, out, cache, exact_prep)
        mode = "sampled" if variant == "sampled" else "exact"
        res = measure_energy_terms(psi, hs, mode, cfg.measurement.shots, rng, lat)
        for cat, v in res["categories"].items():
            rows.append((cat, _fmt(v), _fmt(res["stderr"][cat]), "", "", "1.0"))
        rows.append(("total", _fmt(res["total"]), "", "", "", "1.0"))
        plaquettes = res["plaquettes"]
        p_err, retained = 0.0, 1.0
    else:
        a = _load_ansatz(cfg, lat, out, cache)
        origin = f"prepared ansatz (depth {a.depth}, {a.mode})"
        prepared, gates = noisy_stage(a, lat, np.random.default_rng(cfg.prep.seed))
        prepared.normalize()
        p_err = tune_error_rate(gates, lat) if cfg.p_err is None else cfg.p_err
        rec = sample_energy_shots(prepared, gates, lat, hs, cfg.measurement.shots, p_err, rng)
        raw = energy_from_records(rec, hs)
        kept, retained = postselect_plaquettes(rec, lat)
        post = energy_from_records(kept, hs) if cfg.measurement.postselect else None
        for cat, v in raw["categories"].items():
            pv = post["categories"][cat] if post else None
            rows.append((cat, _fmt(v), "", _fmt(pv) if post else "", "", _fmt(retained)))
        rows.append(("total", _fmt(raw["total"]), "", _fmt(post["total"]) if post else "", "", _fmt(retained)))
        plaquettes = rec.plaquettes.mean(axis=0).tolist()
    exact = hs.category_expectations(gs)
    exact["total"] = meta["energy"]
    rows = [r[:4] + (_fmt(exact[r[0]]),) + r[5:] for r in rows]
    _write_csv(out / "energy.csv", ["category", "estimate", "stderr", "postselected", "exact", "retained_fraction"],
               rows)
    _write_csv(out / "plaquettes.csv", ["plaquette", "W_p"], [(p, _fmt(v)) for p, v in enumerate(plaquettes)])
    cats = [r[0] for r in rows]
    idx = np.arange(len(cats), dtype=float)
    plot = {"estimate": (idx, [float(r[1]) for r in rows]), "exact": (idx, [float(r[4]) for r in rows])}
    if any(r[3] for r in rows):
        plot["postselected"] = (idx, [float(r[3]) for r in rows])
    write_svg(out / "energy.svg", plot, title=f"{cfg.name}: term-resolved energy ({', '.join(cats)})",
              xlabel="category index", ylabel="energy")
    print(f"energy {rows[-1][1]} (exact {rows[-1][4]}), initial state: {origin}, p_err {p_err:.5f}, "
          f"retained {retained:.3f}")
    return EXIT_OK


def _scan_taus(cfg: ExperimentConfig) -> list[float]:
    try:
        taus = sorted({float(t) for t in cfg.evolution.scan.replace(",", " ").split()}, reverse=True)
    except ValueError as exc:
        raise ConfigError(f"[evolution] scan: {exc}") from exc
    if not taus or min(taus) <= 0:
        raise ConfigError("[evolution] scan needs positive timesteps")
    return taus


def cmd_tau_scan(cfg: ExperimentConfig, out: Path, cache: ArtifactCache, exact_prep: bool = True) -> int:
    """Correlator error versus timestep on a grid shared by every timestep in the scan."""
    lat = build_lattice(cfg.lattice.rows, cfg.lattice.cols)
    hs = build_hamiltonian(cfg.spec, lat)
    psi, _ = cached_ground_state(lat, cfg.spec, cache)
    taus = _scan_taus(cfg)
    step = taus[0]
    for t in taus:
        if abs(step / t - round(step / t)) > 1e-9:
            raise ConfigError(f"timestep {t} does not divide the coarsest timestep {step}")
    window = cfg.evolution.tau * cfg.evolution.n_steps
    grid = _grid(step, max(int(round(window / step)), 1))
    edge = _edge(cfg, lat)
    sites = range(lat.n_sites)
    dt = cfg.evolution.reference_dt
    ref = exact_correlator(psi, TrotterBackend(hs, dt), sites, edge["C"], grid)
    rows, errs = [], []
    for tau in taus:
        if abs(tau - dt) < 1e-12:
            got = ref
        else:
            got = exact_correlator(psi, _step_backend(cfg, lat, tau), sites, edge["C"], grid)
        err = max(float(np.abs(got[i].values - ref[i].values).max()) for i in sites)
        errs.append(err)
        rows.append((_fmt(tau), _fmt(err)))
        print(f"tau {tau:g}: max correlator error {err:.3e}")
    pos = [(t, e) for t, e in zip(taus, errs) if e > 0]
    exponent = fit_exponent(*zip(*pos)) if len(pos) >= 2 else float("nan")
    _write_csv(out / "tau_scan.csv", ["tau", "max_abs_error"], rows)
    (out / "tau_scan_summary.json").write_text(
        json.dumps({"exponent": exponent, "window": grid[-1], "reference_dt": dt}, indent=1) + "\n")
    if pos:
        write_svg(out / "tau_scan.svg", {"log10 error": (np.log10([t for t, _ in pos]),
                                                         np.log10([e for _, e in pos]))},
                  title=f"{cfg.name}: fitted exponent {exponent:.2f}", xlabel="log10 tau", ylabel="log10 error")
    print(f"fitted exponent {exponent:.3f}")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "correlate": cmd_correlate, "energy": cmd_energy, "tau-scan": cmd_tau_scan}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kitaev-edge", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="INI-style experiment configuration")
    ap.add_argument("--preset", choices=PRESET_NAMES, help="start from a named benchmark configuration")
    ap.add_argument("--seed", type=int, help="seed for optimisation restarts, projections and shot sampling")
    ap.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    ap.add_argument("--shots", type=int, help="shots per circuit")
    ap.add_argument("--postselect", action="store_true", help="discard shots with a plaquette violation")
    ap.add_argument("--exact-prep", action="store_true", help="use the exact ground state instead of the ansatz")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = cfg.with_section("prep", seed=args.seed).with_section("measurement", seed=args.seed)
    if args.shots is not None:
        if args.shots < 1:
            raise ConfigError("--shots must be positive")
        cfg = cfg.with_section("measurement", shots=args.shots)
    if args.postselect:
        cfg = cfg.with_section("measurement", postselect=True)
    if args.out is not None:
        cfg = cfg.with_section("output", dir=str(args.out))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config, args.preset), args)
        out = Path(cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.to_text())
        return COMMANDS[args.command](cfg, out, ArtifactCache(), args.exact_prep)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
