"""Command-line driver: config ingestion, sweeps, deterministic tables.

Subcommands
-----------
green          chain Green function values and the S(E) margin per energy
transmittance  transmission densities (decoupled / self-consistent / effective)
iv             current vs bias sweep at fixed mu1
ness           steady-state summary (occupations, current, convergence)
evolve         time-domain run plus comparison against the steady solver
verify         the acceptance battery; exit 0 only if every check passes

Exit codes: 0 ok, 2 config error, 3 solver/spectral error, 4 verification
failure.  Data tables are plain text with '#' header metadata and are
byte-reproducible for a fixed config; wall-clock content goes only to the
run manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from . import __version__, acceptance, dynamics, ness, scattering
from .equilibrium import solve_sample_equilibrium
from .exceptions import ConfigError, NesslabError
from .greens import s_matrix_batch, dirichlet_green
from .grids import band_grid
from .model import SystemSpec

SCHEMA_VERSION = 1

DEFAULT_CONFIG: Dict = {
    "schema": SCHEMA_VERSION,
    "system": {
        "t_c": 1.0, "tau": 0.6, "N": 1, "h_s": [[0.2]], "nu": [[1.0]],
        "lambda": 0.05, "S1": [1.0], "S2": [1.0],
        "L1_support": [[0, 1.0]], "L2_support": [[0, 1.0]],
        "beta1": float("inf"), "beta2": float("inf"),
        "mu1": -0.3, "mu2": 0.3, "beta_s": 2.0, "n_particles": 0.5,
    },
    "grid": {"theta_nodes": 512},
    "ness": {"tol": 1e-10, "max_sweeps": 500},
    "dynamics": {"L": 600, "dt": 0.04, "t_end": 60.0},
    "outputs": {"directory": "out", "formats": ["tsv"]},
}


# ---------------------------------------------------------------------------
# config handling

def _to_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 \
            and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"expected a number or [re, im] pair, got {value!r}")


def _complex_matrix(rows, name: str) -> np.ndarray:
    try:
        return np.array([[_to_complex(v) for v in row] for row in rows])
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"bad matrix {name!r}: {exc}") from exc


def _complex_vector(row, name: str) -> np.ndarray:
    try:
        return np.array([_to_complex(v) for v in row])
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"bad vector {name!r}: {exc}") from exc


def _support(entries, name: str) -> List[Tuple[int, complex]]:
    out = []
    try:
        for pair in entries:
            site, amp = pair[0], pair[1]
            out.append((int(site), _to_complex(amp)))
    except (TypeError, IndexError, ConfigError) as exc:
        raise ConfigError(f"bad lead support {name!r}: {exc}") from exc
    return out


def _merged(config: Dict) -> Dict:
    merged = {k: dict(v) if isinstance(v, dict) else v
              for k, v in DEFAULT_CONFIG.items()}
    for key, val in config.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key].update(val)
        else:
            merged[key] = val
    return merged


def load_config(path: Optional[str]) -> Dict:
    """Read and validate a TOML run configuration (defaults when absent)."""
    if path is None:
        return _merged({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema = {schema!r} (expected {SCHEMA_VERSION})")
    merged = _merged(raw)
    try:
        if int(merged["grid"]["theta_nodes"]) < 64:
            raise ConfigError("grid.theta_nodes must be >= 64")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid.theta_nodes: {exc}") from exc
    return merged


def spec_from_config(config: Dict) -> SystemSpec:
    sys_cfg = config["system"]
    try:
        return SystemSpec(
            t_c=float(sys_cfg["t_c"]),
            tau=float(sys_cfg["tau"]),
            N=int(sys_cfg["N"]),
            h_s=_complex_matrix(sys_cfg["h_s"], "h_s"),
            nu=np.asarray(sys_cfg["nu"], dtype=float),
            lam=float(sys_cfg["lambda"]),
            S1=_complex_vector(sys_cfg["S1"], "S1"),
            S2=_complex_vector(sys_cfg["S2"], "S2"),
            L1_support=_support(sys_cfg["L1_support"], "L1_support"),
            L2_support=_support(sys_cfg["L2_support"], "L2_support"),
            beta1=float(sys_cfg["beta1"]),
            beta2=float(sys_cfg["beta2"]),
            mu1=float(sys_cfg["mu1"]),
            mu2=float(sys_cfg["mu2"]),
            beta_s=float(sys_cfg["beta_s"]),
            n_particles=float(sys_cfg["n_particles"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [system] section: {exc}") from exc


# ---------------------------------------------------------------------------
# table + manifest output

def _format_row(values: Sequence[float]) -> str:
    return "\t".join(f"{v:.12e}" for v in values)


def write_table(path: Path, meta: Dict[str, str], columns: Sequence[Tuple[str, np.ndarray]]):
    lines = [f"# {k} = {v}" for k, v in meta.items()]
    lines.append("# columns: " + "\t".join(name for name, _ in columns))
    arrays = [np.atleast_1d(np.asarray(arr, dtype=float)) for _, arr in columns]
    nrows = arrays[0].size if arrays else 0
    for i in range(nrows):
        lines.append(_format_row([a[i] for a in arrays]))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


class _Run:
    """Collects outputs and timings, then drops one manifest per command."""

    def __init__(self, command: str, config: Dict, config_path: Optional[str]):
        self.command = command
        self.config = config
        self.t0 = time.monotonic()
        self.outputs: List[str] = []
        digest = "defaults"
        if config_path:
            digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
        self.config_digest = digest
        self.out_dir = Path(config["outputs"]["directory"])

    def table(self, name: str, meta: Dict[str, str], columns) -> Path:
        path = self.out_dir / name
        full_meta = {"generator": f"nesslab {__version__}", "command": self.command,
                     "units": "energies in units of the configured t_c; currents "
                              "carry the 2*pi bias-window prefactor"}
        full_meta.update(meta)
        write_table(path, full_meta, columns)
        self.outputs.append(name)
        return path

    def text(self, name: str, body: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(body)
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        import scipy
        manifest = {
            "command": self.command,
            "schema": SCHEMA_VERSION,
            "config_sha256": self.config_digest,
            "nesslab_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "elapsed_seconds": round(time.monotonic() - self.t0, 3),
            "outputs": self.outputs,
        }
        path = self.out_dir / "run_manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_energy_list(text: Optional[str]) -> Optional[np.ndarray]:
    if text is None:
        return None
    text = text.strip()
    if not text:
        return np.array([])
    try:
        return np.array([float(tok) for tok in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad energy list {text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands

def cmd_green(args, config: Dict) -> int:
    spec = spec_from_config(config)
    run = _Run("green", config, args.config)
    energies = _parse_energy_list(args.energies)
    if energies is None:
        n_sweep = args.sweep or 201
        energies = np.linspace(-spec.band_edge, spec.band_edge, n_sweep)
    if energies.size:
        g = np.array([dirichlet_green(args.site_n, args.site_m, E, spec.t_c)
                      for E in energies])
        smat, _ = s_matrix_batch(energies, spec)
        smin = np.linalg.svd(smat, compute_uv=False)[:, -1]
        cols = [("E", energies), ("re_g", g.real), ("im_g", g.imag),
                ("smin_S", smin)]
    else:
        cols = [("E", np.array([])), ("re_g", np.array([])),
                ("im_g", np.array([])), ("smin_S", np.array([]))]
    run.table("green.tsv", {"site_n": str(args.site_n), "site_m": str(args.site_m)}, cols)
    run.finish()
    return 0


def cmd_transmittance(args, config: Dict) -> int:
    if args.lam is not None:
        config["system"]["lambda"] = args.lam
    spec = spec_from_config(config)
    run = _Run("transmittance", config, args.config)
    grid = band_grid(spec, n_base=int(config["grid"]["theta_nodes"]))
    energies = _parse_energy_list(args.energies)
    if energies is None:
        energies = grid.E
        result = ness.solve_steady_state(
            spec, grid=grid, tol=float(config["ness"]["tol"]),
            max_sweeps=int(config["ness"]["max_sweeps"]))
        t_lam = result.transmittance
    else:
        full = ness.solve_steady_state(
            spec, grid=grid, tol=float(config["ness"]["tol"]),
            max_sweeps=int(config["ness"]["max_sweeps"]))
        v_star = np.diag(full.amplitudes.potential_diagonal(spec))
        t_lam = scattering.transmittance0(energies, spec, extra_potential=v_star)
    t0 = scattering.transmittance0(energies, spec)
    cols = [("E", energies), ("T0", t0), ("T_lambda", t_lam)]
    if args.effective:
        t_eff = ness.effective_transmittance(spec, grid=grid, energies=energies)
        cols.append(("T_eff", t_eff))
    run.table("transmittance.tsv", {"lambda": f"{spec.lam:.6g}"}, cols)
    run.finish()
    return 0


def cmd_iv(args, config: Dict) -> int:
    spec = spec_from_config(config)
    run = _Run("iv", config, args.config)
    try:
        lo, hi, num = args.mu2_range.split(":")
        mu2_values = np.linspace(float(lo), float(hi), int(num))
    except ValueError as exc:
        raise ConfigError(f"bad --mu2-range {args.mu2_range!r}: {exc}") from exc
    from dataclasses import replace
    currents = []
    for mu2 in mu2_values:
        spec_b = replace(spec, mu2=float(mu2))
        result = ness.solve_steady_state(
            spec_b, tol=float(config["ness"]["tol"]),
            max_sweeps=int(config["ness"]["max_sweeps"]))
        currents.append(result.current_1)
    run.table("iv.tsv", {"mu1": f"{spec.mu1:.6g}"},
              [("bias", mu2_values - spec.mu1), ("current", np.array(currents))])
    run.finish()
    return 0


def _ness_tables(run: _Run, spec: SystemSpec, config: Dict) -> ness.SteadyStateResult:
    grid = band_grid(spec, n_base=int(config["grid"]["theta_nodes"]))
    result = ness.solve_steady_state(
        spec, grid=grid, tol=float(config["ness"]["tol"]),
        max_sweeps=int(config["ness"]["max_sweeps"]))
    run.table("ness_occupations.tsv",
              {"current_1": f"{result.current_1:.12e}",
               "iterations": str(result.iterations),
               "residual": f"{result.residual:.3e}"},
              [("site", np.arange(1, spec.N + 1, dtype=float)),
               ("occupation", result.occupations)])
    run.table("ness_transmittance.tsv", {"lambda": f"{spec.lam:.6g}"},
              [("E", grid.E), ("T_lambda", result.transmittance)])
    return result


def cmd_ness(args, config: Dict) -> int:
    spec = spec_from_config(config)
    run = _Run("ness", config, args.config)
    _ness_tables(run, spec, config)
    run.finish()
    return 0


def cmd_evolve(args, config: Dict) -> int:
    spec = spec_from_config(config)
    run = _Run("evolve", config, args.config)
    dyn = config["dynamics"]
    result = _ness_tables(run, spec, config)
    eq = solve_sample_equilibrium(spec)
    rho_i = dynamics.initial_state_truncated(spec, int(dyn["L"]), eq.rho_s)
    traj = dynamics.evolve_liouville(spec, int(dyn["L"]), rho_i,
                                     float(dyn["t_end"]), float(dyn["dt"]))
    cols = [("t", traj.times)]
    for k in range(spec.N):
        cols.append((f"n_{k + 1}", traj.occupations[:, k]))
    cols += [("current", traj.currents), ("trace_defect", traj.trace_defects),
             ("herm_defect", traj.herm_defects)]
    run.table("evolution.tsv", {"L": str(dyn["L"]), "dt": f"{dyn['dt']:.6g}"}, cols)
    comp = dynamics.steady_diagnostics(traj, result, drift_tol=float("inf"))
    report = {
        "plateau_current": comp.plateau_current,
        "steady_current": comp.current_reference,
        "current_rel_dev": comp.current_rel_dev,
        "occupation_dev": comp.occupation_dev,
        "plateau_drift": comp.drift,
    }
    run.text("evolve_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    run.finish()
    return 0


def cmd_verify(args, config: Dict) -> int:
    if args.list:
        for cid, title in acceptance.list_checks():
            print(f"{cid}  {title}")
        return 0
    run = _Run("verify", config, args.config)
    only = args.only.split(",") if args.only else None
    results = acceptance.run_all(printer=print, only=only)
    body = "\n".join(r.line() for r in results) + "\n"
    run.text("verify_report.txt", body)
    run.finish()
    n_fail = sum(not r.passed for r in results)
    if n_fail:
        print(f"{n_fail} check(s) failed")
        return 4
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nesslab",
        description="Steady states and transport for a two-lead mean-field chain model")
    parser.add_argument("--version", action="version", version=f"nesslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory override")

    p = sub.add_parser("green", help="chain Green function table")
    common(p)
    p.add_argument("--site-n", type=int, default=0)
    p.add_argument("--site-m", type=int, default=0)
    p.add_argument("--energies", default=None,
                   help="comma-separated energies (empty string for header-only)")
    p.add_argument("--sweep", type=int, default=None, help="sweep point count")
    p.set_defaults(func=cmd_green)

    p = sub.add_parser("transmittance", help="transmission density table")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="override the mean-field strength")
    p.add_argument("--effective", action="store_true",
                   help="include the static effective-potential column")
    p.add_argument("--energies", default=None, help="explicit energies")
    p.set_defaults(func=cmd_transmittance)

    p = sub.add_parser("iv", help="current vs bias sweep")
    common(p)
    p.add_argument("--mu2-range", required=True, help="start:stop:num for mu2")
    p.set_defaults(func=cmd_iv)

    p = sub.add_parser("ness", help="steady-state summary tables")
    common(p)
    p.set_defaults(func=cmd_ness)

    p = sub.add_parser("evolve", help="time-domain run and steady comparison")
    common(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("verify", help="run the acceptance battery")
    common(p)
    p.add_argument("--list", action="store_true", help="list check ids and exit")
    p.add_argument("--only", default=None, help="comma-separated check ids")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out is not None:
            config["outputs"]["directory"] = args.out
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NesslabError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
