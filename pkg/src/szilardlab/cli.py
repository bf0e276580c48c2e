"""Command-line entry point.

Every run is described by a config tree::

    {"subcommand": "switch", "seed": 0, "units": "natural",
     "output_dir": "out", "params": {"g": 1.5, "T": 2.0}}

read from ``--config FILE`` (JSON) and overridden by command-line flags,
which mirror the ``params`` keys (``fock_cutoff`` -> ``--fock-cutoff``).
Unknown keys are rejected before anything is computed. Outputs have fixed
names inside ``output_dir`` and a ``manifest.json`` records the resolved
config, the tool version, a timestamp and a SHA-256 digest per output.

Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Optional

from . import __version__
from . import bath, boxmodel, landauer, partition, switch
from .errors import ComputationError, DomainError, ValidationError
from .units import NATURAL, SI, boltzmann_constant

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 2, 3
MAX_GRID_POINTS = 1_000_000


class ConfigError(ValidationError):
    pass


def _float(value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}") from None


def _int(value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"expected an integer, got {value!r}")
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected an integer, got {value!r}") from None
    if not f.is_integer():
        raise ConfigError(f"expected an integer, got {value!r}")
    return int(f)


def _optional_int(value):
    if value is None or (isinstance(value, str) and value.lower() in ("none", "auto", "")):
        return None
    return _int(value)


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "1", "yes"):
        return True
    if isinstance(value, str) and value.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected true/false, got {value!r}")


def _str(value) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}")
    return value


def _dims(value) -> list:
    if isinstance(value, str):
        parts = value.lower().split("x")
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise ConfigError(f"dims must look like '2x2', got {value!r}")
    if len(parts) != 2:
        raise ConfigError(f"dims must have two factors, got {value!r}")
    return [_int(p) for p in parts]


def _float_list(value) -> list:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    return [_float(v) for v in value]


def _mapping(value) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"expected a mapping, got {value!r}")
    return dict(value)


BATH_PARAMS = {
    "kappa": (_float, -1.0),
    "omega_min": (_float, 1e-3),
    "omega_max": (_float, 1.0),
    "n_modes": (_int, 400),
    "amplitude": (_float, 1.0),
    "convention": (_str, "spectral"),
}

SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "box": {
        "half_width": (_float, 1.0),
        "g": (_float, 0.0),
        "levels": (_int, 8),
        "T": (_float, 0.0),
        "superselection": (_bool, True),
        "wavefunctions": (_int, 0),
        "grid_points": (_int, 201),
    },
    "partition": {
        **BATH_PARAMS,
        "lam": (_float, 1.0),
        "t0": (_float_list, [500.0]),
        "T": (_float, 0.0),
    },
    "switch": {
        "omega0": (_float, 1.0),
        "g": (_float, 1.0),
        "T": (_float, 1.0),
        "gamma": (_float, 0.1),
        "Gamma_dephase": (_float, 0.05),
        "Gamma1": (_float, 0.0),
        "fock_cutoff": (_optional_int, None),
        "t_max": (_float, 0.0),
        "n_times": (_int, 51),
        "cost_n": (_float, 0.0),
        "cost_delta": (_float, 0.01),
        "cost_kappa_ratio": (_float, 0.01),
        "cost_T": (_float, 300.0),
    },
    "landauer": {
        "dims": (_dims, [2, 2]),
        "trials": (_int, 1000),
        "T": (_float, 1.0),
        "mode": (_str, "product"),
        "random_h_s": (_bool, False),
        "workers": (_int, 1),
    },
    "sweep": {
        "target": (_str, "ground_energy"),
        "base": (_mapping, {}),
        "grid": (_mapping, {}),
        "workers": (_int, 1),
    },
}

FLAG_ALIASES = {"T": ["--kT", "--T"], "Gamma_dephase": ["--Gamma", "--gamma-dephase"],
                "Gamma1": ["--Gamma1"]}

SWEEP_TARGETS = {
    "ground_energy": ({**BATH_PARAMS, "lam": (_float, 1.0)},
                      ["e_g", "displacement_norm_sq"]),
    "partition": ({**BATH_PARAMS, "lam": (_float, 1.0), "t0": (_float, 500.0)},
                  ["e_static", "e_wave", "w_external", "dissipation_ratio"]),
    "switch": ({k: SCHEMAS["switch"][k] for k in ("omega0", "g", "T", "fock_cutoff")},
               ["eps_analytic", "eps_numeric", "theta", "w_min"]),
    "box": ({"half_width": (_float, 1.0), "g": (_float, 0.0), "T": (_float, 1.0)},
            ["e0", "e1", "free_energy"]),
}


def _flag_names(key: str) -> list[str]:
    if key in FLAG_ALIASES:
        return FLAG_ALIASES[key]
    return ["--" + key.replace("_", "-")]


def _check_keys(given: dict, allowed, where: str) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _coerce(schema: dict, values: dict, where: str) -> dict:
    _check_keys(values, schema, where)
    out = {}
    for key, (conv, default) in schema.items():
        raw = values.get(key, default)
        try:
            out[key] = conv(raw) if raw is not None else None
        except ConfigError as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from None
    return out


def _parse_assignments(items, list_values: bool) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = [v for v in value.split(",") if v.strip()] if list_values else value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="szilardlab", description="Szilard-engine, switch and Landauer simulations.")
    parser.add_argument("--version", action="version", version=f"szilardlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file; flags override it")
        p.add_argument("--output-dir", dest="output_dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--units", choices=[NATURAL, SI], default=None)
        p.add_argument("--manifest-only", action="store_true",
                       help="resolve the config and write only the manifest")
        for key in schema:
            if name == "sweep" and key in ("base", "grid"):
                continue
            p.add_argument(*_flag_names(key), dest=f"param_{key}", default=None, metavar=key.upper())
        if name == "sweep":
            p.add_argument("--base", dest="sweep_base", action="append", metavar="KEY=VALUE")
            p.add_argument("--grid", dest="sweep_grid", action="append", metavar="KEY=V1,V2,...")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags into a validated config."""
    file_cfg: dict = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        _check_keys(file_cfg, ("subcommand", "seed", "units", "output_dir", "params"), "config")
        if file_cfg.get("subcommand", args.subcommand) != args.subcommand:
            raise ConfigError(f"config is for {file_cfg['subcommand']!r}, not {args.subcommand!r}")
    params = dict(_mapping(file_cfg.get("params", {})))
    schema = SCHEMAS[args.subcommand]
    for key in schema:
        value = getattr(args, f"param_{key}", None)
        if value is not None:
            params[key] = value
    if args.subcommand == "sweep":
        if args.sweep_base:
            params["base"] = {**_mapping(params.get("base", {})), **_parse_assignments(args.sweep_base, False)}
        if args.sweep_grid:
            params["grid"] = {**_mapping(params.get("grid", {})), **_parse_assignments(args.sweep_grid, True)}
    params = _coerce(schema, params, "params")
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    units = args.units or file_cfg.get("units", NATURAL)
    if units not in (NATURAL, SI):
        raise ConfigError(f"units={units!r} must be '{NATURAL}' or '{SI}'")
    cfg = {
        "subcommand": args.subcommand,
        "seed": _int(seed),
        "units": units,
        "output_dir": str(args.output_dir or file_cfg.get("output_dir", ".")),
        "params": params,
    }
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"seed={cfg['seed']} must be a 64-bit unsigned integer")
    if args.subcommand == "sweep":
        _resolve_sweep(cfg["params"])
    return cfg


def _resolve_sweep(params: dict) -> None:
    target = params["target"]
    if target not in SWEEP_TARGETS:
        raise ConfigError(f"sweep target {target!r} not in {sorted(SWEEP_TARGETS)}")
    schema, _ = SWEEP_TARGETS[target]
    _check_keys(params["base"], schema, "params.base")
    _check_keys(params["grid"], schema, "params.grid")
    params["base"] = {k: schema[k][0](v) for k, v in sorted(params["base"].items())}
    grid = {}
    for key, values in sorted(params["grid"].items()):
        if isinstance(values, str):
            values = [v for v in values.split(",") if v.strip()]
        if not isinstance(values, list):
            raise ConfigError(f"params.grid.{key} must be a list")
        grid[key] = [schema[key][0](v) for v in values]
    size = math.prod(len(v) for v in grid.values()) if grid else 0
    if size > MAX_GRID_POINTS:
        raise ConfigError(f"grid has {size} points, limit is {MAX_GRID_POINTS}")
    params["grid"] = grid


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, int) and not hasattr(obj, "dtype"):
        return obj
    value = float(obj)
    if math.isfinite(value):
        return value
    return "inf" if value > 0 else ("-inf" if value < 0 else "nan")


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n")


def run_box(cfg: dict, out: Path) -> list[str]:
    p = cfg["params"]
    spec = boxmodel.WellSpec(p["half_width"], p["g"])
    table = boxmodel.spectrum(spec, p["levels"])
    table.to_csv(out / "levels.csv")
    files = ["levels.csv"]
    summary = {"half_width": spec.half_width, "barrier_g": spec.barrier_g,
               "energies": [float(e) for e in table.energies]}
    if p["T"] > 0:
        kb = boltzmann_constant(cfg["units"])
        summary["free_energy"] = kb * boxmodel.gibbs_free_energy(spec, p["T"], superselection=p["superselection"])
        summary["free_energy_open"] = kb * boxmodel.gibbs_free_energy(
            boxmodel.WellSpec(spec.half_width, 0.0), p["T"])
    if p["wavefunctions"] > 0:
        cols, rows = _wavefunction_rows(spec, p["wavefunctions"], p["grid_points"])
        _write_csv(out / "wavefunctions.csv", cols, rows)
        files.append("wavefunctions.csv")
    _write_json(out / "summary.json", summary)
    return files + ["summary.json"]


def _wavefunction_rows(spec, n_pairs: int, n_points: int):
    x = boxmodel._grid(spec, None, n_points)
    columns, data = ["x"], {"x": x}
    for k in range(n_pairs):
        data[f"even_{k}"] = boxmodel.even_state(spec, k, x)[1]
        data[f"odd_{k}"] = boxmodel.odd_state(spec, k, x)[1]
        columns += [f"even_{k}", f"odd_{k}"]
    rows = [{c: float(data[c][i]) for c in columns} for i in range(len(x))]
    return columns, rows


def _bath_spec(p: dict) -> bath.BathSpec:
    return bath.BathSpec(p["kappa"], p["omega_min"], p["omega_max"], p["amplitude"],
                         p["n_modes"], p["convention"])


def run_partition(cfg: dict, out: Path) -> list[str]:
    p = cfg["params"]
    kb = boltzmann_constant(cfg["units"])
    modes = bath.discretize(_bath_spec(p))
    overlap = bath.coherent_overlap(modes, p["lam"])
    rows = []
    for t0 in p["t0"]:
        row = partition.ledger_row(p["kappa"], p["omega_min"], modes, p["lam"], t0, overlap)
        for key in ("e_static", "e_wave", "w_external"):
            row[key] *= kb
        rows.append(row)
    _write_csv(out / "ledger.csv", partition.LEDGER_COLUMNS, rows)
    modes.to_csv(out / "modes.csv")
    ground = bath.ground_energy(modes, p["lam"])
    summary = {"e_g": kb * ground, "overlap": overlap, "n_modes": len(modes),
               "e_thermal": kb * float(sum(modes.omegas * partition.bose_occupation(modes.omegas, p["T"]))),
               "dissipation_ratio": [r["e_wave"] / abs(r["e_static"]) if r["e_static"] else 0.0 for r in rows]}
    _write_json(out / "summary.json", summary)
    return ["ledger.csv", "modes.csv", "summary.json"]


def _switch_params(p: dict) -> switch.SwitchParams:
    return switch.SwitchParams(p["omega0"], p["g"], p["T"], p.get("gamma", 0.1),
                               p.get("Gamma_dephase", 0.0), p.get("Gamma1", 0.0), p.get("fock_cutoff"))


def _switch_summary(params: switch.SwitchParams, kb: float) -> dict:
    pe = switch.pointer_error_analytic(params)
    eps_num = switch.pointer_error_numeric(params)
    w_min = switch.min_work(pe.epsilon, pe.theta) if 0 < pe.epsilon < 1 else None
    return {"eps_analytic": pe.epsilon, "eps_numeric": eps_num, "eps_ratio": eps_num / pe.epsilon,
            "theta": kb * pe.theta, "w_min": None if w_min is None else kb * w_min,
            "gamma_tun": switch.tunneling_rate(params)}


def run_switch(cfg: dict, out: Path) -> list[str]:
    import numpy as np

    p = cfg["params"]
    kb = boltzmann_constant(cfg["units"])
    params = _switch_params(p)
    summary = _switch_summary(params, kb)
    n = switch.resolve_cutoff(params)
    summary["fock_cutoff"] = n
    summary["e_g"] = -kb * params.omega0 * params.g**2
    if params.fock_cutoff is None or switch.trace_leak(params) <= switch.CUTOFF_LEAK_TOL:
        summary["stationarity_residual"] = max(
            switch.stationarity_residual(params, switch.biased_gibbs(params, s)) for s in (1, -1))
    if p["cost_n"] > 0:
        cost = switch.computation_cost(p["cost_n"], p["cost_delta"], p["cost_kappa_ratio"],
                                       p["cost_T"], units=cfg["units"])
        summary["computation_cost"] = {"work": cost.work, "landauer": cost.landauer, "ratio": cost.ratio}
    files = []
    if p["t_max"] > 0:
        psi = np.zeros(2 * n, dtype=complex)
        psi[0] = psi[n] = 1 / math.sqrt(2)
        rho0 = switch.DensityMatrix((2, n), np.outer(psi, psi))
        times = np.linspace(0.0, p["t_max"], max(p["n_times"], 2))
        h = switch.operators(params, n).hamiltonian
        rows = []
        for t, rho in zip(times, switch.evolve_series(rho0, params, times)):
            pp, pm = rho.spin_populations()
            rows.append({"t": float(t), "p_plus": pp, "p_minus": pm, "coherence": rho.coherence_norm(),
                         "energy": kb * float(rho.expectation(h).real)})
        _write_csv(out / "timeseries.csv", ["t", "p_plus", "p_minus", "coherence", "energy"], rows)
        files.append("timeseries.csv")
    _write_json(out / "summary.json", summary)
    return files + ["summary.json"]


def run_landauer(cfg: dict, out: Path) -> list[str]:
    p = cfg["params"]
    records = landauer.run_trials(tuple(p["dims"]), p["trials"], cfg["seed"], p["T"], p["mode"],
                                  workers=p["workers"], random_h_s=p["random_h_s"])
    with open(out / "trials.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    slacks = [r.report.slack for r in records]
    summary = {"n_trials": len(records), "dims": p["dims"], "mode": p["mode"],
               "violation_count": sum(not r.report.holds for r in records),
               "min_slack": min(slacks) if slacks else None,
               "argmin_trial": min(records, key=lambda r: (r.report.slack, r.trial)).trial if records else None}
    if p["random_h_s"]:
        summary["min_slack_total"] = min((r.report.slack_total for r in records), default=None)
    _write_json(out / "summary.json", summary)
    return ["trials.jsonl", "summary.json"]


def _sweep_point(args):
    target, point = args
    try:
        return {**_evaluate_target(target, point), "error": ""}
    except (ValidationError, DomainError, ComputationError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


def _evaluate_target(target: str, p: dict) -> dict:
    schema, _ = SWEEP_TARGETS[target]
    p = {k: p.get(k, default) for k, (_, default) in schema.items()}
    if target == "ground_energy":
        modes = bath.discretize(_bath_spec(p))
        return {"e_g": bath.ground_energy(modes, p["lam"]), "displacement_norm_sq": bath.displacement_norm_sq(modes)}
    if target == "partition":
        led = partition.post_insertion_energy(bath.discretize(_bath_spec(p)), p["lam"], p["t0"])
        return {"e_static": led.e_static, "e_wave": led.e_wave, "w_external": led.w_external,
                "dissipation_ratio": led.dissipation_ratio}
    if target == "switch":
        s = _switch_summary(_switch_params(p), 1.0)
        return {k: s[k] for k in ("eps_analytic", "eps_numeric", "theta", "w_min")}
    spec = boxmodel.WellSpec(p["half_width"], p["g"])
    levels = boxmodel.spectrum(spec, 2).energies
    return {"e0": float(levels[0]), "e1": float(levels[1]),
            "free_energy": boxmodel.gibbs_free_energy(spec, p["T"])}


def run_sweep(cfg: dict, out: Path) -> list[str]:
    p = cfg["params"]
    _, outputs = SWEEP_TARGETS[p["target"]]
    keys = list(p["grid"])
    points = [dict(zip(keys, combo)) for combo in itertools.product(*p["grid"].values())] if keys else []
    jobs = [(p["target"], {**p["base"], **pt}) for pt in points]
    if p["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=p["workers"]) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = [{"index": i, **pt, **res} for i, (pt, res) in enumerate(zip(points, results))]
    _write_csv(out / "sweep.csv", ["index", *keys, *outputs, "error"], rows)
    return ["sweep.csv"]


RUNNERS = {"box": run_box, "partition": run_partition, "switch": run_switch,
           "landauer": run_landauer, "sweep": run_sweep}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: dict, out: Path, files) -> None:
    manifest = {
        "config": cfg,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": {name: _sha256(out / name) for name in sorted(files)},
    }
    _write_json(out / "manifest.json", manifest)


def run(cfg: dict, manifest_only: bool = False) -> list[str]:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = [] if manifest_only else RUNNERS[cfg["subcommand"]](cfg, out)
    write_manifest(cfg, out, files)
    return files


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        run(cfg, manifest_only=args.manifest_only)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ComputationError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
