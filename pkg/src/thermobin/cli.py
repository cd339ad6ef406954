"""Command-line interface: ``thermobin <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 solver non-convergence (partial output is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import binning as bn
from . import estimation, ising2d, probe
from .errors import ConfigError, NoConvergence, NumericalError, ThermobinError
from .fisher import binned_fisher, thermal_fisher
from .models import ModelSpec, build_ensemble, bosonic_modes_ratio, canonical_kind
from .spectra import ThermalEnsemble, spectrum_from_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_NOCONV = 0, 2, 3, 4
SIG = 12

COLUMNS = {
    "fisher": ["beta", "thermal_F", "d", "coarse_C", "distortion_D", "ratio", "boundaries"],
    "bin": ["alpha", "b_lower", "b_upper", "p", "eps", "coarse_C", "thermal_F", "distortion_D", "ratio",
            "iterations", "residual", "starts", "converged"],
    "sweep": ["variable", "value", "beta", "d", "thermal_F", "coarse_C", "distortion_D", "ratio", "gt_opt",
              "probe_fisher", "boundaries"],
    "ising": ["L", "beta", "quantity", "value"],
    "probe": ["beta", "T", "delta", "gt", "probe_fisher", "optimal_binary_C", "ratio"],
    "estimate": ["T_star", "n", "trials", "empirical_var", "cr_bound", "efficiency", "var_ratio", "mean_T", "bias",
                 "boundary_hits", "seed", "rng"],
}


class PartialResult(Exception):
    """Carries rows produced before a solver failed to converge."""

    def __init__(self, message, rows, summary=None):
        super().__init__(message)
        self.rows, self.summary = rows, summary


# ---------------------------------------------------------------- formatting


def _fmt_num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{SIG}g}")
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_fmt_num(v) for v in x]
    if isinstance(x, dict):
        return {k: _fmt_num(v) for k, v in x.items()}
    return x


def _csv_cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{SIG}g}"
    if isinstance(x, (list, tuple)):
        return ";".join(_csv_cell(v) for v in x)
    return str(x)


def render(command, rows, fmt, summary=None) -> str:
    if fmt == "json":
        if command == "estimate":
            obj = _fmt_num(rows[0])
        else:
            obj = {"command": command, "columns": COLUMNS[command], "rows": [_fmt_num(r) for r in rows]}
            if summary:
                obj["summary"] = _fmt_num(summary)
        return json.dumps(obj, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[command]
    w.writerow(cols)
    for r in rows:
        w.writerow([_csv_cell(_py(r.get(c))) for c in cols])
    return buf.getvalue()


def _py(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_py(v) for v in x]
    return x


# ---------------------------------------------------------------- shared parsing


def _parse_values(text: str, integer=False):
    """``a,b,c`` or ``start:stop`` (inclusive integers) or ``start:stop:num`` (linspace)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) == 2:
            a, b = int(parts[0]), int(parts[1])
            return list(range(a, b + 1))
        if len(parts) == 3:
            vals = np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
            return [int(round(v)) for v in vals] if integer else vals
        raise ConfigError(f"bad range {text!r}")
    vals = [v for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("empty value list")
    return [int(v) for v in vals] if integer else [float(v) for v in vals]


MODEL_PARAMS = {
    "n_qubits": {"N": "N"},
    "linear": {},
    "gaussian": {"mean": "mean", "sigma": "sigma"},
    "tight_binding": {"N": "N", "eps_onsite": "eps_onsite", "t_hop": "t_hop", "grid_resolution": "grid_resolution"},
    "bosonic_modes": {"M": "M", "omega_a": "omega_a", "n_max": "n_max"},
    "four_peak": {"N": "N", "eps": "eps", "t_peak": "t_peak"},
}


def _add_model_args(p, beta_default=None):
    src = p.add_argument_group("system")
    src.add_argument("--model", help="built-in model: n-qubits, linear-dos, gaussian, tight-binding, bosonic-modes, four-peak")
    src.add_argument("--spectrum", help="spectrum JSON file (levels / dos / dos_kernel)")
    src.add_argument("--config", help="JSON file {\"model\": {\"kind\", \"params\"}, \"beta\"}")
    src.add_argument("--beta", type=float, default=beta_default)
    for name, typ in (("N", int), ("M", int), ("sigma", float), ("mean", float), ("eps", float),
                      ("t-peak", float), ("t-hop", float), ("eps-onsite", float), ("omega-a", float),
                      ("n-max", int), ("grid-resolution", int)):
        src.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))


def _model_spec(args) -> ModelSpec | None:
    chosen = [x for x in (args.model, args.spectrum, args.config) if x]
    if len(chosen) != 1:
        raise ConfigError("give exactly one of --model, --spectrum, --config")
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        m = cfg.get("model", {})
        beta = args.beta if args.beta is not None else cfg.get("beta")
        if beta is None:
            raise ConfigError("beta missing")
        return ModelSpec(m.get("kind", ""), m.get("params", {}), beta)
    if args.spectrum:
        return None
    kind = canonical_kind(args.model)
    params = {}
    for attr, key in MODEL_PARAMS[kind].items():
        v = getattr(args, attr, None)
        if v is not None:
            params[key] = v
    if args.beta is None:
        raise ConfigError("--beta is required")
    return ModelSpec(kind, params, args.beta)


def _ensemble(args, beta=None) -> ThermalEnsemble:
    spec = _model_spec(args)
    if spec is None:
        if args.beta is None and beta is None:
            raise ConfigError("--beta is required")
        try:
            obj = json.loads(Path(args.spectrum).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spectrum file: {exc}") from None
        return ThermalEnsemble(spectrum_from_json(obj), args.beta if beta is None else beta)
    if beta is not None:
        spec = spec.with_beta(beta)
    return build_ensemble(spec)


def _solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--solver", choices=bn.MODES, help="default: dp_exact for discrete spectra, lloyd_max otherwise")
    g.add_argument("--starts", type=int, default=8)
    g.add_argument("--max-iters", type=int, default=10_000)
    g.add_argument("--rel-tol", type=float, default=1e-10)


def _solve(ens, d, args):
    mode = args.solver or ("dp_exact" if ens.is_discrete else "lloyd_max")
    cfg = bn.SolverConfig(d=d, max_iters=args.max_iters, rel_tol=args.rel_tol, num_starts=args.starts,
                          mode=mode, seed=args.seed)
    if d == 1:
        lo, hi = (-math.inf, math.inf) if ens.is_discrete else ens.spectrum.support
        return bn.Binning.from_boundaries(ens, [lo, hi]), None
    return bn.solve(ens, cfg)


def _report_row(ens, binning):
    rep = binning.report if isinstance(binning, bn.Binning) else binned_fisher(ens, binning, warn=False)
    b = np.asarray(getattr(binning, "boundaries", binning), dtype=float)
    return {
        "beta": ens.beta, "thermal_F": rep.thermal_F, "d": b.size - 1, "coarse_C": rep.coarse_C,
        "distortion_D": rep.distortion_D, "ratio": rep.ratio, "boundaries": b.tolist(),
    }


# ---------------------------------------------------------------- commands


def cmd_fisher(args):
    ens = _ensemble(args)
    if args.boundaries:
        inner = _parse_values(args.boundaries)
        lo, hi = (-math.inf, math.inf) if ens.is_discrete else ens.spectrum.support
        return [_report_row(ens, np.array([lo] + inner + [hi]))], None
    if args.d:
        try:
            b, _ = _solve(ens, args.d, args)
        except NoConvergence as exc:
            raise PartialResult(str(exc), [_report_row(ens, exc.partial[0])]) from None
        return [_report_row(ens, b)], None
    return [{"beta": ens.beta, "thermal_F": thermal_fisher(ens)}], None


def _bin_rows(binning, record):
    rep = binning.report
    diag = record.as_dict() if record else {"iterations": None, "residuals": [0.0], "starts": 1, "converged": True}
    resid = max(diag["residuals"]) if diag["residuals"] else 0.0
    iters = sum(diag["iterations"]) if diag["iterations"] else 0
    rows = []
    for a in range(binning.d):
        rows.append({
            "alpha": a + 1, "b_lower": binning.boundaries[a], "b_upper": binning.boundaries[a + 1],
            "p": binning.p[a], "eps": binning.eps[a], "coarse_C": rep.coarse_C, "thermal_F": rep.thermal_F,
            "distortion_D": rep.distortion_D, "ratio": rep.ratio, "iterations": iters, "residual": resid,
            "starts": diag["starts"], "converged": diag["converged"],
        })
    return rows


def cmd_bin(args):
    ens = _ensemble(args)
    if args.d < 1:
        raise ConfigError("d must be >= 1")
    try:
        b, rec = _solve(ens, args.d, args)
    except NoConvergence as exc:
        b, rec = exc.partial
        raise PartialResult(str(exc), _bin_rows(b, rec)) from None
    return _bin_rows(b, rec), {"mean_energy": ens.mean}


def _pmap(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def cmd_sweep(args):
    var = args.var
    integer = var in ("d", "N", "M")
    values = _parse_values(args.values, integer=integer)

    def point(v):
        row = {"variable": var, "value": v}
        if var in ("delta", "gt"):
            spec = probe.JCProbeSpec(args.omega_a_probe + (v if var == "delta" else args.delta), args.omega_a_probe, args.g)
            beta = args.beta
            if var == "delta":
                gt, fi = probe.jc_optimal_time(beta, spec, args.gt_max)
            else:
                gt, fi = v, probe.jc_fisher(beta, spec.with_time(v / args.g))
            C = probe.single_mode_optimal_binary(beta, args.omega_a_probe)
            row.update({"beta": beta, "d": 2, "coarse_C": C, "gt_opt": gt, "probe_fisher": fi,
                        "ratio": fi / C if C > 0 else 0.0})
            return row
        if var == "M" and args.model is None:
            row.update({"beta": args.beta, "d": 2, "ratio": bosonic_modes_ratio(int(v), args.beta)})
            return row
        if var == "d":
            ens = _ensemble(args)
            b, _ = _solve(ens, int(v), args)
            row.update(_report_row(ens, b))
            return row
        if var == "beta":
            ens = _ensemble(args, beta=v)
            b, _ = _solve(ens, args.d, args)
            row.update(_report_row(ens, b))
            return row
        if var in ("N", "M"):
            setattr(args, var, int(v))
            ens = _ensemble(args)
            b, _ = _solve(ens, args.d, args)
            row.update(_report_row(ens, b))
            return row
        # b-grid: single interior boundary at v
        ens = _ensemble(args)
        lo, hi = (-math.inf, math.inf) if ens.is_discrete else ens.spectrum.support
        row.update(_report_row(ens, np.array([lo, v, hi])))
        return row

    if var in ("N", "M"):
        rows = [point(v) for v in values]  # mutates args; keep serial
    else:
        rows = _pmap(point, values, args.threads)
    return rows, None


def cmd_ising(args):
    rows, summary = [], {}
    loader = lambda L: ising2d.cached_dos(L, args.cache_dir)  # noqa: E731

    def beta_value(text):
        return ising2d.BETA_C if text in (None, "critical", "c") else float(text)

    if args.verify_enumeration:
        L = args.L or 4
        dos = ising2d.exact_dos(L)
        oracle = ising2d.enumerate_dos(L) if L <= 4 else ising2d.transfer_matrix_dos(L)
        ok = dos == oracle
        rows.append({"L": L, "beta": None, "quantity": "oracle_match", "value": "PASS" if ok else "FAIL"})
        if not ok:
            raise NumericalError("exact DOS disagrees with the independent oracle")
    if args.fit:
        sizes = _parse_values(args.sizes, integer=True)
        for which in args.fit.split(","):
            fit = ising2d.cumulant_scaling_fit(sizes, which, None if args.beta is None else beta_value(args.beta),
                                               dos_loader=loader)
            rows.append({"L": ";".join(map(str, sizes)), "beta": None, "quantity": f"{which}_exponent", "value": fit.slope})
            summary[which] = {"slope": fit.slope, "intercept": fit.intercept, "x": fit.x, "y": fit.y}
    if args.L and not args.verify_enumeration:
        dos = loader(args.L)
        rows.append({"L": args.L, "beta": None, "quantity": "levels", "value": len(dos.energies)})
        betas = _parse_values(args.betas) if args.betas else [beta_value(args.beta)]
        for beta in betas:
            rep = ising2d.cumulants(dos, beta)
            for k, v in enumerate(rep.kappa, 1):
                rows.append({"L": args.L, "beta": beta, "quantity": f"kappa{k}", "value": v})
            rows.append({"L": args.L, "beta": beta, "quantity": "specific_heat",
                         "value": ising2d.specific_heat(dos, beta)})
            if args.d:
                rep = ising2d.criticality_binning_study(dos, beta, args.d)
                rows.append({"L": args.L, "beta": beta, "quantity": f"ratio_d{args.d}", "value": rep.ratio})
    if not rows:
        raise ConfigError("nothing to do: give --L, --fit or --verify-enumeration")
    return rows, summary or None


def cmd_probe(args):
    omega_a = args.omega_a_probe
    omega_d = args.omega_d if args.omega_d is not None else omega_a + args.delta
    spec = probe.JCProbeSpec(omega_d, omega_a, args.g, n_max=args.n_max_probe)
    if args.ratio_floor_check or args.sweep_temperature or args.betas:
        betas = _parse_values(args.betas or "0.1:2:20")
    else:
        if args.beta is None:
            raise ConfigError("--beta is required")
        betas = [args.beta]

    def point(beta):
        if args.gt is not None:
            gt, fi = args.gt, probe.jc_fisher(beta, spec.with_time(args.gt / args.g))
        else:
            gt, fi = probe.jc_optimal_time(beta, spec, args.gt_max)
        C = probe.single_mode_optimal_binary(beta, omega_a)
        return {"beta": beta, "T": 1 / beta, "delta": spec.delta, "gt": gt, "probe_fisher": fi,
                "optimal_binary_C": C, "ratio": fi / C if C > 0 else 0.0}

    rows = _pmap(point, betas, args.threads)
    rows.sort(key=lambda r: r["T"])
    summary = None
    if args.ratio_floor_check:
        floor = min(r["ratio"] for r in rows)
        summary = {"min_ratio": floor, "threshold": 0.45, "result": "PASS" if floor >= 0.45 else "FAIL"}
    return rows, summary


def cmd_estimate(args):
    ens = _ensemble(args)
    if args.boundaries:
        inner = _parse_values(args.boundaries)
        lo, hi = (-math.inf, math.inf) if ens.is_discrete else ens.spectrum.support
        boundaries = np.array([lo] + inner + [hi])
    else:
        b, _ = _solve(ens, args.d, args)
        boundaries = b.boundaries
    spec = estimation.ExperimentSpec(ens, boundaries, args.n, args.trials, args.seed)
    return [estimation.cramer_rao_report(spec)], None


COMMANDS = {
    "fisher": cmd_fisher, "bin": cmd_bin, "sweep": cmd_sweep,
    "ising": cmd_ising, "probe": cmd_probe, "estimate": cmd_estimate,
}


def _epilog(cmd):
    return "CSV columns: " + ", ".join(COLUMNS[cmd])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("output")
    g.add_argument("--output", "-o", help="write here instead of standard output")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)

    parser = argparse.ArgumentParser(prog="thermobin", description="Optimal coarse-grained thermometry.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fisher", parents=[common], help="thermal and binned Fisher information", epilog=_epilog("fisher"))
    _add_model_args(p)
    p.add_argument("--d", type=int)
    p.add_argument("--boundaries", help="comma-separated interior boundaries")
    _solver_args(p)

    p = sub.add_parser("bin", parents=[common], help="optimal d-bin partition", epilog=_epilog("bin"))
    _add_model_args(p, beta_default=None)
    p.add_argument("--d", type=int, required=True)
    _solver_args(p)

    p = sub.add_parser("sweep", parents=[common], help="long-format parameter sweep", epilog=_epilog("sweep"))
    _add_model_args(p)
    p.add_argument("--var", required=True, choices=("d", "beta", "N", "b-grid", "M", "delta", "gt"))
    p.add_argument("--values", required=True, help="a,b,c | start:stop (integers) | start:stop:num")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--omega-a-probe", type=float, default=1.0, help="mode frequency for delta/gt sweeps")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--gt-max", type=float, default=math.pi)
    _solver_args(p)

    p = sub.add_parser("ising", parents=[common], help="exact 2D Ising statistics", epilog=_epilog("ising"))
    p.add_argument("--L", type=int)
    p.add_argument("--sizes", default="8,16,32")
    p.add_argument("--fit", help="comma list of: " + ", ".join(ising2d.FIT_KINDS))
    p.add_argument("--beta", help="number or 'critical'")
    p.add_argument("--betas", help="beta grid for cumulant tables")
    p.add_argument("--d", type=int)
    p.add_argument("--verify-enumeration", action="store_true")
    p.add_argument("--cache-dir", help="overrides THERMOBIN_CACHE_DIR")

    p = sub.add_parser("probe", parents=[common], help="Jaynes-Cummings probe thermometry", epilog=_epilog("probe"))
    p.add_argument("--beta", type=float)
    p.add_argument("--betas", help="beta grid (default 0.1:2:20)")
    p.add_argument("--omega-a", dest="omega_a_probe", type=float, default=1.0)
    p.add_argument("--omega-d", type=float)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--gt", type=float, help="fixed g*t instead of optimizing")
    p.add_argument("--gt-max", type=float, default=math.pi,
                   help="upper end of the g*t search window (default pi: first vacuum Rabi period)")
    p.add_argument("--n-max", dest="n_max_probe", type=int)
    p.add_argument("--sweep-temperature", action="store_true")
    p.add_argument("--ratio-floor-check", action="store_true")

    p = sub.add_parser("estimate", parents=[common], help="Cramer-Rao Monte Carlo", epilog=_epilog("estimate"))
    _add_model_args(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--boundaries")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=200)
    _solver_args(p)
    return parser


def load_schema(command: str) -> dict:
    """JSON schema shipped for ``command``'s JSON output."""
    from importlib import resources

    return json.loads(resources.files("thermobin").joinpath("schemas", f"{command}.json").read_text())


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cmd = args.command
    gaussian = getattr(args, "model", None) == "gaussian"
    if gaussian and getattr(args, "beta", None) is None and cmd in ("fisher", "bin", "estimate", "sweep"):
        args.beta = 1.0
    try:
        rows, summary = COMMANDS[cmd](args)
    except PartialResult as exc:
        _emit(render(cmd, exc.rows, args.format, exc.summary), args.output)
        print(f"thermobin: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except NoConvergence as exc:
        print(f"thermobin: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except ConfigError as exc:
        print(f"thermobin: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"thermobin: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"thermobin: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThermobinError as exc:  # pragma: no cover
        print(f"thermobin: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(render(cmd, rows, args.format, summary), args.output)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
