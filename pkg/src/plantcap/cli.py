"""Command-line interface: ``plantcap fit | simulate | snight | compare``."""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .bna import bna_fit
from .chapman import CbScenario, chapman_bailey
from .data import SNIGHT_CITIES, IdCounts, dumps_survey, load_survey, snight_city, snight_dataset
from .exceptions import PlantCaptureError
from .mcmc import McmcConfig, PriorSpec, sample_posterior, sample_posterior_up
from .mle import mle_basic_closed, mle_numeric
from .simulation import load_scenarios, preset_scenarios, run_study, with_overrides

SEED_ENV = "PLANTCAP_SEED"
DEFAULT_SEED = 1
FIT_METHODS = ("mle", "closed", "mcmc", "bayes", "bna", "up", "cb")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("USAGE", message)


# ------------------------------------------------------------------ helpers


def _build_id() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--abbrev=12"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        return f"git:{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return f"plantcap-{__version__}"


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise CliError("BAD_SEED", f"{SEED_ENV}={raw!r} is not an integer") from None


def _mcmc_config(args, seed: int) -> McmcConfig:
    return McmcConfig(chains=args.chains, iterations=args.iters, burn_in=args.burnin,
                      thin=args.thin, seed=seed)


def _parse_counts(text: str) -> IdCounts:
    fields = {}
    for part in text.split(","):
        if "=" not in part:
            raise CliError("PARSE_ERROR", f"--counts entry {part!r} is not name=value")
        k, v = part.split("=", 1)
        try:
            fields[k.strip()] = int(v)
        except ValueError:
            raise CliError("PARSE_ERROR", f"--counts field {k.strip()!r}: {v!r} is not an integer") from None
    unknown = set(fields) - {"m_i", "m_yes", "m_mb", "m_no", "y", "h_i"}
    if unknown:
        raise CliError("PARSE_ERROR", f"unknown --counts field(s) {sorted(unknown)}")
    fields.setdefault("m_i", 0)
    try:
        return IdCounts(**fields)
    except TypeError as exc:
        raise CliError("PARSE_ERROR", f"--counts: {exc}") from None


def _resolve_data(args, model: str):
    """Data from ``--counts``, ``snight:<city>`` or a file path."""
    if getattr(args, "counts", None):
        data = _parse_counts(args.counts)
    elif args.data is None:
        raise CliError("USAGE", "one of --data or --counts is required")
    elif args.data.lower().startswith("snight:"):
        try:
            data = snight_city(args.data.split(":", 1)[1])
        except KeyError as exc:
            raise CliError("UNKNOWN_DATASET", str(exc.args[0])) from None
    else:
        path = Path(args.data)
        if not path.exists():
            raise CliError("FILE_NOT_FOUND", f"no such file: {path}")
        data = load_survey(path, args.data_format)
    if model == "basic":
        if isinstance(data, IdCounts) and data.m_i == 0 and data.h_i is None:
            return data.to_basic()
        if hasattr(data, "K") and data.K == 1 and data.counts[0].m_i == 0:
            return data.counts[0].to_basic()
    if model == "id" and hasattr(data, "K"):
        if data.K != 1:
            raise CliError("USAGE", f"model 'id' takes one survey unit; the file has {data.K} classes")
        return data.counts[0]
    return data


def _fmt(v, digits: int = 4) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else ""
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if abs(v) >= 1000:
            return f"{v:.1f}"
        return f"{v:.{digits}g}" if abs(v) > 1 else f"{v:.{digits - 1}f}"
    return str(v)


def render_table(columns, rows) -> str:
    cells = [[str(c) for c in columns]] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(cell.rjust(w) if n and i else cell.ljust(w)
                               for i, (cell, w) in enumerate(zip(row, widths))).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def _emit(args, header: str, blocks, record: dict, started: float) -> None:
    """Write either the human table or the structured record."""
    if args.format == "record":
        record = {"provenance": _provenance(args, started), **record}
        text = json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n"
    else:
        parts = [header]
        for title, columns, rows in blocks:
            if title:
                parts.append(f"\n{title}")
            parts.append(render_table(columns, rows))
        text = "\n".join(parts) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _provenance(args, started: float) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "timing", "output")}
    prov = {"tool": "plantcap", "version": __version__, "build": _build_id(), "config": config}
    if args.timing:
        prov["wall_time_s"] = round(time.perf_counter() - started, 3)
    return prov


# -------------------------------------------------------------------- fit


def _point_rows(fit) -> list[dict]:
    return [
        {"parameter": n, "estimate": fit.params[n], "sd": fit.sds[n], "lower": fit.cis[n][0],
         "upper": fit.cis[n][1], "boundary": fit.boundary_flags.get(n, False)}
        for n in fit.params
    ]


def _mcmc_rows(out) -> list[dict]:
    return [
        {"parameter": n, "median": s.median, "sd": s.sd, "lower": s.lo, "upper": s.hi,
         "rhat": out.rhat.get(n), "ess": out.ess.get(n)}
        for n, s in out.summary.items()
    ]


POINT_COLS = ("parameter", "estimate", "sd", "lower", "upper", "boundary")
MCMC_COLS = ("parameter", "median", "sd", "lower", "upper", "rhat", "ess")


def _run_method(method: str, model: str, data, config: McmcConfig, priors: PriorSpec) -> dict:
    """Fit with one backend and return a uniform result block."""
    if method == "mle":
        fit = mle_numeric(model, data)
        return {"method": "mle", "columns": POINT_COLS, "rows": _point_rows(fit),
                "h": fit.params["H"], "h_floor": fit.h_rounded, "converged": fit.converged,
                "hessian_clamped": fit.hessian_clamped}
    if method == "closed":
        if model != "basic":
            raise CliError("USAGE", "--method closed needs --model basic")
        fit = mle_basic_closed(data)
        return {"method": "closed", "columns": POINT_COLS, "rows": _point_rows(fit),
                "h": fit.params["H"], "h_floor": fit.h_rounded, "converged": True,
                "hessian_clamped": fit.hessian_clamped}
    if method == "bna":
        fit = bna_fit(model, data, priors)
        return {"method": "bna", "columns": POINT_COLS, "rows": _point_rows(fit),
                "h": fit.params["H"], "converged": fit.converged,
                "hessian_clamped": fit.hessian_clamped}
    if method in ("mcmc", "bayes", "up"):
        if method == "up":
            out = sample_posterior_up(model, data, priors, config)
        else:
            out = sample_posterior(model, data, priors, config)
        return {"method": "up" if method == "up" else "mcmc", "columns": MCMC_COLS,
                "rows": _mcmc_rows(out), "h": out.summary["H"].median, "converged": out.converged,
                "warnings": out.warnings, "acceptance": out.acceptance, "output": out}
    if method == "cb":
        ests = {s.value: chapman_bailey(data, s) for s in CbScenario}
        rows = [{"parameter": f"H ({k})", "estimate": v} for k, v in ests.items()]
        return {"method": "cb", "columns": ("parameter", "estimate"), "rows": rows,
                "h": ests[CbScenario.MAYBE_AS_SEEN.value]}
    raise CliError("USAGE", f"unknown method {method!r}; choose from {', '.join(FIT_METHODS)}")


def _strip(block: dict) -> dict:
    return {k: v for k, v in block.items() if k not in ("output", "columns")}


def cmd_fit(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    data = _resolve_data(args, args.model)
    config = _mcmc_config(args, seed)
    priors = PriorSpec(args.h_log_mean, args.h_log_var)
    block = _run_method(args.method, args.model, data, config, priors)
    if args.export_draws and "output" in block:
        block["output"].export(args.export_draws)
    header = f"# model={args.model} method={block['method']} data={args.data or args.counts}"
    if block["method"] in ("mcmc", "up"):
        header += (f" chains={config.chains} iterations={config.iterations}"
                   f" burn_in={config.burn_in} thin={config.thin} seed={seed}")
        if not block["converged"]:
            header += "\n# WARNING: " + "; ".join(block["warnings"])
    _emit(args, header, [("", block["columns"], block["rows"])],
          {"seed": seed, "result": _strip(block)}, started)
    return 0


# --------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    config = _mcmc_config(args, seed)
    if args.scenario:
        scenarios = load_scenarios(args.scenario)
        scenarios = [with_overrides(s, replicates=args.replicates, seed=args.seed,
                                    method=args.method if args.method_given else None)
                     for s in scenarios]
    else:
        if not args.preset:
            raise CliError("USAGE", "simulate needs --preset or --scenario")
        scenarios = preset_scenarios(args.preset, args.method, M=args.M,
                                     replicates=args.replicates or 1000, seed=seed, mcmc=config)
    reports = [run_study(s, jobs=args.jobs) for s in scenarios]
    rows = [rec for r in reports for rec in r.records()]
    cols = reports[0].COLUMNS
    notes = [f"# {r.scenario.name or r.scenario.model}: replicates={r.scenario.replicates}"
             f" failures={r.failures} {r.failure_codes or ''}".rstrip()
             + (f" nonconverged={r.nonconverged}" if r.scenario.method in ("bayes", "up") else "")
             for r in reports]
    if args.format == "delimited":
        text = "".join(r.to_delimited() if i == 0 else r.to_delimited().split("\n", 1)[1]
                       for i, r in enumerate(reports))
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    _emit(args, "\n".join(notes), [("", cols, rows)],
          {"seed": seed, "reports": [r.to_dict() for r in reports]}, started)
    return 0


# ----------------------------------------------------------------- snight


def _snight_city(city: str, methods, config, priors) -> dict:
    data = snight_dataset()[city]
    out = {"city": city}
    for m in methods:
        try:
            block = _run_method(m, "id", data, config, priors)
            out[m] = _strip(block)
        except PlantCaptureError as exc:
            out[m] = {"method": m, "error": exc.code, "message": str(exc)}
    return out


def cmd_snight(args) -> int:
    if getattr(args, "snight_cmd", None) == "export":
        return cmd_snight_export(args)
    started = time.perf_counter()
    seed = _seed(args)
    config = _mcmc_config(args, seed)
    priors = PriorSpec(args.h_log_mean, args.h_log_var)
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in FIT_METHODS or m in ("closed", "cb"):
            raise CliError("USAGE", f"unknown --method {m!r} for snight")
    cities = list(SNIGHT_CITIES)
    if args.city:
        try:
            key = args.city.strip().lower().replace("_", " ").replace("-", " ")
            cities = [next(c for c in SNIGHT_CITIES if c.lower() == key)]
        except StopIteration:
            raise CliError("UNKNOWN_DATASET", f"unknown city {args.city!r}") from None
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(cities) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cities))) as pool:
            results = list(pool.map(_snight_city, cities, [methods] * len(cities),
                                    [config] * len(cities), [priors] * len(cities)))
    else:
        results = [_snight_city(c, methods, config, priors) for c in cities]

    blocks = []
    for res in results:
        for m in methods:
            b = res[m]
            if "error" in b:
                blocks.append((f"{res['city']} [{m}]", ("error", "message"),
                               [{"error": b["error"], "message": b["message"]}]))
                continue
            cols = MCMC_COLS if m in ("mcmc", "bayes", "up") else POINT_COLS
            blocks.append((f"{res['city']} [{b['method']}]", cols, b["rows"]))
    record = {"seed": seed, "cities": results}
    if args.baseline == "cb":
        data = snight_dataset()
        cb_rows = [{"city": c, **{s.value: chapman_bailey(data[c], s) for s in CbScenario}}
                   for c in cities]
        blocks.append(("Chapman-Bailey", ("city",) + tuple(s.value for s in CbScenario), cb_rows))
        record["chapman_bailey"] = cb_rows
    header = (f"# S-Night 1990, model=id without identified-target counts; methods={','.join(methods)}"
              f" chains={config.chains} iterations={config.iterations} burn_in={config.burn_in}"
              f" seed={seed}")
    _emit(args, header, blocks, record, started)
    return 0


def cmd_snight_export(args) -> int:
    from .data import ClassedCounts

    table = ClassedCounts(tuple(snight_dataset().items()))
    fmt = args.data_format
    if fmt is None:
        fmt = "structured-record" if (args.output or "").lower().endswith(".json") else "delimited-table"
    text = dumps_survey(table, fmt)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- compare


def cmd_compare(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise CliError("USAGE", "compare needs at least two methods")
    data = _resolve_data(args, args.model)
    config = _mcmc_config(args, seed)
    priors = PriorSpec(args.h_log_mean, args.h_log_var)
    blocks = {m: _run_method(m, args.model, data, config, priors) for m in methods}
    names = []
    for b in blocks.values():
        for r in b["rows"]:
            if r["parameter"] not in names:
                names.append(r["parameter"])
    rows = []
    for name in names:
        row = {"parameter": name}
        for m, b in blocks.items():
            hit = next((r for r in b["rows"] if r["parameter"] == name), None)
            if hit is None:
                row[m] = "-"
                continue
            est = hit.get("estimate", hit.get("median"))
            if "lower" in hit:
                row[m] = f"{_fmt(est)} ({_fmt(hit['lower'])}, {_fmt(hit['upper'])})"
            else:
                row[m] = _fmt(est)
        rows.append(row)
    header = f"# model={args.model} data={args.data or args.counts} seed={seed}"
    _emit(args, header, [("", ("parameter",) + tuple(methods), rows)],
          {"seed": seed, "results": {m: _strip(b) for m, b in blocks.items()}}, started)
    return 0


# ----------------------------------------------------------------- parser


def _common(p, mcmc: bool = True):
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    p.add_argument("--format", choices=("table", "record"), default="table",
                   help="aligned table or JSON record with provenance")
    p.add_argument("--output", "-o", help="write to this file instead of standard output")
    p.add_argument("--timing", action="store_true", help="add wall time to the record output")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    if mcmc:
        p.add_argument("--chains", type=int, default=3)
        p.add_argument("--iters", type=int, default=30000, help="iterations per chain, burn-in included")
        p.add_argument("--burnin", type=int, default=15000)
        p.add_argument("--thin", type=int, default=1)
        p.add_argument("--h-log-mean", type=float, default=0.0, help="prior mean of log H")
        p.add_argument("--h-log-var", type=float, default=100.0, help="prior variance of log H")


def _data_args(p):
    p.add_argument("--data", help="survey file, or snight:<city> for the bundled data")
    p.add_argument("--counts", help="inline counts, e.g. m_i=41,m_yes=6,m_mb=5,m_no=6,y=109")
    p.add_argument("--data-format", choices=("delimited-table", "structured-record"), default=None)
    p.add_argument("--model", choices=("basic", "id", "class"), default="id")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plantcap", description="Population size from plant-capture surveys.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one survey")
    _data_args(p)
    p.add_argument("--method", choices=FIT_METHODS, default="mle")
    p.add_argument("--export-draws", metavar="DIR", help="write one CSV of draws per chain")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--preset", help="table1, table2 or table3")
    p.add_argument("--scenario", help="JSON scenario file")
    p.add_argument("--method", default=None, help="mle, bayes, bna or up (default mle)")
    p.add_argument("--M", default=None, help="plant count of the preset (small, large or a number)")
    p.add_argument("--replicates", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_simulate)
    # "delimited" gives the bare report table
    for action in p._actions:
        if action.dest == "format":
            action.choices = ("table", "record", "delimited")

    p = sub.add_parser("snight", help="analyse the bundled 1990 S-Night data")
    p.add_argument("--method", default="mle,mcmc", help="comma list from mle, mcmc, bna, up")
    p.add_argument("--city", help="restrict to one city")
    p.add_argument("--baseline", choices=("cb",), default=None, help="add Chapman-Bailey estimates")
    _common(p)
    p.set_defaults(func=cmd_snight)
    snight_sub = p.add_subparsers(dest="snight_cmd", parser_class=_Parser)
    e = snight_sub.add_parser("export", help="write the bundled data set to a file")
    e.add_argument("--output", "-o")
    e.add_argument("--data-format", choices=("delimited-table", "structured-record"), default=None)
    e.set_defaults(func=cmd_snight_export)

    p = sub.add_parser("compare", help="fit one survey with several methods side by side")
    _data_args(p)
    p.add_argument("--methods", default="mle,mcmc,bna")
    _common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            args.method_given = args.method is not None
            args.method = args.method or "mle"
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2 if exc.code == "USAGE" else 1
    except PlantCaptureError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error[{type(exc).__name__.upper()}]: {str(msg).splitlines()[0] if str(msg) else ''}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
