"""Command line front end: estimate, tables, selftest."""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .engine import ConfigError, EstimateReport, ModelSpec, RunConfig, run
from .model import validate_model

log = logging.getLogger("killedmc")

CSV_COLUMNS = ("quantity", "sampler", "params", "M", "seed", "mean", "variance", "stderr", "ci95", "runtime_s")

_MODEL_KEYS = {f.name: f.type for f in dataclasses.fields(ModelSpec)}
_SCHEMA = {
    "model": set(_MODEL_KEYS),
    "run": {"quantity", "M", "seed", "workers", "block_size", "z", "mixture", "printed_merged"},
    "sampler": {"spec"},
    "pilot": {"enabled", "grid", "pilot_M"},
    "output": {"path", "format"},
}

TABLE_PILOT_GRID = ("exp:lambda=0.3", "exp:lambda=1", "exp:lambda=3",
                    "beta1:alpha=0.3,tau=1", "beta1:alpha=0.3,tau=5",
                    "beta1:alpha=0.5,tau=1", "beta1:alpha=0.5,tau=2", "beta1:alpha=0.5,tau=5",
                    "beta1:alpha=0.7,tau=2", "beta1:alpha=0.7,tau=5")


class UsageError(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class Settings:
    run: RunConfig
    pilot_enabled: bool = False
    out_path: str | None = None
    out_format: str = "csv"


# configuration documents ------------------------------------------------------------

def parse_document(text: str, source: str = "<config>") -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise UsageError(f"{source}: {exc}") from exc
    doc = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise UsageError(f"{source}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise UsageError(f"{source}: unknown key {key!r} in section [{section}]")
        doc[section] = dict(parser[section])
    return doc


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    doc = {k: dict(v) for k, v in doc.items()}
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise UsageError(f"--set: unknown key {name!r}")
        doc.setdefault(section, {})[key] = value.strip()
    return doc


def _bool(text: str, where: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{where}: expected a boolean, got {text!r}")


def _num(kind, text: str, where: str):
    try:
        return kind(text)
    except ValueError as exc:
        raise UsageError(f"{where}: {exc}") from exc


def settings_from_document(doc: dict) -> Settings:
    m = doc.get("model", {})
    spec_kw = {}
    for key, value in m.items():
        spec_kw[key] = value if key in ("family", "payoff") else _num(float, value, f"[model] {key}")
    r = doc.get("run", {})
    p = doc.get("pilot", {})
    o = doc.get("output", {})
    grid = tuple(s.strip() for s in p.get("grid", "").split(";") if s.strip())
    try:
        config = RunConfig(
            model=ModelSpec(**spec_kw),
            quantity=r.get("quantity", "value"),
            sampler=doc.get("sampler", {}).get("spec", RunConfig.sampler),
            samples=_num(int, r.get("M", "100000"), "[run] M"),
            seed=_num(int, r.get("seed", "0"), "[run] seed"),
            workers=_num(int, r.get("workers", "1"), "[run] workers"),
            block_size=_num(int, r.get("block_size", "4096"), "[run] block_size"),
            z=_num(float, r["z"], "[run] z") if "z" in r else None,
            mixture=_bool(r.get("mixture", "true"), "[run] mixture"),
            printed_merged=_bool(r.get("printed_merged", "false"), "[run] printed_merged"),
            pilot_grid=grid,
            pilot_samples=_num(int, p.get("pilot_M", "0"), "[pilot] pilot_M"),
        )
        config.law()
    except (ConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    fmt = o.get("format", "csv")
    if fmt not in ("csv", "table"):
        raise UsageError(f"[output] format must be csv or table, got {fmt!r}")
    return Settings(config, _bool(p.get("enabled", "false"), "[pilot] enabled"), o.get("path"), fmt)


def document_from_settings(s: Settings) -> dict[str, dict[str, str]]:
    c = s.run
    doc = {
        "model": {k: str(getattr(c.model, k)) for k in _MODEL_KEYS},
        "run": {"quantity": c.quantity, "M": str(c.samples), "seed": str(c.seed), "workers": str(c.workers),
                "block_size": str(c.block_size), "mixture": str(c.mixture).lower(),
                "printed_merged": str(c.printed_merged).lower()},
        "sampler": {"spec": c.sampler},
        "pilot": {"enabled": str(s.pilot_enabled).lower(), "grid": ";".join(c.pilot_grid),
                  "pilot_M": str(c.pilot_samples)},
        "output": {"format": s.out_format},
    }
    if c.z is not None:
        doc["run"]["z"] = repr(c.z)
    if s.out_path is not None:
        doc["output"]["path"] = s.out_path
    return doc


def dump_document(doc: dict) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(doc)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_settings(path: str | None, overrides: list[str]) -> Settings:
    doc = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {path!r}: {exc.strerror}") from exc
        doc = parse_document(text, path)
    return settings_from_document(apply_overrides(doc, overrides))


# output -----------------------------------------------------------------------------

def csv_row(report: EstimateReport) -> dict:
    kind, _, params = report.sampler.partition(":")
    return {"quantity": report.quantity, "sampler": kind, "params": params, "M": report.M,
            "seed": report.seed, "mean": repr(report.mean), "variance": repr(report.sample_variance),
            "stderr": repr(report.stderr), "ci95": repr(report.ci_95_halfwidth),
            "runtime_s": f"{report.runtime_seconds:.3f}"}


def write_csv(reports: list[EstimateReport], path: str | None) -> None:
    if path is None:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(csv_row(r))


def cell(report: EstimateReport) -> str:
    """estimate; variance; mean absolute deviation; (+/-) 95% half-width"""
    return (f"{report.mean:.3f}; {report.sample_variance:.1f}; {report.mad:.1f}; "
            f"(+/-) {report.ci_95_halfwidth:.3f}")


def print_report(report: EstimateReport, out=None) -> None:
    out = out or sys.stdout
    print(f"quantity   {report.quantity}", file=out)
    print(f"sampler    {report.sampler}", file=out)
    print(f"M          {report.M}   seed {report.seed}   workers {report.workers}", file=out)
    print(f"mean       {report.mean:.6f}", file=out)
    print(f"variance   {report.sample_variance:.6g}", file=out)
    print(f"stderr     {report.stderr:.6g}   ci95 +/- {report.ci_95_halfwidth:.6g}", file=out)
    print(f"mad        {report.mad:.6g}", file=out)
    print(f"runtime    {report.runtime_seconds:.2f}s", file=out)
    if report.pilot:
        for spec, var in report.pilot.items():
            print(f"pilot      {spec:28s} variance {var:.6g}", file=out)


# commands ---------------------------------------------------------------------------

def _validate(config: RunConfig) -> None:
    model, _ = config.model.build()
    grid = np.linspace(model.barrier, model.start + 5.0, 201)
    report = validate_model(model, grid)
    if not report.accepted:
        raise ValueError("; ".join(report.messages))


def cmd_estimate(args) -> int:
    s = load_settings(args.config, args.set or [])
    config = _cli_overrides(s.run, args)
    if not s.pilot_enabled:
        config = dataclasses.replace(config, pilot_grid=())
    try:
        _validate(config)
    except (ValueError, ConfigError) as exc:
        print(f"error: model rejected: {exc}", file=sys.stderr)
        return 3
    report = run(config)
    print_report(report)
    write_csv([report], args.out or s.out_path)
    return 0


def _cli_overrides(config: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        kw["workers"] = args.workers
    try:
        return dataclasses.replace(config, **kw)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def table_configs(which: int, samples: int, seed: int, workers: int, pilot_samples: int):
    """The 3 x 2 grid of one table: sigma_bar = omega in {0.1, 0.2, 0.3} times {Exponential, Beta}."""
    quantity = {1: "value", 2: "bel"}[which]
    exp_grid = tuple(g for g in TABLE_PILOT_GRID if g.startswith("exp"))
    beta_grid = tuple(g for g in TABLE_PILOT_GRID if g.startswith("beta"))
    for level in (0.1, 0.2, 0.3):
        spec = ModelSpec("sine_martingale", sigma_bar=level, omega=level)
        for label, grid in (("Exponential", exp_grid), ("Beta", beta_grid)):
            yield level, label, RunConfig(spec, quantity, grid[0], samples, seed, workers,
                                          pilot_grid=grid, pilot_samples=pilot_samples)


def cmd_tables(args) -> int:
    reports, rows = [], {}
    for level, label, config in table_configs(args.which, args.M, args.seed or 0, args.workers or 1,
                                              args.pilot_M):
        report = run(config)
        reports.append(report)
        rows.setdefault(level, {})[label] = report
    title = "E[h(X_T) 1{tau > T}]" if args.which == 1 else "T d/dx E[h(X_T) 1{tau > T}]"
    print(f"{title}: estimate; variance; mean abs deviation; (+/-) 95% half-width")
    print(f"{'sigma=omega':12s}| {'Exponential sampling':40s}| Beta sampling")
    for level, cells in rows.items():
        print(f"{level:<12g}| {cell(cells['Exponential']):40s}| {cell(cells['Beta'])}")
    print("tuned samplers: " + ", ".join(f"{lv:g}/{lb}={r.sampler}" for lv, c in rows.items()
                                         for lb, r in c.items()))
    write_csv(reports, args.out)
    return 0


def cmd_selftest(args) -> int:
    from . import selftest

    checks = selftest.fast_checks()
    if args.level == "full":
        checks += selftest.full_checks(seed=args.seed or 0, workers=args.workers or 1)
    failed = 0
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:44s} {detail}  ({time.perf_counter() - t0:.1f}s)")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="64-bit seed of the random streams")
    common.add_argument("--workers", type=int, help="number of worker processes")
    common.add_argument("--out", help="CSV output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="killedmc", description="Unbiased Monte Carlo for killed diffusions.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common], help="run one estimation")
    est.add_argument("--config", help="INI-style configuration file")
    est.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
    est.set_defaults(func=cmd_estimate)

    tab = sub.add_parser("tables", parents=[common], help="reproduce the two benchmark tables")
    tab.add_argument("which", type=int, choices=(1, 2))
    tab.add_argument("--M", type=int, default=100_000, help="replications per cell")
    tab.add_argument("--pilot-M", dest="pilot_M", type=int, default=50_000, help="pilot replications per sampler")
    tab.set_defaults(func=cmd_tables)

    st = sub.add_parser("selftest", parents=[common], help="identity checks and statistical acceptance runs")
    st.add_argument("level", nargs="?", choices=("fast", "full"), default="fast")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "M", 1) < 1:
        print("error: M must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
