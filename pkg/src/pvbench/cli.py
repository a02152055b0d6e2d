"""pvbench command line: synth, backtest, report, compare.

Exit codes
    0  success
    1  the run finished but some (plant, model, fold) fits failed and
       --tolerate-failures was not given (outputs are still written)
    2  configuration or usage error
    3  input/output error: missing or invalid inputs, or an existing
       output without --force
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, RunConfig, load_config
from .data import DataError, format_float, load_dataset, write_dataset
from .eval import (BacktestConfig, BacktestReport, daily_nmbe_density, run_backtest,
                   wilcoxon_signed_rank)
from .eval.analysis import MIN_DENSITY_DAYS
from .pipeline import fleet_samples
from .report import TABLE_KEYS, build_table
from .synth import generate_fleet

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("pvbench")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, details=None):
        super().__init__(message)
        self.code, self.kind, self.details = code, kind, details or []


# ------------------------------------------------------------ output helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _manifest(directory: Path, command: str, cfg: RunConfig | None, inputs: list[dict],
              extra: dict | None = None) -> dict:
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.name != "manifest.json"
                   and not p.name.startswith("."))
    doc = {"tool": "pvbench", "version": __version__, "kernel_backend": kernels.BACKEND,
           "command": command,
           "seed": None if cfg is None else cfg.seed,
           "config_sha256": None if cfg is None else cfg.digest(),
           "config": None if cfg is None else cfg.canonical(),
           "inputs": inputs,
           "outputs": [{"path": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)}
                       for p in files]}
    if extra:
        doc.update(extra)
    return doc


class _StagedDir:
    """Build a directory next to its destination and swap it in on success."""

    def __init__(self, dest: Path, force: bool):
        self.dest = dest
        if dest.exists() and any(dest.iterdir()) and not force:
            raise CliError(EXIT_IO, "output_exists",
                           f"{dest} already exists; pass --force to replace it")
        dest.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(dir=dest.parent, prefix=f".{dest.name}."))

    def commit(self):
        if self.dest.exists():
            shutil.rmtree(self.dest)
        os.replace(self.tmp, self.dest)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _check_free(paths: list[Path], force: bool):
    taken = [str(p) for p in paths if p.exists()]
    if taken and not force:
        raise CliError(EXIT_IO, "output_exists", "outputs already exist; pass --force to replace them",
                       taken)


# ------------------------------------------------------------ config

def _config(args, need: bool = True) -> RunConfig | None:
    overrides = {"seed": args.seed, "out": args.out}
    if getattr(args, "models", None):
        overrides["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    if not need and args.config is None and "PVBENCH_CONFIG" not in os.environ:
        return None
    try:
        return load_config(args.config, overrides)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc), exc.details) from None


def _run_dir(args, cfg: RunConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is None:
        raise CliError(EXIT_CONFIG, "usage", "give --out (the run directory) or a configuration")
    return Path(cfg.out)


def _dataset(cfg: RunConfig):
    if cfg.synth is not None:
        return generate_fleet(cfg.synth), [{"synth_rng_seed": cfg.synth.rng_seed}]
    d = Path(cfg.data.dir)
    try:
        ds = load_dataset(d)
    except (OSError, DataError) as exc:
        raise CliError(EXIT_IO, "data", f"cannot load dataset {d}: {exc}") from None
    inputs = [{"path": p.name, "sha256": _sha256(p)} for p in sorted(d.glob("*.csv"))]
    return ds, inputs


def _load_report(run: Path) -> BacktestReport:
    bt = run / "backtest"
    hourly, metrics = bt / "hourly.csv", bt / "metrics.json"
    missing = [str(p) for p in (hourly, metrics) if not p.exists()]
    if missing:
        raise CliError(EXIT_IO, "missing_input", "backtest outputs not found; run 'backtest' first",
                       missing)
    try:
        return BacktestReport.from_files(hourly, metrics)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, "data", f"cannot read backtest outputs in {bt}: {exc}") from None


# ------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.synth is None:
        raise CliError(EXIT_CONFIG, "config", "the configuration has no 'synth' section")
    dest = _run_dir(args, cfg) / "dataset"
    stage = _StagedDir(dest, args.force)
    try:
        ds = generate_fleet(cfg.synth)
        write_dataset(ds, stage.tmp)
        _write_atomic(stage.tmp / "manifest.json",
                      _dump(_manifest(stage.tmp, "synth", cfg, [{"synth_rng_seed": cfg.synth.rng_seed}])))
        stage.commit()
    except BaseException:
        stage.abort()
        raise
    log.info("wrote %d plants to %s", len(ds.plants), dest)
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config(args)
    dest = _run_dir(args, cfg) / "backtest"
    stage = _StagedDir(dest, args.force)
    try:
        ds, inputs = _dataset(cfg)
        calib = (min(r.timestamp for r in ds.power), cfg.schedule.initial_train_end)
        try:
            samples = fleet_samples(ds, blend_calibration=calib)
            bcfg = BacktestConfig(models=tuple(cfg.models),
                                  initial_train_end=cfg.schedule.initial_train_end,
                                  step=cfg.schedule.step,
                                  validation_weeks=cfg.schedule.validation_weeks, seed=cfg.seed,
                                  params=cfg.params, use_temperature=cfg.use_temperature)
        except (DataError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, "config", str(exc)) from None
        log.info("backtesting %s on %d plants", ",".join(cfg.models), len(samples))
        try:
            rep = run_backtest(samples, bcfg)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, "config", str(exc)) from None
        _write_atomic(stage.tmp / "hourly.csv", rep.hourly_csv())
        _write_atomic(stage.tmp / "metrics.json", _dump(rep.metrics_document()))
        _write_atomic(stage.tmp / "weekly_nmae.csv", rep.weekly_csv())
        densities = {}
        for m in rep.models:
            try:
                d = daily_nmbe_density(rep, m)
            except ValueError as exc:
                densities[m] = {"skipped": str(exc)}
                continue
            rows = "".join(f"{format_float(g)},{format_float(v)}\n" for g, v in zip(d.grid, d.density))
            _write_atomic(stage.tmp / f"density_{m}.csv", "grid,density\n" + rows)
            densities[m] = {"n_days": int(d.daily_nmbe.size), "variance": d.variance,
                            "bandwidth": d.bandwidth}
        _write_atomic(stage.tmp / "density.json",
                      _dump({"min_days": MIN_DENSITY_DAYS, "models": densities}))
        failures = [f.__dict__ for f in rep.failures]
        _write_atomic(stage.tmp / "manifest.json", _dump(_manifest(
            stage.tmp, "backtest", cfg, inputs,
            {"failures": len(failures), "tolerate_failures": bool(args.tolerate_failures)})))
        stage.commit()
    except BaseException:
        stage.abort()
        raise
    for f in rep.failures:
        log.warning("fit failed: plant %s model %s fold %d: %s", f.plant, f.model, f.fold, f.message)
    summary = {m: (None if v is None else round(v.nmae, 4)) for m, v in rep.overall().items()}
    print(json.dumps({"backtest": str(dest), "overall_nmae": summary,
                      "failures": len(rep.failures)}))
    if rep.failures and not args.tolerate_failures:
        return EXIT_FAILURES
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args, need=False)
    run = _run_dir(args, cfg)
    keys = list(TABLE_KEYS) if args.by == "all" else [args.by]
    rep = _load_report(run)
    dest = run / "report"
    targets = []
    for k in keys:
        targets += [dest / f"{k}.csv", dest / f"{k}.json"] + ([] if args.no_svg else [dest / f"{k}.svg"])
    _check_free(targets, args.force)
    for k in keys:
        t = build_table(rep, k)
        _write_atomic(dest / f"{k}.csv", t.csv_text())
        _write_atomic(dest / f"{k}.json", _dump(t.document))
        if not args.no_svg:
            _write_atomic(dest / f"{k}.svg", t.svg)
    inputs = [{"path": f"backtest/{n}", "sha256": _sha256(run / "backtest" / n)}
              for n in ("hourly.csv", "metrics.json")]
    _write_atomic(dest / "manifest.json", _dump(_manifest(dest, "report", None, inputs)))
    log.info("wrote %s tables to %s", ",".join(keys), dest)
    return EXIT_OK


def paired_abs_errors(rep: BacktestReport, a: str, b: str):
    """Absolute errors of two models on the hours where both produced a forecast."""
    r = rep.records
    plants = {p: i for i, p in enumerate(rep.plants)}
    out = []
    for m in (a, b):
        sel = (r.model == m) & np.isfinite(r.forecast)
        key = np.array([plants[p] for p in r.plant[sel]], dtype=np.int64) * (1 << 40) + r.ts[sel]
        out.append((key, np.abs(r.forecast[sel] - r.measured[sel]), r.nominal[sel]))
    (ka, ea, na), (kb, eb, _) = out
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return ea[ia], eb[ib], na[ia]


def cmd_compare(args) -> int:
    cfg = _config(args, need=False)
    run = _run_dir(args, cfg)
    rep = _load_report(run)
    for m in (args.model_a, args.model_b):
        if m not in rep.models:
            raise CliError(EXIT_CONFIG, "usage", f"model {m!r} is not in the report",
                           [{"available": list(rep.models)}])
    ea, eb, nom = paired_abs_errors(rep, args.model_a, args.model_b)
    try:
        sig = wilcoxon_signed_rank(ea, eb)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "usage", f"cannot compare {args.model_a} with "
                       f"{args.model_b}: {exc}") from None
    nmae_a = float(100 * np.mean(ea / nom))
    nmae_b = float(100 * np.mean(eb / nom))
    doc = {"model_a": args.model_a, "model_b": args.model_b, "paired_hours": int(len(ea)),
           "nmae_a": nmae_a, "nmae_b": nmae_b, "nmae_delta": nmae_a - nmae_b,
           "test": sig.method, "statistic": sig.statistic, "p_value": sig.p_value,
           "n_effective": sig.n_effective, "zeros_dropped": sig.zeros_dropped}
    path = run / "compare" / f"{args.model_a}_vs_{args.model_b}.json"
    _check_free([path], args.force)
    _write_atomic(path, _dump(doc))
    print(json.dumps(doc))
    return EXIT_OK


# ------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (default: $PVBENCH_CONFIG)")
    common.add_argument("--seed", type=int, help="override the run and synth seeds")
    common.add_argument("--out", help="run directory (overrides the configuration)")
    common.add_argument("--force", action="store_true", help="replace existing outputs")
    common.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")

    p = argparse.ArgumentParser(prog="pvbench", description=__doc__.split("\n")[0],
                                epilog="exit codes: 0 ok, 1 tolerated-failure check failed, "
                                       "2 config/usage error, 3 input/output error")
    p.add_argument("--version", action="version", version=f"pvbench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic fleet dataset")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("backtest", parents=[common], help="rolling backtest of the selected models")
    b.add_argument("--models", help="comma-separated subset of gb,nn,knn,qrf,svr,ens")
    b.add_argument("--tolerate-failures", action="store_true",
                   help="exit 0 even if some fits failed (failures are still recorded)")
    b.set_defaults(func=cmd_backtest)

    r = sub.add_parser("report", parents=[common], help="tables and charts from a backtest")
    r.add_argument("--by", choices=list(TABLE_KEYS) + ["all"], default="all")
    r.add_argument("--no-svg", action="store_true", help="skip the SVG charts")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("compare", parents=[common], help="Wilcoxon test of two models' hourly errors")
    c.add_argument("model_a")
    c.add_argument("model_b")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        if exc.details:
            err["details"] = exc.details
        print(json.dumps(err), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
