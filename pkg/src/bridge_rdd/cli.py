"""Command-line interface: ``bridge-rdd <subcommand> ...``.

Exit codes: 0 success, 2 input validation, 3 numerical failure, 4 I/O error.
Configuration precedence is built-in defaults < ``--config`` file < flags.
``--seed`` falls back to ``$BRIDGE_RDD_SEED``, then to the config's seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

from . import _accel
from .dataset import load_aux_csv, load_main_csv, positivity_diagnostic
from .errors import NumericalError, ValidationError
from .inference import bootstrap, fit_and_estimate
from .minimax import FitConfig, config_from_mapping, load_config
from .simstudy import get_setting, run_coverage_study, run_misspecification_study, run_mse_study

log = logging.getLogger("bridge_rdd")

PRESETS = {"full": {"reps": 1000, "B": 1000}, "desk": {"reps": 200, "B": 500}}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    out = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    out.writeheader()
    for row in rows:
        out.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _text(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[_fmt(r[c]) if not isinstance(r[c], float) else f"{r[c]:.6g}" for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(cols, widths))]
    lines += ["  ".join(x.rjust(wd) for x, wd in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _emit(args, csv_rows: list[dict], text: str | None = None) -> None:
    payload = _csv(csv_rows) if args.format == "csv" else (text if text is not None else _text(csv_rows))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _seed(args, cfg_seed: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BRIDGE_RDD_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"BRIDGE_RDD_SEED must be an integer, got {env!r}", 2) from None
    return cfg_seed


def _config(args, base: FitConfig | None = None) -> FitConfig:
    cfg = base or FitConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}", 2)
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    cfg = config_from_mapping(overrides, cfg)
    return cfg.with_seed(_seed(args, cfg.seed))


def _samples(args):
    return load_main_csv(args.main, args.threshold), load_aux_csv(args.aux, args.threshold)


def cmd_fit(args) -> None:
    main, aux = _samples(args)
    cfg = _config(args)
    est = fit_and_estimate(main, aux, cfg)
    _emit(args, [est.as_dict()])


def cmd_bootstrap(args) -> None:
    main, aux = _samples(args)
    cfg = _config(args)
    B = args.B if args.B is not None else PRESETS[args.preset]["B"]
    results = bootstrap(main, aux, cfg, B=B, level=args.level, seed=cfg.seed, jobs=args.jobs)
    rows = [{"estimator": r.estimator, "target": r.target, "point": r.point, "lower": r.lower,
             "upper": r.upper, "level": r.level, "B": r.B} for r in results]
    _emit(args, rows)


def _study_config(args):
    try:
        setting = get_setting(args.setting)
    except ValueError as exc:
        raise CliError(str(exc), 2) from None
    cfg = _config(args, setting.config())
    reps = args.reps if args.reps is not None else PRESETS[args.preset]["reps"]
    return setting, cfg, reps


def cmd_simulate(args) -> None:
    setting, cfg, reps = _study_config(args)
    report = run_mse_study(setting, args.sizes, reps, cfg, seed=cfg.seed, jobs=args.jobs)
    _emit(args, report.rows(), report.text())


def cmd_coverage(args) -> None:
    setting, cfg, reps = _study_config(args)
    B = args.B if args.B is not None else PRESETS[args.preset]["B"]
    report = run_coverage_study(setting, args.sizes, reps, B, cfg, seed=cfg.seed, jobs=args.jobs,
                                level=args.level)
    _emit(args, report.rows(), report.text())


def cmd_misspec(args) -> None:
    setting, cfg, reps = _study_config(args)
    report = run_misspecification_study(setting, args.n, reps, cfg, which=args.which, seed=cfg.seed,
                                        jobs=args.jobs)
    if args.long:
        with open(args.long, "w", encoding="utf-8", newline="") as fh:
            fh.write(_csv(report.report.long_rows()))
    _emit(args, report.rows(), report.text())


def cmd_diagnose(args) -> None:
    aux = load_aux_csv(args.aux, args.threshold)
    diag = positivity_diagnostic(aux, args.bins)
    summary = f"min side share = {diag.epsilon:.4f}; one-sided bins = {int(diag.one_sided.sum())}"
    if diag.warning:
        summary += "; WARNING: some u bins see only one side of the threshold (latent positivity suspect)"
    print(summary, file=sys.stderr)
    _emit(args, diag.rows(), _text(diag.rows()) + summary + "\n")


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridge-rdd", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs_default):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, help="root seed (default: $BRIDGE_RDD_SEED or config)")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "text"), default="csv")
        sp.add_argument("--jobs", type=int, default=jobs_default, help="worker processes (0 = all cores)")

    def data(sp):
        sp.add_argument("--main", required=True, help="main sample CSV with header x,w,y")
        sp.add_argument("--aux", required=True, help="auxiliary sample CSV with header u,x")
        sp.add_argument("--threshold", type=float, required=True)

    def study(sp):
        sp.add_argument("--setting", default="setting1", help="setting1 or setting2")
        sp.add_argument("--reps", type=int, help="Monte Carlo replicates (default from --preset)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="desk")

    sp = sub.add_parser("fit", help="point estimates from two CSV samples")
    data(sp)
    common(sp, 1)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("bootstrap", help="point estimates with percentile bootstrap intervals")
    data(sp)
    common(sp, 1)
    sp.add_argument("--B", type=int)
    sp.add_argument("--level", type=_level, default=0.95)
    sp.add_argument("--preset", choices=sorted(PRESETS), default="full")
    sp.set_defaults(func=cmd_bootstrap)

    sp = sub.add_parser("simulate", help="MSE table on a synthetic setting")
    study(sp)
    common(sp, 0)
    sp.add_argument("--sizes", type=_sizes, default=[100, 200, 500, 1000])
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("coverage", help="bootstrap coverage table on a synthetic setting")
    study(sp)
    common(sp, 0)
    sp.add_argument("--sizes", type=_sizes, default=[100, 200, 500, 1000])
    sp.add_argument("--B", type=int)
    sp.add_argument("--level", type=_level, default=0.95)
    sp.set_defaults(func=cmd_coverage)

    sp = sub.add_parser("misspec", help="bias with one bridge forced to a constant")
    study(sp)
    common(sp, 0)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--which", choices=("h_constant", "f_constant", "none"), default="f_constant")
    sp.add_argument("--long", help="also write per-replicate long-format CSV here")
    sp.set_defaults(func=cmd_misspec)

    sp = sub.add_parser("diagnose", help="latent positivity check on the auxiliary sample")
    sp.add_argument("--aux", required=True)
    sp.add_argument("--threshold", type=float, required=True)
    sp.add_argument("--bins", type=int, default=10)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "text"), default="csv")
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.info("kernel backend: %s", _accel.backend_name())
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
