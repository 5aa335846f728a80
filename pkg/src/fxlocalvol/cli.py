"""Command-line driver.

    fxlocalvol calibrate --input day.csv
    fxlocalvol price --input day.csv --tenor 3m --label c25
    fxlocalvol localvol --input day.csv --tenor 1y
    fxlocalvol backtest --input history.csv --scheme lv_sticky --label atm --tenor 1w
    fxlocalvol simulate --paths 1000 --vol 0.10 --rebalance 250 --seed 42
    fxlocalvol synth --days 400 --seed 7 --output history.csv

Numbers are written with 10 significant digits. Exit status is 0 on success,
1 for domain/data/numerical errors, 2 for usage errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime as _dt
import logging
import math
import os
import re
import sys
from pathlib import Path

from . import blackscholes as bs
from .calibration import FLAG_THRESHOLD, calibrate_history
from .errors import ConfigurationError, LocalVolError
from .hedging import SCHEMES, BacktestConfig, run_backtest, simulate_hedging, synthetic_history
from .marketdata import LABELS, parse_history, write_history
from .pdepricer import PayoffSpec, build_mesh, cn_solve
from .surface import SIGMA_CAP, ImpliedSurface, build_localvol_grid

logger = logging.getLogger("fxlocalvol")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

_TENOR_UNITS = {"d": 365.0, "w": 52.0, "m": 12.0, "y": 1.0}


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, _dt.date):
        return x.isoformat()
    return f"{float(x):.10g}"


def parse_tenor(text) -> float:
    """'1w' -> 1/52, '3m' -> 3/12, '2y' -> 2, or a plain year fraction."""
    s = str(text).strip().lower()
    m = re.fullmatch(r"(\d+(?:\.\d*)?)\s*([dwmy])", s)
    if m:
        return float(m.group(1)) / _TENOR_UNITS[m.group(2)]
    try:
        t = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tenor {text!r}; use e.g. 1w, 3m, 1y or 0.25") from None
    if not t > 0:
        raise argparse.ArgumentTypeError("tenor must be positive")
    return t


def _label(text) -> str:
    lab = str(text).strip().upper()
    if lab not in LABELS:
        raise argparse.ArgumentTypeError(f"label must be one of {', '.join(l.lower() for l in LABELS)}")
    return lab


def read_config(path) -> dict:
    """``key = value`` lines; '#' starts a comment. Keys match long flag names."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"{path}:{n}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _common(p, *names):
    adders = {
        "input": lambda: p.add_argument("--input", help="market data CSV"),
        "output": lambda: p.add_argument("--output", help="output CSV (default stdout)"),
        "summary": lambda: p.add_argument("--summary", help="summary CSV path"),
        "mesh": lambda: (
            p.add_argument("--gamma", type=float, default=7.0, help="mesh half-width in sd units"),
            p.add_argument("--grid-m", type=int, default=400, help="price intervals (even)"),
            p.add_argument("--sigma-cap", type=float, default=SIGMA_CAP),
        ),
        "date": lambda: p.add_argument("--date", type=_dt.date.fromisoformat,
                                       help="snapshot date (default: last in file)"),
        "tenor": lambda: p.add_argument("--tenor", type=parse_tenor, default=parse_tenor("1w")),
        "label": lambda: p.add_argument("--label", type=_label, default="ATM"),
        "side": lambda: p.add_argument("--side", choices=("call", "put"), default="call"),
    }
    for n in names:
        adders[n]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxlocalvol", description="FX local volatility toolkit")
    parser.add_argument("--config", help="key=value file supplying defaults; flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="reprice quoted options under local vol")
    _common(p, "input", "output", "summary", "mesh")
    p.add_argument("--tolerance", type=float, default=FLAG_THRESHOLD, help="flag threshold (abs vol)")

    p = sub.add_parser("price", help="local vol price and delta of one vanilla")
    _common(p, "input", "output", "mesh", "date", "tenor", "label", "side")
    p.add_argument("--strike", type=float, help="overrides --label")

    p = sub.add_parser("localvol", help="dump the local vol grid of one maturity")
    _common(p, "input", "output", "mesh", "date", "tenor")

    p = sub.add_parser("backtest", help="historical delta-hedging backtest")
    _common(p, "input", "output", "summary", "mesh", "tenor", "label", "side")
    p.add_argument("--scheme", choices=SCHEMES, default="bs")
    p.add_argument("--bump", type=float, default=0.001, help="relative spot bump (lv_sticky)")
    p.add_argument("--max-starts", type=int, help="stop after this many start dates")

    p = sub.add_parser("simulate", help="Monte Carlo hedging under constant vol")
    _common(p, "output", "summary", "mesh", "side")
    p.add_argument("--tenor", type=parse_tenor, default=1.0)
    p.add_argument("--scheme", choices=("bs", "lv_tc"), default="bs")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--rebalance", type=int, default=250)
    p.add_argument("--vol", type=float, default=0.2)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--div", type=float, default=0.0)
    p.add_argument("--mu", type=float, help="real-world drift (default rate - div)")
    p.add_argument("--spot", type=float, default=1.0)
    p.add_argument("--strike", type=float, help="default: spot")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a flat-smile synthetic history CSV")
    _common(p, "output")
    p.add_argument("--days", type=int, default=400)
    p.add_argument("--spot", type=float, default=0.7735)
    p.add_argument("--vol", type=float, default=0.10)
    p.add_argument("--rate", type=float, default=0.0, help="domestic zero rate")
    p.add_argument("--div", type=float, default=0.0, help="foreign zero rate")
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = read_config(known.config)
        args = parser.parse_args(argv)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in config.items():
            if key not in dests:
                raise ConfigurationError(f"unknown config key {key!r} for {args.command}")
            action = dests[key]
            defaults[key] = action.type(value) if action.type else value
            if action.choices is not None and defaults[key] not in action.choices:
                raise ConfigurationError(f"config {key}={value!r} not in {sorted(action.choices)}")
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _write(path, header, rows):
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _summary_path(args):
    if args.summary:
        return args.summary
    if args.output:
        out = Path(args.output)
        return str(out.with_name(out.stem + "_summary" + (out.suffix or ".csv")))
    return None


def _emit_pair(args, header, rows, s_header, s_rows):
    _write(args.output, header, rows)
    spath = _summary_path(args)
    if spath is None:
        sys.stdout.write("\n")
    _write(spath, s_header, s_rows)


def _load(args):
    if not args.input:
        raise ConfigurationError("--input is required")
    with open(args.input, encoding="utf-8", newline="") as fh:
        return parse_history(fh)


def _pick(snapshots, date):
    if date is None:
        return snapshots[-1]
    for s in snapshots:
        if s.date == date:
            return s
    raise ConfigurationError(f"no snapshot dated {date}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_calibrate(args):
    snaps = _load(args)
    report = calibrate_history(snaps, gamma=args.gamma, grid_m=args.grid_m,
                               sigma_cap=args.sigma_cap, threshold=args.tolerance)
    rows = [(r.date, r.tenor, r.label, r.side, r.strike, r.market_vol, r.model_vol, r.abs_error,
             int(r.flagged), r.message) for r in report.rows]
    avg = report.averages()
    s_rows = [(t, lab, v) for (t, lab), v in sorted(avg.items(), key=lambda kv: (kv[0][0], LABELS.index(kv[0][1])))]
    _emit_pair(args,
               ["date", "tenor", "label", "side", "strike", "market_vol", "model_vol", "abs_error",
                "flagged", "message"], rows,
               ["tenor", "label", "mean_abs_error"], s_rows)
    if report.n_flagged:
        logger.warning("%d of %d rows exceed %.4g absolute vol", report.n_flagged, len(rows), args.tolerance)


def cmd_price(args):
    snap = _pick(_load(args), args.date)
    T = snap.quote(args.tenor).tenor if _quoted(snap, args.tenor) else args.tenor
    surf = ImpliedSurface(snap)
    K = args.strike if args.strike is not None else _strike_for(snap, args.label, T)
    mesh = build_mesh(snap.spot, T, snap.theta_bar, args.gamma, args.grid_m)
    grid = build_localvol_grid(surf, mesh, args.sigma_cap)
    sol = cn_solve(mesh, PayoffSpec(args.side, K), grid, snap.dom_curve, snap.for_curve)
    price, delta = sol.price_and_delta(snap.spot)
    theta = float(surf.theta(K, T))
    rd, rf = snap.dom_curve.average(T), snap.for_curve.average(T)
    _write(args.output,
           ["date", "tenor", "side", "strike", "lv_price", "lv_delta", "implied_vol", "bs_price", "bs_delta"],
           [(snap.date, T, args.side, K, price, delta, theta,
             bs.price(args.side, snap.spot, K, T, rd, rf, theta),
             bs.delta(args.side, snap.spot, K, T, rd, rf, theta))])


def _quoted(snap, T):
    return any(abs(q.tenor - T) <= 1e-6 for q in snap.quotes)


def _strike_for(snap, label, T):
    if _quoted(snap, T):
        return snap.label_strike(label, T)
    raise ConfigurationError(f"tenor {T:g} is not quoted; pass --strike")


def cmd_localvol(args):
    snap = _pick(_load(args), args.date)
    mesh = build_mesh(snap.spot, args.tenor, snap.theta_bar, args.gamma, args.grid_m)
    grid = build_localvol_grid(ImpliedSurface(snap), mesh, args.sigma_cap)
    rows = ((t, s, grid.values[j, i]) for i, t in enumerate(grid.times) for j, s in enumerate(grid.prices))
    _write(args.output, ["t", "s", "sigma"], rows)


def cmd_backtest(args):
    cfg = BacktestConfig(scheme=args.scheme, label=args.label, tenor=args.tenor, side=args.side,
                         bump=args.bump, gamma=args.gamma, grid_m=args.grid_m, sigma_cap=args.sigma_cap)
    res = run_backtest(_load(args), cfg, args.max_starts)
    rows = [(r.start_date, r.scheme, r.label, r.tenor, r.strike, r.premium, r.error) for r in res.records]
    s_rows = [(cfg.scheme, cfg.label, res.records[0].tenor if res.records else cfg.tenor,
               res.mean if res.records else math.nan, res.std if res.records else math.nan)]
    _emit_pair(args, ["start_date", "scheme", "label", "tenor", "strike", "premium", "error"], rows,
               ["scheme", "label", "tenor", "mean", "std"], s_rows)


def cmd_simulate(args):
    res = simulate_hedging(args.paths, args.vol, args.tenor, args.rebalance, spot=args.spot,
                           strike=args.strike, side=args.side, rate=args.rate, div=args.div,
                           mu=args.mu, scheme=args.scheme, seed=args.seed, gamma=args.gamma,
                           grid_m=args.grid_m)
    rows = [(k, res.premium, e) for k, e in enumerate(res.errors)]
    _emit_pair(args, ["path", "premium", "error"], rows,
               ["scheme", "rebalance", "tenor", "mean", "std"],
               [(args.scheme, args.rebalance, args.tenor, res.mean, res.std)])


def cmd_synth(args):
    snaps = synthetic_history(args.days, spot=args.spot, vol=args.vol, rate_d=args.rate,
                              rate_f=args.div, seed=args.seed)
    with _sink(args.output) as fh:
        write_history(snaps, fh)


COMMANDS = {
    "calibrate": cmd_calibrate, "price": cmd_price, "localvol": cmd_localvol,
    "backtest": cmd_backtest, "simulate": cmd_simulate, "synth": cmd_synth,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    except ConfigurationError as exc:
        print(f"fxlocalvol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fxlocalvol: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        COMMANDS[args.command](args)
    except BrokenPipeError:  # e.g. piped into head
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"fxlocalvol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LocalVolError, ArithmeticError, ValueError) as exc:
        print(f"fxlocalvol: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"fxlocalvol: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
