"""Command-line entry point: ``binfar <command> [options]``.

Exit codes: 0 success, 1 runtime failure (JSON error on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import difflib
import hashlib
import io
import json
import logging
import math
import re
import secrets
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from binfar import __version__, _kernels
from binfar._parallel import default_threads
from binfar._rng import MAX_SEED
from binfar.backtest import (
    DEFAULT_OBSERVED,
    BacktestConfig,
    BacktestData,
    auc_table_csv,
    fitted_csv,
    in_sample,
    out_of_sample,
    records_csv,
)
from binfar.data import balance_panel, load_panel, load_recessions, standardize, transform_panel
from binfar.errors import BinfarError, InvalidArgumentError, ParseError
from binfar.factors import DEFAULT_D_MAX, PanelMatrix, estimate_factors, ic_values
from binfar.glm import Design, fit, get_link
from binfar.inference import BootstrapSpec, moving_block_bootstrap
from binfar.metrics import coefficient_names, dump_json, roc_auc
from binfar.plots import probability_svg, roc_svg
from binfar.simulate import preset, run_study

log = logging.getLogger("binfar")

MODEL_NAMES = {"far": "binary_far", "probit": "probit_observed"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting and suggests close flag names."""

    def __init__(self, *args, **kwargs):
        # prefixes of long flags are rejected so that typos get a suggestion
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        m = re.search(r"unrecognized arguments: (\S+)", message)
        if m:
            bad = m.group(1).split("=", 1)[0]
            options = [s for a in self._all_actions() for s in a.option_strings]
            close = difflib.get_close_matches(bad, options, n=1)
            if close:
                message += f" (did you mean {close[0]}?)"
        m = re.search(r"invalid choice: '([^']+)'", message)
        if m:
            choices = [c for a in self._actions if a.choices for c in a.choices]
            close = difflib.get_close_matches(m.group(1), [str(c) for c in choices], n=1)
            if close:
                message += f" (did you mean {close[0]}?)"
        raise UsageError(f"{self.prog}: {message}")

    def _all_actions(self):
        acts = list(self._actions)
        for a in self._actions:
            if isinstance(a, argparse._SubParsersAction):
                for sub in a.choices.values():
                    acts.extend(sub._actions)
        return acts


def _int_list(text: str) -> list[int]:
    try:
        out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _str_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _common(defaults: bool) -> argparse.ArgumentParser:
    kw = {} if defaults else {"argument_default": argparse.SUPPRESS}
    p = argparse.ArgumentParser(add_help=False, **kw)
    g = p.add_argument_group("global options")
    g.add_argument("--format", choices=("csv", "json"), **({"default": "csv"} if defaults else {}))
    g.add_argument("--threads", type=_positive, **({"default": None} if defaults else {}),
                   help="worker threads (default: $BINFAR_THREADS or 1)")
    g.add_argument("--out", type=Path, **({"default": None} if defaults else {}), help="output directory")
    g.add_argument("--seed", type=_seed, **({"default": None} if defaults else {}))
    g.add_argument("--log-level", choices=("debug", "info", "warning", "error"),
                   **({"default": "warning"} if defaults else {}))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="binfar", description="Binary factor-augmented regression toolkit.",
                     parents=[_common(True)])
    parser.add_argument("--version", action="version", version=f"binfar {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    common = _common(False)

    p = sub.add_parser("ingest", parents=[common], help="transform and balance a FRED-MD style panel")
    p.add_argument("--panel", type=Path, required=True)
    p.add_argument("--recessions", type=Path)

    p = sub.add_parser("select-factors", parents=[common], help="information-criterion choice of d")
    p.add_argument("--panel", type=Path, required=True)
    p.add_argument("--d-max", type=int, default=DEFAULT_D_MAX)
    p.add_argument("--no-transform", action="store_true", help="panel is already transformed")
    p.add_argument("--no-standardize", action="store_true")

    for name in ("fit", "bootstrap"):
        p = sub.add_parser(name, parents=[common], help=f"{name} the binary model on a time-aligned table")
        p.add_argument("--data", type=Path, required=True,
                       help="CSV with the outcome column and observed regressors, one row per t")
        p.add_argument("--y", default="y", help="outcome column (already shifted to t+h)")
        p.add_argument("--w", type=_str_list, help="observed regressor columns (default: all others)")
        p.add_argument("--panel", type=Path, help="numeric CSV of predictors, same rows as --data")
        p.add_argument("--d", type=int, default=None, help="number of factors from --panel")
        p.add_argument("--link", default="probit", choices=("probit", "logistic"))
        p.add_argument("--h", type=int, default=0)
        if name == "bootstrap":
            g = p.add_mutually_exclusive_group()
            g.add_argument("--blocks", type=_positive, help="number of blocks L")
            g.add_argument("--block-length", type=_positive, help="block length q")
            p.add_argument("--reps", type=_positive, default=999)
            p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo study")
    p.add_argument("--example", type=_int_list, default=[1])
    p.add_argument("--dgp", type=_int_list, default=[1])
    p.add_argument("--n", type=_int_list, default=[100])
    p.add_argument("--t", type=_int_list, default=[100])
    p.add_argument("--reps", type=_positive, default=500)
    p.add_argument("--use-ic", action="store_true")
    p.add_argument("--d-max", type=int, default=8)

    p = sub.add_parser("backtest", parents=[common], help="in-sample or expanding-window evaluation")
    p.add_argument("--panel", type=Path, required=True)
    p.add_argument("--recessions", type=Path, required=True)
    p.add_argument("--mode", choices=("is", "oos"), default="is")
    p.add_argument("--model", choices=tuple(MODEL_NAMES), default="far")
    p.add_argument("--horizons", type=_int_list, default=[1, 3, 6, 9, 12])
    p.add_argument("--oos-start")
    p.add_argument("--oos-end")
    p.add_argument("--lag", type=int, default=3)
    p.add_argument("--link", default="probit", choices=("probit", "logistic"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--d", type=int, help="fixed number of factors")
    g.add_argument("--d-max", type=int, help="choose d by the information criterion (default 15)")
    p.add_argument("--reselect", action="store_true", help="re-choose d at every origin")
    p.add_argument("--observed", type=_str_list, help="observed regressor series ids")
    p.add_argument("--min-window", type=_positive, default=60)

    p = sub.add_parser("roc", parents=[common], help="ROC curve and AUC of scores against labels")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    return parser


# ---------------------------------------------------------------- io helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return s.strip().lower() in ("", "na", "nan")
    return True


def read_table(path: Path) -> tuple[list[str], np.ndarray, list[str]]:
    """Numeric rows under an optional header; a non-numeric first column is returned as row labels.

    Without a header (first row entirely numeric) columns are named ``c1``, ``c2``, ...
    """
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no rows")
    if all(_is_number(c) and c.strip() for c in rows[0]):
        header = [f"c{j + 1}" for j in range(len(rows[0]))]
        body = rows
    else:
        header = [h.strip() for h in rows[0]]
        body = rows[1:]
    if not body:
        raise ParseError(f"{path}: expected at least one data row")
    label_col = not all(_is_number(r[0]) for r in body)
    start = 1 if label_col else 0
    values = []
    first = 1 if body is rows else 2
    for lineno, r in enumerate(body, start=first):
        if len(r) != len(header):
            raise ParseError(f"{path}: expected {len(header)} cells, found {len(r)}", lineno)
        try:
            values.append([float(c) if c.strip() else math.nan for c in r[start:]])
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", lineno) from None
    labels = [r[0] for r in body] if label_col else []
    return header[start:], np.array(values, dtype=np.float64), labels


def read_vector(path: Path) -> np.ndarray:
    """Last column of a CSV with an optional header row."""
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not _is_number(rows[0][-1]):
        rows = rows[1:]
    try:
        return np.array([float(r[-1]) for r in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def panel_csv(panel: PanelMatrix) -> str:
    """Balanced panel in the FRED-MD layout with a transform row of 1s."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sasdate", *panel.series_ids])
    writer.writerow(["Transform:", *([1] * panel.n)])
    for date, row in zip(panel.time_index, panel.values):
        writer.writerow([date, *(repr(float(v)) for v in row)])
    return buf.getvalue()


class Run:
    """Collects outputs, seeds and inputs for the manifest of one command."""

    def __init__(self, argv, args):
        self.argv = list(argv)
        self.args = args
        self.start = time.perf_counter()
        self.outputs: dict[str, str] = {}
        self.inputs: dict[str, str] = {}
        self.seeds: dict[str, int] = {}
        self.out = args.out

    def input(self, path: Path | None) -> Path | None:
        if path is not None:
            if not Path(path).is_file():
                raise InvalidArgumentError(f"input file not found: {path}")
            self.inputs[str(path)] = _sha256(Path(path))
        return path

    def seed(self) -> int:
        seed = self.args.seed
        if seed is None:
            seed = secrets.randbits(63)
            print(f"seed {seed}", file=sys.stderr)
        self.seeds["seed"] = seed
        return seed

    def write(self, name: str, text: str) -> None:
        if self.out is None:
            sys.stdout.write(text)
            return
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text, encoding="utf-8", newline="")
        self.outputs[name] = _sha256(path)

    def table(self, name: str, csv_text: str, obj) -> None:
        if self.args.format == "json":
            buf = io.StringIO()
            dump_json(obj, buf)
            self.write(f"{name}.json", buf.getvalue())
        else:
            self.write(f"{name}.csv", csv_text)

    def json(self, name: str, obj) -> None:
        buf = io.StringIO()
        dump_json(obj, buf)
        self.write(f"{name}.json", buf.getvalue())

    def finish(self) -> None:
        if self.out is None:
            return
        manifest = {
            "command": shlex.join(["binfar", *self.argv]),
            "argv": self.argv,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": dict(sorted(self.outputs.items())),
            "version": __version__,
            "backend": _kernels.backend(),
            "threads": self.args.threads or default_threads(),
            "elapsed_seconds": round(time.perf_counter() - self.start, 3),
        }
        self.out.mkdir(parents=True, exist_ok=True)
        with (self.out / "manifest.json").open("w", encoding="utf-8") as fh:
            dump_json(manifest, fh)


# ---------------------------------------------------------------- commands


def _prepared_panel(path: Path, keep=()) -> tuple[PanelMatrix, list[str]]:
    raw, specs = load_panel(path)
    return balance_panel(transform_panel(raw, specs), specs, keep)


def cmd_ingest(run: Run) -> None:
    a = run.args
    panel, dropped = _prepared_panel(run.input(a.panel))
    if run.out is None:
        raise InvalidArgumentError("ingest needs --out")
    run.write("panel.csv", panel_csv(panel))
    info = {
        "t": panel.t,
        "n": panel.n,
        "start": panel.time_index[0],
        "end": panel.time_index[-1],
        "dropped_series": dropped,
    }
    if a.recessions is not None:
        rec = load_recessions(run.input(a.recessions))
        y = rec.align(panel.time_index)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["date", "recession"])
        for d, v in zip(panel.time_index, y):
            writer.writerow([d, "" if np.isnan(v) else int(v)])
        run.write("recessions.csv", buf.getvalue())
        info["recession_episodes"] = rec.episodes()
    run.json("ingest", info)
    print(f"T={panel.t} N={panel.n} dropped={len(dropped)}", file=sys.stderr)


def cmd_select_factors(run: Run) -> None:
    a = run.args
    run.input(a.panel)
    if a.no_transform:
        raw, _ = load_panel(a.panel)
        panel, _ = balance_panel(raw)
    else:
        panel, _ = _prepared_panel(a.panel)
    x = panel.values if a.no_standardize else standardize(panel.values)
    ic = ic_values(x, a.d_max)
    d_hat = int(np.argmin(ic))
    rows = [{"d": d, "ic": float(v)} for d, v in enumerate(ic)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["d", "ic"])
    for r in rows:
        writer.writerow([r["d"], repr(r["ic"])])
    run.table("ic", buf.getvalue(), {"d_hat": d_hat, "ic": rows})
    if run.out is not None and d_hat > 0:
        est = estimate_factors(x, d_hat)
        run.json("factors", est.to_dict())
    print(f"d_hat {d_hat}", file=sys.stderr if run.out is None else sys.stdout)


def _design_inputs(run: Run):
    a = run.args
    names, values, labels = read_table(run.input(a.data))
    if a.y not in names:
        raise InvalidArgumentError(f"outcome column {a.y!r} not found in {a.data}")
    yi = names.index(a.y)
    w_names = a.w if a.w is not None else [c for c in names if c != a.y]
    missing = [c for c in w_names if c not in names]
    if missing:
        raise InvalidArgumentError(f"unknown regressor columns: {', '.join(missing)}")
    w = values[:, [names.index(c) for c in w_names]]
    y = values[:, yi]
    x = None
    d = a.d or 0
    if a.panel is not None:
        _, x, _ = read_table(run.input(a.panel))
        if x.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"--panel has {x.shape[0]} rows, --data has {y.shape[0]}")
        if a.d is None:
            raise InvalidArgumentError("--panel needs --d")
    elif d:
        raise InvalidArgumentError("--d needs --panel")
    if np.isnan(y).any() or np.isnan(w).any() or (x is not None and np.isnan(x).any()):
        raise InvalidArgumentError("inputs contain missing values")
    return w, w_names, y, x, d, labels


def cmd_fit(run: Run) -> None:
    a = run.args
    w, w_names, y, x, d, labels = _design_inputs(run)
    f = estimate_factors(x, d).factors if d else None
    design = Design(w, f, y, a.h, tuple(labels))
    res = fit(design, get_link(a.link))
    names = ["cons", *w_names, *(f"f{j + 1}" for j in range(d))]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["coefficient", "estimate"])
    for n, b in zip(names, res.beta):
        writer.writerow([n, repr(float(b))])
    run.table("fit", buf.getvalue(), {**res.to_dict(), "names": names})


def cmd_bootstrap(run: Run) -> None:
    a = run.args
    seed = run.seed()
    w, w_names, y, x, d, _ = _design_inputs(run)
    design = Design(w, None, y, a.h)
    n = design.n
    if a.blocks:
        spec = BootstrapSpec.from_blocks(n, a.blocks, a.reps, seed)
    elif a.block_length:
        spec = BootstrapSpec.from_block_length(n, a.block_length, a.reps, seed)
    else:
        spec = BootstrapSpec.default(n, a.reps, seed)
    panel = x if x is not None else np.zeros((n, 1))
    res = moving_block_bootstrap(design, panel, d, get_link(a.link), spec, a.level, threads=a.threads)
    names = ["cons", *w_names, *(f"f{j + 1}" for j in range(d))]
    res = dataclasses.replace(res, names=tuple(names))
    run.table("bootstrap", res.to_csv(), res.to_dict())
    run.seeds.update({"num_blocks": spec.num_blocks, "block_length": spec.block_length})


def cmd_simulate(run: Run) -> None:
    a = run.args
    seed = run.seed()
    grid = [preset(e, g, n, t, seed) for e in a.example for g in a.dgp for n in a.n for t in a.t]
    study = run_study(grid, a.reps, a.use_ic, d_max=a.d_max, threads=a.threads)
    if a.format == "json":
        run.json("summary", study.manifest())
    else:
        run.write("rmse.csv", study.rmse_table_csv())
        run.write("auc.csv", study.auc_table_csv())
        run.write("replications.csv", study.replications_csv())
        run.json("summary", study.manifest())


def cmd_backtest(run: Run) -> None:
    a = run.args
    model = MODEL_NAMES[a.model]
    observed_ids = a.observed if a.observed is not None else (
        list(DEFAULT_OBSERVED) if model == "probit_observed" else []
    )
    panel, dropped = _prepared_panel(run.input(a.panel), keep=observed_ids)
    rec = load_recessions(run.input(a.recessions))
    observed = panel.columns(observed_ids) if observed_ids else None
    data = BacktestData(panel, rec.align(panel.time_index), observed)
    if a.d is not None:
        policy = ("fixed", a.d)
    else:
        policy = ("ic", a.d_max if a.d_max is not None else DEFAULT_D_MAX)
    if a.mode == "oos" and not a.oos_start:
        raise UsageError("backtest --mode oos requires --oos-start")
    config = BacktestConfig(
        horizons=tuple(a.horizons),
        oos_start=a.oos_start,
        oos_end=a.oos_end,
        model=model,
        d_policy=policy,
        link=get_link(a.link),
        lag=a.lag,
        min_window=a.min_window,
        reselect=a.reselect,
    )
    if a.mode == "is":
        reports = in_sample(data, config)
        for h, rep in reports.items():
            if rep.fit is not None:
                run.write(f"fitted_h{h}.csv", fitted_csv(rep))
                run.write(f"probability_h{h}.svg",
                          probability_svg(rep.dates, rep.probabilities, rep.realized, f"{a.model} h={h}"))
    else:
        records, reports = out_of_sample(data, config, threads=a.threads)
        for h in config.horizons:
            run.write(f"forecasts_h{h}.csv", records_csv([r for r in records if r.horizon == h]))
            rep = reports[h]
            if rep.n:
                run.write(f"probability_h{h}.svg",
                          probability_svg(rep.dates, rep.probabilities, rep.realized, f"{a.model} h={h}"))
    curves = {f"h={h}": r.roc for h, r in reports.items() if r.roc is not None}
    if curves:
        run.write("roc.svg", roc_svg(curves, f"{a.model} ({a.mode})"))
    run.write("auc_table.csv", auc_table_csv(reports, a.model))
    run.json("summary", {
        "mode": a.mode,
        "model": model,
        "n_series": panel.n,
        "t": panel.t,
        "dropped_series": dropped,
        "observed": observed_ids,
        "horizons": [reports[h].to_dict() for h in config.horizons],
    })


def cmd_roc(run: Run) -> None:
    a = run.args
    scores = read_vector(run.input(a.scores))
    labels = read_vector(run.input(a.labels))
    curve = roc_auc(scores, labels)
    print(f"auc {curve.auc:.12g}")
    if run.out is not None:
        run.table("roc", curve.to_csv(), curve.to_dict())


COMMANDS = {
    "ingest": cmd_ingest,
    "select-factors": cmd_select_factors,
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "backtest": cmd_backtest,
    "roc": cmd_roc,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    run = Run(argv, args)
    try:
        COMMANDS[args.command](run)
        run.finish()
    except UsageError as exc:
        print(f"binfar {args.command}: {exc}", file=sys.stderr)
        return 2
    except (BinfarError, OSError, ValueError) as exc:
        err = {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
