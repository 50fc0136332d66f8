"""``nat-bench`` command line.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Option values are resolved as built-in default < ``--config`` JSON < flag,
and the manifest echoes the resolved values in a form ``--config`` accepts,
so a run can be reproduced from its manifest alone.

Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on bad usage.
"""

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import NatBenchError, NoNegativesError, ZeroVarianceError
from .frames import load_frames, save_frames
from .grid import read_sgrid, write_sgrid
from .ioc import dataset_ioc, format_ioc_csv, ioc_convergence_gradient, ioc_initial_gradient
from .metrics import Discrepancy, auc_judd, cc, kld, nss, sim
from .noise_stats import estimate_frame_stats, write_nstats
from .reconstruct import fit_gold_standard, kde_reconstruct, read_fixcsv, sr_reconstruct
from .synth import toy_study
from .trainer import ExperimentConfig, attach_stats, curve_flags, make_frames, run_comparison, train

PROG = "nat-bench"


def version_string():
    try:
        return "v" + metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "v0.0.0+unknown"


class UsageError(Exception):
    def __init__(self, flag, message):
        super().__init__(f"argument {flag}: {message}")
        self.flag = flag


# --- option table ------------------------------------------------------------


@dataclass(frozen=True)
class Opt:
    dest: str
    parse: object  # raw value (flag string or JSON value) -> python value
    default: object
    help: str
    dump: object = None  # python value -> JSON value for the manifest echo
    repeat: bool = False
    positional: bool = False

    @property
    def flag(self):
        return self.dest if self.positional else "--" + self.dest.replace("_", "-")


def _int(lo=None):
    def parse(raw):
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ValueError(f"expected an integer, got {raw!r}") from None
        if isinstance(raw, float) and raw != value:
            raise ValueError(f"expected an integer, got {raw!r}")
        if lo is not None and value < lo:
            raise ValueError(f"must be >= {lo}, got {value}")
        return value
    return parse


def _float(lo=None, strict=False):
    def parse(raw):
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"expected a number, got {raw!r}") from None
        if lo is not None and (value < lo or (strict and value == lo)):
            raise ValueError(f"must be {'>' if strict else '>='} {lo}, got {value}")
        return value
    return parse


def _grid(raw):
    """``WIDTHxHEIGHT`` for 2-D grids or a single ``WIDTH`` for 1-D grids."""
    if isinstance(raw, (list, tuple)):
        dims = [int(v) for v in raw]
        shape = tuple(dims)
    else:
        parts = str(raw).lower().split("x")
        try:
            dims = [int(p) for p in parts]
        except ValueError:
            raise ValueError(f"expected WIDTHxHEIGHT, got {raw!r}") from None
        if len(dims) not in (1, 2):
            raise ValueError(f"expected WIDTHxHEIGHT, got {raw!r}")
        shape = (dims[0],) if len(dims) == 1 else (dims[1], dims[0])
    if any(d < 1 for d in shape):
        raise ValueError(f"grid dimensions must be >= 1, got {raw!r}")
    return shape


def _dump_grid(shape):
    return str(shape[0]) if len(shape) == 1 else f"{shape[1]}x{shape[0]}"


def _pair(kind):
    def parse(raw):
        parts = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
        if len(parts) != 2:
            raise ValueError(f"expected two comma-separated values, got {raw!r}")
        lo, hi = (kind(p) for p in parts)
        if lo > hi or lo <= 0:
            raise ValueError(f"expected 0 < low <= high, got {raw!r}")
        return (lo, hi)
    return parse


def _discrepancy(raw):
    return Discrepancy.parse(str(raw))


def _choice(*options):
    def parse(raw):
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {raw!r}")
        return raw
    return parse


def _path(raw):
    return None if raw is None else str(raw)


def _list(item):
    def parse(raw):
        values = raw if isinstance(raw, (list, tuple)) else [raw]
        if not values:
            raise ValueError("at least one value is required")
        return [item(v) for v in values]
    return parse


_DISC = dict(parse=_discrepancy, dump=str)
_GRID = dict(parse=_grid, dump=_dump_grid)

COMMON = [
    Opt("seed", _int(0), 0, "base seed for every random stream"),
    Opt("out", _path, ".", "output directory"),
]

SYNTH_DATA = [
    Opt("frames", _int(1), 10, "number of frames"),
    Opt("videos", _int(1), 5, "number of emulated videos (frame groups sharing a truth)"),
    Opt("components", _pair(int), (2, 3), "min,max mixture components per truth", dump=list),
    Opt("component_sigma", _pair(float), (2.0, 4.0), "min,max component sigma in cells", dump=list),
    Opt("jitter", _float(0), 0.5, "per-frame std of component center shifts, in cells"),
]

TRAINING = [
    Opt("discrepancy", default="kld", help="kld, neg_cc, neg_nss or mix:a,b,c", **_DISC),
    Opt("realizations", _int(2), 10, "bootstrap realizations per frame"),
    Opt("iterations", _int(0), 2000, "RMSprop iterations"),
    Opt("learning_rate", _float(0, strict=True), 0.001, "RMSprop learning rate"),
    Opt("record_every", _int(1), 50, "history recording interval"),
]

COMMANDS = {
    "synth": ("synthesize truths and fixations", [
        *SYNTH_DATA[:1],
        Opt("observers", _int(1), 5, "fixations (observers) per frame"),
        Opt("grid", default=(64, 64), help="grid as WIDTHxHEIGHT", **_GRID),
        *SYNTH_DATA[1:],
    ]),
    "reconstruct": ("build measured maps from a fixation CSV", [
        Opt("input", _path, None, "FIXCSV file"),
        Opt("grid", default=(64, 64), help="grid as WIDTHxHEIGHT", **_GRID),
        Opt("sigma", _float(0), 2.0, "blur sigma in cells"),
        Opt("method", _choice("sr", "kde"), "sr", "sr: blurred histogram; kde: fitted gold-standard KDE"),
    ]),
    "stats": ("bootstrap noise statistics per frame", [
        Opt("input", _path, None, "FIXCSV file"),
        Opt("grid", default=(64, 64), help="grid as WIDTHxHEIGHT", **_GRID),
        Opt("sigma", _float(0), 2.0, "blur sigma in cells"),
        Opt("realizations", _int(2), 10, "bootstrap realizations per frame"),
        Opt("discrepancy", default="kld", help="kld, neg_cc, neg_nss or mix:a,b,c", **_DISC),
    ]),
    "train": ("fit per-frame maps to a saved dataset", [
        Opt("data", _path, None, "directory holding fixations.csv and optional truth/stats files"),
        Opt("stats", _path, None, "NSTATS file (default: DATA/stats.csv when present)"),
        Opt("grid", default=(64, 64), help="grid as WIDTHxHEIGHT", **_GRID),
        Opt("sigma", _float(0), 2.0, "blur sigma in cells"),
        Opt("mode", _choice("tt", "nat", "both"), "both", "loss to train with"),
        *TRAINING,
    ]),
    "compare": ("TT vs NAT on synthetic data over observer and video counts", [
        Opt("n", _list(_int(1)), [3, 30], "observer count (repeatable)", repeat=True),
        Opt("v", _list(_int(1)), None, "video count (repeatable; default: --videos)", repeat=True),
        Opt("grid", default=(32, 32), help="grid as WIDTHxHEIGHT", **_GRID),
        Opt("sigma", _float(0), 2.0, "blur sigma in cells"),
        Opt("mode", _choice("tt", "nat", "both"), "both", "losses to compare"),
        *SYNTH_DATA,
        *TRAINING,
    ]),
    "toy": ("1-D toy study of measurement noise", [
        Opt("n", _list(_int(1)), [3, 30], "observer count (repeatable)", repeat=True),
        Opt("realizations", _int(2), 1000, "realizations per (truth, n)"),
        Opt("sigma", _float(0), 5.0, "reconstruction blur sigma in cells"),
    ]),
    "ioc": ("inter-observer consistency curve", [
        Opt("input", _path, None, "FIXCSV file with observer ids"),
        Opt("grid", default=(64, 64), help="grid as WIDTHxHEIGHT", **_GRID),
        Opt("sigma", _float(0), 2.0, "blur sigma in cells"),
        Opt("realizations", _int(1), 20, "realizations per curve point"),
        Opt("stride", _int(1), 1, "use every stride-th frame"),
    ]),
    "metrics": ("compare a predicted SGRID with a reference SGRID", [
        Opt("predicted", _path, None, "predicted map (SGRID)", positional=True),
        Opt("reference", _path, None, "reference map (SGRID)", positional=True),
        Opt("fixations", _path, None, "FIXCSV with reference fixations for NSS and AUC"),
        Opt("frame_id", _int(), None, "frame to take from --fixations (default: the only frame)"),
    ]),
}

REQUIRED = {"reconstruct": ["input"], "stats": ["input"], "train": ["data"], "ioc": ["input"]}


def build_parser():
    parser = argparse.ArgumentParser(prog=PROG, description="Noise-aware training benchmark tools.")
    parser.add_argument("--version", action="version", version=f"{PROG} {version_string()}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (summary, options) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary, argument_default=argparse.SUPPRESS)
        for opt in options + COMMON:
            if opt.positional:
                p.add_argument(opt.dest, help=opt.help)
            else:
                p.add_argument(opt.flag, dest=opt.dest, action="append" if opt.repeat else "store",
                               help=f"{opt.help} (default: {_show_default(opt)})")
        p.add_argument("--threads", help="worker threads (default: $NAT_BENCH_THREADS or CPU count)")
        p.add_argument("--config", help="JSON file of option values; flags take precedence")
    return parser


def _show_default(opt):
    return json.dumps(_dump(opt, opt.default)) if opt.default is not None else "none"


def _dump(opt, value):
    if value is None or opt.dump is None:
        return list(value) if isinstance(value, tuple) else value
    return opt.dump(value)


def resolve(command, given):
    """Merge defaults, ``--config`` and flags; returns ``(values, echo, threads)``."""
    options = COMMANDS[command][1] + COMMON
    by_dest = {o.dest: o for o in options}
    raw = {}
    config_path = given.pop("config", None)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError("--config", f"cannot read {config_path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("--config", "expected a JSON object")
        unknown = sorted(set(loaded) - set(by_dest))
        if unknown:
            raise UsageError("--config", f"unknown option(s) for {command}: {', '.join(unknown)}")
        raw.update(loaded)
    threads_raw = given.pop("threads", None) or os.environ.get("NAT_BENCH_THREADS") or os.cpu_count() or 1
    try:
        threads = _int(1)(threads_raw)
    except ValueError as exc:
        raise UsageError("--threads", str(exc)) from None
    raw.update(given)
    values, echo = {}, {}
    for opt in options:
        if opt.dest in raw and raw[opt.dest] is not None:
            try:
                values[opt.dest] = opt.parse(raw[opt.dest])
            except (ValueError, NatBenchError) as exc:
                raise UsageError(opt.flag, str(exc)) from None
        else:
            values[opt.dest] = None if opt.default is None else opt.parse(opt.default)
        echo[opt.dest] = _dump(opt, values[opt.dest])
    for dest in REQUIRED.get(command, []):
        if values[dest] is None:
            raise UsageError(by_dest[dest].flag, "is required")
    return values, echo, threads


# --- commands --------------------------------------------------------------------


def _read_frames_csv(path, shape):
    frames = read_fixcsv(path, shape)
    if not frames:
        raise NatBenchError(f"{path}: no fixations")
    return frames


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _write(out, name, text, outputs):
    path = out / name
    path.write_text(text)
    outputs.append(path)


def cmd_synth(o, threads, out):
    cfg = ExperimentConfig(
        n_frames=o["frames"], n_videos=o["videos"], n_observers=o["observers"], shape=o["grid"],
        components=o["components"], component_sigma=o["component_sigma"], jitter=o["jitter"],
        seed=o["seed"],
    )
    frames = make_frames(cfg)
    outputs = save_frames(frames, out)
    return outputs, {"frames": len(frames), "fixations": sum(f.n_observers for f in frames)}


def cmd_reconstruct(o, threads, out):
    frames = _read_frames_csv(o["input"], o["grid"])
    outputs, params = [], []
    for frame_id, fix in frames.items():
        if o["method"] == "kde":
            p = fit_gold_standard(fix.by_observer(), o["grid"])
            grid = kde_reconstruct(fix, p, o["grid"])
            params.append((frame_id, p.bandwidth, p.mix_eps))
        else:
            grid = sr_reconstruct(fix, o["sigma"], o["grid"])
        path = out / f"measured_{frame_id:05d}.sgrid"
        write_sgrid(path, grid)
        outputs.append(path)
    if params:
        _write(out, "kde_params.csv", _csv_text(["frame_id", "bandwidth", "mix_eps"], params), outputs)
    return outputs, {"frames": len(frames)}


def cmd_stats(o, threads, out):
    frames = _read_frames_csv(o["input"], o["grid"])
    ids = list(frames)
    maps = [sr_reconstruct(frames[i], o["sigma"], o["grid"]) for i in ids]
    stats = estimate_frame_stats(maps, [len(frames[i]) for i in ids], o["sigma"], o["discrepancy"],
                                 o["realizations"], seed=o["seed"], frame_ids=ids, threads=threads)
    path = out / "stats.csv"
    write_nstats(path, dict(zip(ids, stats)))
    return [path], {"frames": len(ids)}


def _modes(mode):
    return ("tt", "nat") if mode == "both" else (mode,)


def cmd_train(o, threads, out):
    frames = load_frames(o["data"], o["grid"], o["sigma"], stats_path=o["stats"])
    cfg = ExperimentConfig(
        n_frames=len(frames), n_videos=1, shape=o["grid"], blur_sigma=o["sigma"],
        discrepancy=str(o["discrepancy"]), n_realizations=o["realizations"],
        learning_rate=o["learning_rate"], max_iter=o["iterations"], record_every=o["record_every"],
        seed=o["seed"], threads=threads,
    )
    modes = _modes(o["mode"])
    if "nat" in modes and any(f.stats is None for f in frames):
        frames = attach_stats(frames, cfg)
    outputs, curve_rows, report = [], [], {"frames": len(frames)}
    has_truth = all(f.truth is not None for f in frames)
    for mode in modes:
        run = train(frames, dataclasses.replace(cfg, mode=mode))
        for h in run.history:
            curve_rows.append((h.iteration, mode, h.train_loss, h.truth_kld if has_truth else ""))
        for frame_id, grid in zip(run.frame_ids, run.final_maps()):
            path = out / f"predicted_{mode}_{frame_id:05d}.sgrid"
            write_sgrid(path, grid)
            outputs.append(path)
        report[f"{mode}_final_loss"] = run.history[-1].train_loss
        if has_truth:
            report[f"{mode}_flags"] = curve_flags([h.truth_kld for h in run.history])
    _write(out, "curves.csv", _csv_text(["iteration", "mode", "train_loss", "truth_kld"], curve_rows), outputs)
    return outputs, report


def cmd_compare(o, threads, out):
    cfg = ExperimentConfig(
        n_frames=o["frames"], n_videos=o["videos"], shape=o["grid"], blur_sigma=o["sigma"],
        discrepancy=str(o["discrepancy"]), n_realizations=o["realizations"],
        learning_rate=o["learning_rate"], max_iter=o["iterations"], record_every=o["record_every"],
        seed=o["seed"], components=o["components"], component_sigma=o["component_sigma"],
        jitter=o["jitter"], threads=threads,
    )
    rows, details = run_comparison(cfg, o["n"], o["v"], _modes(o["mode"]))
    keys = ("kld", "cc", "sim", "nss", "auc")
    outputs = []
    _write(out, "comparison.csv",
           _csv_text(["v", "n", "mode", *keys], [(r["v"], r["n"], r["mode"], *(r[k] for k in keys)) for r in rows]),
           outputs)
    per_frame = []
    for (v, n, mode), det in details.items():
        for frame, m in zip(det["frames"], det["per_frame"]):
            per_frame.append((v, n, mode, frame.frame_id, *(m[k] for k in keys)))
    _write(out, "comparison_frames.csv", _csv_text(["v", "n", "mode", "frame_id", *keys], per_frame), outputs)
    return outputs, {"rows": len(rows)}


def cmd_toy(o, threads, out):
    rows = toy_study(o["n"], o["realizations"], o["seed"], o["sigma"])
    outputs = []
    _write(out, "toy.csv", _csv_text(["truth", "n", "e_kld", "std_kld"],
                                     [(r["truth"], r["n"], r["e_kld"], r["std_kld"]) for r in rows]), outputs)
    for r in rows:
        for kind in ("mean", "std"):
            path = out / f"{kind}_{r['truth']}_n{r['n']}.sgrid"
            write_sgrid(path, r[f"{kind}_map"])
            outputs.append(path)
    return outputs, {"rows": len(rows)}


def cmd_ioc(o, threads, out):
    frames = _read_frames_csv(o["input"], o["grid"])
    curve = dataset_ioc(frames, o["sigma"], o["grid"], o["stride"], o["realizations"], o["seed"], threads)
    outputs = []
    _write(out, "ioc.csv", format_ioc_csv(curve), outputs)
    report = {"points": len(curve), "skipped": int(sum(curve.skipped))}
    if len(curve) >= 2:
        report["initial_gradient"] = ioc_initial_gradient(curve)
        report["final_gradient"] = ioc_convergence_gradient(curve)
    return outputs, report


def cmd_metrics(o, threads, out):
    pred = read_sgrid(o["predicted"])
    ref = read_sgrid(o["reference"])
    if pred.shape != ref.shape:
        raise NatBenchError(f"grid shapes differ: {pred.shape} vs {ref.shape}")
    if o["fixations"] is not None:
        frames = _read_frames_csv(o["fixations"], ref.shape)
        frame_id = o["frame_id"]
        if frame_id is None:
            if len(frames) != 1:
                raise NatBenchError("--fixations holds several frames; pass --frame-id")
            frame_id = next(iter(frames))
        if frame_id not in frames:
            raise NatBenchError(f"frame_id {frame_id} not found in {o['fixations']}")
        fix = frames[frame_id]
        metrics = {"nss": lambda: nss(pred, fix), "auc": lambda: auc_judd(pred, fix)}
    else:
        metrics = {}
    metrics = {"kld": lambda: kld(ref, pred), "cc": lambda: cc(pred, ref), "sim": lambda: sim(pred, ref), **metrics}
    values = {}
    for name, compute in metrics.items():
        # A metric undefined for this pair (constant map, no negatives) is
        # reported as null rather than failing the others.
        try:
            values[name] = compute()
        except (ZeroVarianceError, NoNegativesError) as exc:
            print(f"{PROG} metrics: {name} undefined: {exc}", file=sys.stderr)
            values[name] = None
    text = json.dumps(values, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    outputs = []
    _write(out, "metrics.json", text, outputs)
    return outputs, values


HANDLERS = {
    "synth": cmd_synth, "reconstruct": cmd_reconstruct, "stats": cmd_stats, "train": cmd_train,
    "compare": cmd_compare, "toy": cmd_toy, "ioc": cmd_ioc, "metrics": cmd_metrics,
}


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        values, echo, threads = resolve(command, args)
    except UsageError as exc:
        print(f"{PROG} {command}: error: {exc}", file=sys.stderr)
        return 2
    out = Path(values["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, report = HANDLERS[command](values, threads, out)
        manifest = {
            "command": command,
            "version": version_string(),
            "seed": values["seed"],
            "threads": threads,
            "config": echo,
            "outputs": [str(p) for p in outputs],
            "report": _jsonable(report),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except (NatBenchError, ValueError, OSError) as exc:
        print(f"{PROG} {command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
