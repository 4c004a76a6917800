"""Command-line driver: ``markov-traps <command> [options]``.

Commands ``simulate``, ``solve``, ``greens``, ``criterion`` and ``annuli`` run
on a config file; ``experiment <name>`` runs a named preset (optionally
overridden by a config file).  ``--seed``, ``--samples``, ``--horizon``,
``--radius`` and ``--out`` override the config.

Each run writes CSV tables plus ``manifest.json`` (config, summary and file
hashes; byte-identical across reruns) into the output directory, and puts
timestamps in a separate ``metadata.json``.  Failures exit nonzero with a JSON
error record on stderr.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import read_raw, validate
from .exceptions import ConfigError
from .experiments import COMMANDS, EXPERIMENTS, PRESETS

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def _csv_bytes(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # strict JSON has no nan/inf
        return float(obj) if np.isfinite(obj) else None
    return obj


def write_outputs(out, command, cfg, tables, summary, started, elapsed):
    """Write CSVs, ``manifest.json`` and ``metadata.json``; return the manifest."""
    os.makedirs(out, exist_ok=True)
    hashes = {}
    for name in sorted(tables):
        data = _csv_bytes(tables[name])
        with open(os.path.join(out, name), "wb") as fh:
            fh.write(data)
        hashes[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "command": command,
        "package": "markov_traps",
        "version": __version__,
        "config": _jsonable(cfg.to_dict()),
        "summary": _jsonable(summary),
        "outputs": hashes,
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    meta = {
        "started_utc": started.isoformat(),
        "elapsed_seconds": round(elapsed, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
    with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def build_parser():
    p = argparse.ArgumentParser(prog="markov-traps", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--samples", type=int, help="Monte Carlo sample count")
        sp.add_argument("--horizon", type=int, action="append",
                        help="horizon (repeat for a sweep)")
        sp.add_argument("--radius", type=int, action="append",
                        help="truncation radius (repeat for several)")
        sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
        sp.add_argument("--out", help="output directory")

    for name, fn in COMMANDS.items():
        common(sub.add_parser(name, help=fn.__doc__.split("\n")[0]), config_required=True)
    ex = sub.add_parser("experiment", help="run a named experiment")
    ex.add_argument("name", choices=sorted(EXPERIMENTS))
    common(ex, config_required=False)
    return p


def _overrides(args):
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.samples is not None:
        o["n_samples"] = args.samples
    if args.horizon:
        o["horizons"] = args.horizon
    if args.radius:
        o["radii"] = args.radius
    if args.workers is not None:
        o["workers"] = args.workers
    if args.out is not None:
        o["out"] = args.out
    return o


def _resolve(args):
    if args.command == "experiment":
        raw = dict(PRESETS[args.name], out=os.path.join("results", args.name))
        if args.config:
            raw.update(read_raw(args.config))
    else:
        raw = read_raw(args.config)
    raw.update(_overrides(args))
    return validate(raw)


def _error(kind, message, fields=None):
    rec = {"error": kind, "message": message}
    if fields is not None:
        rec["fields"] = fields
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        _error("config", str(exc), exc.errors)
        return EXIT_CONFIG
    label = f"experiment {args.name}" if args.command == "experiment" else args.command
    fn = EXPERIMENTS[args.name] if args.command == "experiment" else COMMANDS[args.command]
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        tables, summary = fn(cfg)
        manifest = write_outputs(cfg.out, label, cfg, tables, summary, started, time.perf_counter() - t0)
    except Exception as exc:  # noqa: BLE001 - reported as a structured record
        _error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    print(json.dumps({"out": cfg.out, "summary": manifest["summary"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
