"""Command-line entry point: ``ttdbeam {simulate,sweep,gain-map,check}``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib.metadata import PackageNotFoundError, version

from .config import SystemConfig
from .harness import (
    GAIN_MAP_DESIGNS,
    ExperimentSpec,
    gain_map,
    records_to_csv,
    run_experiment,
    summarize,
    write_gain_map,
    write_records,
)


def code_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, items) -> dict:
    """Apply ``a.b.c=value`` assignments to a nested dict in place."""
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(raw)
    return doc


def load_spec(args) -> ExperimentSpec:
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    apply_overrides(doc, args.set)
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.scheme:
        doc["schemes"] = [s.strip() for s in args.scheme.split(",") if s.strip()]
    return ExperimentSpec.from_dict(doc)


def write_manifest(path: str, spec: ExperimentSpec, argv) -> None:
    manifest = {"code_version": code_version(), "argv": list(argv), "experiment": spec.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _emit(records, out):
    if out:
        write_records(records, out)
    else:
        sys.stdout.write(records_to_csv(records))


def cmd_run(args, argv, single: bool) -> int:
    spec = load_spec(args)
    if single:
        spec.sweep_variable, spec.sweep_values, spec.n_trials = "none", [None], 1
    records = run_experiment(spec, threads=args.threads)
    out = args.out or spec.output
    _emit(records, out)
    if out:
        write_manifest(out + ".manifest.json", spec, argv)
    for (scheme, value), s in sorted(summarize(records).items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        tag = "" if value is None else f" @ {value:g}"
        print(f"{scheme}{tag}: SE={s['se']:.4f} bit/s/Hz  EE={s['ee']:.4f} bit/s/Hz/W  (n={s['n']})", file=sys.stderr)
    failed = [r for r in records if r.spectral_efficiency != r.spectral_efficiency]
    return 1 if failed else 0


def cmd_gain_map(args, argv) -> int:
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    apply_overrides(doc, args.set)
    cfg = SystemConfig.from_dict(doc.get("config", doc))
    rows = gain_map(args.scheme or "Robust", args.theta, args.range, cfg, args.points)
    if args.out:
        write_gain_map(rows, args.out)
    else:
        print("f,theta,r,gain")
        for row in rows:
            print(",".join(repr(x) for x in row))
    return 0


def cmd_check(args, argv) -> int:
    from .checks import check_suite

    rep = check_suite()
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttdbeam", description="Near-field wideband TTD hybrid beamforming simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment JSON document")
        sp.add_argument("--seed", type=int, help="master seed (overrides the document)")
        sp.add_argument("--out", help="output CSV path")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--scheme", help="comma-separated scheme ids")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dot-path override, e.g. config.n_antennas=128")

    common(sub.add_parser("simulate", help="one channel realization"))
    common(sub.add_parser("sweep", help="Monte Carlo sweep"))
    gm = sub.add_parser("gain-map", help="normalized array gain over the band")
    common(gm)
    gm.add_argument("--theta", type=float, default=0.7853981633974483, help="user angle (rad)")
    gm.add_argument("--range", type=float, default=10.0, help="user range (m)")
    gm.add_argument("--points", type=int, default=101, help="frequency grid size")
    gm.epilog = "designs: " + ", ".join(GAIN_MAP_DESIGNS)
    sub.add_parser("check", help="run the invariant battery")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_run(args, argv, single=True)
    if args.command == "sweep":
        return cmd_run(args, argv, single=False)
    if args.command == "gain-map":
        return cmd_gain_map(args, argv)
    return cmd_check(args, argv)


if __name__ == "__main__":
    sys.exit(main())
