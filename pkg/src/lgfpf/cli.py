"""Command-line interface: ``lgfpf {generate,run,compare,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, config_hash, default_config_path, load_config, save_config
from .io import FileFormatError, Trajectory, read_csv, read_json

log = logging.getLogger("lgfpf")


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config or default_config_path())
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def scenario_dir(out: str | Path, cfg: ScenarioConfig) -> Path:
    """Output directory for ``cfg``; distinct configurations never share one."""
    return Path(out) / config_hash(cfg)[:16]


def cmd_generate(args) -> int:
    from .simulate import generate_truth

    cfg = _load(args)
    d = scenario_dir(args.out, cfg)
    d.mkdir(parents=True, exist_ok=True)
    save_config(cfg, d / "config.json")
    path = d / "trajectory.csv"
    generate_truth(cfg).write(path)
    print(path)
    return 0


def cmd_run(args) -> int:
    from .simulate import run_scenario

    cfg = _load(args)
    d = scenario_dir(args.out, cfg)
    path = Path(args.trajectory) if args.trajectory else d / "trajectory.csv"
    if not path.exists():
        print(f"error: no trajectory at {path}; run 'lgfpf generate' with the same config first", file=sys.stderr)
        return 2
    summary = run_scenario(cfg, Trajectory.read(path), d, threads=args.threads)
    save_config(cfg, d / "config.json")
    print(json.dumps({"out": str(d), "filters": summary["filters"], "comparisons": summary["comparisons"]}, indent=2))
    return 0


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def compare_files(a: str | Path, b: str | Path) -> tuple[list[str], float]:
    """Report lines and the largest numeric difference between two result files."""
    a, b = Path(a), Path(b)
    lines = []
    if a.read_bytes() == b.read_bytes():
        return [f"{a} and {b} are byte-identical"], 0.0
    if a.suffix == ".json":
        fa, fb = dict(_flatten(read_json(a))), dict(_flatten(read_json(b)))
        worst = 0.0
        for key in sorted(set(fa) | set(fb)):
            va, vb = fa.get(key), fb.get(key)
            if isinstance(va, (int, float)) and isinstance(vb, (int, float)) and not isinstance(va, bool):
                diff = abs(va - vb)
                worst = max(worst, diff)
                if diff:
                    lines.append(f"{key}: {va!r} vs {vb!r} (diff {diff:.3e})")
            elif va != vb:
                lines.append(f"{key}: {va!r} vs {vb!r}")
                if va is None or vb is None:
                    worst = float("inf")
        return lines or ["no differences"], worst
    ha, da = read_csv(a)
    hb, db = read_csv(b)
    for key in sorted(set(ha) | set(hb)):
        if ha.get(key) != hb.get(key):
            lines.append(f"header {key}: {ha.get(key)!r} vs {hb.get(key)!r}")
    if ha["columns"] != hb["columns"] or da.shape != db.shape:
        lines.append(f"shape/columns differ: {da.shape} vs {db.shape}")
        return lines, float("inf")
    diff = np.abs(da - db)
    worst = 0.0
    for j, col in enumerate(ha["columns"]):
        m = float(np.max(diff[:, j])) if diff.size else 0.0
        worst = max(worst, m)
        lines.append(f"{col}: max |diff| = {m:.3e}")
    return lines, worst


def cmd_compare(args) -> int:
    lines, worst = compare_files(args.a, args.b)
    print("\n".join(lines))
    print(f"max difference: {worst:.3e}")
    if args.tol is not None and worst > args.tol:
        return 1
    return 0


def cmd_validate(args) -> int:
    from .validate import run_checks

    checks = run_checks(_load(args), threads=args.threads)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgfpf", description="Feedback particle filter on SO(2)/SO(3).")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and debug messages")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=False):
        sp.add_argument("--config", help="scenario JSON (default: the shipped SO(2) scenario)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", default="results", help="output root directory (default: results)")
        if threads:
            sp.add_argument("--threads", type=int, default=1, help="worker threads for the particle map")

    g = sub.add_parser("generate", help="simulate truth and observations")
    common(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the filters on a trajectory")
    common(r, threads=True)
    r.add_argument("--trajectory", help="trajectory CSV (default: the one 'generate' wrote for this config)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="diff two result files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tol", type=float, help="exit with status 1 if any value differs by more than this")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="run the invariant checks on a config")
    common(v, threads=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, FileFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
