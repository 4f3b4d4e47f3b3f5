"""``python -m nodetier run|compare``.

Exit codes: 0 ok, 2 bad config, 3 the run itself failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import ComparisonReport, ConfigError, RunConfig, RunFailure, compare, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    # argparse already exits with 2 on bad usage, matching EXIT_CONFIG
    p = argparse.ArgumentParser(prog="nodetier", description="Tiered-memory index benchmark harness.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one config and write report.json + timeline.csv")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (default: the config's out, else .)")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--virtual-clock", action="store_true",
                   help="force the deterministic virtual clock")
    c = sub.add_parser("compare", help="run two configs on the same workload")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--out", help="also write comparison.json here")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        out["threads"] = args.threads
    if getattr(args, "virtual_clock", False):
        out["clock"] = "virtual"
    return out


def _load(path, overrides) -> RunConfig:
    cfg = RunConfig.load(path)
    if overrides:
        cfg = RunConfig.from_mapping({**cfg.to_dict(), **overrides})
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            cfg = _load(args.config, _overrides(args))
            report = run(cfg)
            out = args.out or cfg.out or "."
            rp, tp = report.write(out)
            print(f"ops={report.ops} cost/op={report.cost_per_op:.4f} "
                  f"fast_access_ratio={report.fast_access_ratio:.4f} "
                  f"usage={report.final_usage_ratio:.4f}")
            print(f"wrote {rp} and {tp}")
        else:
            a, b = _load(args.a, {}), _load(args.b, {})
            result: ComparisonReport = compare(a, b)
            print(result.table())
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                path = Path(args.out) / "comparison.json"
                path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
                print(f"wrote {path}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
