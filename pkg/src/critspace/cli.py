"""``critspace <experiment> --config FILE [--out DIR] [--seed N]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from critspace.config import EXPERIMENTS, ConfigError, parse_config
from critspace.harness import run


def _read_config(path: str | None) -> str:
    if path is None:
        return ""
    text = Path(path).read_text()
    if path.endswith(".json"):
        # a previous run.json: re-run from its resolved config
        return json.loads(text)["config_text"]
    return text


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="critspace", description="Critical-space Navier-Stokes experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="config file, or a run.json from an earlier run")
    ap.add_argument("--out", help="output directory (overrides run.output_dir)")
    ap.add_argument("--seed", type=int, help="overrides run.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = _read_config(args.config)
        overrides = {"run": {"experiment": args.experiment, "seed": args.seed, "output_dir": args.out}}
        cfg = parse_config(text, overrides)
    except (OSError, KeyError, json.JSONDecodeError, ConfigError) as exc:
        print(f"critspace: config error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
