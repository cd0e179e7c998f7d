"""Command-line client for the experiment service.

Runs the service in-process by default; ``--server URL`` talks to a running
instance instead. Exit status is 0 iff the output manifest has no failed runs,
1 when some run failed and 2 for a rejected request.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import httpx
import yaml

COMMANDS = ("train", "eval", "solve", "sweep", "report")


def _list(text):
    return [p for p in text.replace(",", " ").split() if p]


def _seeds(text):
    try:
        seeds = [int(p) for p in _list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers: {text!r}") from None
    if any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("seeds must be non-negative")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vodu-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML experiment config (default: built-in desk scenario)")
        p.add_argument("--seed", type=_seeds, action="extend", help="seed list, e.g. '0,1,2'")
        p.add_argument("--algo", type=_list, action="extend", help="algo list from ppo, acer, greedy, exact")
        p.add_argument("--out", help="output directory")
        p.add_argument("--budget-steps", type=int, help="training budget in env steps")
    return parser


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = yaml.safe_load(args.config.read_text(encoding="utf-8")) if args.config else {}
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    body = {
        "config": doc or {}, "seeds": args.seed, "algos": args.algo, "out": args.out,
        "budget_steps": args.budget_steps,
    }
    with _client(args.server) as client:
        resp = client.post(f"/{args.command}", json=body)
    try:
        payload = resp.json()
    except ValueError:
        payload = {"detail": resp.text}
    if resp.status_code != 200:
        detail = payload.get("detail", payload) if isinstance(payload, dict) else payload
        print(f"error: {detail}", file=sys.stderr)
        return 2
    for run in payload["runs"]:
        print(f"{run['status']:>10}  {run['run_id']}")
    if payload["result"]:
        print(json.dumps(payload["result"], sort_keys=True))
    return 0 if payload["failed"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
