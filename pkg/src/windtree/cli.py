"""Command-line front end: a thin HTTP client of the service app.

By default requests go to an in-process instance of the service (no socket);
--server targets a running instance instead.  Every command writes a
manifest with the full request payload, and ``replay`` re-runs a manifest,
reproducing the other output files byte-for-byte.

Exit codes: 0 success, 2 config/usage error, 3 not-certified or
budget-dominated result, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import List, Optional

import httpx

from . import __version__
from .config import PRESETS, load_table_model
from .output import (dumps_record, make_manifest, read_manifest,
                     trajectory_svg, write_jsonl, write_manifest,
                     write_trajectory_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNCERTIFIED = 3
EXIT_INTERNAL = 4


def _env(name: str, default=None, cast=str):
    raw = os.environ.get(f"WINDTREE_{name}")
    if raw is None:
        return default
    return cast(raw)


class InProcessClient:
    """Synchronous facade over the ASGI app: requests still travel through
    the full HTTP layer, just without a socket."""

    def __init__(self):
        from .service import create_app
        self._app = create_app()

    def post(self, url: str, json=None):
        import asyncio

        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://windtree.local",
                                         timeout=None) as ac:
                return await ac.post(url, json=json)

        return asyncio.run(go())

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def make_client(server: Optional[str]):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    return InProcessClient()


def _budget_payload(args) -> dict:
    return {"max_collisions": args.budget_collisions,
            "max_path_length": args.budget_path,
            "max_radius": args.budget_radius}


def _post(client: httpx.Client, endpoint: str, payload: dict) -> dict:
    resp = client.post(endpoint, json=payload)
    if resp.status_code == 422:
        detail = resp.json().get("detail", resp.text)
        raise SystemExit2(f"config error: {detail}")
    if resp.status_code != 200:
        raise RuntimeError(f"{endpoint} failed with {resp.status_code}: "
                           f"{resp.text[:500]}")
    return resp.json()


class SystemExit2(Exception):
    """Config/usage error; maps to exit code 2."""


def _write_common(args, command: str, endpoint: str, payload: dict,
                  outputs: List[str], t0: float) -> None:
    manifest = make_manifest(command, payload, endpoint, outputs,
                             time.time() - t0)
    write_manifest(manifest, os.path.join(args.out, "manifest.json"))


def _ensure_out(args) -> None:
    os.makedirs(args.out, exist_ok=True)


# ---------------------------------------------------------------------------
# Command implementations (shared by the subcommands and replay)


def run_simulate(client, args, payload: dict) -> int:
    t0 = time.time()
    data = _post(client, "/simulate", payload)
    _ensure_out(args)
    events = data["events"]
    from .flow import Event
    evs = [Event(e["kind"], e["time"], (e["x"], e["y"]),
                 site=tuple(e["site"]) if e["site"] else None,
                 reason=e.get("reason", "")) for e in events]
    dirs = [(e["dx"], e["dy"]) for e in events]
    csv_path = os.path.join(args.out, "trajectory.csv")
    write_trajectory_csv(evs, dirs, csv_path)
    outputs = ["trajectory.csv"]
    if getattr(args, "svg", False) or payload.get("_svg"):
        table = load_model_from_payload(payload).to_table()
        pts = [(e["x"], e["y"]) for e in events]
        if pts:
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            window = (min(xs) - 2, min(ys) - 2, max(xs) + 2, max(ys) + 2)
        else:
            window = (-3, -3, 3, 3)
        svg = trajectory_svg(table, pts, window)
        with open(os.path.join(args.out, "trajectory.svg"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
        outputs.append("trajectory.svg")
        payload["_svg"] = True
    _write_common(args, "simulate", "/simulate", payload, outputs, t0)
    print(f"simulate: {data['status']} after {data['n_collisions']} "
          f"collisions, path length {data['path_length']:.6g}")
    return EXIT_OK


def load_model_from_payload(payload: dict):
    from .config import TableModel
    return TableModel.model_validate(payload["config"])


def run_records(client, args, command: str, endpoint: str,
                payload: dict) -> int:
    t0 = time.time()
    data = _post(client, endpoint, payload)
    _ensure_out(args)
    records = data["records"]
    write_jsonl(records, os.path.join(args.out, "results.jsonl"))
    _write_common(args, command, endpoint, payload, ["results.jsonl"], t0)
    for rec in records:
        print(dumps_record(rec))
    # Budget-dominated estimates are not trustworthy results.
    for rec in records:
        if isinstance(rec, dict) and rec.get("budget", 0) > rec.get("n", 1) / 2:
            return EXIT_UNCERTIFIED
        if isinstance(rec, dict) and rec.get("status") == "budget":
            return EXIT_UNCERTIFIED
    return EXIT_OK


def run_annulus(client, args, payload: dict) -> int:
    t0 = time.time()
    data = _post(client, "/annulus", payload)
    _ensure_out(args)
    with open(os.path.join(args.out, "certificate.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(data["record"], sort_keys=True, indent=2) + "\n")
    _write_common(args, "annulus", "/annulus", payload,
                  ["certificate.json"], t0)
    print(dumps_record({"certified": data["certified"],
                        "N1": data["record"].get("N1")}))
    return EXIT_OK if data["certified"] else EXIT_UNCERTIFIED


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windtree",
        description="Billiard flow experiments on infinite lattice tables")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=_env("SEED", 0, int))
        p.add_argument("--threads", type=int, default=_env("THREADS", 1, int))
        p.add_argument("--engine", choices=("float", "exact"),
                       default=_env("ENGINE", "float"))
        p.add_argument("--out", default=_env("OUT", "."),
                       help="output directory")
        p.add_argument("--server", default=_env("SERVER"),
                       help="service URL (default: in-process)")
        p.add_argument("--budget-collisions", type=int,
                       default=_env("BUDGET_COLLISIONS", 10 ** 6, int))
        p.add_argument("--budget-path", type=float,
                       default=_env("BUDGET_PATH", 10.0 ** 6, float))
        p.add_argument("--budget-radius", type=float,
                       default=_env("BUDGET_RADIUS", 10.0 ** 3, float))

    p = sub.add_parser("simulate", help="dump one trajectory")
    common(p)
    p.add_argument("--config", required=True,
                   help="config JSON path or preset:<name>")
    p.add_argument("--start", required=True,
                   help="x,y,dx,dy (fractions allowed, e.g. 1/2,0,1,0)")
    p.add_argument("--svg", action="store_true",
                   help="also write trajectory.svg")

    p = sub.add_parser("recurrence", help="return-fraction estimates")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--n-ring", type=int, required=True)
    p.add_argument("--m-list", required=True,
                   help="comma-separated outer rings, e.g. 4,8,16,32")
    p.add_argument("--samples", type=int, required=True)

    p = sub.add_parser("annulus", help="certified annulus width search")
    common(p)
    p.add_argument("--dims", default="1/2,1/2",
                   help="rectangle dims a,b as fractions")
    p.add_argument("--n-ring", type=int, default=1)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--max-doublings", type=int, default=7)

    p = sub.add_parser("periodic", help="exact periodicity experiments")
    common(p)
    p.add_argument("--config", help="required for orbit/direction/scan")
    p.add_argument("--mode", required=True,
                   choices=("orbit", "direction", "scan", "annulus"))
    p.add_argument("--start", help="x,y,dx,dy for mode=orbit")
    p.add_argument("--slope", help="p/q for direction/annulus modes")
    p.add_argument("--bound", type=int, default=16)
    p.add_argument("--max-q", type=int, default=8)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--dims", default="1/2,1/2")
    p.add_argument("--mid-ring", type=int, default=8)
    p.add_argument("--margin", type=int, default=4)

    p = sub.add_parser("lorentz", help="disk-table experiments")
    common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=("horizon", "recurrence"))
    p.add_argument("--n-lines", type=int, default=200)
    p.add_argument("--probe-len", type=float, default=50.0)
    p.add_argument("--n-ring", type=int, default=2)
    p.add_argument("--m-list", default="8")
    p.add_argument("--samples", type=int, default=1000)

    p = sub.add_parser("replay", help="re-run a manifest byte-for-byte")
    p.add_argument("manifest")
    p.add_argument("--out", default=_env("OUT", "."))
    p.add_argument("--server", default=_env("SERVER"))
    p.add_argument("--threads", type=int, default=None,
                   help="override the recorded thread count")

    p = sub.add_parser("presets", help="list or dump shipped presets")
    p.add_argument("name", nargs="?", help="preset to dump as JSON")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8137)

    return parser


def _parse_start(text: str) -> dict:
    parts = text.split(",")
    if len(parts) != 4:
        raise SystemExit2("--start expects x,y,dx,dy")
    return {"x": parts[0], "y": parts[1], "dx": parts[2], "dy": parts[3]}


def _parse_dims(text: str) -> list:
    parts = text.split(",")
    if len(parts) != 2:
        raise SystemExit2("--dims expects a,b")
    return parts


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _load_config_payload(path: str) -> dict:
    try:
        model = load_table_model(path)
    except Exception as exc:
        raise SystemExit2(str(exc))
    return json.loads(model.model_dump_json())


def _dispatch(args) -> int:
    if args.command == "presets":
        if args.name:
            if args.name not in PRESETS:
                raise SystemExit2(f"unknown preset {args.name!r}")
            print(PRESETS[args.name].model_dump_json(indent=2))
        else:
            for name in sorted(PRESETS):
                print(name)
        return EXIT_OK

    if args.command == "serve":
        import uvicorn
        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    if args.command == "replay":
        manifest = read_manifest(args.manifest)
        payload = manifest["request"]
        if args.threads is not None and "threads" in payload:
            payload = dict(payload, threads=args.threads)
        ns = argparse.Namespace(out=args.out, svg=payload.get("_svg", False))
        with make_client(args.server) as client:
            cmd = manifest["command"]
            if cmd == "simulate":
                return run_simulate(client, ns, payload)
            if cmd == "annulus":
                return run_annulus(client, ns, payload)
            return run_records(client, ns, cmd, manifest["endpoint"], payload)

    budget = _budget_payload(args)
    with make_client(args.server) as client:
        if args.command == "simulate":
            payload = {"config": _load_config_payload(args.config),
                       "start": _parse_start(args.start),
                       "engine": args.engine, "budget": budget}
            return run_simulate(client, args, payload)

        if args.command == "recurrence":
            payload = {"config": _load_config_payload(args.config),
                       "n_ring": args.n_ring,
                       "m_list": [int(m) for m in args.m_list.split(",")],
                       "samples": args.samples, "seed": args.seed,
                       "engine": args.engine, "threads": args.threads,
                       "budget": budget}
            return run_records(client, args, "recurrence", "/recurrence",
                               payload)

        if args.command == "annulus":
            payload = {"dims": _parse_dims(args.dims), "n_ring": args.n_ring,
                       "epsilon": args.epsilon, "samples": args.samples,
                       "seed": args.seed, "threads": args.threads,
                       "max_doublings": args.max_doublings, "budget": budget}
            return run_annulus(client, args, payload)

        if args.command == "periodic":
            payload = {"mode": args.mode, "bound": args.bound,
                       "max_q": args.max_q, "samples": args.samples,
                       "seed": args.seed, "threads": args.threads,
                       "dims": _parse_dims(args.dims),
                       "mid_ring": args.mid_ring, "margin": args.margin,
                       "budget": budget}
            if args.mode in ("orbit", "direction", "scan"):
                if not args.config:
                    raise SystemExit2(f"mode {args.mode} requires --config")
                payload["config"] = _load_config_payload(args.config)
            if args.mode == "orbit":
                if not args.start:
                    raise SystemExit2("mode orbit requires --start")
                payload["start"] = _parse_start(args.start)
            if args.mode in ("direction", "annulus"):
                if not args.slope:
                    raise SystemExit2(f"mode {args.mode} requires --slope")
                payload["slope"] = args.slope
            return run_records(client, args, "periodic", "/periodic", payload)

        if args.command == "lorentz":
            payload = {"config": _load_config_payload(args.config),
                       "mode": args.mode, "n_lines": args.n_lines,
                       "probe_len": args.probe_len, "n_ring": args.n_ring,
                       "m_list": [int(m) for m in args.m_list.split(",")],
                       "samples": args.samples, "seed": args.seed,
                       "threads": args.threads, "budget": budget}
            return run_records(client, args, "lorentz", "/lorentz", payload)

    raise SystemExit2(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
