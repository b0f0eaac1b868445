"""Command-line front end.

Each subcommand is a thin client of the HTTP service: by default the
service app runs in-process (no socket) via an ASGI transport; --server
points at a remote instance instead.  stdout carries the machine-readable
JSON result, stderr carries human diagnostics, and exit codes follow the
documented taxonomy:

    0 success        1 selftest/transport failure   2 I/O or format error
    3 weight manifest error   4 weights/stream digest mismatch
    5 corrupt container or payload   6 unusable RD curve
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

EXIT_BY_CODE = {
    "io_format": 2,
    "weights_manifest": 3,
    "digest_mismatch": 4,
    "corrupt": 5,
    "insufficient_points": 6,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camsic",
        description="stereo codec with an iterative masked Transformer "
                    "entropy model")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default runs "
                             "the engine in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="compress a stereo PPM pair")
    enc.add_argument("--left", required=True)
    enc.add_argument("--right", required=True)
    enc.add_argument("--weights", default=None,
                     help="weight file (default: $CAMSIC_WEIGHTS)")
    enc.add_argument("--out", required=True)
    enc.add_argument("--steps", type=int, default=None,
                     help="coding iterations per view (default from config)")
    enc.add_argument("--log", default=None,
                     help="write per-iteration rate log JSON here")
    enc.add_argument("--mode", choices=["content", "constant"],
                     default="content",
                     help="conditioning mode (constant = ablation)")

    dec = sub.add_parser("decode", help="decompress a container")
    dec.add_argument("--in", dest="stream", required=True)
    dec.add_argument("--weights", default=None)
    dec.add_argument("--out-left", required=True)
    dec.add_argument("--out-right", required=True)
    dec.add_argument("--ref-left", default=None,
                     help="original left image, enables PSNR report")
    dec.add_argument("--ref-right", default=None)

    ins = sub.add_parser("inspect", help="print container metadata")
    ins.add_argument("--in", dest="stream", required=True)

    rep = sub.add_parser("rd-report", help="BD metrics between RD curves")
    rep.add_argument("--points", required=True, help="curve JSON file")
    rep.add_argument("--anchor", required=True, help="anchor curve JSON file")
    rep.add_argument("--csv-out", default=None)

    sub.add_parser("selftest", help="run built-in health checks")
    return parser


async def _request_in_process(path: str, payload: dict | None):
    from .service.app import create_app
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport,
                                 base_url="http://camsic.local",
                                 timeout=None) as client:
        return await client.post(path, json=payload)


def _request(server: str | None, path: str, payload: dict | None):
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)
    # the ASGI transport is async-only; one request per invocation makes
    # a private event loop the simplest correct driver
    return asyncio.run(_request_in_process(path, payload))


def _run(server: str | None, path: str, payload: dict | None) -> int:
    try:
        resp = _request(server, path, payload)
    except httpx.HTTPError as exc:
        print(f"camsic: transport failure: {exc}", file=sys.stderr)
        return 1
    try:
        body = resp.json()
    except ValueError:
        print(f"camsic: non-JSON response (HTTP {resp.status_code})",
              file=sys.stderr)
        return 1
    if resp.status_code != 200:
        err = body.get("error", {}) if isinstance(body, dict) else {}
        code = err.get("code", "internal")
        print(f"camsic: {err.get('message', 'request failed')}",
              file=sys.stderr)
        return EXIT_BY_CODE.get(code, 1)
    print(json.dumps(body, indent=1))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "encode":
        payload = {"left": args.left, "right": args.right, "out": args.out,
                   "weights": args.weights, "steps": args.steps,
                   "log": args.log, "mode": args.mode}
        rc = _run(args.server, "/v1/encode", payload)
        if rc == 0:
            print(f"camsic: wrote {args.out}", file=sys.stderr)
        return rc
    if args.command == "decode":
        payload = {"stream": args.stream, "weights": args.weights,
                   "out_left": args.out_left, "out_right": args.out_right,
                   "ref_left": args.ref_left, "ref_right": args.ref_right}
        rc = _run(args.server, "/v1/decode", payload)
        if rc == 0:
            print(f"camsic: wrote {args.out_left}, {args.out_right}",
                  file=sys.stderr)
        return rc
    if args.command == "inspect":
        return _run(args.server, "/v1/inspect", {"stream": args.stream})
    if args.command == "rd-report":
        payload = {"points": args.points, "anchor": args.anchor,
                   "csv_out": args.csv_out}
        return _run(args.server, "/v1/rd-report", payload)
    if args.command == "selftest":
        try:
            resp = _request(args.server, "/v1/selftest", None)
        except httpx.HTTPError as exc:
            print(f"camsic: transport failure: {exc}", file=sys.stderr)
            return 1
        body = resp.json()
        print(json.dumps(body, indent=1))
        if resp.status_code != 200 or not body.get("ok", False):
            failed = [c["name"] for c in body.get("checks", [])
                      if not c.get("passed")]
            print("camsic: selftest failed: " + ", ".join(failed or ["?"]),
                  file=sys.stderr)
            return 1
        return 0
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
