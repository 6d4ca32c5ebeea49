"""Command line front end: authoring, linting, playback, and network tools.

Exit codes: 0 success, 1 usage, 2 parse/validation, 3 network,
4 protocol (unexpected status, failed expectation, failed conservation).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .bench import BenchError, bench
from .composer import ComposeError, compose, export, load_manifest, preview
from .device import resolve_profile, fit
from .mime import (
    BoundaryCollision,
    InvalidEnvelope,
    MimeError,
    decapsulate,
    resolve_media,
    smil_part,
)
from .net import ClientError, RelayTcpServer, TcpRelayClient
from .player import (
    Control,
    PlanError,
    RangeError,
    active_set,
    build_plan,
    control,
    initial_state,
    plan_to_json,
)
from .relay import ServerConfig, load_config
from .sim import ScenarioError, load_script, run_scenario
from .smil.syntax import LexError, ParseError, SerializeError, parse_text, serialize
from .smil.tree import validate
from .transport import FrameError, Pdu, StatusCode

PARSE_ERRORS = (LexError, ParseError, SerializeError, MimeError, InvalidEnvelope,
                BoundaryCollision, ComposeError, PlanError, RangeError,
                json.JSONDecodeError, ValueError, KeyError)
PROTOCOL_ERRORS = (FrameError, ScenarioError, BenchError, ClientError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _make_tracer(enabled: bool):
    if not enabled:
        return None

    def tracer(direction: str, pdu: Pdu, nbytes: int, label: str):
        stamp = time.strftime("%H:%M:%S")
        print(f"{direction} {stamp} {pdu.command.value} txn={pdu.txn_id} "
              f"{nbytes}B [{label}]", file=sys.stderr)
        for name, value in pdu.headers:
            print(f"    {name}: {value}", file=sys.stderr)
        if pdu.body:
            shown = pdu.body[:64]
            suffix = f" ... (+{len(pdu.body) - 64} bytes)" if len(pdu.body) > 64 else ""
            print(f"    body {len(pdu.body)}B: {shown.hex()}{suffix}",
                  file=sys.stderr)
    return tracer


def _server_address(args) -> tuple[str, int]:
    raw = os.environ.get("MMS_SERVER") or getattr(args, "server", None)
    if not raw:
        raise UsageError("no server given (--server host:port or MMS_SERVER)")
    host, _, port = raw.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"bad server address {raw!r}, expected host:port")
    return host, int(port)


def _load_tree_from_file(path: str):
    """A (tree, envelope-or-None) pair from a .smil or .mms file."""
    if path.endswith(".mms"):
        with open(path, "rb") as fh:
            envelope = decapsulate(fh.read())
        tree = parse_text(smil_part(envelope).body.decode("utf-8"))
        return tree, envelope
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_text(fh.read()), None


def _write_output(data: str | bytes, path: str | None) -> None:
    if path is None or path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    kwargs = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""}
    with open(path, mode, **kwargs) as fh:
        fh.write(data)


# -- subcommands -------------------------------------------------------


def cmd_compose(args) -> int:
    manifest = load_manifest(args.manifest)
    data = export(manifest, boundary_seed=args.seed)
    out = args.output or os.path.splitext(args.manifest)[0] + ".mms"
    _write_output(data, out)
    print(f"wrote {len(data)} bytes to {out}")
    return 0


def cmd_lint(args) -> int:
    problems = []
    warnings: list[str] = []
    try:
        if args.file.endswith(".mms"):
            with open(args.file, "rb") as fh:
                envelope = decapsulate(fh.read())
            tree = parse_text(smil_part(envelope).body.decode("utf-8"),
                              lenient=args.lenient, on_warning=warnings.append)
            problems.extend(validate(tree))
            _, unbound = resolve_media(envelope, tree)
            problems.extend(unbound)
        else:
            with open(args.file, "r", encoding="utf-8", newline="") as fh:
                tree = parse_text(fh.read(), lenient=args.lenient,
                                  on_warning=warnings.append)
            problems.extend(validate(tree))
    except (LexError, ParseError, MimeError, InvalidEnvelope) as exc:
        print(f"{args.file}: error: {exc}")
        return 2
    for message in warnings:
        print(f"{args.file}: warning: {message}")
    for violation in problems:
        print(f"{args.file}: {violation}")
    if problems:
        return 2
    print(f"{args.file}: clean")
    return 0


def cmd_adapt(args) -> int:
    tree, _ = _load_tree_from_file(args.file)
    fitted = fit(tree, resolve_profile(args.device))
    _write_output(serialize(fitted), args.output)
    return 0


def cmd_plan(args) -> int:
    tree, _ = _load_tree_from_file(args.file)
    fitted = fit(tree, resolve_profile(args.device))
    plan = build_plan(fitted)
    _write_output(plan_to_json(plan) + "\n", args.output)
    return 0


def cmd_play(args) -> int:
    tree, _ = _load_tree_from_file(args.file)
    plan = build_plan(fit(tree, resolve_profile(args.device)))
    state = initial_state(plan)
    controls = {c.value: c for c in Control}
    print(f"loaded: {len(plan.par_spans)} pars, total {plan.total_ms}ms")

    def show():
        print(f"mode={state.mode.value} pos={state.position_ms}ms "
              f"par={state.current_par}")

    show()
    for line in sys.stdin:
        words = line.split()
        if not words:
            continue
        verb = words[0].lower()
        if verb in ("quit", "exit", "q"):
            break
        if verb == "tick":
            if len(words) < 2 or not words[1].isdigit():
                print("usage: tick <ms>")
                continue
            state = control(state, plan, None, int(words[1]))
        elif verb == "active":
            try:
                live = sorted(active_set(plan, state.position_ms))
            except RangeError:
                live = []
            for par, media, region, z in live:
                print(f"  par={par} media={media} region={region} z={z}")
            continue
        elif verb in controls:
            state = control(state, plan, controls[verb])
        else:
            print(f"unknown control {verb!r} "
                  f"(play/pause/stop/rewind/next/tick N/active/quit)")
            continue
        show()
    return 0


def cmd_send(args) -> int:
    host, port = _server_address(args)
    with open(args.file, "rb") as fh:
        data = fh.read()
    client = TcpRelayClient(host, port, args.from_id,
                            tracer=_make_tracer(args.trace))
    try:
        client.register()
        _, code = client.send_mms(data, args.to)
    finally:
        client.close()
    print(f"status: {code.value if code else 'NONE'}")
    if code in (StatusCode.OK, StatusCode.STORED_OFFLINE):
        return 0
    return 4


def cmd_inbox(args) -> int:
    host, port = _server_address(args)
    client = TcpRelayClient(host, port, args.id, tracer=_make_tracer(args.trace))
    try:
        client.register()
        # The backlog is pushed right after the register status; give the
        # stream a moment to settle before listing.
        time.sleep(args.wait)
        arrivals = client.take_arrivals()
    finally:
        client.close()
    if not arrivals:
        print("inbox empty")
        return 0
    for pdu in arrivals:
        mid = pdu.header("Message-ID") or "?"
        sender = pdu.header("From") or "?"
        print(f"{mid} from {sender} {len(pdu.body)}B")
        if args.save:
            os.makedirs(args.save, exist_ok=True)
            name = "".join(c if c.isalnum() or c in "-_.@" else "_" for c in mid)
            with open(os.path.join(args.save, f"{name}.mms"), "wb") as fh:
                fh.write(pdu.body)
    return 0


def cmd_serve(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = ServerConfig()
    if args.port is not None:
        config.port = args.port
    if args.dead_time_ms is not None:
        config.dead_time_ms = args.dead_time_ms
    server = RelayTcpServer(config, tracer=_make_tracer(args.trace))
    port = server.start()
    print(f"relay listening on {config.host}:{port}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.stop()
    return 0


def cmd_bench(args) -> int:
    report = bench(clients=args.clients, messages=args.messages, mode=args.mode,
                   seed=args.seed, send_frac=args.send_frac,
                   delete_frac=args.delete_frac, latency_ms=args.latency_ms)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        _write_output(text + "\n", args.output)
    print(text)
    return 0


def cmd_scenario(args) -> int:
    script = load_script(args.script)
    try:
        report = run_scenario(script)
    except ScenarioError as exc:
        if exc.report is not None and args.output:
            _write_output(json.dumps(exc.report, indent=2) + "\n", args.output)
        print(f"scenario failed: {exc}", file=sys.stderr)
        return 4
    text = json.dumps(report, indent=2)
    if args.output:
        _write_output(text + "\n", args.output)
    else:
        print(text)
    return 0


def cmd_stats(args) -> int:
    host, port = _server_address(args)
    client = TcpRelayClient(host, port, args.id, tracer=_make_tracer(args.trace))
    try:
        client.register()
        stats = client.stats_query()
    finally:
        client.close()
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_preview(args) -> int:
    manifest = load_manifest(args.manifest)
    plan = preview(manifest, args.slide)
    _write_output(plan_to_json(plan) + "\n", args.output)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mmstack", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--trace", action="store_true",
                        help="dump every frame (decoded + body hex) to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="manifest JSON -> packed .mms")
    p.add_argument("manifest")
    p.add_argument("-o", "--output")
    p.add_argument("--seed", type=int, default=0, help="boundary generator seed")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("lint", help="check a .smil or .mms file")
    p.add_argument("file")
    p.add_argument("--lenient", action="store_true",
                   help="skip unknown elements with a warning")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("adapt", help="fit a message layout to a device")
    p.add_argument("file")
    p.add_argument("--device", help="profile name or JSON path")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("plan", help="emit the playback event timeline as JSON")
    p.add_argument("file")
    p.add_argument("--device", help="profile name or JSON path")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("play", help="step through playback interactively")
    p.add_argument("file")
    p.add_argument("--device", help="profile name or JSON path")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("preview", help="playback timeline for one slide")
    p.add_argument("manifest")
    p.add_argument("--slide", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("send", help="send a .mms file through a relay")
    p.add_argument("file")
    p.add_argument("--server", help="host:port (MMS_SERVER overrides)")
    p.add_argument("--from", dest="from_id", required=True)
    p.add_argument("--to", required=True)
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("inbox", help="register and list waiting messages")
    p.add_argument("--server", help="host:port (MMS_SERVER overrides)")
    p.add_argument("--id", required=True)
    p.add_argument("--save", help="directory to write message bodies into")
    p.add_argument("--wait", type=float, default=0.3,
                   help="seconds to wait for the backlog")
    p.set_defaults(func=cmd_inbox)

    p = sub.add_parser("serve", help="run the relay server")
    p.add_argument("--config", help="server config JSON")
    p.add_argument("--port", type=int)
    p.add_argument("--dead-time-ms", type=int, dest="dead_time_ms")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="load-drive a relay and verify conservation")
    p.add_argument("--clients", type=int, default=7)
    p.add_argument("--messages", type=int, default=100)
    p.add_argument("--mode", choices=["sim", "tcp-loopback"], default="sim")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--send-frac", type=float, default=0.8)
    p.add_argument("--delete-frac", type=float, default=0.1)
    p.add_argument("--latency-ms", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("scenario", help="run a scripted scenario on virtual time")
    p.add_argument("script")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("stats", help="query a running relay's counters")
    p.add_argument("--server", help="host:port (MMS_SERVER overrides)")
    p.add_argument("--id", default="stats-cli")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PROTOCOL_ERRORS as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 4
    except (ConnectionError, TimeoutError, OSError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
