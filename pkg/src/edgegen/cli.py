"""Command-line entry point.

Subcommands: simulate, gateway, generate, preprocess, account, replay.
Exit codes: 0 ok, 1 usage error, 2 runtime error, 3 backend error.
"""
from __future__ import annotations

import argparse
import json
import os
import socket
import struct
import sys

from . import accounting
from .errors import BackendError, EdgegenError, ParameterError
from .genbackend import make_backend, two_step_pipeline
from .images import AcousticSource, load_pgm, save_pgm, save_ppm
from .prompting import LlmClientConfig, STYLES, summarize
from .simnode import NodeConfig, Scenario, load_scenario, read_capture, run
from .protocol import PhysicalReading

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_BACKEND = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse maps usage failures to exit 2; this remaps them to exit 1."""

    def error(self, message):
        raise _UsageError(message)


def _parse_inline_reading(spec: str) -> PhysicalReading:
    """'lux=8407,temp_c=29.52,...' inline telemetry for one-shot runs."""
    fields: dict = {}
    for pair in spec.split(","):
        if not pair.strip():
            continue
        key, _, value = pair.partition("=")
        key = key.strip()
        if not value:
            raise ParameterError(f"telemetry value {pair!r} is not key=value")
        if key == "accel_mps2":
            fields[key] = tuple(float(v) for v in value.split("/"))
        else:
            fields[key] = float(value)
    reading = PhysicalReading(**fields)
    reading.validate()
    return reading


def _load_telemetry(spec: str) -> tuple[Scenario | None, list]:
    """A scenario file path, or inline key=value telemetry."""
    if os.path.exists(spec):
        scenario = load_scenario(spec)
        window = [(ev.t_offset, ev.reading) for ev in scenario.events]
        return scenario, window
    if "=" not in spec:
        raise EdgegenError(f"telemetry source {spec!r}: no such file and not key=value")
    return None, [(0.0, _parse_inline_reading(spec))]


def _parse_llm_flag(value: str) -> LlmClientConfig | None:
    """--llm template|http:<url>; accepts both http:<url> and a bare URL."""
    if value == "template":
        return None
    url = value
    if url.startswith("http:") and not url.startswith("http://"):
        url = url[5:]
    return LlmClientConfig(url=url)


def _parse_acoustic(spec: str) -> list[AcousticSource]:
    """'x,y,intensity;x,y,intensity' in mono-frame pixel coordinates."""
    out = []
    for part in spec.split(";"):
        if not part.strip():
            continue
        x, y, inten = part.split(",")
        out.append(AcousticSource(x=int(x), y=int(y), intensity=float(inten)))
    return out


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    config = NodeConfig(
        gateway_address=args.gateway,
        transport=args.transport,
        time_scale=args.time_scale,
        drop_probability=args.drop,
        seed=args.seed,
        capture_path=args.capture,
    )
    sent = run(scenario, config)
    print(f"sent {sent} frames")
    return EXIT_OK


def _cmd_gateway(args) -> int:
    from .gateway import Gateway, SessionStore
    from .gateway.service import serve

    backends = {"stub": make_backend("stub")}
    default_backend = "stub"
    if args.backend != "stub":
        backends["http"] = make_backend(args.backend)
        default_backend = "http"
    llm = _parse_llm_flag(args.llm)
    host, _, port = args.bind.rpartition(":")
    store = SessionStore(args.store, session=args.session)
    gateway = Gateway(store, backends=backends, default_backend=default_backend, llm=llm)
    serve(gateway, host=host or "127.0.0.1", http_port=int(port),
          ingest_port=args.ingest_port, console_dir=args.console or None)
    return EXIT_OK


def _cmd_generate(args) -> int:
    mono = load_pgm(args.image)
    scenario, window = _load_telemetry(args.telemetry)
    if not window:
        raise EdgegenError("telemetry source holds no events")
    summary = summarize(window)
    acoustic = []
    if scenario is not None and scenario.acoustic:
        acoustic = [AcousticSource(**src) for src in scenario.acoustic]
    if args.acoustic is not None:
        acoustic = _parse_acoustic(args.acoustic)
    backend = make_backend(args.backend)
    llm = _parse_llm_flag(args.llm)
    result = two_step_pipeline(
        mono=mono, summary=summary, style=args.style,
        user_instruction=args.instruction, backend=backend,
        seed=args.seed, acoustic=acoustic or None, llm=llm)
    from .images import rgb_to_png

    with open(args.out, "wb") as f:
        f.write(rgb_to_png(result.image))
    meta = {
        "image": os.path.abspath(args.image),
        "style": args.style,
        "seed": args.seed,
        "backend": result.backend_id,
        "control_mode": result.control_mode,
        "prompts": None if result.prompts is None else {
            "positive": result.prompts.positive,
            "negative": result.prompts.negative,
            "provenance": result.prompts.provenance,
        },
        "timings": result.stage_timings,
        "summary": summary.mean.to_dict(),
        "motion_level": summary.motion_level.value,
    }
    with open(args.out + ".meta", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    print(f"wrote {args.out} ({result.image.shape[1]}x{result.image.shape[0]})")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    from .genbackend import extract_control
    from .vision import canny

    mono = load_pgm(args.image)
    if args.mode == "canny":
        edge = canny(mono, args.low, args.high)
        out = edge.mask.astype("uint8") * 255
        from .images import MonoImage

        save_pgm(MonoImage(out), args.out)
    else:
        control = extract_control(mono, args.mode,
                                  canny_low=args.low, canny_high=args.high,
                                  segment_levels=args.levels)
        save_ppm(control, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_account(args) -> int:
    report = accounting.bandwidth_report(args.mode)
    power = accounting.power_estimate()
    if args.json:
        doc = report.to_dict()
        doc["avg_power_mw_upper_bound"] = power
        if args.session:
            doc["session"] = accounting.session_stats(args.session).to_dict()
        print(json.dumps(doc, indent=2))
    else:
        print(accounting.format_report(report, power_mw=power))
        if args.session:
            stats = accounting.session_stats(args.session)
            for key, value in stats.to_dict().items():
                print(f"session {key:<12}: {value:>12,}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    frames = read_capture(args.capture)
    host, _, port = args.gateway.rpartition(":")
    host = host or "127.0.0.1"
    if args.transport == "udp":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            for data in frames:
                sock.sendto(data, (host, int(port)))
        finally:
            sock.close()
    else:
        sock = socket.create_connection((host, int(port)), timeout=5.0)
        try:
            for data in frames:
                sock.sendall(struct.pack(">I", len(data)) + data)
        finally:
            sock.close()
    print(f"replayed {len(frames)} frames")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="edgegen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="replay a scenario to a gateway or capture file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gateway", default="127.0.0.1:7440")
    p.add_argument("--transport", choices=["udp", "tcp"], default="udp")
    p.add_argument("--time-scale", type=float, default=1.0, dest="time_scale")
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--capture", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("gateway", help="run the ingestion + API service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--store", required=True)
    p.add_argument("--session", default="default")
    p.add_argument("--ingest-port", type=int, default=7440, dest="ingest_port")
    p.add_argument("--backend", default="stub")
    p.add_argument("--llm", default="template")
    p.add_argument("--console", default=None)
    p.set_defaults(func=_cmd_gateway)

    p = sub.add_parser("generate", help="one-shot offline pipeline run")
    p.add_argument("--image", required=True)
    p.add_argument("--telemetry", required=True,
                   help="scenario file or inline key=value telemetry")
    p.add_argument("--style", required=True, choices=list(STYLES))
    p.add_argument("--instruction", default="")
    p.add_argument("--backend", default="stub")
    p.add_argument("--llm", default="template")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--acoustic", default=None,
                   help="x,y,intensity;... sources in mono-frame coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("preprocess", help="run control extraction only")
    p.add_argument("--image", required=True)
    p.add_argument("--mode", required=True, choices=["canny", "lineart", "segment"])
    p.add_argument("--low", type=int, default=50)
    p.add_argument("--high", type=int, default=150)
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("account", help="bandwidth/power report")
    p.add_argument("--mode", choices=["paper", "actual"], default="paper")
    p.add_argument("--session", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_account)

    p = sub.add_parser("replay", help="re-send a captured frame stream")
    p.add_argument("--capture", required=True)
    p.add_argument("--gateway", required=True)
    p.add_argument("--transport", choices=["udp", "tcp"], default="udp")
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except EdgegenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
