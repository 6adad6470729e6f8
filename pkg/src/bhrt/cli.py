"""Command-line entry point: ``bhrt {render,coordinator,worker,bench}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then command-line flags (highest precedence).

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure, 4 protocol.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .config import DEFAULTS, ConfigError, build_scene_parts, parse_int, parse_kv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_PROTOCOL = 4

log = logging.getLogger("bhrt")

SCENE_FLAGS = [
    ("mass", "black hole mass M (geometric units; lengths are multiples of M)"),
    ("center", "black hole position x,y,z"),
    ("camera", "camera position x,y,z"),
    ("look-at", "point the camera looks at, x,y,z"),
    ("up", "world-up hint for the camera, x,y,z"),
    ("fov", "vertical field of view in degrees"),
    ("width", "image width in pixels"),
    ("height", "image height in pixels"),
    ("spp", "samples per pixel (antialiasing)"),
    ("seed", "64-bit seed for the antialiasing jitter"),
    ("epsilon", "target distance between computed ray points"),
    ("escape-radius", "radius beyond which rays count as escaped; 'auto' = max(1e4*M, 2*camera distance)"),
    ("max-windings", "full turns before a ray is declared stalled"),
    ("rel-tol", "integrator relative tolerance"),
    ("abs-tol", "integrator absolute tolerance"),
]

OTHER_DEFAULTS = {
    "threads": "1",
    "listen": "127.0.0.1:7878",
    "workers": "1",
    "sweep": "strong",
    "mode": "threads",
    "worker-counts": "1,2,4",
    "pairs": "1:128,2:256,4:512",
    "repeats": "5",
    "threads-per-worker": "1",
}


_SCENE_KEYS = {name for name, _ in SCENE_FLAGS} | {"background", "output"}
CONFIG_KEYS = {
    "render": _SCENE_KEYS | {"threads"},
    "coordinator": _SCENE_KEYS | {"threads", "listen", "workers"},
    "worker": {"connect", "threads"},
    "bench": _SCENE_KEYS | {"sweep", "mode", "worker-counts", "pairs", "repeats",
                            "threads-per-worker"},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add(p, name, help_text, default=None, **kw):
    shown = default if default is not None else "required"
    p.add_argument(f"--{name}", dest=name, default=None, metavar=kw.pop("metavar", "X"),
                   help=f"{help_text} (default: {shown})", **kw)


def _add_scene(p):
    for name, text in SCENE_FLAGS:
        _add(p, name, text, DEFAULTS[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bhrt", description="Schwarzschild black hole ray tracer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p, optional_bg=False):
        p.add_argument("--config", default=None, metavar="FILE",
                       help="key=value settings file; flags override it (default: none)")
        _add_scene(p)
        _add(p, "background", "equirectangular sky image, binary PPM (P6)",
             "synthetic checkerboard" if optional_bg else None)

    p = sub.add_parser("render", help="render one image to a PPM file")
    common(p)
    _add(p, "output", "output PPM path")
    _add(p, "threads", "render threads", OTHER_DEFAULTS["threads"])

    p = sub.add_parser("coordinator", help="render by distributing scanline bands to workers")
    common(p)
    _add(p, "output", "output PPM path")
    _add(p, "listen", "HOST:PORT to accept workers on (port 0 = any)", OTHER_DEFAULTS["listen"])
    _add(p, "workers", "number of workers to wait for", OTHER_DEFAULTS["workers"])
    p.add_argument("--spawn", action="store_true",
                   help="launch the workers as local processes (default: off)")
    _add(p, "threads", "threads per spawned worker", OTHER_DEFAULTS["threads"])

    p = sub.add_parser("worker", help="serve one render job for a coordinator")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="key=value settings file; flags override it (default: none)")
    _add(p, "connect", "coordinator HOST:PORT")
    _add(p, "threads", "render threads inside this worker", OTHER_DEFAULTS["threads"])

    p = sub.add_parser("bench", help="timed scaling sweeps written as CSV")
    common(p, optional_bg=True)
    _add(p, "output", "output CSV path")
    _add(p, "sweep", "strong or weak", OTHER_DEFAULTS["sweep"])
    _add(p, "mode", "threads or multiprocess", OTHER_DEFAULTS["mode"])
    _add(p, "worker-counts", "strong sweep worker counts", OTHER_DEFAULTS["worker-counts"])
    _add(p, "pairs", "weak sweep workers:width pairs", OTHER_DEFAULTS["pairs"])
    _add(p, "repeats", "runs per configuration", OTHER_DEFAULTS["repeats"])
    _add(p, "threads-per-worker", "threads inside each process in multiprocess mode",
         OTHER_DEFAULTS["threads-per-worker"])
    return parser


@dataclass
class CliConfig:
    command: str
    settings: Dict[str, str]
    verbose: bool = False
    spawn: bool = False
    # filled for commands that render a scene
    hole: object = None
    camera: object = None
    samples: object = None
    trace_cfg: object = None
    threads: int = 1
    background: Optional[str] = None
    output: Optional[str] = None
    listen: Optional[Tuple[str, int]] = None
    connect: Optional[Tuple[str, int]] = None
    workers: int = 1
    sweep: str = "strong"
    mode: str = "threads"
    worker_counts: List[int] = field(default_factory=list)
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    repeats: int = 5
    threads_per_worker: int = 1


def _positive_int(key, value):
    n = parse_int(key, value)
    if n < 1:
        raise ConfigError(key, f"must be >= 1, got {n}")
    return n


def _int_list(key, value):
    items = [s for s in str(value).split(",") if s.strip()]
    if not items:
        raise ConfigError(key, "must list at least one count")
    return [_positive_int(key, s) for s in items]


def _pairs(key, value):
    out = []
    for item in str(value).split(","):
        if not item.strip():
            continue
        a, sep, b = item.partition(":")
        if not sep:
            raise ConfigError(key, f"expected workers:width, got {item!r}")
        out.append((_positive_int(key, a), _positive_int(key, b)))
    if not out:
        raise ConfigError(key, "must list at least one workers:width pair")
    return out


def _address(key, value):
    from .netrender import parse_address

    try:
        return parse_address(str(value))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_args(argv: Optional[Sequence[str]] = None) -> CliConfig:
    """Parse and validate ``argv``.

    Raises SystemExit(1) for argparse-level problems, ``ConfigError`` for a
    bad value (its message names the flag) and ``OSError`` when the config
    file cannot be read.
    """
    ns = build_parser().parse_args(argv)
    flags = {k.replace("_", "-"): v for k, v in vars(ns).items()
             if v is not None and k not in ("command", "config", "verbose", "spawn")}
    allowed = CONFIG_KEYS[ns.command]
    settings: Dict[str, str] = {}
    if ns.config:
        with open(ns.config, encoding="utf-8") as fh:
            from_file = parse_kv(fh.read())
        unknown = sorted(set(from_file) - allowed)
        if unknown:
            raise ConfigError("config", f"unknown setting(s) {', '.join(unknown)}")
        settings.update(from_file)
    settings.update(flags)

    cfg = CliConfig(ns.command, settings, verbose=ns.verbose, spawn=getattr(ns, "spawn", False))

    def get(key):
        return settings.get(key, OTHER_DEFAULTS.get(key))

    cfg.threads = _positive_int("threads", get("threads"))
    if ns.command == "worker":
        if get("connect") is None:
            raise ConfigError("connect", "is required")
        cfg.connect = _address("connect", get("connect"))
        return cfg

    cfg.hole, cfg.camera, cfg.samples, cfg.trace_cfg = build_scene_parts(settings)
    cfg.background = settings.get("background")
    cfg.output = settings.get("output")
    if cfg.output is None:
        raise ConfigError("output", "is required")
    if ns.command in ("render", "coordinator") and cfg.background is None:
        raise ConfigError("background", "is required")
    if ns.command == "coordinator":
        cfg.listen = _address("listen", get("listen"))
        cfg.workers = _positive_int("workers", get("workers"))
    if ns.command == "bench":
        cfg.sweep = get("sweep")
        if cfg.sweep not in ("strong", "weak"):
            raise ConfigError("sweep", f"must be 'strong' or 'weak', got {cfg.sweep!r}")
        cfg.mode = get("mode")
        if cfg.mode not in ("threads", "multiprocess"):
            raise ConfigError("mode", f"must be 'threads' or 'multiprocess', got {cfg.mode!r}")
        cfg.worker_counts = _int_list("worker-counts", get("worker-counts"))
        cfg.pairs = _pairs("pairs", get("pairs"))
        cfg.repeats = _positive_int("repeats", get("repeats"))
        cfg.threads_per_worker = _positive_int("threads-per-worker", get("threads-per-worker"))
    return cfg


def _scene(cfg: CliConfig, background):
    from .render import SceneConfig

    return SceneConfig(cfg.hole, cfg.camera, cfg.samples, cfg.trace_cfg, background)


def _load_background(cfg: CliConfig):
    from .environment import checkerboard, read_ppm

    if cfg.background is None:
        return checkerboard(1024, 512)
    return read_ppm(cfg.background)


def _write(path, data: bytes):
    with open(path, "wb") as fh:
        fh.write(data)


def _cmd_render(cfg):
    from .environment import save_ppm
    from .render import render_image

    scene = _scene(cfg, _load_background(cfg))
    img = render_image(scene, cfg.threads)
    _write(cfg.output, save_ppm(img))
    return EXIT_OK


def _cmd_coordinator(cfg):
    import socket

    from .environment import save_ppm
    from .netrender import accept_workers, run_coordinator, spawn_workers

    scene = _scene(cfg, _load_background(cfg))
    listener = socket.create_server(cfg.listen)
    procs = []
    try:
        listener.listen(cfg.workers)
        address = listener.getsockname()[:2]
        log.info("waiting for %d worker(s) on %s:%d", cfg.workers, *address)
        if cfg.spawn:
            procs = spawn_workers(address, cfg.workers, cfg.threads)
        streams = accept_workers(listener, cfg.workers)
        img = run_coordinator(scene, streams)
        for s in streams:
            s.close()
    finally:
        listener.close()
        for p in procs:
            p.wait()
    _write(cfg.output, save_ppm(img))
    return EXIT_OK


def _cmd_worker(cfg):
    from .netrender import connect, run_worker
    from .render import warmup

    warmup()
    sock = connect(cfg.connect)
    with sock, sock.makefile("rwb") as stream:
        return run_worker(stream, cfg.threads)


def _cmd_bench(cfg):
    from .bench import emit_csv, run_strong_scaling, run_weak_scaling
    from .render import warmup

    scene = _scene(cfg, _load_background(cfg))
    warmup()
    if cfg.sweep == "strong":
        records = run_strong_scaling(scene, cfg.worker_counts, cfg.repeats, cfg.mode,
                                     cfg.threads_per_worker)
    else:
        records = run_weak_scaling(scene, cfg.pairs, cfg.repeats, cfg.mode,
                                   cfg.threads_per_worker)
    _write(cfg.output, emit_csv(records))
    return EXIT_OK


COMMANDS = {
    "render": _cmd_render,
    "coordinator": _cmd_coordinator,
    "worker": _cmd_worker,
    "bench": _cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .environment import PPMError
    from .geodesic import TraceError
    from .netrender import ProtocolError

    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"bhrt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bhrt: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[cfg.command](cfg)
    except (ProtocolError, EOFError) as exc:
        print(f"bhrt: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except TraceError as exc:
        print(f"bhrt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PPMError as exc:
        print(f"bhrt: bad image file: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"bhrt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bhrt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def run():
    sys.exit(main())
