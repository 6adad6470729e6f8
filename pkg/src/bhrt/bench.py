"""Strong- and weak-scaling sweeps with CSV output.

Only the render call is timed (monotonic clock); loading the background and
writing files stay outside the measured span.  Every configuration is run
``repeats`` times and the CSV carries a mean row (``run=-1``) for each.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence, Tuple

from .render import SceneConfig, render_image

log = logging.getLogger(__name__)

MODES = ("threads", "multiprocess")
CSV_HEADER = ("mode", "workers", "threads_per_worker", "width", "height", "spp",
              "epsilon", "run", "wall_seconds")


@dataclass(frozen=True)
class TimingRecord:
    mode: str
    workers: int
    threads_per_worker: int
    width: int
    height: int
    spp: int
    epsilon: float
    run_index: int
    wall_seconds: float

    @property
    def key(self):
        return (self.mode, self.workers, self.threads_per_worker, self.width,
                self.height, self.spp, self.epsilon)


def _timed_render(scene: SceneConfig, mode: str, workers: int, threads_per_worker: int) -> float:
    if mode == "threads":
        start = time.monotonic()
        render_image(scene, workers)
        return time.monotonic() - start
    if mode == "multiprocess":
        from .netrender import LocalCluster

        # process start-up and handshakes happen before the clock starts
        with LocalCluster(workers, threads_per_worker) as cluster:
            start = time.monotonic()
            cluster.render(scene)
            return time.monotonic() - start
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _sweep(scenes: Iterable[Tuple[SceneConfig, int]], repeats: int, mode: str,
           threads_per_worker: int) -> List[TimingRecord]:
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    records = []
    for scene, workers in scenes:
        if workers < 1:
            raise ValueError("worker counts must be >= 1")
        tpw = workers if mode == "threads" else threads_per_worker
        for run in range(repeats):
            wall = _timed_render(scene, mode, workers, threads_per_worker)
            wall = max(wall, 1e-9)
            log.info("%s workers=%d %dx%d run %d: %.3f s", mode, workers,
                     scene.width, scene.height, run, wall)
            records.append(TimingRecord(mode, workers, tpw, scene.width, scene.height,
                                        scene.samples.spp, scene.trace_cfg.epsilon, run, wall))
    return records


def run_strong_scaling(scene: SceneConfig, worker_counts: Sequence[int], repeats: int = 5,
                       mode: str = "threads", threads_per_worker: int = 1) -> List[TimingRecord]:
    """Fixed image, growing worker count."""
    return _sweep(((scene, n) for n in worker_counts), repeats, mode, threads_per_worker)


def resize_scene(scene: SceneConfig, width: int) -> SceneConfig:
    return replace(scene, camera=replace(scene.camera, width=width))


def run_weak_scaling(scene_template: SceneConfig, pairs: Sequence[Tuple[int, int]],
                     repeats: int = 5, mode: str = "threads",
                     threads_per_worker: int = 1) -> List[TimingRecord]:
    """Image width grows with the worker count; height stays fixed.

    The vertical field of view is kept, so wider images see a wider sky.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    return _sweep(((resize_scene(scene_template, w), n) for n, w in pairs), repeats, mode,
                  threads_per_worker)


def mean_by_config(records: Sequence[TimingRecord]):
    groups: "OrderedDict[tuple, List[float]]" = OrderedDict()
    for r in records:
        groups.setdefault(r.key, []).append(r.wall_seconds)
    return OrderedDict((k, sum(v) / len(v)) for k, v in groups.items())


def _row(key, run, wall):
    mode, workers, tpw, width, height, spp, eps = key
    return [mode, workers, tpw, width, height, spp, repr(float(eps)), run, repr(float(wall))]


def emit_csv(records: Sequence[TimingRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(_row(r.key, r.run_index, r.wall_seconds))
    for key, mean in mean_by_config(records).items():
        writer.writerow(_row(key, -1, mean))
    return buf.getvalue().encode("ascii")


def parse_csv(data: bytes) -> List[dict]:
    rows = list(csv.DictReader(io.StringIO(data.decode("ascii"))))
    ints = ("workers", "threads_per_worker", "width", "height", "spp", "run")
    for row in rows:
        for k in ints:
            row[k] = int(row[k])
        row["epsilon"] = float(row["epsilon"])
        row["wall_seconds"] = float(row["wall_seconds"])
    return rows


def speedups(data: bytes, mode: str = "threads"):
    """Speedup mean T(1) / mean T(n) per worker count, from CSV bytes alone."""
    means = {r["workers"]: r["wall_seconds"] for r in parse_csv(data)
             if r["run"] == -1 and r["mode"] == mode}
    if 1 not in means:
        raise ValueError("CSV has no single-worker baseline")
    return {n: means[1] / t for n, t in sorted(means.items())}
