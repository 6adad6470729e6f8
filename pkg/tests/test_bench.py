import pytest

from bhrt.bench import (CSV_HEADER, TimingRecord, emit_csv, mean_by_config, parse_csv,
                        run_strong_scaling, run_weak_scaling, speedups)

from conftest import make_scene


def rec(workers, run, wall, mode="threads"):
    return TimingRecord(mode, workers, workers, 64, 32, 1, 0.5, run, wall)


def test_empty_csv_is_header_only():
    assert emit_csv([]) == (",".join(CSV_HEADER) + "\n").encode()


def test_single_record_csv():
    text = emit_csv([rec(1, 0, 0.25)]).decode()
    assert text.splitlines() == [
        ",".join(CSV_HEADER),
        "threads,1,1,64,32,1,0.5,0,0.25",
        "threads,1,1,64,32,1,0.5,-1,0.25",
    ]


def test_csv_parses_back_exactly():
    records = [rec(n, r, 0.1 * (r + 1) / n + 1e-17 * r) for n in (1, 2, 4) for r in range(3)]
    rows = parse_csv(emit_csv(records))
    assert len(rows) == 9 + 3
    for row, r in zip(rows, records):
        assert row["wall_seconds"] == r.wall_seconds
        assert (row["workers"], row["run"]) == (r.workers, r.run_index)
    means = mean_by_config(records)
    assert [row["wall_seconds"] for row in rows[9:]] == list(means.values())


def test_speedups_from_csv():
    records = [rec(1, 0, 4.0), rec(1, 1, 4.0), rec(2, 0, 2.5), rec(2, 1, 1.5), rec(4, 0, 1.0)]
    s = speedups(emit_csv(records))
    assert s == {1: 1.0, 2: 2.0, 4: 4.0}
    with pytest.raises(ValueError):
        speedups(emit_csv([rec(2, 0, 1.0)]))


def test_strong_scaling_record_count():
    scene = make_scene(width=8, height=6, epsilon=0.5)
    records = run_strong_scaling(scene, [1, 2], repeats=3)
    assert len(records) == 6
    assert [r.workers for r in records] == [1, 1, 1, 2, 2, 2]
    assert all(r.wall_seconds > 0 for r in records)
    assert len(parse_csv(emit_csv(records))) == 8


def test_weak_scaling_widens_image():
    scene = make_scene(width=8, height=6, epsilon=0.5)
    records = run_weak_scaling(scene, [(1, 8), (2, 16)], repeats=1)
    assert [(r.workers, r.width, r.height) for r in records] == [(1, 8, 6), (2, 16, 6)]


def test_multiprocess_records_threads_per_worker():
    scene = make_scene(width=6, height=4, epsilon=0.5)
    records = run_strong_scaling(scene, [2], repeats=1, mode="multiprocess",
                                 threads_per_worker=2)
    assert (records[0].mode, records[0].workers, records[0].threads_per_worker) == \
        ("multiprocess", 2, 2)


@pytest.mark.parametrize("kwargs", [dict(repeats=0), dict(mode="gpu")])
def test_sweep_rejects_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        run_strong_scaling(make_scene(width=2, height=2), [1], **kwargs)
