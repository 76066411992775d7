from hapitrace.bench import measure_hot_path, render_bench, run_bench


def test_bench_report_structure(w1):
    report = run_bench(w1, modes=("minimal", "full"), sample=False, repetitions=1)
    assert [r.config for r in report.rows] == ["T-minimal", "T-full"]
    text = render_bench(report)
    assert "config" in text and "size bytes" in text and "median %" in text
    for row in report.rows:
        assert row.trace_bytes > 0
        assert row.event_count > 0
    assert report.hot_path_median_ns > 0


def test_event_and_size_ordering_across_modes(w1):
    report = run_bench(w1, modes=("minimal", "default", "full"), repetitions=1)
    by = {r.config: r for r in report.rows}
    assert by["T-minimal"].event_count <= by["T-default"].event_count <= by["T-full"].event_count
    assert by["T-minimal"].trace_bytes <= by["T-default"].trace_bytes <= by["T-full"].trace_bytes


def test_sampling_configs_add_rows(w1):
    report = run_bench(w1, modes=("minimal",), sample=True, repetitions=1)
    assert [r.config for r in report.rows] == ["T-minimal", "TS-minimal"]
    assert by_events(report, "TS-minimal") >= by_events(report, "T-minimal")


def by_events(report, config):
    return next(r.event_count for r in report.rows if r.config == config)


def test_hot_path_measurement_returns_sane_values():
    median, p90 = measure_hot_path()
    assert 0 < median <= p90
