"""Engine execution: endpoints, channels, aggregation state, error handling."""

from __future__ import annotations

import json
import threading
import time

import pytest

from lila import compile_source
from lila.cdm import message
from lila.datalog import parse_atom
from lila.runtime import (
    DirectChannels,
    EndpointUri,
    Engine,
    Exchange,
    RunOptions,
    WiringError,
    run,
)

from .conftest import read_corpus, write_soccer_fixtures


def engine_for(source: str, base, bindings=None, **options) -> Engine:
    rg = compile_source(source, bindings)
    opts = RunOptions(base_dir=base, parallel=False, **options)
    return Engine(rg, opts)


def sink_records(path) -> list[dict]:
    return json.loads(path.read_text())


# --- endpoint URIs -----------------------------------------------------------


def test_endpoint_uri_schemes():
    assert EndpointUri.parse("file:data/x.json").scheme == "file"
    assert EndpointUri.parse("direct:g").scheme == "direct"
    assert EndpointUri.parse("mock:tweets").scheme == "mock"


def test_external_transports_become_mock_sinks():
    uri = EndpointUri.parse("twitter:mock:tweets")
    assert uri.scheme == "mock"
    assert uri.original == "twitter:mock:tweets"
    assert EndpointUri.parse("jdbc:soccerDatabase").scheme == "mock"


def test_bare_filename_is_file_scheme():
    assert EndpointUri.parse("playerInfo.json").scheme == "file"


# --- direct channels -----------------------------------------------------------


def test_send_then_receive_same_body():
    channels = DirectChannels(["direct:x"])
    ex = Exchange(message(facts={parse_atom("a(1)")}), "t1")
    channels.send("direct:x", ex)
    received = channels.receive("direct:x")
    assert received.message.body == ex.message.body


def test_fifo_order_two_senders():
    channels = DirectChannels(["direct:x"])
    for i in range(4):
        channels.send("direct:x", Exchange(message(), f"t{i}"))
    order = [channels.receive("direct:x").trace_id for _ in range(4)]
    assert order == ["t0", "t1", "t2", "t3"]
    assert channels.receive("direct:x") is None


def test_undeclared_channel_is_wiring_error():
    channels = DirectChannels(["direct:x"])
    with pytest.raises(WiringError):
        channels.send("direct:y", Exchange(message(), "t1"))


def test_engine_rejects_reference_to_undeclared_channel(tmp_path):
    import dataclasses

    rg = compile_source(read_corpus("synthetic/diamond.lila"))
    # corrupt one multicast target
    bad_routes = []
    for route in rg.routes:
        nodes = []
        for node in route.nodes:
            if node.kind == "multicast":
                cfg = dataclasses.replace(node.config, targets=("direct:ghost",))
                node = dataclasses.replace(node, config=cfg)
            nodes.append(node)
        bad_routes.append(dataclasses.replace(route, nodes=tuple(nodes)))
    bad = dataclasses.replace(rg, routes=tuple(bad_routes))
    with pytest.raises(WiringError, match="ghost"):
        Engine(bad, RunOptions(base_dir=tmp_path))


# --- soccer scenario end to end ---------------------------------------------------


def test_soccer_end_to_end(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    report = engine.run_batch()
    [tweet] = engine.mock_sink("twitter:playerFeed")
    assert json.loads(tweet) == [{"period": 1, "time": 10, "firstN": "A", "lastN": "B"}]
    assert sink_records(tmp_path / "playersAtBall.json") == [
        {"period": 1, "time": 20, "firstN": "C", "lastN": "D"}
    ]
    assert report.consumed == 1 and report.produced == 2
    assert report.conserved()


def test_soccer_empty_input_produces_nothing(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    (tmp_path / "gameEvents.json").write_text("[]")
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    report = engine.run_batch()
    assert report.produced == 0
    assert report.dropped == 2  # both branches filtered as empty
    assert not (tmp_path / "playersAtBall.json").exists()
    assert report.conserved()


def test_soccer_split_elements_mode(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(
        soccer_source, tmp_path, {"config": "playerFeed"}, split_elements=True
    )
    report = engine.run_batch()
    assert report.consumed == 2
    assert report.produced == 2
    assert report.dropped == 2  # each event is empty on the opposite branch
    assert report.conserved()
    [tweet] = engine.mock_sink("twitter:playerFeed")
    assert json.loads(tweet) == [{"period": 1, "time": 10, "firstN": "A", "lastN": "B"}]


def test_missing_source_file_warns_and_consumes_nothing(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    (tmp_path / "gameEvents.json").unlink()
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    report = engine.run_batch()
    assert report.consumed == 0
    assert any("gameEvents.json" in w for w in report.warnings)


# --- determinism and parallel soundness ---------------------------------------------


def _run_soccer(tmp_path, soccer_source, parallel: bool):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(
        soccer_source, tmp_path, {"config": "playerFeed"}, capture_only=True
    )
    engine.options.parallel = parallel
    engine.run_batch()
    return {
        uri: sorted(sorted(str(a) for a in facts) for facts in buckets)
        for uri, buckets in engine.sink_facts.items()
    }


def test_batch_mode_deterministic(tmp_path, soccer_source):
    first = _run_soccer(tmp_path / "a", soccer_source, parallel=False)
    second = _run_soccer(tmp_path / "b", soccer_source, parallel=False)
    assert first == second


def test_parallel_soundness(tmp_path, soccer_source):
    sequential = _run_soccer(tmp_path / "s", soccer_source, parallel=False)
    parallel = _run_soccer(tmp_path / "p", soccer_source, parallel=True)
    assert sequential == parallel


def test_parallel_soundness_multi_payload(tmp_path):
    base = tmp_path / "in"
    base.mkdir()
    source = read_corpus("message_filter.lila")
    inbox = base / "data" / "testMessageFilter"
    inbox.mkdir(parents=True)
    for i in range(30):
        value = "true" if i % 2 == 0 else "false"
        (inbox / f"{i:03d}.dl").write_text(f'match("{value}").')
    results = {}
    for mode in (False, True):
        engine = engine_for(source, base, capture_only=True)
        engine.options.parallel = mode
        report = engine.run_batch()
        results[mode] = (report.consumed, report.produced, report.dropped)
    assert results[False] == results[True] == (30, 15, 15)


# --- joins and aggregation -----------------------------------------------------------


def test_cross_source_join(tmp_path):
    (tmp_path / "left.json").write_text(json.dumps([{"k": 1, "v": "x"}]))
    (tmp_path / "right.json").write_text(json.dumps([{"k": 1, "w": "y"}]))
    engine = engine_for(read_corpus("synthetic/two_source_join.lila"), tmp_path)
    report = engine.run_batch()
    assert sink_records(tmp_path / "joined.json") == [{"k": 1, "v": "x", "w": "y"}]
    assert report.merged == 1
    assert report.conserved()


def test_diamond_join_per_trace(tmp_path):
    payload = [{"kind": "a", "v": 1}, {"kind": "b", "v": 2}]
    (tmp_path / "in.json").write_text(json.dumps(payload))
    engine = engine_for(read_corpus("synthetic/diamond.lila"), tmp_path)
    report = engine.run_batch()
    assert sink_records(tmp_path / "out.json") == [{"x": 1, "y": 2}]
    assert report.conserved()


def test_join_completion_size_exactness(tmp_path):
    # a join of in-degree 2 emits exactly one aggregate per two correlated inputs
    payload = [{"kind": "a", "v": 1}, {"kind": "b", "v": 2}]
    (tmp_path / "in.json").write_text(json.dumps(payload))
    engine = engine_for(read_corpus("synthetic/diamond.lila"), tmp_path)
    report = engine.run_batch()
    joins = [n for n in engine.rg.nodes if n.kind == "joinAggregator"]
    [join] = joins
    counters = report.per_node[join.id]
    assert counters["consumed"] == 2
    assert counters["produced"] == 1


def test_splitter_gather_double_suffix(tmp_path):
    (tmp_path / "in.dl").write_text("a(1). b(2).")
    engine = engine_for(read_corpus("synthetic/gather.lila"), tmp_path)
    engine.run_batch()
    collected = set()
    for bucket in engine.sink_facts.values():
        for facts in bucket:
            collected |= {str(a) for a in facts}
    assert collected == {"a-split-aggregate(1)", "b-split-aggregate(2)"}


def test_time_based_aggregation_flushes_in_batch(tmp_path):
    (tmp_path / "events.dl").write_text("ev(1). ev(2).")
    engine = engine_for(read_corpus("synthetic/aggregate_time.lila"), tmp_path)
    report = engine.run_batch()
    assert sink_records(tmp_path / "out.json") == [{"k": 1}, {"k": 2}]
    assert report.conserved()


def test_incomplete_size_collection_dropped_with_warning(tmp_path):
    source = (
        "@from(file:in.dl,datalog)\n{a(v).}\n"
        "@aggregate(union,completionSize=5)\n{?-a(v).}\n"
        "passthrough(v):-a-aggregate(v).\n"
        "@to(file:out.json,json)\n{passthrough}"
    )
    (tmp_path / "in.dl").write_text("a(1).")
    engine = engine_for(source, tmp_path)
    report = engine.run_batch()
    assert report.produced == 0
    assert report.dropped == 1
    assert any("incomplete collection" in w for w in report.warnings)
    assert report.conserved()


def test_aggregator_correlates_by_query_vector(tmp_path):
    # messages with different vectors land in different collections
    source = (
        "@from(file:inbox,datalog)\n{a(v). b(v).}\n"
        "@aggregate(union,completionSize=2)\n{?-a(v). ?-b(v).}\n"
        "outA(v):-a-aggregate(v).\noutB(v):-b-aggregate(v).\n"
        "@to(file:out.dl,datalog)\n{outA\noutB}"
    )
    inbox = tmp_path / "inbox"
    inbox.mkdir()
    (inbox / "1.dl").write_text("a(1).")
    (inbox / "2.dl").write_text("b(9).")
    (inbox / "3.dl").write_text("a(2).")
    (inbox / "4.dl").write_text("b(8).")
    engine = engine_for(source, tmp_path)
    engine.run_batch()
    outs = sorted((tmp_path / "out.dl").parent.glob("out*.dl"))
    texts = [p.read_text() for p in outs]
    assert any("outA(1)" in t and "outA(2)" in t for t in texts)
    assert any("outB(8)" in t and "outB(9)" in t for t in texts)


# --- error handling ---------------------------------------------------------------------


def test_poisoned_exchange_goes_to_dead_letter(tmp_path):
    source = (
        "@from(file:inbox,datalog)\n{n(v).}\n"
        "bad(y):-n(v),y:=v/0.\n"
        "good(v):-n(v),v>0.\n"
        "@to(file:out.json,json)\n{good}\n"
        "@to(file:bad.json,json)\n{bad}"
    )
    inbox = tmp_path / "inbox"
    inbox.mkdir()
    (inbox / "1.dl").write_text("n(1).")
    (inbox / "2.dl").write_text("n(2).")
    engine = engine_for(source, tmp_path)
    report = engine.run_batch()
    dead = list((tmp_path / ".deadletter").glob("*.json"))
    assert report.errored >= 1
    assert len(dead) == report.errored
    doc = json.loads(dead[0].read_text())
    assert "division by zero" in doc["error"]
    # the engine kept running: the good branch still produced output
    assert report.produced >= 1


def test_path_escape_is_rejected(tmp_path):
    source = "@from(file:../outside.json,json)\n{r(v).}\n@to(file:o.json,json)\n{r}"
    engine = engine_for(source, tmp_path)
    report = engine.run_batch()
    # the source read fails per-endpoint; nothing is consumed
    assert report.consumed == 0


def test_run_entrypoint_returns_report(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    rg = compile_source(soccer_source, {"config": "playerFeed"})
    report = run(rg, RunOptions(base_dir=tmp_path, parallel=False))
    assert report.produced == 2


# --- message injection (used by the benchmark) ------------------------------------------


def test_inject_prebuilt_messages(tmp_path):
    msgs = [
        message(facts={parse_atom(f'match("{"true" if i % 2 == 0 else "false"}")')})
        for i in range(10)
    ]
    engine = engine_for(
        read_corpus("message_filter.lila"), tmp_path,
        capture_only=True, inject=tuple(msgs),
    )
    report = engine.run_batch()
    assert report.consumed == 10
    assert report.produced == 5
    assert report.dropped == 5
    assert report.conserved()


# --- multicast copy semantics --------------------------------------------------------------


def test_multicast_copies_are_independent(tmp_path):
    payload = [{"kind": "a", "v": 1}]
    (tmp_path / "in.json").write_text(json.dumps(payload))
    engine = engine_for(read_corpus("synthetic/diamond.lila"), tmp_path)
    engine.run_batch()
    # branch b saw the full source body even though branch a projected it away
    b_filter = [n for n in engine.rg.nodes if n.config.exposed == ("b",)]
    assert b_filter, "branch filter present"


def test_replicated_counter_tracks_fanout(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    report = engine.run_batch()
    assert report.replicated == 1  # one multicast with two targets


# --- watch mode -------------------------------------------------------------------------------


def test_watch_mode_consumes_new_files(tmp_path):
    source = read_corpus("message_filter.lila")
    inbox = tmp_path / "data" / "testMessageFilter"
    inbox.mkdir(parents=True)
    (inbox / "0.dl").write_text('match("true").')
    engine = engine_for(
        source, tmp_path,
        capture_only=True, watch_poll_ms=20, watch_duration_ms=700,
    )
    stop = threading.Event()
    worker = threading.Thread(target=engine.run_watch, args=(stop,))
    worker.start()
    time.sleep(0.25)
    (inbox / "1.dl").write_text('match("true").')
    time.sleep(0.3)
    stop.set()
    worker.join(timeout=5)
    assert not worker.is_alive()
    assert engine.report.consumed == 2
    assert engine.report.produced == 2


def test_file_sink_indexes_multiple_payloads(tmp_path):
    (tmp_path / "in.dl").write_text("a(1). b(2).")
    engine = engine_for(read_corpus("synthetic/gather.lila"), tmp_path)
    engine.run_batch()
    assert (tmp_path / "out.dl").read_text().strip() == "a-split-aggregate(1)."
    assert (tmp_path / "out-2.dl").read_text().strip() == "b-split-aggregate(2)."


def test_extensionless_file_sink_writes_directory(tmp_path):
    source = (
        "@from(file:in.dl,datalog)\n{a(v).}\n"
        "keep(v):-a(v).\n"
        "@to(file:outbox)\n{keep}"
    )
    (tmp_path / "in.dl").write_text("a(1).")
    engine = engine_for(source, tmp_path)
    engine.run_batch()
    [only] = sorted((tmp_path / "outbox").iterdir())
    assert only.name == "00000.dl"
    assert only.read_text().strip() == "keep(1)."


def test_csv_source_to_csv_sink(tmp_path):
    source = (
        "@from(file:in.csv,csv)\n{m(name,score).}\n"
        "top(name,score):-m(name,score),score>10.\n"
        "@to(file:out.csv,csv)\n{top}"
    )
    (tmp_path / "in.csv").write_text("name,score\nalpha,20\nbeta,5\n")
    engine = engine_for(source, tmp_path)
    report = engine.run_batch()
    assert (tmp_path / "out.csv").read_text() == "name,score\nalpha,20\n"
    assert report.produced == 1


def test_watch_sweep_completes_time_aggregation_without_new_message(tmp_path):
    (tmp_path / "events.dl").write_text("ev(1).")
    engine = engine_for(
        read_corpus("synthetic/aggregate_time.lila"), tmp_path,
        capture_only=True, watch_poll_ms=20, sweep_interval_ms=50,
    )
    stop = threading.Event()
    worker = threading.Thread(target=engine.run_watch, args=(stop,))
    worker.start()
    deadline = time.monotonic() + 5
    try:
        # completionTime is 200 ms; the periodic sweep must emit the aggregate
        # while the watch loop is still running, without a triggering message
        while time.monotonic() < deadline and engine.report.produced == 0:
            time.sleep(0.05)
        assert engine.report.produced == 1
    finally:
        stop.set()
        worker.join(timeout=5)
    assert not worker.is_alive()


def test_engine_send_and_receive_direct(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    ex = Exchange(message(facts={parse_atom("g(1,10,7)")}), "t-manual")
    engine.send_direct("direct:g", ex)
    received = engine.receive_direct("direct:g")
    assert received.message.body == ex.message.body
    assert engine.receive_direct("direct:g") is None
    with pytest.raises(WiringError):
        engine.send_direct("direct:ghost", ex)


def test_source_endpoint_counters_are_symmetric(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    engine = engine_for(soccer_source, tmp_path, {"config": "playerFeed"})
    report = engine.run_batch()
    [source] = [n for n in engine.rg.nodes if n.kind == "fromEndpoint"]
    assert report.per_node[source.id]["consumed"] == 1
    assert report.per_node[source.id]["produced"] == 1


def test_dead_letter_contains_original_payload(tmp_path):
    source = (
        "@from(file:in.json,json)\n{n(v).}\n"
        "bad(y):-n(v),y:=v/0.\n"
        "@to(file:out.json,json)\n{bad}"
    )
    (tmp_path / "in.json").write_text('[{"v": 3}]')
    engine = engine_for(source, tmp_path)
    report = engine.run_batch()
    assert report.errored == 1
    [dead] = (tmp_path / ".deadletter").glob("*.json")
    doc = json.loads(dead.read_text())
    assert "n(3)" in doc["body"]
    assert doc["node"].startswith("r1")


def test_extended_scenario_minute_sampling_and_position_join(tmp_path, soccer_extended_source):
    # documents the observed := then = behavior: positions sample at minute
    # granularity (600 ticks) and the shot position joins across two sources
    (tmp_path / "gameEvents.json").write_text(json.dumps([
        {"period": 1, "time": 600, "eventCode": "Goal", "pId": 7},
        {"period": 1, "time": 20, "eventCode": "BallReception", "pId": 9},
    ]))
    (tmp_path / "playerInfo.json").write_text(json.dumps([
        {"pId": 7, "firstN": "A", "lastN": "B"},
        {"pId": 9, "firstN": "C", "lastN": "D"},
    ]))
    (tmp_path / "playerPosition.json").write_text(json.dumps([
        {"period": 1, "time": 600, "playerId": 7, "posX": 1, "posY": 2},
        {"period": 1, "time": 1200, "playerId": 7, "posX": 3, "posY": 4},
        {"period": 1, "time": 1250, "playerId": 9, "posX": 5, "posY": 6},
    ]))
    engine = engine_for(soccer_extended_source, tmp_path, {"config": "feed"})
    report = engine.run_batch()
    # hand-sampled: 600//600 = minute 1 seeds the recursion, both 1200//600
    # and 1250//600 land in minute 2
    [rows] = engine.mock_sink("jdbc:soccerDatabase")
    assert rows.decode().splitlines() == [
        "pPosPerMinute(1,1,7,1,2).",
        "pPosPerMinute(1,2,7,3,4).",
        "pPosPerMinute(1,2,9,5,6).",
    ]
    [shot] = sorted((tmp_path / "positionAtShotOnGoal").iterdir())
    assert shot.read_text().strip() == 'posAtShotOnGoal(1,600,"A","B",1,2).'
    assert report.conserved()


def test_mock_sink_empty_when_nothing_produced(tmp_path, soccer_source):
    write_soccer_fixtures(tmp_path)
    (tmp_path / "gameEvents.json").write_text("[]")
    engine = engine_for(soccer_source, tmp_path, {"config": "feed"})
    engine.run_batch()
    assert engine.mock_sink("twitter:feed") == []
