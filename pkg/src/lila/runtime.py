"""Execution engine for route graphs.

Endpoints consume and produce payloads, direct channels carry exchanges
between routes, ILP pattern nodes process message content. Each route is a
sequential pipeline; with parallelism enabled, independent route work runs
on a small thread pool (aggregator state is the only guarded mutable state,
serialized per correlation key).
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from .cdm import (
    FormatSpec,
    Message,
    from_cdm,
    to_cdm,
)
from .datalog.ast import DatalogProgram
from .patterns import (
    AggregatorConfig,
    EnrichData,
    crc_ilp,
    ep_ilp,
    merge_messages,
    mt_ilp,
    rename_predicates,
    split_messages,
    SplitConfig,
)
from .synthesis import RgNode, RouteGraph

logger = logging.getLogger(__name__)

KNOWN_SCHEMES = ("file", "direct", "mock")


class WiringError(Exception):
    pass


class EndpointError(Exception):
    pass


@dataclass(frozen=True)
class EndpointUri:
    scheme: str  # file | direct | mock
    path: str
    original: str

    @classmethod
    def parse(cls, text: str) -> "EndpointUri":
        if not text:
            raise EndpointError("empty endpoint URI")
        scheme, sep, rest = text.partition(":")
        if not sep:
            # bare filenames (the enricher's <filename> parameter) are files
            return cls("file", text, text)
        if scheme in KNOWN_SCHEMES:
            return cls(scheme, rest, text)
        # external transports (twitter, jdbc, ...) are captured by mock sinks
        return cls("mock", text, text)


@dataclass
class Exchange:
    message: Message
    trace_id: str
    raw: bytes | None = None
    hops: list[tuple[str, int]] = field(default_factory=list)

    def hop(self, node_id: str) -> None:
        self.hops.append((node_id, time.monotonic_ns() // 1_000_000))

    def fork(self, message: Message | None = None) -> "Exchange":
        return Exchange(
            message if message is not None else self.message,
            self.trace_id,
            self.raw,
            list(self.hops),
        )


@dataclass
class RunOptions:
    base_dir: Path | None = None
    mode: str = "batch"  # batch | watch
    parallel: bool = True
    split_elements: bool = False  # one payload per JSON array element
    capture_only: bool = False  # all sinks behave like mock sinks
    inject: tuple[Message, ...] = ()  # pre-built CDM messages, skip endpoints
    strict: bool = False
    watch_poll_ms: int = 500
    sweep_interval_ms: int = 100
    watch_duration_ms: int | None = None
    max_workers: int = 4


@dataclass
class RunReport:
    consumed: int = 0
    produced: int = 0
    dropped: int = 0
    errored: int = 0
    replicated: int = 0
    merged: int = 0
    wall_ms: int = 0
    per_node: dict = field(default_factory=dict)
    per_sink: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def conserved(self) -> bool:
        return self.consumed + self.replicated == (
            self.produced + self.dropped + self.errored + self.merged
        )

    def to_json(self) -> str:
        doc = {
            "consumed": self.consumed,
            "produced": self.produced,
            "dropped": self.dropped,
            "errored": self.errored,
            "replicated": self.replicated,
            "merged": self.merged,
            "wallMs": self.wall_ms,
            "perNode": self.per_node,
            "perSink": self.per_sink,
            "warnings": self.warnings,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


class DirectChannels:
    """Named FIFO queues delivering each exchange exactly once."""

    def __init__(self, names):
        self._queues: dict[str, deque] = {name: deque() for name in names}
        self._lock = threading.Lock()

    def declared(self, name: str) -> bool:
        return name in self._queues

    def send(self, name: str, exchange: Exchange) -> None:
        with self._lock:
            if name not in self._queues:
                raise WiringError(f"direct channel {name!r} is not declared")
            self._queues[name].append(exchange)

    def receive(self, name: str) -> Exchange | None:
        with self._lock:
            if name not in self._queues:
                raise WiringError(f"direct channel {name!r} is not declared")
            queue = self._queues[name]
            return queue.popleft() if queue else None

    def pending(self) -> list[tuple[str, Exchange]]:
        with self._lock:
            out = []
            for name, queue in self._queues.items():
                while queue:
                    out.append((name, queue.popleft()))
            return out


class _AggregatorState:
    """Collections per correlation key with first-arrival timestamps."""

    def __init__(self):
        self.collections: dict[tuple, list[Exchange]] = {}
        self.first_ms: dict[tuple, int] = {}
        self.lock = threading.Lock()


class _NodeFailure(Exception):
    """Internal: carries the exchange state at the failing node."""

    def __init__(self, node_id: str, exchange: Exchange, cause: Exception):
        self.node_id = node_id
        self.exchange = exchange
        self.cause = cause
        super().__init__(f"{node_id}: {cause}")


class Engine:
    """Executes a route graph; one instance per run."""

    def __init__(self, rg: RouteGraph, options: RunOptions | None = None):
        self.rg = rg
        self.options = options or RunOptions()
        self.routes = {r.id: r for r in rg.routes}
        self.channels = DirectChannels(rg.channels().keys())
        self._channel_route = rg.channels()
        self.mock_sinks: dict[str, list[bytes]] = {}
        self.sink_facts: dict[str, list[frozenset]] = {}
        self._agg: dict[str, _AggregatorState] = {
            n.id: _AggregatorState()
            for n in rg.nodes
            if n.kind in ("aggregator", "joinAggregator")
        }
        self.report = RunReport(warnings=[str(w) for w in rg.warnings])
        self._counters_lock = threading.Lock()
        self._trace_seq = 0
        self._sink_seq: dict[str, int] = {}
        self._wired()

    # -- wiring ---------------------------------------------------------------

    def _wired(self) -> None:
        for node in self.rg.nodes:
            refs = []
            if node.kind in ("toDirect", "fromDirect"):
                refs = [node.config.channel]
            elif node.kind == "multicast":
                refs = list(node.config.targets)
            elif node.kind == "enricherCall" and node.config.channel:
                refs = [node.config.channel]
            for channel in refs:
                if not self.channels.declared(channel):
                    raise WiringError(
                        f"{node.id} references undeclared channel {channel!r}"
                    )
        for node in self.rg.nodes:
            if node.kind in ("fromEndpoint", "toEndpoint"):
                EndpointUri.parse(node.config.uri)  # raises on malformed URIs

    # -- public channel operations ---------------------------------------------

    def send_direct(self, channel: str, exchange: Exchange) -> None:
        self.channels.send(channel, exchange)

    def receive_direct(self, channel: str) -> Exchange | None:
        return self.channels.receive(channel)

    def mock_sink(self, name: str) -> list[bytes]:
        """Captured payloads of a mock sink in arrival order."""
        return self.mock_sinks.get(name, [])

    # -- counters ----------------------------------------------------------------

    def _count_node(self, node_id: str, key: str, amount: int = 1) -> None:
        with self._counters_lock:
            counters = self.report.per_node.setdefault(
                node_id, {"consumed": 0, "produced": 0, "dropped": 0, "errored": 0}
            )
            counters[key] += amount

    def _count(self, key: str, amount: int = 1) -> None:
        with self._counters_lock:
            setattr(self.report, key, getattr(self.report, key) + amount)

    def _next_trace(self) -> str:
        with self._counters_lock:
            self._trace_seq += 1
            return f"t{self._trace_seq:06d}"

    # -- filesystem ---------------------------------------------------------------

    def _resolve(self, path: str) -> Path:
        base = (self.options.base_dir or Path.cwd()).resolve()
        target = (base / path).resolve()
        if target != base and base not in target.parents:
            raise EndpointError(f"path {path!r} escapes the base directory")
        return target

    def _dead_letter(self, exchange: Exchange, node_id: str, error: Exception) -> None:
        self._count("errored")
        self._count_node(node_id, "errored")
        logger.warning("exchange %s failed at %s: %s", exchange.trace_id, node_id, error)
        if self.options.base_dir is None or self.options.capture_only:
            return
        try:
            dead_dir = self._resolve(".deadletter")
            dead_dir.mkdir(parents=True, exist_ok=True)
            doc = {
                "traceId": exchange.trace_id,
                "node": node_id,
                "error": f"{type(error).__name__}: {error}",
                "body": str(exchange.message.body),
                "raw": exchange.raw.decode("utf-8", "replace") if exchange.raw else None,
                "hops": exchange.hops,
            }
            (dead_dir / f"{exchange.trace_id}.json").write_text(json.dumps(doc, indent=2))
        except OSError as exc:  # never let dead-letter IO kill the engine
            logger.error("dead-letter write failed: %s", exc)

    # -- node handlers ----------------------------------------------------------------

    def _handle(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        exchange.hop(node.id)
        handler = getattr(self, "_node_" + node.kind)
        return handler(node, exchange)

    def _node_fromDirect(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        return [exchange]

    def _node_toDirect(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        self.send_direct(node.config.channel, exchange)
        self._schedule_channel(node.config.channel)
        return []

    def _node_multicast(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        self._count("replicated", len(node.config.targets) - 1)
        for target in node.config.targets:
            self.send_direct(target, exchange.fork())
            self._schedule_channel(target)
        return []

    def _node_formatConverter(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        cfg = node.config
        if cfg.direction == "in":
            if exchange.raw is None:
                raise EndpointError(f"{node.id}: no payload to convert")
            message = to_cdm(exchange.raw, FormatSpec(cfg.format, cfg.relations))
            converted = exchange.fork(message)
            converted.raw = None
            return [converted]
        payload = from_cdm(
            exchange.message, FormatSpec(cfg.format), list(cfg.exposed)
        )
        out = exchange.fork()
        out.raw = payload
        return [out]

    def _node_contentFilter(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        message = mt_ilp(exchange.message, node.config.rules, list(node.config.exposed))
        return [exchange.fork(message)]

    _node_translator = _node_contentFilter

    def _node_renamingTranslator(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        return [exchange.fork(rename_predicates(exchange.message, node.config.suffix))]

    def _node_messageFilter(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        # discard messages without facts of the exposed predicates
        exposed = set(node.config.exposed)
        if any(a.predicate in exposed for a in exchange.message.body.facts):
            return [exchange]
        self._count("dropped")
        self._count_node(node.id, "dropped")
        return []

    def _node_splitter(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        parts = split_messages(exchange.message, SplitConfig(node.config.queries))
        if not parts:
            self._count("dropped")
            self._count_node(node.id, "dropped")
            return []
        self._count("replicated", len(parts) - 1)
        return [exchange.fork(part) for part in parts]

    def _node_enricherCall(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        cfg = node.config
        if cfg.channel:
            reply = self._call_channel(cfg.channel, exchange)
            merged = merge_messages([exchange.message, reply.message])
            return [exchange.fork(merged)]
        if cfg.uri:
            payload = self._read_bytes(cfg.uri)
            data = to_cdm(payload, FormatSpec(cfg.format, cfg.relations))
            enriched = ep_ilp(
                exchange.message, EnrichData(data.body, data.header.meta_facts)
            )
            return [exchange.fork(enriched)]
        program = DatalogProgram(frozenset(cfg.facts))
        enriched = ep_ilp(exchange.message, EnrichData(program))
        return [exchange.fork(enriched)]

    def _aggregate(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        state = self._agg[node.id]
        cfg = node.config
        if cfg.correlation == "trace":
            key = (exchange.trace_id,)
        elif cfg.correlation == "arrival":
            key = ()  # single rolling collection: first k arrivals complete
        else:
            agg_cfg = AggregatorConfig(
                strategy=cfg.strategy or "union",
                completion_size=cfg.completion_size,
                completion_time_ms=cfg.completion_time_ms,
                correlation_queries=cfg.queries,
            )
            key = crc_ilp(exchange.message, agg_cfg)
        now_ms = time.monotonic_ns() // 1_000_000
        with state.lock:
            collection = state.collections.setdefault(key, [])
            state.first_ms.setdefault(key, now_ms)
            collection.append(exchange)
            complete = False
            if cfg.completion_size is not None:
                complete = len(collection) >= cfg.completion_size
            elif cfg.completion_time_ms is not None:
                complete = now_ms - state.first_ms[key] >= cfg.completion_time_ms
            if not complete:
                return []
            state.collections.pop(key)
            state.first_ms.pop(key)
        return [self._emit_aggregate(node, collection)]

    _node_aggregator = _aggregate
    _node_joinAggregator = _aggregate

    def _emit_aggregate(self, node: RgNode, collection: list[Exchange]) -> Exchange:
        self._count("merged", len(collection) - 1)
        merged = merge_messages([e.message for e in collection])
        out = collection[0].fork(merged)
        return out

    def _node_toEndpoint(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        cfg = node.config
        payload = exchange.raw
        if payload is None:
            payload = from_cdm(exchange.message, FormatSpec("datalog"), list(cfg.exposed))
        uri = EndpointUri.parse(cfg.uri)
        exposed = set(cfg.exposed)
        facts = frozenset(a for a in exchange.message.body.facts if a.predicate in exposed)
        with self._counters_lock:
            self.sink_facts.setdefault(cfg.uri, []).append(facts)
        if uri.scheme == "mock" or self.options.capture_only:
            with self._counters_lock:
                self.mock_sinks.setdefault(cfg.uri, []).append(payload)
        elif uri.scheme == "file":
            self._write_sink_file(uri.path, cfg.format, payload)
        else:
            raise EndpointError(f"cannot produce to {cfg.uri!r}")
        self._count("produced")
        self._count_node(node.id, "produced")
        with self._counters_lock:
            self.report.per_sink[cfg.uri] = self.report.per_sink.get(cfg.uri, 0) + 1
        return []

    def _node_fromEndpoint(self, node: RgNode, exchange: Exchange) -> list[Exchange]:
        # entry node: payload ingestion happens in _seed_sources
        return [exchange]

    # -- endpoint IO -------------------------------------------------------------------

    def _read_bytes(self, uri_text: str) -> bytes:
        uri = EndpointUri.parse(uri_text)
        if uri.scheme == "mock":
            raise EndpointError(f"cannot consume from mock URI {uri_text!r}")
        if uri.scheme == "file":
            return self._resolve(uri.path).read_bytes()
        raise EndpointError(f"cannot read from {uri_text!r}")

    _EXTENSIONS = {"json": "json", "csv": "csv", "datalog": "dl"}

    def _write_sink_file(self, path: str, fmt: str, payload: bytes) -> None:
        target = self._resolve(path)
        with self._counters_lock:
            seq = self._sink_seq.get(path, 0)
            self._sink_seq[path] = seq + 1
        if target.suffix:
            if seq:
                target = target.with_name(f"{target.stem}-{seq + 1}{target.suffix}")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
        else:
            target.mkdir(parents=True, exist_ok=True)
            ext = self._EXTENSIONS.get(fmt, "dat")
            (target / f"{seq:05d}.{ext}").write_bytes(payload)

    def _source_payloads(self, node: RgNode) -> list[bytes]:
        uri = EndpointUri.parse(node.config.uri)
        if uri.scheme != "file":
            raise EndpointError(f"cannot consume from {node.config.uri!r}")
        target = self._resolve(uri.path)
        if not target.exists():
            self.report.warnings.append(f"source path {uri.path!r} does not exist")
            return []
        files = sorted(target.iterdir()) if target.is_dir() else [target]
        payloads = [f.read_bytes() for f in files if f.is_file()]
        if self.options.split_elements and node.config.format == "json":
            split = []
            for payload in payloads:
                records = json.loads(payload.decode("utf-8"))
                split += [json.dumps([r]).encode("utf-8") for r in records]
            return split
        return payloads

    # -- execution ---------------------------------------------------------------------

    def _run_route(self, route_id: str, exchange: Exchange, start: int = 0) -> list[Exchange]:
        """Drive one exchange through a route; returns the exchanges that
        reached the end of the pipeline (used by request/reply calls)."""
        route = self.routes[route_id]
        current = [exchange]
        for node in route.nodes[start:]:
            if not current:
                return []
            following: list[Exchange] = []
            for ex in current:
                self._count_node(node.id, "consumed")
                try:
                    outs = self._handle(node, ex)
                except _NodeFailure:
                    raise
                except Exception as exc:
                    raise _NodeFailure(node.id, ex, exc) from exc
                self._count_node(node.id, "produced", len(outs))
                following.extend(outs)
            current = following
        return current

    def _guarded_run_route(self, route_id: str, exchange: Exchange, start: int = 0) -> None:
        try:
            self._run_route(route_id, exchange, start)
        except _NodeFailure as failure:  # poisoned exchanges never halt the engine
            self._dead_letter(failure.exchange, failure.node_id, failure.cause)
        except Exception as exc:
            node_id = exchange.hops[-1][0] if exchange.hops else route_id
            self._dead_letter(exchange, node_id, exc)

    def _call_channel(self, channel: str, exchange: Exchange) -> Exchange:
        """Request/reply against the route consuming ``channel``."""
        route_id = self._channel_route[channel]
        results = self._run_route(route_id, exchange.fork(), start=0)
        if len(results) != 1:
            raise EndpointError(
                f"request/reply on {channel!r} returned {len(results)} exchanges"
            )
        return results[0]

    def _schedule_channel(self, channel: str) -> None:
        """Move pending channel exchanges into the work pool."""
        route_id = self._channel_route.get(channel)
        if route_id is None:
            raise WiringError(f"direct channel {channel!r} has no consuming route")
        if self.routes[route_id].entry.kind != "fromDirect":
            return
        while True:
            exchange = self.channels.receive(channel)
            if exchange is None:
                return
            self._submit(route_id, exchange, 1)  # skip the fromDirect entry

    def _submit(self, route_id: str, exchange: Exchange, start: int) -> None:
        if self._executor is not None:
            with self._pending_lock:
                self._pending += 1
            self._futures.append(
                self._executor.submit(self._task, route_id, exchange, start)
            )
        else:
            self._work.append((route_id, exchange, start))

    def _task(self, route_id: str, exchange: Exchange, start: int) -> None:
        try:
            self._guarded_run_route(route_id, exchange, start)
        finally:
            with self._pending_lock:
                self._pending -= 1

    def _seed_sources(self) -> list[tuple[str, Exchange, int]]:
        seeds = []
        entry_routes = [
            r for r in self.rg.routes if r.entry.kind == "fromEndpoint"
        ]
        if self.options.inject:
            if not entry_routes:
                raise WiringError("cannot inject messages: no source route")
            route = entry_routes[0]
            start = 1
            while start < len(route.nodes) and route.nodes[start].kind == "formatConverter":
                start += 1
            for message in self.options.inject:
                self._count("consumed")
                seeds.append((route.id, Exchange(message, self._next_trace()), start))
            return seeds
        for route in entry_routes:
            source = route.entry
            try:
                payloads = self._source_payloads(source)
            except (EndpointError, OSError) as exc:
                self.report.warnings.append(f"{source.id}: {exc}")
                continue
            for payload in payloads:
                self._count("consumed")
                self._count_node(source.id, "consumed")
                self._count_node(source.id, "produced")
                exchange = Exchange(Message(), self._next_trace(), raw=payload)
                if source.config.format == "datalog":
                    message = to_cdm(payload, FormatSpec("datalog", source.config.relations))
                    exchange = Exchange(message, exchange.trace_id)
                seeds.append((route.id, exchange, 1))
        return seeds

    def _flush_time_aggregations(self, force: bool) -> int:
        """Emit due time-based collections; with force, drain them all.

        Size-based collections that can no longer complete are dropped."""
        emitted = 0
        now_ms = time.monotonic_ns() // 1_000_000
        for node in self.rg.nodes:
            if node.kind not in ("aggregator", "joinAggregator"):
                continue
            state = self._agg[node.id]
            route_id = node.route_id
            route = self.routes[route_id]
            position = next(i for i, n in enumerate(route.nodes) if n.id == node.id)
            with state.lock:
                due = []
                for key, collection in list(state.collections.items()):
                    time_based = node.config.completion_time_ms is not None
                    expired = time_based and (
                        force
                        or now_ms - state.first_ms[key] >= node.config.completion_time_ms
                    )
                    if expired:
                        due.append(collection)
                        state.collections.pop(key)
                        state.first_ms.pop(key)
                    elif force and not time_based:
                        dropped = state.collections.pop(key)
                        state.first_ms.pop(key)
                        self._count("dropped", len(dropped))
                        self._count_node(node.id, "dropped", len(dropped))
                        self.report.warnings.append(
                            f"{node.id}: dropped {len(dropped)} message(s) from an "
                            f"incomplete collection (key {key!r})"
                        )
            for collection in due:
                merged = self._emit_aggregate(node, collection)
                self._submit(node.route_id, merged, position + 1)
                emitted += 1
        return emitted

    def _drain(self) -> None:
        if self._executor is not None:
            while True:
                wait(list(self._futures))
                with self._pending_lock:
                    if self._pending == 0 and all(f.done() for f in list(self._futures)):
                        break
            self._futures = [f for f in self._futures if not f.done()]
        else:
            while self._work:
                route_id, exchange, start = self._work.popleft()
                self._guarded_run_route(route_id, exchange, start)

    def run_batch(self) -> RunReport:
        started = time.monotonic()
        self._work: deque = deque()
        self._futures: list = []
        self._pending = 0
        self._pending_lock = threading.Lock()
        self._executor = (
            ThreadPoolExecutor(max_workers=self.options.max_workers)
            if self.options.parallel
            else None
        )
        try:
            for route_id, exchange, start in self._seed_sources():
                self._submit(route_id, exchange, start)
            self._drain()
            # end of stream: time-based collections complete, stale size-based drop
            while self._flush_time_aggregations(force=True):
                self._drain()
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
        self.report.wall_ms = int((time.monotonic() - started) * 1000)
        return self.report

    def run_watch(self, stop: threading.Event | None = None) -> RunReport:
        """Poll sources for new files until stopped; sweeps time aggregations."""
        started = time.monotonic()
        self._work = deque()
        self._futures = []
        self._pending = 0
        self._pending_lock = threading.Lock()
        self._executor = (
            ThreadPoolExecutor(max_workers=self.options.max_workers)
            if self.options.parallel
            else None
        )
        seen: set[tuple[str, str, float]] = set()
        stop = stop or threading.Event()
        deadline = (
            time.monotonic() + self.options.watch_duration_ms / 1000
            if self.options.watch_duration_ms
            else None
        )
        last_sweep = time.monotonic()
        try:
            while not stop.is_set():
                if deadline and time.monotonic() >= deadline:
                    break
                for route in self.rg.routes:
                    if route.entry.kind != "fromEndpoint":
                        continue
                    source = route.entry
                    uri = EndpointUri.parse(source.config.uri)
                    if uri.scheme != "file":
                        continue
                    target = self._resolve(uri.path)
                    if not target.exists():
                        continue
                    files = sorted(target.iterdir()) if target.is_dir() else [target]
                    for file in files:
                        if not file.is_file():
                            continue
                        key = (route.id, str(file), file.stat().st_mtime)
                        if key in seen:
                            continue
                        seen.add(key)
                        payload = file.read_bytes()
                        self._count("consumed")
                        self._count_node(source.id, "consumed")
                        self._count_node(source.id, "produced")
                        exchange = Exchange(Message(), self._next_trace(), raw=payload)
                        if source.config.format == "datalog":
                            message = to_cdm(
                                payload, FormatSpec("datalog", source.config.relations)
                            )
                            exchange = Exchange(message, exchange.trace_id)
                        self._submit(route.id, exchange, 1)
                self._drain()
                if (time.monotonic() - last_sweep) * 1000 >= self.options.sweep_interval_ms:
                    self._flush_time_aggregations(force=False)
                    self._drain()
                    last_sweep = time.monotonic()
                stop.wait(self.options.watch_poll_ms / 1000)
            while self._flush_time_aggregations(force=True):
                self._drain()
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
        self.report.wall_ms = int((time.monotonic() - started) * 1000)
        return self.report


def run(rg: RouteGraph, options: RunOptions | None = None) -> RunReport:
    """Execute a route graph to quiescence (batch) or until stopped (watch)."""
    engine = Engine(rg, options)
    if engine.options.mode == "watch":
        return engine.run_watch()
    return engine.run_batch()
