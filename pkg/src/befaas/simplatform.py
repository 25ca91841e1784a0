"""Simulated FaaS platforms and the simulated key-value service.

A :class:`SimPlatform` is a real HTTP server hosting deployed functions
behind ``/fn/<name>`` plus the minimal admin interface every platform must
offer: deploy, fetch logs, remove. Cold starts, routing overhead and
network transit are injected as real sleeps on real sockets, so the
timestamps functions take are genuine measurements, not bookkeeping.

Executor model: one executor serves one request at a time. An idle
executor is always preferred; otherwise the platform either scales up (and
the request pays the cold-start delay) or, at the executor cap, applies
its queue policy: ``scale_up`` rejects with HTTP 429, ``queue_when_busy``
parks the request in FIFO order until an executor frees up.
"""
from __future__ import annotations

import json
import math
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import httpjson, registry
from .clock import now_us, precise_sleep_ms
from .compiler import DeploymentArtifact, function_endpoint
from .errors import ConfigurationError, ThrottleError
from .tracing import HandlerRuntime, envelope_status

# ---------------------------------------------------------------------------
# Delay specifications and platform profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DelaySpec:
    """A constant delay or a log-normal(mu, sigma) distribution, in ms."""

    constant_ms: float | None = None
    mu: float | None = None
    sigma: float | None = None

    @classmethod
    def parse(cls, value) -> "DelaySpec":
        if isinstance(value, (int, float)):
            if value < 0:
                raise ValueError(f"delay must be >= 0, got {value}")
            return cls(constant_ms=float(value))
        if isinstance(value, dict) and value.get("dist") == "lognormal":
            return cls(mu=float(value["mu"]), sigma=float(value["sigma"]))
        if isinstance(value, DelaySpec):
            return value
        raise ValueError(f"unrecognized delay spec: {value!r}")

    def sample(self, rng: random.Random) -> float:
        if self.constant_ms is not None:
            return self.constant_ms
        return rng.lognormvariate(self.mu, self.sigma)

    def to_doc(self):
        if self.constant_ms is not None:
            return self.constant_ms
        return {"dist": "lognormal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class PlatformProfile:
    """Tunable behavior of one simulated platform."""

    name: str = "custom"
    cold_start_delay_ms: DelaySpec = field(default_factory=lambda: DelaySpec(0.0))
    invoke_overhead_ms: float = 0.0
    executor_idle_timeout_s: float = math.inf
    max_executors: int | None = None
    queue_policy: str = "scale_up"
    network_delay_ms: DelaySpec = field(default_factory=lambda: DelaySpec(0.0))
    clock_skew_ms: float = 0.0

    def __post_init__(self):
        if self.invoke_overhead_ms < 0:
            raise ValueError("invoke_overhead_ms must be >= 0")
        if self.executor_idle_timeout_s < 0:
            raise ValueError("executor_idle_timeout_s must be >= 0")
        if self.max_executors is not None and self.max_executors < 1:
            raise ValueError("max_executors must be >= 1")
        if self.queue_policy not in ("scale_up", "queue_when_busy"):
            raise ValueError(f"unknown queue_policy: {self.queue_policy}")


#: Shipped presets contrasting the two queuing mechanisms at desk scale.
#: Values are chosen for visibility in analysis output, not fidelity to
#: any real provider.
PROFILE_PRESETS: dict[str, PlatformProfile] = {
    "scaler": PlatformProfile(
        name="scaler",
        cold_start_delay_ms=DelaySpec(250.0),
        invoke_overhead_ms=1.0,
        max_executors=64,
        queue_policy="scale_up",
        network_delay_ms=DelaySpec(2.0),
    ),
    "queuer": PlatformProfile(
        name="queuer",
        cold_start_delay_ms=DelaySpec(500.0),
        invoke_overhead_ms=1.0,
        max_executors=2,
        queue_policy="queue_when_busy",
        network_delay_ms=DelaySpec(2.0),
    ),
}


def profile_from_config(value) -> PlatformProfile:
    """Resolve a config entry: preset name or inline field dict."""
    if isinstance(value, PlatformProfile):
        return value
    if isinstance(value, str):
        if value not in PROFILE_PRESETS:
            raise ConfigurationError(f"unknown platform profile preset: {value!r}")
        return PROFILE_PRESETS[value]
    if isinstance(value, dict):
        idle = value.get("executor_idle_timeout_s")
        max_executors = value.get("max_executors")
        return PlatformProfile(
            name=value.get("name", "custom"),
            cold_start_delay_ms=DelaySpec.parse(value.get("cold_start_delay_ms", 0)),
            invoke_overhead_ms=float(value.get("invoke_overhead_ms", 0)),
            executor_idle_timeout_s=math.inf if idle in (None, "inf") else float(idle),
            max_executors=None if max_executors in (None, "unbounded") else int(max_executors),
            queue_policy=value.get("queue_policy", "scale_up"),
            network_delay_ms=DelaySpec.parse(value.get("network_delay_ms", 0)),
            clock_skew_ms=float(value.get("clock_skew_ms", 0)),
        )
    raise ConfigurationError(f"unrecognized profile entry: {value!r}")


# ---------------------------------------------------------------------------
# Executors
# ---------------------------------------------------------------------------


class Executor:
    """One runtime instance; serves a single request at a time."""

    __slots__ = ("env", "busy", "last_used", "invocation_count")

    def __init__(self, env_seed: dict[str, str]):
        self.env: dict[str, str] = dict(env_seed)
        self.busy = True  # born claimed
        self.last_used = time.monotonic()
        self.invocation_count = 0


class FunctionHost:
    """Executor pool, queue policy, and log capture for one deployment."""

    def __init__(self, artifact: DeploymentArtifact, handler, profile: PlatformProfile):
        self.artifact = artifact
        self.handler = handler
        self.profile = profile
        self.lines: list[str] = []
        self.executors: list[Executor] = []
        self.created = 0
        self.invocations = 0
        self.removed = False
        self._cond = threading.Condition()
        self._fifo: deque = deque()

    # -- pool management -----------------------------------------------------

    def _purge_idle(self) -> None:
        timeout = self.profile.executor_idle_timeout_s
        if math.isinf(timeout):
            return
        cutoff = time.monotonic() - timeout
        self.executors = [e for e in self.executors if e.busy or e.last_used >= cutoff]

    def _try_claim(self) -> tuple[Executor, bool] | None:
        """Take an idle executor, or create one if capacity allows."""
        self._purge_idle()
        for executor in self.executors:
            if not executor.busy:
                executor.busy = True
                return executor, False
        cap = self.profile.max_executors
        if cap is None or len(self.executors) < cap:
            executor = Executor(dict(self.artifact.env))
            self.executors.append(executor)
            self.created += 1
            return executor, True
        return None

    def claim(self) -> tuple[Executor, bool]:
        """Claim an executor per the queue policy.

        Returns (executor, is_cold). Raises ThrottleError under scale_up
        at capacity. Atomic: no two requests ever take the same idle
        executor.
        """
        with self._cond:
            if self.removed:
                raise ConfigurationError(f"function removed: {self.artifact.fn}")
            if self.profile.queue_policy == "scale_up":
                claimed = self._try_claim()
                if claimed is None:
                    raise ThrottleError(f"{self.artifact.fn}: all executors busy")
                return claimed
            # queue_when_busy: FIFO — only the head of the queue may claim.
            ticket = object()
            self._fifo.append(ticket)
            try:
                while True:
                    if self.removed:
                        raise ConfigurationError(f"function removed: {self.artifact.fn}")
                    if self._fifo[0] is ticket:
                        claimed = self._try_claim()
                        if claimed is not None:
                            return claimed
                    self._cond.wait()
            finally:
                self._fifo.remove(ticket)
                self._cond.notify_all()

    def release(self, executor: Executor) -> None:
        with self._cond:
            executor.busy = False
            executor.last_used = time.monotonic()
            executor.invocation_count += 1
            self.invocations += 1
            self._cond.notify_all()

    def mark_removed(self) -> None:
        with self._cond:
            self.removed = True
            self.executors.clear()
            self._cond.notify_all()

    def live_executors(self) -> int:
        with self._cond:
            return len(self.executors)


# ---------------------------------------------------------------------------
# Platform
# ---------------------------------------------------------------------------


class SimPlatform:
    """One simulated FaaS platform: function hosting plus admin API."""

    def __init__(
        self,
        platform_id: str,
        profile: PlatformProfile,
        host: str = "127.0.0.1",
        port: int = 0,
        seed: int = 0,
    ):
        self.platform_id = platform_id
        self.profile = profile
        self._host = host
        self._port = port
        self.deployments: dict[str, FunctionHost] = {}
        self.retained_lines: dict[str, list[str]] = {}
        self.creation_counts: dict[str, int] = {}
        self.invocation_counts: dict[str, int] = {}
        self._admin_lock = threading.Lock()
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self._server: _PlatformServer | None = None
        skew_us = int(profile.clock_skew_ms * 1000)
        self.clock_us = (lambda: now_us() + skew_us) if skew_us else now_us

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> str:
        if self._server is not None:
            return self.base_url
        self._server = _PlatformServer((self._host, self._port), _PlatformHandler, self)
        self._port = self._server.server_address[1]
        thread = threading.Thread(
            target=self._server.serve_forever, name=f"platform-{self.platform_id}", daemon=True
        )
        thread.start()
        return self.base_url

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    @property
    def base_url(self) -> str:
        return f"http://{self._host}:{self._port}"

    @property
    def admin_endpoint(self) -> str:
        return self.base_url

    def _sample_ms(self, spec: DelaySpec) -> float:
        if spec.constant_ms is not None:
            return spec.constant_ms
        with self._rng_lock:
            return spec.sample(self._rng)

    # -- admin operations ------------------------------------------------------

    def deploy_artifact(self, doc: dict) -> str:
        """Deploy one artifact; the function becomes reachable immediately
        but no executor exists until the first invocation."""
        artifact = DeploymentArtifact.from_doc(doc)
        app = registry.get_app(artifact.app)
        handler = app.handlers.get(artifact.fn)
        if handler is None:
            raise ConfigurationError(f"app {artifact.app!r} has no function {artifact.fn!r}")
        with self._admin_lock:
            if artifact.fn in self.deployments:
                raise ConfigurationError(f"already deployed: {artifact.fn}")
            self.deployments[artifact.fn] = FunctionHost(artifact, handler, self.profile)
            self.creation_counts.setdefault(artifact.fn, 0)
        return function_endpoint(self.base_url, artifact.fn)

    def fetch_logs(self, fn: str) -> list[str]:
        """All captured lines for ``fn``, in emission order per executor.
        Lines survive function removal until platform teardown."""
        with self._admin_lock:
            retained = self.retained_lines.get(fn)
            host = self.deployments.get(fn)
            if retained is None and host is None:
                raise ConfigurationError(f"unknown function: {fn}")
            lines = list(retained or [])
            if host is not None:
                lines.extend(host.lines)
            return lines

    def remove_function(self, fn: str) -> None:
        with self._admin_lock:
            host = self.deployments.pop(fn, None)
            if host is None:
                raise ConfigurationError(f"unknown function: {fn}")
            self.retained_lines.setdefault(fn, []).extend(host.lines)
            self.creation_counts[fn] = self.creation_counts.get(fn, 0) + host.created
            self.invocation_counts[fn] = self.invocation_counts.get(fn, 0) + host.invocations
        host.mark_removed()

    def teardown(self) -> None:
        """Remove everything and drop retained logs. Idempotent."""
        with self._admin_lock:
            hosts = list(self.deployments.values())
            self.deployments.clear()
            self.retained_lines.clear()
        for host in hosts:
            host.mark_removed()

    def stats(self) -> dict:
        with self._admin_lock:
            functions: dict[str, dict] = {}
            names = set(self.deployments) | set(self.creation_counts)
            for fn in sorted(names):
                host = self.deployments.get(fn)
                functions[fn] = {
                    "executors_created": self.creation_counts.get(fn, 0)
                    + (host.created if host else 0),
                    "live_executors": host.live_executors() if host else 0,
                    "invocations": self.invocation_counts.get(fn, 0)
                    + (host.invocations if host else 0),
                }
            return {
                "platform": self.platform_id,
                "deployment_count": len(self.deployments),
                "functions": functions,
            }

    # -- invocation ------------------------------------------------------------

    def handle_invoke(self, fn: str, request: dict) -> tuple[int, dict]:
        host = self.deployments.get(fn)
        if host is None:
            return 404, {"error": {"message": f"no such function: {fn}", "kind": "unreachable"}}

        precise_sleep_ms(self.profile.invoke_overhead_ms)
        try:
            executor, cold = host.claim()
        except ThrottleError as exc:
            return 429, {"error": {"message": str(exc), "kind": "throttle"}}
        except ConfigurationError as exc:
            return 404, {"error": {"message": str(exc), "kind": "unreachable"}}

        try:
            if cold:
                precise_sleep_ms(self._sample_ms(self.profile.cold_start_delay_ms))
            precise_sleep_ms(self._sample_ms(self.profile.network_delay_ms))
            runtime = HandlerRuntime(
                fn=fn,
                platform=self.platform_id,
                executor_env=executor.env,
                endpoint_map=host.artifact.endpoint_map,
                env=host.artifact.env,
                emit=host.lines.append,
                clock_us=self.clock_us,
            )
            envelope = host.handler(request, runtime)
            precise_sleep_ms(self._sample_ms(self.profile.network_delay_ms))
        finally:
            host.release(executor)
        return envelope_status(envelope), envelope


class _PlatformServer(ThreadingHTTPServer):
    daemon_threads = True
    disable_nagle_algorithm = True
    # Bursts open many connections at once; the socketserver default
    # backlog of 5 would push the overflow into 1 s SYN retransmits.
    request_queue_size = 128

    def __init__(self, addr, handler_cls, platform: SimPlatform):
        super().__init__(addr, handler_cls)
        self.platform = platform


class _JSONHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 120

    def log_message(self, *args):  # keep benchmark output clean
        pass

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(body)
        except json.JSONDecodeError:
            return {}

    def _respond(self, status: int, doc: dict) -> None:
        body = json.dumps(doc, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class _PlatformHandler(_JSONHandler):
    server: _PlatformServer

    def do_POST(self):
        platform = self.server.platform
        # Always drain the body first: an unread body desyncs keep-alive.
        request = self._read_json()
        if self.path.startswith("/fn/"):
            status, doc = platform.handle_invoke(self.path[4:], request)
            self._respond(status, doc)
            return
        if self.path == "/admin/deploy":
            try:
                endpoint = platform.deploy_artifact(request)
            except ConfigurationError as exc:
                self._respond(409, {"error": {"message": str(exc), "kind": "client"}})
                return
            self._respond(200, {"endpoint": endpoint})
            return
        if self.path.startswith("/admin/remove/"):
            try:
                platform.remove_function(self.path[len("/admin/remove/"):])
            except ConfigurationError as exc:
                self._respond(404, {"error": {"message": str(exc), "kind": "client"}})
                return
            self._respond(200, {"ok": True})
            return
        if self.path == "/admin/teardown":
            platform.teardown()
            self._respond(200, {"ok": True})
            return
        self._respond(404, {"error": {"message": f"no route: {self.path}", "kind": "client"}})

    def do_GET(self):
        platform = self.server.platform
        if self.path.startswith("/admin/logs/"):
            try:
                lines = platform.fetch_logs(self.path[len("/admin/logs/"):])
            except ConfigurationError as exc:
                self._respond(404, {"error": {"message": str(exc), "kind": "client"}})
                return
            self._respond(200, {"lines": lines})
            return
        if self.path == "/admin/stats":
            self._respond(200, platform.stats())
            return
        if self.path == "/admin/ping":
            self._respond(200, {"platform": platform.platform_id})
            return
        self._respond(404, {"error": {"message": f"no route: {self.path}", "kind": "client"}})


# ---------------------------------------------------------------------------
# Simulated key-value service
# ---------------------------------------------------------------------------


class KVService:
    """Single-node key-value store over HTTP with injected query latency.

    Operations are serialized under one lock (linearizable by
    construction); each request sleeps ``query_delay_ms`` per direction.
    A get of an absent key is a not-found result, not an error.
    """

    def __init__(self, query_delay_ms: float = 0.0, host: str = "127.0.0.1", port: int = 0):
        if query_delay_ms < 0:
            raise ValueError("query_delay_ms must be >= 0")
        self.query_delay_ms = query_delay_ms
        self._host = host
        self._port = port
        self._store: dict[str, object] = {}
        self._lock = threading.Lock()
        self._server: _KVServer | None = None

    def start(self) -> str:
        if self._server is not None:
            return self.endpoint
        self._server = _KVServer((self._host, self._port), _KVHandler, self)
        self._port = self._server.server_address[1]
        threading.Thread(target=self._server.serve_forever, name="kv-service", daemon=True).start()
        return self.endpoint

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    @property
    def endpoint(self) -> str:
        return f"http://{self._host}:{self._port}/kv"

    def handle(self, request: dict) -> tuple[int, dict]:
        op = request.get("op")
        key = request.get("key")
        if op not in ("get", "set", "delete") or not isinstance(key, str):
            return 400, {"error": {"message": f"bad kv request: {request}", "kind": "client"}}
        if op == "set" and "value" not in request:
            return 400, {"error": {"message": "set requires a value", "kind": "client"}}
        precise_sleep_ms(self.query_delay_ms)
        with self._lock:
            if op == "get":
                found = key in self._store
                doc = {"found": found, "value": self._store.get(key)}
            elif op == "set":
                self._store[key] = request["value"]
                doc = {"ok": True}
            else:
                existed = self._store.pop(key, None) is not None
                doc = {"ok": True, "existed": existed}
        precise_sleep_ms(self.query_delay_ms)
        return 200, doc


class _KVServer(ThreadingHTTPServer):
    daemon_threads = True
    disable_nagle_algorithm = True
    request_queue_size = 128

    def __init__(self, addr, handler_cls, service: KVService):
        super().__init__(addr, handler_cls)
        self.service = service


class _KVHandler(_JSONHandler):
    server: _KVServer

    def do_POST(self):
        request = self._read_json()
        if self.path == "/kv":
            status, doc = self.server.service.handle(request)
            self._respond(status, doc)
            return
        self._respond(404, {"error": {"message": f"no route: {self.path}", "kind": "client"}})

    def do_GET(self):
        if self.path == "/ping":
            self._respond(200, {"ok": True})
            return
        self._respond(404, {"error": {"message": f"no route: {self.path}", "kind": "client"}})


# ---------------------------------------------------------------------------
# Admin client (uniform handle for in-process and attached platforms)
# ---------------------------------------------------------------------------


class AdminClient:
    """Drives a platform's admin API over HTTP."""

    def __init__(self, admin_endpoint: str, timeout: float = 60.0):
        self.admin_endpoint = admin_endpoint.rstrip("/")
        self.timeout = timeout

    def ping(self) -> str:
        return httpjson.get_json(f"{self.admin_endpoint}/admin/ping", self.timeout)["platform"]

    def deploy(self, artifact_doc: dict) -> str:
        doc = httpjson.post_json(f"{self.admin_endpoint}/admin/deploy", artifact_doc, self.timeout)
        return doc["endpoint"]

    def logs(self, fn: str) -> list[str]:
        doc = httpjson.get_json(f"{self.admin_endpoint}/admin/logs/{fn}", self.timeout)
        return doc["lines"]

    def remove(self, fn: str) -> None:
        httpjson.post_json(f"{self.admin_endpoint}/admin/remove/{fn}", {}, self.timeout)

    def stats(self) -> dict:
        return httpjson.get_json(f"{self.admin_endpoint}/admin/stats", self.timeout)

    def teardown(self) -> None:
        httpjson.post_json(f"{self.admin_endpoint}/admin/teardown", {}, self.timeout)
