"""Function instrumentation: trace tokens, cold-start detection, log events.

Every benchmark function is wrapped by :func:`wrap_handler`. The wrapper
owns the tracing protocol:

* a *context id* is minted once per function chain (by the first function
  that receives a request without a token) and propagated unchanged;
* a *pair id* is minted by the caller for every outgoing call and becomes
  the callee invocation's own pair id, linking parent and child spans;
* every activity edge is timestamped and emitted as one NDJSON line on the
  executor's logging stream;
* cold starts are detected through a marker variable in the executor-local
  environment: absent means fresh executor.

Handlers stay transport-agnostic: the token travels inside the request
body envelope ``{"_befaas": {"ctx": ..., "pair": ...}, "payload": ...}``
so any transport that moves JSON documents can carry it. The envelope adds
a constant number of bytes per call for a fixed function-name length.
"""
from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, MutableMapping

from . import httpjson
from .clock import now_us
from .errors import (
    BusinessError,
    CalleeError,
    ConfigurationError,
    ThrottleError,
    TransportCallError,
    TransportError,
)

# ---------------------------------------------------------------------------
# Identifiers
# ---------------------------------------------------------------------------

#: Executor-environment variable marking a warmed executor. Its value is a
#: random key that doubles as the executor id on every emitted event.
COLD_START_MARKER = "EXECUTOR_KEY"

#: Request/response envelope key carrying the trace token.
ENVELOPE_KEY = "_befaas"

EVENT_KINDS = frozenset(
    {
        "invocation_start",
        "invocation_end",
        "call_start",
        "call_end",
        "external_start",
        "external_end",
        "cold_start",
    }
)

_id_lock = threading.Lock()
_id_rng = random.Random()


def seed_ids(seed: int | str | None) -> None:
    """Reseed the shared id source (None restores entropy-based seeding)."""
    with _id_lock:
        _id_rng.seed(seed)


def new_id(rng: random.Random | None = None) -> str:
    """Return a fresh 128-bit identifier as 32 lowercase hex characters.

    Draws are independent; collisions are negligible without coordination
    (birthday bound ~1.5e-27 for a million draws).
    """
    source = rng if rng is not None else _id_rng
    with _id_lock:
        value = source.getrandbits(128)
    return f"{value:032x}"


def detect_cold_start(env: MutableMapping[str, str]) -> bool:
    """Check and stamp the executor-local cold-start marker.

    Returns True iff the marker was absent (fresh executor); as a side
    effect the marker is set to a fresh random key, so a second call on
    the same environment returns False.
    """
    if COLD_START_MARKER in env:
        return False
    env[COLD_START_MARKER] = new_id()
    return True


# ---------------------------------------------------------------------------
# Log events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogEvent:
    """One timestamped record on a function's logging stream."""

    event_kind: str
    ts_us: int
    fn: str
    context_id: str
    pair_id: str
    executor_id: str
    platform: str
    call_pair_id: str | None = None
    target: str | None = None
    error: bool = False

    def to_line(self) -> str:
        doc: dict[str, Any] = {
            "event_kind": self.event_kind,
            "ts_us": self.ts_us,
            "fn": self.fn,
            "context_id": self.context_id,
            "pair_id": self.pair_id,
            "executor_id": self.executor_id,
            "platform": self.platform,
        }
        if self.call_pair_id is not None:
            doc["call_pair_id"] = self.call_pair_id
        if self.target is not None:
            doc["target"] = self.target
        if self.error:
            doc["error"] = True
        return json.dumps(doc, separators=(",", ":"))


_REQUIRED_EVENT_FIELDS = ("event_kind", "ts_us", "fn", "context_id", "pair_id")


def parse_event_line(line: str) -> dict:
    """Parse one NDJSON log line into an event dict.

    Unknown fields are kept (consumers ignore what they do not understand);
    missing required fields or an unknown kind raise ValueError.
    """
    doc = json.loads(line)
    if not isinstance(doc, dict):
        raise ValueError("event line is not an object")
    for key in _REQUIRED_EVENT_FIELDS:
        if key not in doc:
            raise ValueError(f"event line missing field {key!r}")
    if doc["event_kind"] not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {doc['event_kind']!r}")
    if not isinstance(doc["ts_us"], int):
        raise ValueError("ts_us must be an integer")
    return doc


# ---------------------------------------------------------------------------
# Handler runtime and call context
# ---------------------------------------------------------------------------

Transport = Callable[[str, dict], dict]


@dataclass
class HandlerRuntime:
    """Everything the host platform injects into one invocation.

    ``executor_env`` persists across invocations on the same executor
    instance; ``env`` is the per-deployment configuration (external-service
    endpoints, overrides); ``emit`` appends one line to the executor's
    logging stream; ``clock_us`` is the platform clock (may be skewed).
    """

    fn: str
    platform: str
    executor_env: MutableMapping[str, str]
    endpoint_map: Mapping[str, str] = field(default_factory=dict)
    env: Mapping[str, str] = field(default_factory=dict)
    emit: Callable[[str], None] = lambda line: print(line, flush=True)
    clock_us: Callable[[], int] = now_us
    transport: Transport = httpjson.post_json


class CallContext:
    """Per-invocation facade handed to business logic.

    Exposes outgoing calls that mint pair ids, propagate the context id and
    emit ``call_*``/``external_*`` events on the invocation's clock.
    """

    def __init__(self, runtime: HandlerRuntime, context_id: str, pair_id: str):
        self._runtime = runtime
        self.context_id = context_id
        self.pair_id = pair_id
        self._executor_id = runtime.executor_env[COLD_START_MARKER]
        self._emit_lock = threading.Lock()

    @property
    def env(self) -> Mapping[str, str]:
        return self._runtime.env

    @property
    def fn(self) -> str:
        return self._runtime.fn

    def _event(self, kind: str, **extra: Any) -> None:
        event = LogEvent(
            event_kind=kind,
            ts_us=self._runtime.clock_us(),
            fn=self._runtime.fn,
            context_id=self.context_id,
            pair_id=self.pair_id,
            executor_id=self._executor_id,
            platform=self._runtime.platform,
            **extra,
        )
        # Parallel call blocks emit from several threads onto one stream.
        with self._emit_lock:
            self._runtime.emit(event.to_line())

    # -- outgoing function calls -------------------------------------------

    def call(self, target: str, payload: Any) -> Any:
        """Invoke another benchmark function and return its payload.

        The target is resolved through the deployment's endpoint map; an
        unknown name is a configuration error and emits nothing.
        """
        endpoint = self._runtime.endpoint_map.get(target)
        if endpoint is None:
            raise ConfigurationError(f"{self.fn}: no endpoint for function {target!r}")
        call_pair_id = new_id()
        request = {
            ENVELOPE_KEY: {"ctx": self.context_id, "pair": call_pair_id},
            "payload": payload,
        }
        self._event("call_start", call_pair_id=call_pair_id, target=target)
        try:
            response = self._runtime.transport(endpoint, request)
        except TransportCallError as exc:
            self._event("call_end", call_pair_id=call_pair_id, target=target, error=True)
            err = exc.body.get("error", {})
            if exc.status == 429:
                raise ThrottleError(f"{target} throttled the call") from exc
            if err.get("kind") == "unreachable":
                raise TransportError(f"{target} unreachable: {err.get('message')}") from exc
            raise CalleeError(
                target, err.get("message", str(exc)), err.get("kind", "server")
            ) from exc
        except TransportError:
            self._event("call_end", call_pair_id=call_pair_id, target=target, error=True)
            raise
        self._event("call_end", call_pair_id=call_pair_id, target=target)
        return response.get("payload")

    def call_parallel(self, calls: list[tuple[str, Any]]) -> list[Any]:
        """Issue several calls concurrently and idle until all returned.

        Results come back in argument order. If any call failed, the first
        failure is re-raised -- after every call has completed, so the
        event stream always shows the full block.
        """
        results: list[Any] = [None] * len(calls)
        failures: list[BaseException | None] = [None] * len(calls)

        def run(index: int, target: str, payload: Any) -> None:
            try:
                results[index] = self.call(target, payload)
            except BaseException as exc:  # noqa: BLE001 - refired below
                failures[index] = exc

        threads = [
            threading.Thread(target=run, args=(i, t, p), daemon=True)
            for i, (t, p) in enumerate(calls)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        for failure in failures:
            if failure is not None:
                raise failure
        return results

    # -- outgoing external-service calls -----------------------------------

    def call_external(self, service: str, operation: str, payload: dict) -> dict:
        """Call an external service (black box: no token is forwarded).

        The endpoint comes from the injected environment under the
        upper-cased service name.
        """
        endpoint = self._runtime.env.get(service.upper())
        if endpoint is None:
            raise ConfigurationError(f"{self.fn}: no endpoint for service {service!r}")
        call_pair_id = new_id()
        request = {"op": operation, **payload}
        self._event("external_start", call_pair_id=call_pair_id, target=service)
        try:
            response = self._runtime.transport(endpoint, request)
        except (TransportError, TransportCallError):
            self._event("external_end", call_pair_id=call_pair_id, target=service, error=True)
            raise
        self._event("external_end", call_pair_id=call_pair_id, target=service)
        return response


def wrap_handler(fn_name: str, business_logic: Callable[[Any, CallContext], Any]):
    """Wrap business logic into an instrumented handler.

    The returned handler takes ``(request_doc, runtime)`` and returns a
    response envelope. It extracts or mints the trace token, emits
    invocation (and possibly cold-start) events, and hands the business
    logic a :class:`CallContext`. Business exceptions are caught: the
    invocation_end event still fires (with an error marker) and the error
    propagates to the caller inside the response envelope.
    """

    def handler(request: Any, runtime: HandlerRuntime) -> dict:
        token = request.get(ENVELOPE_KEY) if isinstance(request, dict) else None
        if isinstance(token, dict) and "ctx" in token and "pair" in token:
            context_id, pair_id = str(token["ctx"]), str(token["pair"])
        else:
            # Chain root: first function to see the request mints both ids.
            context_id, pair_id = new_id(), new_id()

        cold = detect_cold_start(runtime.executor_env)
        ctx = CallContext(runtime, context_id, pair_id)
        ctx._event("invocation_start")
        if cold:
            ctx._event("cold_start")

        payload = request.get("payload") if isinstance(request, dict) else request
        try:
            result = business_logic(payload, ctx)
        except BusinessError as exc:
            ctx._event("invocation_end", error=True)
            return _error_envelope(context_id, str(exc), exc.kind)
        except CalleeError as exc:
            ctx._event("invocation_end", error=True)
            return _error_envelope(context_id, str(exc), exc.kind)
        except (TransportError, ThrottleError, ConfigurationError) as exc:
            ctx._event("invocation_end", error=True)
            return _error_envelope(context_id, str(exc), "server")
        except Exception as exc:  # noqa: BLE001 - fault isolation boundary
            ctx._event("invocation_end", error=True)
            return _error_envelope(context_id, f"{type(exc).__name__}: {exc}", "server")
        ctx._event("invocation_end")
        return {ENVELOPE_KEY: {"ctx": context_id}, "payload": result}

    handler.fn_name = fn_name  # type: ignore[attr-defined]
    return handler


def _error_envelope(context_id: str, message: str, kind: str) -> dict:
    return {ENVELOPE_KEY: {"ctx": context_id}, "error": {"message": message, "kind": kind}}


def envelope_status(envelope: dict) -> int:
    """HTTP status a platform should answer with for a handler envelope."""
    error = envelope.get("error")
    if not error:
        return 200
    return 400 if error.get("kind") == "client" else 500
