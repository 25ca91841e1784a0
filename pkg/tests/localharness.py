"""In-memory test harness: runs instrumented handlers without sockets.

Dispatches function calls and KV operations directly through the token
envelope protocol, so the tracing behavior under test is exactly the
production path minus HTTP and injected delays. One warm executor per
function; carts live in a plain dict.
"""
from __future__ import annotations

import json

from befaas import registry
from befaas.errors import TransportCallError
from befaas.tracing import ENVELOPE_KEY, HandlerRuntime, envelope_status


class LocalHarness:
    def __init__(self, app=None, env_extra: dict | None = None, platform: str = "local"):
        self.app = app or registry.get_app("webshop")
        self.platform = platform
        self.kv_store: dict = {}
        self.kv_ops: list[str] = []
        self.lines: dict[str, list[str]] = {fn: [] for fn in self.app.function_names}
        self.executor_envs: dict[str, dict] = {fn: {} for fn in self.app.function_names}
        self.endpoint_map = {fn: f"http://local/fn/{fn}" for fn in self.app.function_names}
        self.env = {"KV": "http://local/kv"}
        if env_extra:
            self.env.update(env_extra)

    # -- transport -----------------------------------------------------------

    def transport(self, url: str, doc: dict) -> dict:
        if url.endswith("/kv"):
            return self._kv(doc)
        name = url.rsplit("/", 1)[-1]
        handler = self.app.handlers[name]
        envelope = handler(doc, self._runtime(name))
        status = envelope_status(envelope)
        if status != 200:
            raise TransportCallError(status, envelope)
        return envelope

    def _kv(self, doc: dict) -> dict:
        op, key = doc["op"], doc["key"]
        self.kv_ops.append(op)
        if op == "get":
            return {"found": key in self.kv_store, "value": self.kv_store.get(key)}
        if op == "set":
            self.kv_store[key] = doc["value"]
            return {"ok": True}
        if op == "delete":
            return {"ok": True, "existed": self.kv_store.pop(key, None) is not None}
        raise AssertionError(f"bad kv op {op}")

    def _runtime(self, name: str) -> HandlerRuntime:
        return HandlerRuntime(
            fn=name,
            platform=self.platform,
            executor_env=self.executor_envs[name],
            endpoint_map=self.endpoint_map,
            env=self.env,
            emit=self.lines[name].append,
            transport=self.transport,
        )

    # -- driving -------------------------------------------------------------

    def invoke(self, fn: str, payload, token: dict | None = None) -> dict:
        """Invoke a function directly; returns the response envelope."""
        request = {"payload": payload}
        if token:
            request[ENVELOPE_KEY] = token
        handler = self.app.handlers[fn]
        return handler(request, self._runtime(fn))

    def frontend(self, payload) -> dict:
        return self.invoke(self.app.entrypoint, payload)

    def events(self) -> list[dict]:
        out = []
        for lines in self.lines.values():
            out.extend(json.loads(line) for line in lines)
        return out
