"""Deployment compilation: config + application -> per-function artifacts.

"Compilation" here is configuration binding, not source rewriting: an
artifact pairs a handler reference with the full endpoint map and the
resolved environment (external-service endpoints plus per-function
overrides). Because function names are globally unique and each platform
exposes one URL scheme, every endpoint is known before anything is
deployed, which is what lets a function call any other function no matter
where either of them landed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, ValidationFailure

#: Scheme for function endpoints on a platform host.
FUNCTION_PATH = "/fn/{name}"

#: Default deterministic ports for managed platforms that omit one, so that
#: standalone compilation stays pure. At run time the manager substitutes
#: the port the platform actually bound.
DEFAULT_PORT_BASE = 7100


@dataclass(frozen=True)
class DeploymentArtifact:
    """Everything one function needs to run on its target platform."""

    fn: str
    app: str
    platform_id: str
    endpoint_map: Mapping[str, str]
    env: Mapping[str, str]

    @property
    def endpoint(self) -> str:
        return self.endpoint_map[self.fn]

    def to_doc(self) -> dict:
        return {
            "fn": self.fn,
            "app": self.app,
            "platform_id": self.platform_id,
            "endpoint_map": dict(self.endpoint_map),
            "env": dict(self.env),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "DeploymentArtifact":
        return cls(
            fn=doc["fn"],
            app=doc["app"],
            platform_id=doc["platform_id"],
            endpoint_map=dict(doc["endpoint_map"]),
            env=dict(doc["env"]),
        )


@dataclass(frozen=True)
class Application:
    """A benchmark application: named, instrumented handlers plus metadata."""

    name: str
    handlers: Mapping[str, object]
    entrypoint: str
    call_graph: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def function_names(self) -> tuple[str, ...]:
        return tuple(self.handlers)


def function_endpoint(host_url: str, name: str) -> str:
    """Endpoint URL for ``name`` on a platform reachable at ``host_url``."""
    return host_url.rstrip("/") + FUNCTION_PATH.format(name=name)


def platform_host_url(platform_id: str, entry: Mapping, index: int) -> str:
    """Base URL of a platform from its config entry.

    Attached platforms carry an explicit admin endpoint; managed ones use
    their configured host/port, falling back to a deterministic default
    port so compilation never depends on runtime state.
    """
    if "admin_endpoint" in entry:
        return str(entry["admin_endpoint"]).rstrip("/")
    host = entry.get("host", "127.0.0.1")
    port = entry.get("port") or DEFAULT_PORT_BASE + index
    return f"http://{host}:{port}"


def validate(function_names: Sequence[str], config: Mapping) -> list[str]:
    """Check a deployment config; return the full list of violations.

    Verifies global name uniqueness, a total function->platform mapping,
    and that every referenced platform and external service resolves.
    Never fail-fast: callers get everything that is wrong at once.
    """
    violations: list[str] = []

    seen: set[str] = set()
    for name in function_names:
        if name in seen:
            violations.append(f"duplicate name: {name}")
        seen.add(name)

    functions = config.get("functions")
    if not isinstance(functions, Mapping):
        violations.append("config missing 'functions' mapping")
        functions = {}
    platforms = config.get("platforms")
    if not isinstance(platforms, Mapping):
        violations.append("config missing 'platforms' mapping")
        platforms = {}

    for name in seen:
        if name not in functions:
            violations.append(f"missing mapping: {name}")
    for name, entry in functions.items():
        if name not in seen:
            violations.append(f"unknown function in config: {name}")
        platform_id = (entry or {}).get("platform")
        if platform_id is None:
            violations.append(f"function {name} has no platform assignment")
        elif platform_id not in platforms:
            violations.append(f"function {name} references unknown platform: {platform_id}")

    for platform_id, entry in platforms.items():
        if not isinstance(entry, Mapping) or ("profile" not in entry and "admin_endpoint" not in entry):
            violations.append(f"platform {platform_id} needs 'profile' or 'admin_endpoint'")

    for service, value in (config.get("external_services") or {}).items():
        if isinstance(value, str):
            if value != "managed" and not value.startswith("http"):
                violations.append(f"external service {service}: not a URL or 'managed'")
        elif isinstance(value, Mapping):
            if not value.get("managed") and "endpoint" not in value:
                violations.append(f"external service {service}: needs endpoint or managed=true")
        else:
            violations.append(f"external service {service}: unrecognized entry")

    return violations


def compile_deployment(app: Application, config: Mapping) -> list[DeploymentArtifact]:
    """Produce one artifact per function with a shared, total endpoint map.

    Pure: identical (app, config) inputs yield identical artifacts. The
    endpoint map covers every application function; external-service
    endpoints land in each artifact's env under the upper-cased service
    name (managed services get a placeholder the manager resolves at
    provisioning time).
    """
    violations = validate(app.function_names, config)
    if violations:
        raise ValidationFailure(violations)

    platforms = config["platforms"]
    platform_order = {pid: i for i, pid in enumerate(platforms)}
    host_urls = {
        pid: platform_host_url(pid, entry, platform_order[pid])
        for pid, entry in platforms.items()
    }

    endpoint_map = {
        name: function_endpoint(host_urls[config["functions"][name]["platform"]], name)
        for name in app.function_names
    }

    service_env: dict[str, str] = {}
    for service, value in (config.get("external_services") or {}).items():
        if isinstance(value, str):
            service_env[service.upper()] = value
        else:
            service_env[service.upper()] = value.get("endpoint", "managed")

    artifacts = []
    for name in app.function_names:
        entry = config["functions"][name]
        env = dict(service_env)
        env.update({str(k): str(v) for k, v in (entry.get("env") or {}).items()})
        artifacts.append(
            DeploymentArtifact(
                fn=name,
                app=app.name,
                platform_id=entry["platform"],
                endpoint_map=endpoint_map,
                env=env,
            )
        )
    return artifacts


def resolve_endpoint(artifact: DeploymentArtifact, name: str) -> str:
    """URL for a canonical function name from an artifact's endpoint map."""
    endpoint = artifact.endpoint_map.get(name)
    if endpoint is None:
        raise ConfigurationError(f"no endpoint for function {name!r}")
    return endpoint


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_artifacts(artifacts: Iterable[DeploymentArtifact], out_path: str) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump([a.to_doc() for a in artifacts], fh, indent=2, sort_keys=True)
        fh.write("\n")
