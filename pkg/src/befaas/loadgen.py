"""Open-loop load generation: phased arrival rates and customer workflows.

A load profile is an ordered list of phases, each interpolating linearly
between a start and end rate (workflows per second). The default arrival
process is deterministic: an arrival fires whenever the running integral
of the rate crosses an integer, so the arrival count over any prefix is
exactly the floor of the integrated rate — runs are reproducible to the
request. A seeded Poisson mode (thinning) is available for realism
studies.

Workflows are short scripted customer sessions (1 to 9 frontend requests
each, think time zero). Arrivals are launched on schedule regardless of
how slow earlier workflows are responding; slow launches are recorded as
lag, never silently dropped.
"""
from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass, field

from . import httpjson
from .clock import now_us
from .errors import TransportCallError, TransportError
from .tracing import ENVELOPE_KEY

# ---------------------------------------------------------------------------
# Load profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Phase:
    duration_s: float
    rate_start: float
    rate_end: float

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("phase duration must be > 0")
        if self.rate_start < 0 or self.rate_end < 0:
            raise ValueError("rates must be >= 0")

    def integral(self, t: float) -> float:
        """Workflows accumulated in this phase up to local time ``t``."""
        t = min(max(t, 0.0), self.duration_s)
        slope = (self.rate_end - self.rate_start) / self.duration_s
        return self.rate_start * t + 0.5 * slope * t * t


@dataclass(frozen=True)
class LoadProfile:
    name: str
    phases: tuple[Phase, ...]

    @property
    def total_duration_s(self) -> float:
        return sum(p.duration_s for p in self.phases)


def rate_at(profile: LoadProfile, t_s: float) -> float:
    """Piecewise-linear rate at time ``t_s``.

    At a phase boundary the later phase applies; ``t_s`` must lie in
    [0, total duration).
    """
    if t_s < 0 or t_s >= profile.total_duration_s:
        raise ValueError(f"t={t_s} outside [0, {profile.total_duration_s})")
    offset = 0.0
    for phase in profile.phases:
        if t_s < offset + phase.duration_s:
            local = t_s - offset
            slope = (phase.rate_end - phase.rate_start) / phase.duration_s
            return phase.rate_start + slope * local
        offset += phase.duration_s
    raise AssertionError("unreachable")


def profile_integral(profile: LoadProfile, t_s: float) -> float:
    """Closed-form integral of the rate over [0, t_s]."""
    total = 0.0
    offset = 0.0
    for phase in profile.phases:
        total += phase.integral(t_s - offset)
        offset += phase.duration_s
    return total


def _invert_phase(phase: Phase, target: float) -> float:
    """Local time at which this phase's running integral reaches ``target``."""
    slope = (phase.rate_end - phase.rate_start) / phase.duration_s
    if abs(slope) < 1e-12:
        return target / phase.rate_start
    # Solve 0.5*slope*t^2 + rate_start*t = target for the root in range.
    disc = phase.rate_start**2 + 2.0 * slope * target
    return (-phase.rate_start + math.sqrt(max(disc, 0.0))) / slope


def generate_arrivals(
    profile: LoadProfile, seed: int | None = None, mode: str = "deterministic"
) -> list[float]:
    """Arrival timestamps (seconds from run start) for a whole profile.

    Deterministic mode places the k-th arrival where the integrated rate
    first reaches k, so exactly floor(integral) arrivals occur. Poisson
    mode draws a seeded inhomogeneous process via thinning.
    """
    if mode == "poisson":
        return _poisson_arrivals(profile, seed)
    if mode != "deterministic":
        raise ValueError(f"unknown arrival mode: {mode!r}")

    arrivals: list[float] = []
    offset = 0.0
    cumulative = 0.0
    for phase in profile.phases:
        phase_total = phase.integral(phase.duration_s)
        k = math.floor(cumulative) + 1
        while k <= cumulative + phase_total + 1e-9:
            local = _invert_phase(phase, k - cumulative)
            if local <= phase.duration_s + 1e-9:
                arrivals.append(offset + min(local, phase.duration_s))
                k += 1
            else:
                break
        cumulative += phase_total
        offset += phase.duration_s
    return arrivals


def _poisson_arrivals(profile: LoadProfile, seed: int | None) -> list[float]:
    rng = random.Random(seed)
    rate_max = max(max(p.rate_start, p.rate_end) for p in profile.phases)
    if rate_max <= 0:
        return []
    total = profile.total_duration_s
    arrivals = []
    t = 0.0
    while True:
        t += rng.expovariate(rate_max)
        if t >= total:
            return arrivals
        if rng.random() * rate_max < rate_at(profile, t):
            arrivals.append(t)


_MIN = 60.0

#: Shipped profiles. The three full-scale ones carry the canonical
#: parameters (constant 20/s for 15 min; linear 0->20 over 15 min; spike
#: 3.5/s -> 20/s after 5 min, high for 10 min, back to 3.5/s for 5 min);
#: the -60s variants are desk-scale versions for quick experiments.
PROFILE_PRESETS: dict[str, LoadProfile] = {
    "default": LoadProfile("default", (Phase(15 * _MIN, 20, 20),)),
    "growth": LoadProfile("growth", (Phase(15 * _MIN, 0, 20),)),
    "spike": LoadProfile(
        "spike",
        (Phase(5 * _MIN, 3.5, 3.5), Phase(10 * _MIN, 20, 20), Phase(5 * _MIN, 3.5, 3.5)),
    ),
    "default-60s": LoadProfile("default-60s", (Phase(60, 2, 2),)),
    "growth-60s": LoadProfile("growth-60s", (Phase(60, 0, 4),)),
    "spike-60s": LoadProfile(
        "spike-60s", (Phase(15, 1, 1), Phase(30, 4, 4), Phase(15, 1, 1))
    ),
}


def profile_from_config(value) -> LoadProfile:
    """Resolve a config entry: preset name or inline phase list."""
    if isinstance(value, LoadProfile):
        return value
    if isinstance(value, str):
        if value not in PROFILE_PRESETS:
            raise ValueError(f"unknown load profile preset: {value!r}")
        return PROFILE_PRESETS[value]
    if isinstance(value, dict) and "phases" in value:
        phases = tuple(
            Phase(float(p["duration_s"]), float(p["rate_start"]), float(p["rate_end"]))
            for p in value["phases"]
        )
        return LoadProfile(value.get("name", "inline"), phases)
    raise ValueError(f"unrecognized load profile: {value!r}")


# ---------------------------------------------------------------------------
# Workflows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkflowSpec:
    """A named customer session: ordered frontend actions, zero think time."""

    name: str
    weight: float
    steps: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.steps) <= 9:
            raise ValueError("workflows must issue between 1 and 9 requests")
        if self.weight <= 0:
            raise ValueError("weight must be > 0")


#: Four shipped customer sessions spanning the 1-9 request range.
WORKFLOW_PRESETS: tuple[WorkflowSpec, ...] = (
    WorkflowSpec("browser", 0.45, ("home", "viewProduct", "search")),
    WorkflowSpec(
        "window-shopper", 0.25, ("home", "viewProduct", "addToCart", "viewCart", "emptyCart")
    ),
    WorkflowSpec(
        "buyer",
        0.15,
        (
            "home",
            "viewProduct",
            "addToCart",
            "viewCart",
            "setCurrency",
            "checkout",
            "viewOrderConfirmation",
            "home",
            "viewProduct",
        ),
    ),
    WorkflowSpec("currency-switcher", 0.15, ("home", "setCurrency", "viewProduct")),
)

#: Card number fixture that passes the checksum in the payment function.
VALID_CARD = "4242424242424242"

_NON_BASE_CURRENCIES = ("EUR", "GBP", "JPY", "CHF", "CAD")


def _catalog_ids() -> list[str]:
    from .webshop import catalog

    return catalog.product_ids()


def build_action(action: str, state: dict, rng: random.Random) -> dict:
    """Request payload for one workflow step, given the session state."""
    if action == "home":
        return {"action": "home", "user_id": state.get("user_id")}
    if action == "viewProduct":
        product_id = rng.choice(_catalog_ids())
        state["product_id"] = product_id
        payload = {"action": "viewProduct", "id": product_id}
        if state.get("currency"):
            payload["currency"] = state["currency"]
        return payload
    if action == "search":
        return {"action": "search", "query": rng.choice(["kitchen", "sale", "watch", "bike"])}
    if action == "setCurrency":
        state["currency"] = rng.choice(_NON_BASE_CURRENCIES)
        return {"action": "setCurrency", "currency": state["currency"]}
    if action == "addToCart":
        return {
            "action": "addToCart",
            "user_id": _user(state, rng),
            "product_id": state.get("product_id") or rng.choice(_catalog_ids()),
            "quantity": rng.randint(1, 3),
        }
    if action in ("viewCart", "emptyCart"):
        return {"action": action, "user_id": _user(state, rng)}
    if action == "checkout":
        return {
            "action": "checkout",
            "user_id": _user(state, rng),
            "currency": state.get("currency", "USD"),
            "card_number": VALID_CARD,
            "address": {"street": "1 Main St", "city": "Springfield", "zip": "12345"},
        }
    if action == "viewOrderConfirmation":
        return {"action": "viewOrderConfirmation", "order": state.get("order") or {}}
    raise ValueError(f"unknown workflow action: {action!r}")


def _user(state: dict, rng: random.Random) -> str:
    if not state.get("user_id"):
        state["user_id"] = f"u-{rng.getrandbits(48):012x}"
    return state["user_id"]


def _update_state(action: str, response_payload: dict, state: dict) -> None:
    if action == "home" and isinstance(response_payload, dict):
        state.setdefault("user_id", response_payload.get("user_id"))
    if action == "checkout" and isinstance(response_payload, dict):
        state["order"] = response_payload.get("order")


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass
class ClientRecord:
    """Client-side ground truth for one frontend request."""

    workflow: str
    arrival_index: int
    step: int
    action: str
    send_ts_us: int
    recv_ts_us: int
    status: str
    context_id: str | None

    def to_doc(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LoadRunResult:
    """All client records of a run plus scheduling fidelity metrics."""

    records: list[ClientRecord]
    workflow_sequence: list[str]
    launch_lags_ms: list[float]
    scheduled: int

    def successful_workflows(self, workflows: tuple[WorkflowSpec, ...]) -> int:
        """Workflows that completed every step with an ok status."""
        expected = {spec.name: len(spec.steps) for spec in workflows}
        per_wf: dict[int, list[ClientRecord]] = {}
        for record in self.records:
            per_wf.setdefault(record.arrival_index, []).append(record)
        return sum(
            1
            for recs in per_wf.values()
            if all(r.status == "ok" for r in recs)
            and len(recs) == expected.get(recs[0].workflow, len(recs))
        )


def execute_workflow(
    spec: WorkflowSpec,
    frontend_endpoint: str,
    rng: random.Random | None = None,
    arrival_index: int = 0,
    timeout_s: float = httpjson.DEFAULT_TIMEOUT_S,
    close_connections: bool = True,
) -> list[ClientRecord]:
    """Run one workflow: steps sequentially, each awaiting the previous.

    A transport failure abandons the remaining steps of this workflow (but
    never affects other workflows); the failing step is recorded. Callers
    that hammer workflows from one thread can pass
    ``close_connections=False`` to keep the connection warm between
    workflows (and close once at the end).
    """
    rng = rng or random.Random()
    state: dict = {}
    records: list[ClientRecord] = []
    try:
        for step, action in enumerate(spec.steps):
            payload = build_action(action, state, rng)
            send = now_us()
            status = "ok"
            context_id = None
            try:
                doc = httpjson.post_json(frontend_endpoint, {"payload": payload}, timeout_s)
                context_id = (doc.get(ENVELOPE_KEY) or {}).get("ctx")
                _update_state(action, doc.get("payload"), state)
            except TransportCallError as exc:
                status = f"error:{exc.status}"
                context_id = (exc.body.get(ENVELOPE_KEY) or {}).get("ctx")
            except TransportError:
                status = "transport_error"
            records.append(
                ClientRecord(
                    workflow=spec.name,
                    arrival_index=arrival_index,
                    step=step,
                    action=action,
                    send_ts_us=send,
                    recv_ts_us=now_us(),
                    status=status,
                    context_id=context_id,
                )
            )
            if status == "transport_error":
                break
    finally:
        if close_connections:
            httpjson.close_thread_connections()
    return records


def draw_workflow_sequence(
    workflows: tuple[WorkflowSpec, ...], count: int, seed: int
) -> list[WorkflowSpec]:
    """Seeded weighted draw of ``count`` workflow types."""
    rng = random.Random(f"{seed}:workflow-types")
    weights = [w.weight for w in workflows]
    return rng.choices(workflows, weights=weights, k=count)


def run_profile(
    profile: LoadProfile,
    workflows: tuple[WorkflowSpec, ...],
    frontend_endpoint: str,
    seed: int = 0,
    arrival_mode: str = "deterministic",
    timeout_s: float = httpjson.DEFAULT_TIMEOUT_S,
) -> LoadRunResult:
    """Drive the frontend with a full profile, open loop.

    Each arrival launches its workflow at its scheduled offset; workflows
    run concurrently while their own steps stay sequential. Workflow types
    come from a seeded weighted draw, and per-workflow randomness is
    derived from (seed, arrival index), so a fixed seed reproduces the
    exact same session sequence.
    """
    arrivals = generate_arrivals(profile, seed=seed, mode=arrival_mode)
    sequence = draw_workflow_sequence(workflows, len(arrivals), seed)

    records: list[ClientRecord] = []
    records_lock = threading.Lock()
    lags_ms: list[float] = []
    threads: list[threading.Thread] = []

    def launch(index: int, spec: WorkflowSpec) -> None:
        rng = random.Random(f"{seed}:workflow:{index}")
        result = execute_workflow(
            spec, frontend_endpoint, rng, arrival_index=index, timeout_s=timeout_s
        )
        with records_lock:
            records.extend(result)

    start = time.perf_counter()
    for index, (at_s, spec) in enumerate(zip(arrivals, sequence)):
        delay = at_s - (time.perf_counter() - start)
        if delay > 0:
            time.sleep(delay)
        lags_ms.append(max(0.0, (time.perf_counter() - start - at_s) * 1000.0))
        thread = threading.Thread(
            target=launch, args=(index, spec), name=f"workflow-{index}", daemon=True
        )
        thread.start()
        threads.append(thread)

    for thread in threads:
        thread.join()

    records.sort(key=lambda r: (r.arrival_index, r.step))
    return LoadRunResult(
        records=records,
        workflow_sequence=[spec.name for spec in sequence],
        launch_lags_ms=lags_ms,
        scheduled=len(arrivals),
    )
