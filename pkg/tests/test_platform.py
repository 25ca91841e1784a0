import json
import threading
import time

import pytest

from befaas import httpjson, registry
from befaas.compiler import Application, DeploymentArtifact, compile_deployment, function_endpoint
from befaas.errors import TransportCallError, TransportError
from befaas.simplatform import (
    AdminClient,
    DelaySpec,
    KVService,
    PROFILE_PRESETS,
    PlatformProfile,
    profile_from_config,
)
from befaas.tracing import wrap_handler
from befaas.webshop import build_app

APP = build_app()


def _sleepy(payload, ctx):
    time.sleep(float((payload or {}).get("sleep_s", 0)))
    return {"ok": True}


def _boom(payload, ctx):
    raise RuntimeError("injected failure")


TEST_APP = Application(
    name="unittest-app",
    handlers={
        "sleepy": wrap_handler("sleepy", _sleepy),
        "boom": wrap_handler("boom", _boom),
    },
    entrypoint="sleepy",
)
registry.register_app(TEST_APP)


def artifact_for(fn, platform, app=TEST_APP, env=None):
    endpoint_map = {
        name: function_endpoint(platform.base_url, name) for name in app.function_names
    }
    return DeploymentArtifact(
        fn=fn, app=app.name, platform_id=platform.platform_id,
        endpoint_map=endpoint_map, env=env or {},
    ).to_doc()


def invoke(platform, fn, payload=None, timeout=30.0):
    url = function_endpoint(platform.base_url, fn)
    return httpjson.post_json(url, {"payload": payload or {}}, timeout)


def platform_events(platform, fn):
    return [json.loads(line) for line in platform.fetch_logs(fn)]


# ---------------------------------------------------------------------------
# Deploy / logs / remove
# ---------------------------------------------------------------------------


class TestAdminSurface:
    def test_deploy_returns_endpoint_of_expected_form(self, make_platform):
        platform = make_platform()
        endpoint = platform.deploy_artifact(artifact_for("sleepy", platform))
        assert endpoint == f"{platform.base_url}/fn/sleepy"

    def test_duplicate_deploy_rejected(self, make_platform):
        platform = make_platform()
        client = AdminClient(platform.admin_endpoint)
        client.deploy(artifact_for("sleepy", platform))
        with pytest.raises(TransportCallError) as err:
            client.deploy(artifact_for("sleepy", platform))
        assert err.value.status == 409

    def test_seventeen_artifacts_seventeen_endpoints(self, make_platform):
        platform = make_platform()
        config = {
            "functions": {fn: {"platform": "sim"} for fn in APP.function_names},
            "platforms": {"sim": {"profile": "scaler", "port": platform._port}},
            "external_services": {"kv": "http://127.0.0.1:1/kv"},
        }
        endpoints = {
            platform.deploy_artifact(a.to_doc()) for a in compile_deployment(APP, config)
        }
        assert len(endpoints) == 17
        assert platform.stats()["deployment_count"] == 17

    def test_logs_empty_before_any_invocation(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        assert platform.fetch_logs("sleepy") == []

    def test_logs_at_least_two_lines_per_invocation(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        n = 5
        for _ in range(n):
            invoke(platform, "sleepy")
        assert len(platform.fetch_logs("sleepy")) >= 2 * n

    def test_unknown_fn_logs_is_error(self, make_platform):
        platform = make_platform()
        client = AdminClient(platform.admin_endpoint)
        with pytest.raises(TransportCallError) as err:
            client.logs("ghost")
        assert err.value.status == 404

    def test_handler_error_marks_invocation_end(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("boom", platform))
        with pytest.raises(TransportCallError) as err:
            invoke(platform, "boom")
        assert err.value.status == 500
        events = platform_events(platform, "boom")
        ends = [e for e in events if e["event_kind"] == "invocation_end"]
        assert ends and all(e.get("error") for e in ends)

    def test_remove_then_invoke_is_transport_error(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        invoke(platform, "sleepy")
        platform.remove_function("sleepy")
        with pytest.raises(TransportCallError) as err:
            invoke(platform, "sleepy")
        assert err.value.status == 404
        assert err.value.body["error"]["kind"] == "unreachable"

    def test_remove_retains_logs(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        invoke(platform, "sleepy")
        before = platform.fetch_logs("sleepy")
        platform.remove_function("sleepy")
        assert platform.fetch_logs("sleepy") == before

    def test_remove_all_reports_zero_deployments(self, make_platform):
        platform = make_platform()
        for fn in TEST_APP.function_names:
            platform.deploy_artifact(artifact_for(fn, platform))
        for fn in TEST_APP.function_names:
            platform.remove_function(fn)
        assert platform.stats()["deployment_count"] == 0

    def test_teardown_idempotent(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        platform.teardown()
        platform.teardown()
        assert platform.stats()["deployment_count"] == 0


# ---------------------------------------------------------------------------
# Cold starts and executor life cycle
# ---------------------------------------------------------------------------


class TestColdStarts:
    def test_first_invocation_is_cold_and_delayed(self, make_platform):
        platform = make_platform(cold_start_delay_ms=80, network_delay_ms=0)
        platform.deploy_artifact(artifact_for("sleepy", platform))
        t0 = time.perf_counter()
        invoke(platform, "sleepy")
        elapsed_ms = (time.perf_counter() - t0) * 1000
        assert elapsed_ms >= 80
        kinds = [e["event_kind"] for e in platform_events(platform, "sleepy")]
        assert kinds.count("cold_start") == 1

    def test_second_sequential_invocation_reuses_executor(self, make_platform):
        platform = make_platform(cold_start_delay_ms=20)
        platform.deploy_artifact(artifact_for("sleepy", platform))
        invoke(platform, "sleepy")
        invoke(platform, "sleepy")
        kinds = [e["event_kind"] for e in platform_events(platform, "sleepy")]
        assert kinds.count("cold_start") == 1
        assert platform.stats()["functions"]["sleepy"]["executors_created"] == 1

    def test_burst_of_five_forces_five_cold_starts(self, make_platform):
        # Forced by per-executor concurrency 1 plus the selection rule:
        # five overlapping requests cannot share any executor.
        platform = make_platform(cold_start_delay_ms=150, max_executors=8)
        platform.deploy_artifact(artifact_for("sleepy", platform))
        barrier = threading.Barrier(5)
        errors = []

        def hit():
            barrier.wait()
            try:
                invoke(platform, "sleepy", {"sleep_s": 0.05})
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=hit) for _ in range(5)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        kinds = [e["event_kind"] for e in platform_events(platform, "sleepy")]
        assert kinds.count("cold_start") == 5
        assert platform.stats()["functions"]["sleepy"]["executors_created"] == 5

    def test_idle_timeout_reclaims_executor(self, make_platform):
        platform = make_platform(
            cold_start_delay_ms=10, executor_idle_timeout_s=0.2, network_delay_ms=0
        )
        platform.deploy_artifact(artifact_for("sleepy", platform))
        invoke(platform, "sleepy")
        time.sleep(0.35)
        invoke(platform, "sleepy")
        kinds = [e["event_kind"] for e in platform_events(platform, "sleepy")]
        assert kinds.count("cold_start") == 2

    def test_cold_start_counts_deterministic_across_runs(self, make_platform):
        def run_once(seed):
            platform = make_platform(
                platform_id=f"det-{seed}", cold_start_delay_ms=5, seed=seed
            )
            platform.deploy_artifact(artifact_for("sleepy", platform))
            for _ in range(6):
                invoke(platform, "sleepy")
            return platform.stats()["functions"]["sleepy"]["executors_created"]

        assert run_once(1) == run_once(2) == 1


# ---------------------------------------------------------------------------
# Capacity and queue policies
# ---------------------------------------------------------------------------


class TestQueuePolicies:
    def _burst(self, platform, count, sleep_s):
        results, errors = [], []
        barrier = threading.Barrier(count)

        def hit():
            barrier.wait()
            try:
                results.append(invoke(platform, "sleepy", {"sleep_s": sleep_s}))
            except TransportCallError as exc:
                errors.append(exc.status)

        threads = [threading.Thread(target=hit) for _ in range(count)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return results, errors

    def test_scale_up_at_capacity_throttles(self, make_platform):
        platform = make_platform(max_executors=2, queue_policy="scale_up")
        platform.deploy_artifact(artifact_for("sleepy", platform))
        results, errors = self._burst(platform, 6, sleep_s=0.3)
        assert errors and all(status == 429 for status in errors)
        assert len(results) == 6 - len(errors)

    def test_queue_when_busy_never_throttles(self, make_platform):
        platform = make_platform(max_executors=2, queue_policy="queue_when_busy")
        platform.deploy_artifact(artifact_for("sleepy", platform))
        results, errors = self._burst(platform, 6, sleep_s=0.1)
        assert errors == []
        assert len(results) == 6
        # Capacity invariant: never more executors than the cap.
        assert platform.stats()["functions"]["sleepy"]["executors_created"] <= 2

    def test_queue_serializes_on_single_executor(self, make_platform):
        platform = make_platform(max_executors=1, queue_policy="queue_when_busy")
        platform.deploy_artifact(artifact_for("sleepy", platform))
        t0 = time.perf_counter()
        results, errors = self._burst(platform, 3, sleep_s=0.1)
        elapsed = time.perf_counter() - t0
        assert errors == [] and len(results) == 3
        assert elapsed >= 0.3  # strictly serialized


# ---------------------------------------------------------------------------
# KV service
# ---------------------------------------------------------------------------


class TestKVService:
    def test_set_then_get(self, make_kv):
        kv = make_kv()
        assert httpjson.post_json(kv.endpoint, {"op": "set", "key": "k", "value": "v"})["ok"]
        doc = httpjson.post_json(kv.endpoint, {"op": "get", "key": "k"})
        assert doc == {"found": True, "value": "v"}

    def test_get_absent_is_not_found_not_error(self, make_kv):
        kv = make_kv()
        assert httpjson.post_json(kv.endpoint, {"op": "get", "key": "nope"}) == {
            "found": False,
            "value": None,
        }

    def test_delete(self, make_kv):
        kv = make_kv()
        httpjson.post_json(kv.endpoint, {"op": "set", "key": "k", "value": 1})
        assert httpjson.post_json(kv.endpoint, {"op": "delete", "key": "k"})["existed"]
        assert not httpjson.post_json(kv.endpoint, {"op": "get", "key": "k"})["found"]

    def test_set_without_value_rejected(self, make_kv):
        kv = make_kv()
        with pytest.raises(TransportCallError) as err:
            httpjson.post_json(kv.endpoint, {"op": "set", "key": "k"})
        assert err.value.status == 400

    def test_per_direction_delay_visible_in_round_trip(self, make_kv):
        # Wall-clock oracle: 8 ms per direction means >= 16 ms client RTT.
        kv = make_kv(query_delay_ms=8)
        httpjson.post_json(kv.endpoint, {"op": "set", "key": "w", "value": 0})  # warm connection
        t0 = time.perf_counter()
        httpjson.post_json(kv.endpoint, {"op": "get", "key": "w"})
        assert (time.perf_counter() - t0) * 1000 >= 16


# ---------------------------------------------------------------------------
# Profiles and clock skew
# ---------------------------------------------------------------------------


class TestProfiles:
    def test_presets_contrast_queue_policies(self):
        assert PROFILE_PRESETS["scaler"].queue_policy == "scale_up"
        assert PROFILE_PRESETS["scaler"].cold_start_delay_ms.constant_ms == 250
        assert PROFILE_PRESETS["queuer"].queue_policy == "queue_when_busy"
        assert PROFILE_PRESETS["queuer"].cold_start_delay_ms.constant_ms == 500

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            PlatformProfile(invoke_overhead_ms=-1)
        with pytest.raises(ValueError):
            PlatformProfile(max_executors=0)
        with pytest.raises(ValueError):
            DelaySpec.parse(-3)

    def test_lognormal_delay_sampling_is_seeded(self):
        import random

        spec = DelaySpec.parse({"dist": "lognormal", "mu": 2.0, "sigma": 0.5})
        a = [spec.sample(random.Random(7)) for _ in range(3)]
        b = [spec.sample(random.Random(7)) for _ in range(3)]
        assert a == b
        assert all(x > 0 for x in a)

    def test_clock_skew_shifts_event_timestamps(self, make_platform):
        from befaas.clock import now_us

        platform = make_platform(profile={"clock_skew_ms": 500, "network_delay_ms": 0})
        platform.deploy_artifact(artifact_for("sleepy", platform))
        before = now_us()
        invoke(platform, "sleepy")
        after = now_us()
        start = [
            e for e in platform_events(platform, "sleepy")
            if e["event_kind"] == "invocation_start"
        ][0]
        # Timestamp sits ~500 ms ahead of the true window.
        assert start["ts_us"] > after + 400_000
        assert start["ts_us"] < before + 600_000

    def test_platform_stopped_means_transport_error(self, make_platform):
        platform = make_platform()
        platform.deploy_artifact(artifact_for("sleepy", platform))
        url = function_endpoint(platform.base_url, "sleepy")
        platform.stop()
        with pytest.raises(TransportError):
            httpjson.post_json(url, {"payload": {}}, timeout=2.0)
