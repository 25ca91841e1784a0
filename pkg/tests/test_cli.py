import json

import pytest

from befaas.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main


@pytest.fixture
def config_file(tmp_path):
    config = {
        "functions": {
            fn: {"platform": "a"}
            for fn in [
                "frontend", "listproducts", "getproduct", "searchproducts",
                "listrecommendations", "getads", "cartkvstorage", "getcart",
                "addcartitem", "emptycart", "currency", "supportedcurrencies",
                "payment", "shipmentquote", "shiporder", "checkout", "email",
            ]
        },
        "platforms": {"a": {"profile": {
            "cold_start_delay_ms": 5,
            "network_delay_ms": 0.5,
            "max_executors": 32,
        }}},
        "external_services": {"kv": "managed"},
        "load_profile": {"phases": [{"duration_s": 3, "rate_start": 1, "rate_end": 1}]},
        "seed": 5,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_compile_writes_artifacts(config_file, tmp_path, capsys):
    out = tmp_path / "compiled"
    assert main(["compile", "--config", config_file, "--out", str(out)]) == EXIT_OK
    artifacts = json.loads((out / "artifacts.json").read_text())
    assert len(artifacts) == 17
    assert {a["fn"] for a in artifacts} >= {"frontend", "checkout"}
    assert "compiled 17 artifacts" in capsys.readouterr().out


def test_compile_validation_exit_code(tmp_path, capsys):
    config = {"functions": {}, "platforms": {}, "load_profile": "default-60s", "seed": 1}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    assert main(["compile", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "validation error" in capsys.readouterr().err


def test_run_analyze_report_round_trip(config_file, tmp_path, capsys):
    bundle_dir = tmp_path / "bundle"
    assert main(["run", "--config", config_file, "--out", str(bundle_dir)]) == EXIT_OK
    assert (bundle_dir / "events.ndjson").exists()

    analysis_dir = tmp_path / "analysis"
    assert main(["analyze", "--bundle", str(bundle_dir), "--out", str(analysis_dir)]) == EXIT_OK
    for name in ("functions.csv", "breakdown.csv", "coldstarts.csv", "summary.txt"):
        assert (analysis_dir / name).exists()

    assert main(["report", "--bundle", str(bundle_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "per-function execution duration" in out
    assert "frontend" in out


def test_run_runtime_failure_exit_code(config_file, tmp_path, capsys):
    # Point the KV service at a dead endpoint and pre-clobber nothing:
    # the run itself completes (workflows record errors), so break harder:
    # reference an attached platform that is not actually there.
    config = json.loads(open(config_file).read())
    config["platforms"]["a"] = {"admin_endpoint": "http://127.0.0.1:1"}
    path = tmp_path / "dead.json"
    path.write_text(json.dumps(config))
    code = main(["run", "--config", str(path), "--out", str(tmp_path / "b")])
    assert code == EXIT_RUNTIME
    assert "run failed" in capsys.readouterr().err


def test_seed_and_profile_flags(config_file, tmp_path, monkeypatch):
    from befaas import loadgen

    blip = loadgen.LoadProfile("blip", (loadgen.Phase(2, 1, 1),))
    monkeypatch.setitem(loadgen.PROFILE_PRESETS, "blip", blip)
    bundle_dir = tmp_path / "seeded"
    code = main(
        [
            "run", "--config", config_file, "--out", str(bundle_dir),
            "--profile", "blip", "--seed", "3",
        ]
    )
    assert code == EXIT_OK
    audit = json.loads((bundle_dir / "audit.json").read_text())
    assert audit["seed"] == 3
    assert audit["profile"] == "blip"
    assert audit["scheduled_workflows"] == 2
