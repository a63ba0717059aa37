import numpy as np
import pytest
from fastapi.testclient import TestClient

from caliblab import __version__
from caliblab.service.app import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


TINY_ORACLE = """
[experiment]
kind = oracle-verify

[oracle]
n_datasets = 4
max_points = 6
dims = 1
n_queries = 4
tolerance = 0.0001
"""


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body == {"status": "ok", "version": __version__}


class TestDatasets:
    def test_interval_sampling_deterministic(self, client):
        req = {"kind": "intervals", "n": 25, "seed": 9, "k": 4, "alpha": 0.5}
        a = client.post("/datasets/sample", json=req).json()
        b = client.post("/datasets/sample", json=req).json()
        assert a == b
        assert a["dim"] == 1 and a["k"] == 4 and a["n"] == 25
        assert a["text"].splitlines()[0] == "1,4,25,9"

    def test_gaussian_constant_mean(self, client):
        req = {"kind": "gaussians", "n": 10, "seed": 1, "mu_value": 0.3, "dim": 5}
        body = client.post("/datasets/sample", json=req).json()
        assert body["dim"] == 5 and body["k"] == 2
        assert set(body["labels"]) <= {1, 2}

    def test_domain_error_maps_to_400(self, client):
        req = {"kind": "intervals", "n": 5, "seed": 0, "k": 3, "alpha": 0.5}
        resp = client.post("/datasets/sample", json=req)
        assert resp.status_code == 400
        assert "even" in resp.json()["detail"]

    def test_shape_error_maps_to_422(self, client):
        resp = client.post("/datasets/sample", json={"kind": "intervals"})
        assert resp.status_code == 422

    def test_noise_endpoint_flips_with_rate_one(self, client):
        data = client.post(
            "/datasets/sample",
            json={"kind": "intervals", "n": 30, "seed": 2, "k": 2, "alpha": 0.5},
        ).json()
        noisy = client.post(
            "/datasets/noise",
            json={"dataset": data, "rate": 1.0, "seed": 3, "pairing": {1: 2, 2: 1}},
        ).json()
        assert noisy["labels"] == [3 - y for y in data["labels"]]


class TestMetrics:
    def test_report_from_probs(self, client):
        probs = [[0.8, 0.2]] * 10
        labels = [1] * 6 + [2] * 4
        body = client.post(
            "/metrics/report", json={"probs": probs, "labels": labels, "n_bins": 10}
        ).json()
        report = body["report"]
        assert report["ece"] == pytest.approx(0.2)
        assert report["accuracy"] == pytest.approx(0.6)
        assert len(report["bins"]) == 10

    def test_report_from_logits_with_temperature(self, client):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((40, 3)).tolist()
        labels = rng.integers(1, 4, size=40).tolist()
        body = client.post(
            "/metrics/report",
            json={"logits": logits, "labels": labels, "temperature": 2.0, "n_bins": 5},
        ).json()
        assert body["report"]["nll"] > 0

    def test_needs_probs_or_logits(self, client):
        resp = client.post("/metrics/report", json={"labels": [1]})
        assert resp.status_code == 400


class TestTemperatureFit:
    def test_overconfident_logits_cooled(self, client):
        rng = np.random.default_rng(4)
        labels = rng.integers(1, 4, size=300)
        shown = labels.copy()
        wrong = rng.random(300) < 0.25
        shown[wrong] = ((shown[wrong] + 1) % 3) + 1
        logits = np.zeros((300, 3))
        logits[np.arange(300), shown - 1] = 20.0
        body = client.post(
            "/temperature/fit",
            json={"logits": logits.tolist(), "labels": labels.tolist()},
        ).json()
        assert body["temperature"] > 1.0
        assert body["n_probes"] >= 4


class TestMixingEndpoint:
    def test_two_point_prediction(self, client):
        body = client.post(
            "/mixing/optimal-prediction",
            json={
                "points": [[0.0], [1.0]],
                "labels": [1, 2],
                "n_classes": 2,
                "d": 1,
                "cap": 2.0,
                "z": [0.25],
            },
        ).json()
        assert body["prediction"] == pytest.approx([0.75, 0.25])
        assert body["n_tuples"] == 2

    def test_uncovered_point_is_400(self, client):
        resp = client.post(
            "/mixing/optimal-prediction",
            json={
                "points": [[0.0], [1.0]],
                "labels": [1, 2],
                "n_classes": 2,
                "d": 1,
                "cap": 2.0,
                "z": [9.0],
            },
        )
        assert resp.status_code == 400


class TestExperimentEndpoint:
    def test_inline_artifacts(self, client):
        body = client.post(
            "/experiments/run", json={"config_text": TINY_ORACLE}
        ).json()
        assert body["status"] == "ok"
        assert body["out_dir"] is None
        paths = {a["path"] for a in body["artifacts"]}
        assert {"summary.csv", "deviations.csv", "record.json"} <= paths
        assert body["summary_csv"].startswith("sweep_value,arm,metric,mean,std")

    def test_out_dir_mode_writes_files(self, client, tmp_path):
        out = tmp_path / "run"
        body = client.post(
            "/experiments/run",
            json={"config_text": TINY_ORACLE, "out_dir": str(out)},
        ).json()
        assert body["status"] == "ok"
        assert (out / "summary.csv").exists()
        assert body["artifacts"] == []

    def test_config_error_is_400(self, client):
        resp = client.post(
            "/experiments/run", json={"config_text": "[experiment]\nkind = nope\n"}
        )
        assert resp.status_code == 400
        assert "unknown experiment kind" in resp.json()["detail"]

    def test_overrides_apply(self, client):
        text = TINY_ORACLE.replace("n_datasets = 4", "n_datasets = 2")
        body = client.post(
            "/experiments/run", json={"config_text": text, "base_seed": 123}
        ).json()
        assert body["status"] == "ok"
