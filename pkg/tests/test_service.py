import json
import warnings

import pytest

from vodu_alloc import cli
from vodu_alloc.errors import NumericError
from vodu_alloc.harness import runner

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from vodu_alloc.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


def body(out, **kw):
    return {"config": {}, "seeds": [0], "algos": ["ppo"], "out": str(out), "budget_steps": 300, **kw}


class TestService:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200 and resp.json()["status"] == "ok"

    def test_train_eval_report(self, client, tmp_path):
        resp = client.post("/train", json=body(tmp_path))
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["failed"] == 0
        assert [r["run_id"] for r in doc["runs"]] == ["train-ppo-s0"]
        resp = client.post("/eval", json=body(tmp_path, algos=["ppo", "greedy", "exact"]))
        assert resp.status_code == 200
        assert resp.json()["result"]["eval"].endswith("eval.csv")
        resp = client.post("/report", json=body(tmp_path))
        assert resp.json()["result"]["rows"] == 3 * 4

    def test_solve(self, client, tmp_path):
        doc = client.post("/solve", json=body(tmp_path)).json()
        assert doc["result"]["exact"]["energy_w"] <= doc["result"]["greedy"]["energy_w"]

    def test_sweep(self, client, tmp_path):
        cfg = {"sweep": {"hidden_widths": [4]}}
        doc = client.post("/sweep", json=body(tmp_path, config=cfg, budget_steps=100)).json()
        assert [r["run_id"] for r in doc["runs"]] == ["sweep-ppo-w4-s0"]

    @pytest.mark.parametrize(
        "path, extra",
        [
            ("/train", {"config": {"bogus": 1}}),
            ("/train", {"algos": ["dqn"]}),
            ("/eval", {"algos": ["acer"]}),
            ("/report", {}),
        ],
    )
    def test_client_errors_are_400(self, client, tmp_path, path, extra):
        resp = client.post(path, json=body(tmp_path, **extra))
        assert resp.status_code == 400
        assert resp.json()["error"] == "ConfigError"

    def test_schema_validation(self, client, tmp_path):
        assert client.post("/train", json=body(tmp_path, budget_steps=0)).status_code == 422
        assert client.post("/train", json={"unexpected": 1}).status_code == 422


class TestCli:
    def test_full_pipeline_exit_zero(self, tmp_path, capsys, repo_root):
        out = str(tmp_path)
        config = str(repo_root / "configs" / "desk.yaml")
        common = ["--config", config, "--seed", "0", "--out", out, "--budget-steps", "300"]
        assert cli.main(["train", "--algo", "ppo,acer", *common]) == 0
        assert cli.main(["eval", "--algo", "ppo", "--algo", "acer,greedy,exact", *common]) == 0
        assert cli.main(["report", *common]) == 0
        assert cli.main(["solve", *common]) == 0
        printed = capsys.readouterr().out
        assert "train-acer-s0" in printed
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert all(r["status"] == "ok" for r in manifest["runs"])
        assert (tmp_path / "report.csv").exists()

    def test_failed_run_exit_one(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericError("gradient became inf")

        monkeypatch.setattr(runner, "_train_one", boom)
        assert cli.main(["train", "--algo", "ppo", "--out", str(tmp_path), "--budget-steps", "10"]) == 1

    def test_rejected_request_exit_two(self, tmp_path, capsys):
        assert cli.main(["eval", "--algo", "acer", "--out", str(tmp_path)]) == 2
        assert "acer" in capsys.readouterr().err

    def test_unreadable_config_exit_two(self, tmp_path):
        assert cli.main(["train", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_argument_parsing(self):
        args = cli.build_parser().parse_args(["sweep", "--seed", "1,2", "--seed", "3", "--algo", "acer"])
        assert args.seed == [1, 2, 3] and args.algo == ["acer"] and args.command == "sweep"
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["train", "--seed", "x"])
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["fly"])
