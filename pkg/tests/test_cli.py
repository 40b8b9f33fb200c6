import json

import pytest
from click.testing import CliRunner

from bmbe.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def kb_file(tmp_path, kb_separable):
    path = tmp_path / "kb.json"
    kb_separable.save(path)
    return path


class TestKbCommands:
    def test_build(self, runner, tmp_path):
        schema = tmp_path / "schema.json"
        schema.write_text(json.dumps({
            "features": [{"id": "f1", "name": "fever", "kind": "binary",
                          "values": ["yes", "no"], "question_text": "Fever?"}],
        }))
        records = tmp_path / "records.jsonl"
        records.write_text("\n".join([
            json.dumps({"disease_id": "d1", "findings": {"f1": "yes"}}),
            json.dumps({"disease_id": "d2", "findings": {"f1": "no"}}),
        ]))
        out = tmp_path / "built.json"
        res = runner.invoke(main, ["kb", "build", "--schema", str(schema),
                                   "--records", str(records), "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert "K=2" in res.output
        assert out.exists()

    def test_import_elicited(self, runner, tmp_path):
        tables = tmp_path / "tables.json"
        tables.write_text(json.dumps({
            "d1": {"fever": {"prob_yes": 0.7}},
            "d2": {"fever": {"prob_yes": 0.1}},
        }))
        out = tmp_path / "kb.json"
        res = runner.invoke(main, ["kb", "import-elicited", "--tables", str(tables),
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert out.exists()

    def test_stats_json_and_csv(self, runner, kb_file, tmp_path):
        res = runner.invoke(main, ["kb", "stats", "--kb", str(kb_file)])
        assert res.exit_code == 0
        assert "per_pair_kl" in res.output
        res = runner.invoke(main, ["kb", "stats", "--kb", str(kb_file), "--format", "csv"])
        assert res.exit_code == 0
        assert res.output.startswith("disease_id,feature_id,kl_bits")

    def test_match(self, runner, kb_file):
        res = runner.invoke(main, ["kb", "match", "--kb-a", str(kb_file),
                                   "--kb-b", str(kb_file)])
        assert res.exit_code == 0
        report = json.loads(res.output)
        assert report["coverage_a_in_b"] == 1.0


class TestPatientCommands:
    def test_sample_and_stratify(self, runner, kb_file, tmp_path):
        profiles = tmp_path / "profiles.jsonl"
        res = runner.invoke(main, ["patients", "sample", "--kb", str(kb_file),
                                   "--per-disease", "2", "--seed", "3",
                                   "--out", str(profiles)])
        assert res.exit_code == 0, res.output
        lines = profiles.read_text().splitlines()
        assert len(lines) == 20
        subset = tmp_path / "subset.jsonl"
        res = runner.invoke(main, ["patients", "stratify", "--profiles", str(profiles),
                                   "--n", "12", "--seed", "1", "--out", str(subset)])
        assert res.exit_code == 0, res.output
        assert len(subset.read_text().splitlines()) == 12


class TestRunAndEval:
    @pytest.fixture
    def run_dir(self, runner, kb_file, tmp_path):
        profiles = tmp_path / "profiles.jsonl"
        runner.invoke(main, ["patients", "sample", "--kb", str(kb_file),
                             "--per-disease", "2", "--seed", "3", "--out", str(profiles)])
        out = tmp_path / "run"
        res = runner.invoke(main, ["run", "--kb", str(kb_file), "--patients", str(profiles),
                                   "--sensor", "oracle", "--tau", "0.9", "--tmin", "12",
                                   "--tmax", "20", "--seed", "1", "--out", str(out)])
        assert res.exit_code == 0, res.output
        return out

    def test_run_outputs(self, run_dir):
        assert (run_dir / "results.jsonl").exists()
        assert (run_dir / "metrics.csv").exists()
        traces = list((run_dir / "traces").glob("*.jsonl"))
        assert len(traces) == 20
        header = json.loads(traces[0].read_text().splitlines()[0])
        assert {"session_id", "config", "prior_strategy", "kb_hash", "profile_id"} <= set(header)

    def test_eval_metrics(self, runner, run_dir):
        res = runner.invoke(main, ["eval", "metrics", "--results", str(run_dir)])
        assert res.exit_code == 0, res.output
        assert res.output.splitlines()[0] == "tau,sel_acc,coverage,dhs,top1,top3,n_committed"

    def test_eval_sweep(self, runner, run_dir):
        res = runner.invoke(main, ["eval", "sweep", "--results", str(run_dir)])
        assert res.exit_code == 0, res.output
        assert "tau_star=" in res.output

    def test_eval_strata(self, runner, run_dir, kb_file):
        res = runner.invoke(main, ["eval", "strata", "--results", str(run_dir),
                                   "--kb", str(kb_file)])
        assert res.exit_code == 0, res.output
        assert res.output.startswith("group,tau,")

    def test_eval_failures(self, runner, run_dir, kb_file, tmp_path):
        res = runner.invoke(main, [
            "eval", "failures", "--results", str(run_dir), "--kb", str(kb_file),
            "--patients", str(tmp_path / "profiles.jsonl"), "--gamma", "0.80",
        ])
        assert res.exit_code == 0, res.output
        json.loads(res.output)  # valid JSON report

    def test_eval_scaling(self, runner, kb_file):
        res = runner.invoke(main, ["eval", "scaling", "--kb", str(kb_file),
                                   "--sizes", "4", "--seeds", "1"])
        assert res.exit_code == 0, res.output
        assert res.output.splitlines()[0] == "size,seed,top1"

    def test_eval_cross_kb(self, runner, kb_file, tmp_path):
        profiles = tmp_path / "cross_profiles.jsonl"
        runner.invoke(main, ["patients", "sample", "--kb", str(kb_file),
                             "--per-disease", "1", "--seed", "2", "--out", str(profiles)])
        res = runner.invoke(main, ["eval", "cross-kb", "--kb", str(kb_file),
                                   "--foreign-kb", str(kb_file),
                                   "--patients", str(profiles)])
        assert res.exit_code == 0, res.output
        assert "feature_coverage,1.000000" in res.output

    def test_run_with_external_sensor_airgapped(self, runner, kb_file, tmp_path, monkeypatch):
        # default external config is disabled: behaves exactly as the pattern tier
        monkeypatch.setenv("BMBE_EXTERNAL_DISABLED", "1")
        profiles = tmp_path / "p.jsonl"
        runner.invoke(main, ["patients", "sample", "--kb", str(kb_file),
                             "--per-disease", "1", "--seed", "4", "--out", str(profiles)])
        out = tmp_path / "ext-run"
        res = runner.invoke(main, ["run", "--kb", str(kb_file), "--patients", str(profiles),
                                   "--sensor", "external", "--persona", "plain",
                                   "--tau", "0.9", "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert (out / "metrics.csv").exists()

    def test_policy_score(self, runner, run_dir, kb_file):
        trace = sorted((run_dir / "traces").glob("*.jsonl"))[0]
        res = runner.invoke(main, ["policy", "score", "--kb", str(kb_file),
                                   "--session", str(trace), "--turn", "2"])
        assert res.exit_code == 0, res.output
        lines = res.output.splitlines()
        assert lines[0] == "feature_id,eig_bits,asked"
        assert len(lines) == 31  # header + 30 features


class TestBenchDeterminism:
    def test_two_runs_byte_identical(self, runner, kb_file, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = runner.invoke(main, ["bench", "--kb", str(kb_file), "--per-disease", "1",
                                       "--sensor", "patterns", "--persona", "plain",
                                       "--seed", "7", "--out", str(out)])
            assert res.exit_code == 0, res.output
            outs.append(out)
        a, b = outs
        for rel in ("metrics.csv", "sweep.csv", "results.jsonl", "profiles.jsonl"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        a_traces = sorted(p.name for p in (a / "traces").glob("*.jsonl"))
        b_traces = sorted(p.name for p in (b / "traces").glob("*.jsonl"))
        assert a_traces == b_traces
        for name in a_traces:
            assert (a / "traces" / name).read_bytes() == (b / "traces" / name).read_bytes()
