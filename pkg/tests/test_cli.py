import json

import pytest

from rphash.cli import build_parser, main
from rphash.report_generator import CONVERGENCE_COLUMNS, SWEEP_COLUMNS, manifest_path, read_manifest

SYMMETRIC = ["--gram", "-0.3333333333333333", "-0.3333333333333333", "-0.3333333333333333"]


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for name in ("sweep", "estimate", "convergence", "detect", "survival"):
            assert parser.parse_args([name] + {
                "sweep": ["--sigma", "-2"],
                "estimate": ["--k", "2"],
                "convergence": ["--k", "2", "--regime", "large-b", "--range", "2", "4"],
                "detect": ["--k", "2"],
                "survival": ["--k", "1", "--mode", "above", "--threshold", "2"],
            }[name]).command == name

    def test_rejects_non_positive_trials(self):
        with pytest.raises(SystemExit) as exc:
            main(["estimate", "--k", "2", "--trials", "0"])
        assert exc.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestExitCodes:
    def test_usage_error(self, capsys):
        code, _ = run(capsys, "estimate", "--gram", "0.1", "0.2", "--quiet")
        assert code == 2

    def test_degenerate_gram(self, capsys):
        code, captured = run(capsys, "estimate", "--gram", "-0.6", "-0.6", "-0.6", "--trials", "10")
        assert code == 3
        assert "Degenerate" in captured.err

    def test_unsupported_numeric(self, capsys):
        code, captured = run(capsys, "estimate", "--k", "3", "--a", "2", "--b", "2", "--numeric", "--trials", "10")
        assert code == 3
        assert "UnsupportedConfiguration" in captured.err

    def test_non_negative_sigma(self, capsys):
        code, _ = run(capsys, "sweep", "--sigma", "1.0", "--trials", "10", "--quiet")
        assert code == 3


class TestEstimate:
    def test_json_to_stdout(self, capsys):
        code, captured = run(capsys, "estimate", *SYMMETRIC, "--a", "1", "--b", "2", "--d", "10",
                             "--trials", "2000", "--quiet")
        assert code == 0
        payload = json.loads(captured.out)
        assert payload["schema_version"] == 1
        assert payload["k"] == 3
        assert payload["alpha"] == pytest.approx(3.0)
        assert payload["naive"] == pytest.approx(1.0 / 9.0)
        assert "numeric" not in payload
        assert {"large_a", "large_b"} <= payload.keys()
        assert payload["mc"]["trials"] == 2000

    def test_asymptotic_variants(self, capsys):
        _, captured = run(capsys, "estimate", "--k", "2", "--trials", "500", "--asymptotic", "--quiet")
        payload = json.loads(captured.out)
        assert {"large_b_power_law", "large_b_truncated", "large_a_truncated"} <= payload.keys()

    def test_numeric_pair(self, capsys):
        _, captured = run(capsys, "estimate", "--k", "2", "--a", "1", "--b", "2", "--trials", "2000",
                          "--numeric", "--quiet")
        payload = json.loads(captured.out)
        assert payload["numeric_mode"] == "max-index"
        assert payload["numeric"] == pytest.approx(1.0 / 3.0, abs=2e-4)

    def test_duplicate(self, capsys):
        _, captured = run(capsys, "estimate", "--k", "3", "--duplicate", "--trials", "300", "--quiet")
        payload = json.loads(captured.out)
        assert payload["mc"]["p_hat"] == 1.0
        assert payload["alpha"] is None
        assert "large_b" not in payload

    def test_out_writes_manifest(self, tmp_path):
        out = tmp_path / "estimate.json"
        assert main(["estimate", "--k", "2", "--trials", "300", "--seed", "5", "--out", str(out), "--quiet"]) == 0
        manifest = read_manifest(manifest_path(out))
        assert manifest.subcommand == "estimate"
        assert manifest.seed == 5
        assert manifest.parameters["trials"] == 300
        assert len(manifest.version_hash) == 64


class TestSweep:
    def sweep_args(self, out, workers):
        return ["sweep", "--sigma", "-2.0", "--a", "1", "--b", "2", "--d", "8", "--trials", "500",
                "--grid-step", "0.25", "--workers", str(workers), "--out", str(out), "--quiet"]

    def test_csv_is_byte_identical_across_workers(self, tmp_path):
        first, second = tmp_path / "one.csv", tmp_path / "many.csv"
        assert main(self.sweep_args(first, 1)) == 0
        assert main(self.sweep_args(second, 4)) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_csv_layout(self, tmp_path):
        out = tmp_path / "sweep.csv"
        main(self.sweep_args(out, 2))
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_COLUMNS)
        assert len(lines) == 11
        mirror = json.loads(out.with_suffix(".json").read_text())
        assert mirror["schema_version"] == 1
        assert len(mirror["rows"]) == 10
        assert manifest_path(out).exists()


class TestConvergence:
    def test_csv(self, tmp_path):
        out = tmp_path / "conv.csv"
        code = main(["convergence", "--k", "2", "--regime", "large-b", "--range", "2", "4", "--fixed", "1",
                     "--trials", "2000", "--d", "6", "--out", str(out), "--quiet"])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CONVERGENCE_COLUMNS)
        assert [line.split(",")[:2] for line in lines[1:]] == [["1", "2"], ["1", "4"]]


class TestDetect:
    def test_duplicate_recall(self, capsys):
        _, captured = run(capsys, "detect", "--k", "2", "--duplicate", "--db-size", "100", "--planted", "5",
                          "--instances", "3", "--d", "12", "--quiet")
        payload = json.loads(captured.out)
        assert payload["recall"] == 1.0
        assert payload["schema_version"] == 1
        # the repeated vector is its own shortest difference
        assert payload["reducible_candidates"] >= 15

    def test_no_scan(self, capsys):
        _, captured = run(capsys, "detect", "--k", "2", "--duplicate", "--db-size", "100", "--planted", "5",
                          "--instances", "3", "--d", "12", "--no-scan", "--quiet")
        payload = json.loads(captured.out)
        assert payload["candidates_scanned"] == 0
        assert payload["sampled_buckets"] == 0

    def test_negative_planted(self):
        with pytest.raises(SystemExit):
            main(["detect", "--k", "2", "--planted", "-1"])


class TestSurvival:
    def test_single_vector(self, capsys):
        _, captured = run(capsys, "survival", "--k", "1", "--mode", "above", "--threshold", "2",
                          "--trials", "100000", "--quiet")
        payload = json.loads(captured.out)
        assert payload["closed_form"] == pytest.approx(0.0455, abs=1e-4)
        assert payload["mc"]["p_hat"] == pytest.approx(0.0455, abs=0.003)
