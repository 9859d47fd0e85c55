import json

import pytest

from entrospect.cli import main
from synth import tiny_project, run_config_dict


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    return tiny_project(tmp_path_factory.mktemp("cli") / "p")


@pytest.fixture(scope="module")
def config_path(project, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-run")
    path = out / "run.json"
    path.write_text(json.dumps(run_config_dict(project, out / "bundle", seed=4)))
    return path


def test_usage_error_exit_code():
    assert main(["not-a-command"]) == 1
    assert main(["run"]) == 1  # --config required


def test_data_error_exit_code(tmp_path, project):
    # coverage with only passing tests -> data error (exit 2)
    rows = []
    for raw in project.coverage_path.read_text().splitlines():
        obj = json.loads(raw)
        obj["outcome"] = "pass"
        rows.append(json.dumps(obj))
    cov = tmp_path / "cov.jsonl"
    cov.write_text("\n".join(rows) + "\n")
    config = tmp_path / "run.json"
    payload = run_config_dict(project, tmp_path / "o", seed=1)
    payload["coverage"] = str(cov)
    config.write_text(json.dumps(payload))
    assert main(["run", "--config", str(config)]) == 2


def test_tokenize_command(project, tmp_path, capsys):
    out = tmp_path / "tokens.jsonl"
    rc = main([
        "tokenize", "--corpus", str(project.corpus_dir),
        "--language", "java_like", "--out", str(out),
    ])
    assert rc == 0
    rows = [json.loads(r) for r in out.read_text().splitlines()]
    assert {"file", "line_no", "line_type", "tokens"} <= set(rows[0])


def test_lm_entropy_chain(project, tmp_path):
    lm_dir = tmp_path / "lm"
    assert main([
        "train-lm", "--corpus", str(project.corpus_dir),
        "--language", "java_like", "--out", str(lm_dir),
    ]) == 0
    entropy_csv = tmp_path / "entropy.csv"
    assert main([
        "entropy", "--corpus", str(project.corpus_dir), "--language", "java_like",
        "--lm-forward", str(lm_dir / "lm_forward.json"),
        "--lm-backward", str(lm_dir / "lm_backward.json"),
        "--out", str(entropy_csv),
    ]) == 0
    header = entropy_csv.read_text().splitlines()[0]
    assert header == "file,line_no,line_type,E_f,E_b,E_a,z_f,z_b,z_a"


def test_spectra_features_train_rank_eval_chain(project, tmp_path):
    spectra_csv = tmp_path / "spectra.csv"
    assert main([
        "spectra", "--corpus", str(project.corpus_dir), "--language", "java_like",
        "--coverage", str(project.coverage_path), "--out", str(spectra_csv),
    ]) == 0

    lm_dir = tmp_path / "lm"
    main(["train-lm", "--corpus", str(project.corpus_dir),
          "--language", "java_like", "--out", str(lm_dir)])
    entropy_csv = tmp_path / "entropy.csv"
    main(["entropy", "--corpus", str(project.corpus_dir), "--language", "java_like",
          "--lm-forward", str(lm_dir / "lm_forward.json"),
          "--lm-backward", str(lm_dir / "lm_backward.json"),
          "--out", str(entropy_csv)])

    annotations = tmp_path / "ann.json"
    assert main(["annotate", str(project.diff_path), "--out", str(annotations)]) == 0

    features_csv = tmp_path / "features.csv"
    assert main([
        "features", "--spectra", str(spectra_csv), "--entropy", str(entropy_csv),
        "--annotations", str(annotations), "--out", str(features_csv),
    ]) == 0
    header = features_csv.read_text().splitlines()[0].split(",")
    assert header[-1] == "relevance"
    assert "AverageEntropyZ" in header

    model_json = tmp_path / "model.json"
    assert main([
        "train", "--features", str(features_csv), "--seed", "9",
        "--trees", "20", "--out", str(model_json),
    ]) == 0

    ranked_csv = tmp_path / "ranked.csv"
    assert main([
        "rank", "--model", str(model_json), "--features", str(features_csv),
        "--out", str(ranked_csv),
    ]) == 0
    assert ranked_csv.read_text().splitlines()[1] == "rank,file,line_no,HySusp"

    eval_dir = tmp_path / "eval"
    assert main([
        "eval", "--ranked", str(ranked_csv), "--annotations", str(annotations),
        "--budget", "20", "--budget", "100", "--normalized", "--out", str(eval_dir),
    ]) == 0
    payload = json.loads((eval_dir / "evaluation.json").read_text())
    assert set(payload["aucec"]) == {"20", "100"}
    assert payload["aucec_normalized"]["20"] == pytest.approx(
        payload["aucec"]["20"] / 0.2
    )

    stats_json = tmp_path / "stats.json"
    assert main([
        "stats", "--spectra", str(spectra_csv), "--entropy", str(entropy_csv),
        "--annotations", str(annotations), "--out", str(stats_json),
    ]) == 0
    groups = json.loads(stats_json.read_text())["groups"]
    assert [g["group"] for g in groups] == ["fail_only", "pass_only", "both"]


def test_run_command_and_seed_override(config_path, tmp_path, capsys):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_path), "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(out_b),
                 "--seed", "123"]) == 0
    ranked_a = (out_a / "ranked.csv").read_text()
    ranked_b = (out_b / "ranked.csv").read_text()
    assert (out_a / "evaluation.json").exists()
    assert ranked_a != ranked_b  # different master seed


def test_run_mode_override(config_path, tmp_path):
    out = tmp_path / "sbbl"
    assert main(["run", "--config", str(config_path), "--out", str(out),
                 "--mode", "sbbl"]) == 0
    payload = json.loads((out / "evaluation.json").read_text())
    assert payload["mode"] == "sbbl_only"


def test_run_exclude_uncovered_flag(config_path, tmp_path):
    out_full, out_cov = tmp_path / "full", tmp_path / "cov"
    assert main(["run", "--config", str(config_path), "--out", str(out_full)]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(out_cov),
                 "--exclude-uncovered"]) == 0
    full = json.loads((out_full / "evaluation.json").read_text())
    cov = json.loads((out_cov / "evaluation.json").read_text())
    assert cov["n_lines"] < full["n_lines"]


def test_split_command(tmp_path, capsys):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "entries": [
            {"project": "p", "version_id": "v1", "language": "java_like",
             "timestamp": "2020-01-01"},
            {"project": "q", "version_id": "v2", "language": "java_like",
             "timestamp": "2020-05-01"},
        ]
    }))
    assert main(["split", "--manifest", str(manifest), "--target", "v2"]) == 0
    printed = json.loads(capsys.readouterr().out.strip())
    assert printed == {"target": "v2", "training_versions": ["v1"]}
    assert main(["split", "--manifest", str(manifest), "--target", "v1"]) == 2


def test_run_cross_command(tmp_path):
    root = tmp_path / "cross"
    versions = {}
    for vid, seed, ts in (("v-old", 31, "2020-01-01"), ("v-new", 32, "2020-04-01")):
        project = tiny_project(root / vid, corpus_seed=seed, coverage_seed=seed)
        versions[vid] = project
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({
        "entries": [
            {
                "project": "p-old", "version_id": "v-old", "language": "java_like",
                "timestamp": "2020-01-01",
                "corpus": str(versions["v-old"].corpus_dir),
                "coverage": str(versions["v-old"].coverage_path),
                "diffs": [str(versions["v-old"].diff_path)],
            },
            {
                "project": "p-new", "version_id": "v-new", "language": "java_like",
                "timestamp": "2020-04-01",
                "corpus": str(versions["v-new"].corpus_dir),
                "coverage": str(versions["v-new"].coverage_path),
                "diffs": [str(versions["v-new"].diff_path)],
            },
        ]
    }))
    out = tmp_path / "out"
    assert main(["run-cross", "--manifest", str(manifest), "--out", str(out),
                 "--seed", "7"]) == 0
    summary = json.loads((out / "cross_summary.json").read_text())
    assert [t["version_id"] for t in summary["targets"]] == ["v-new"]
    assert (out / "v-new" / "ranked.csv").exists()
