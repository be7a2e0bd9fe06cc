import json
import os

import numpy as np
import pytest

from corelens import cli
from corelens.embeddings import read_embeddings


def write_config(tmp_path, name, doc):
    path = str(tmp_path / name)
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


def gen_config(tmp_path, out_name="synth.emb1", **overrides):
    doc = {
        "out": str(tmp_path / out_name),
        "group_counts": [60, 12, 12, 60],
        "dim": 16,
        "beta_core": 1.0,
        "beta_spur": 1.0,
        "sigma": 0.5,
        "seed": 11,
        "directions_out": str(tmp_path / "dirs.emb1"),
    }
    doc.update(overrides)
    return doc


def run_pipeline(tmp_path):
    """gen-synth -> split -> probe-train(erm) -> eval; returns paths."""
    paths = {}
    gen = gen_config(tmp_path)
    assert cli.run("gen-synth", gen) == 0
    paths["data"] = gen["out"]
    split_cfg = {
        "in": gen["out"],
        "out_train": str(tmp_path / "tr.emb1"),
        "out_val": str(tmp_path / "va.emb1"),
        "out_test": str(tmp_path / "te.emb1"),
        "fractions": [0.6, 0.2, 0.2],
        "seed": 3,
    }
    assert cli.run("split", split_cfg) == 0
    paths.update(train=split_cfg["out_train"], val=split_cfg["out_val"],
                 test=split_cfg["out_test"])
    probe_cfg = {
        "train": paths["train"],
        "val": paths["val"],
        "out": str(tmp_path / "probe.json"),
        "train_config": {"seed": 5, "epochs": 3},
    }
    assert cli.run("probe-train", probe_cfg, method="erm") == 0
    paths["probe"] = probe_cfg["out"]
    eval_cfg = {
        "probe": paths["probe"],
        "in": paths["test"],
        "out": str(tmp_path / "report.json"),
        "out_csv": str(tmp_path / "report.csv"),
    }
    assert cli.run("eval", eval_cfg) == 0
    paths["report"] = eval_cfg["out"]
    paths["report_csv"] = eval_cfg["out_csv"]
    return paths


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestPipeline:
    def test_gen_train_eval_produces_four_group_report(self, tmp_path):
        paths = run_pipeline(tmp_path)
        report = load_json(paths["report"])
        assert report["kind"] == "group-report"
        assert len(report["payload"]["per_group"]) == 4
        assert "config_digest" in report["provenance"]
        csv_lines = open(paths["report_csv"]).read().strip().splitlines()
        assert len(csv_lines) == 5  # header + one row per group

    def test_probe_file_matches_contract(self, tmp_path):
        paths = run_pipeline(tmp_path)
        doc = load_json(paths["probe"])
        for key in ("dim", "classes", "normalize_input", "provenance",
                    "weights", "bias", "config_digest"):
            assert key in doc
        assert doc["dim"] == 16 and doc["classes"] == 2
        assert doc["provenance"] == "erm"

    def test_distill_then_eval_and_compare(self, tmp_path):
        paths = run_pipeline(tmp_path)
        distill_cfg = {
            "in": paths["test"],
            "out": str(tmp_path / "distilled.emb1"),
            "background": str(tmp_path / "dirs.emb1"),
            "num_vectors": 1,
        }
        assert cli.run("distill", distill_cfg) == 0
        distilled = read_embeddings(distill_cfg["out"])
        original = read_embeddings(paths["test"])
        assert distilled.n == original.n
        assert np.array_equal(distilled.groups, original.groups)
        eval_cfg = {
            "probe": paths["probe"],
            "in": distill_cfg["out"],
            "out": str(tmp_path / "report_after.json"),
        }
        assert cli.run("eval", eval_cfg) == 0
        compare_cfg = {
            "before": paths["report"],
            "after": eval_cfg["out"],
            "out": str(tmp_path / "delta.json"),
        }
        assert cli.run("compare", compare_cfg) == 0
        delta = load_json(compare_cfg["out"])["payload"]
        assert len(delta["groups"]) == 4

    def test_distill_background_row_selection(self, tmp_path):
        paths = run_pipeline(tmp_path)
        cfg = {
            "in": paths["test"],
            "out": str(tmp_path / "spurfree.emb1"),
            "background": str(tmp_path / "dirs.emb1"),
            "background_rows": [1],  # just the planted spurious direction
        }
        assert cli.run("distill", cfg) == 0
        cleaned = read_embeddings(cfg["out"])
        dirs = read_embeddings(str(tmp_path / "dirs.emb1"))
        spur = dirs.rows[1]
        core = dirs.rows[0]
        # f32 payload quantization caps achievable orthogonality in the file
        assert np.abs(cleaned.rows @ spur).max() < 1e-6
        original = read_embeddings(paths["test"])
        assert np.allclose(cleaned.rows @ core, original.rows @ core, atol=1e-6)
        bad = dict(cfg, background_rows=[5])
        with pytest.raises(Exception) as err:
            cli.run("distill", bad)
        assert getattr(err.value, "exit_code", None) == 2
        both = dict(cfg, num_vectors=1)
        with pytest.raises(Exception) as err:
            cli.run("distill", both)
        assert getattr(err.value, "exit_code", None) == 2

    def test_sweep(self, tmp_path):
        paths = run_pipeline(tmp_path)
        sweep_cfg = {
            "reports": [["erm", paths["report"]], ["again", paths["report"]]],
            "out": str(tmp_path / "sweep.json"),
            "out_csv": str(tmp_path / "sweep.csv"),
        }
        assert cli.run("sweep", sweep_cfg) == 0
        rows = load_json(sweep_cfg["out"])["payload"]["tasks"]
        assert len(rows) == 2
        assert rows[0]["avg_group"] <= rows[1]["avg_group"]

    def test_audit(self, tmp_path):
        paths = run_pipeline(tmp_path)
        audit_cfg = {
            "query_from": {"path": str(tmp_path / "dirs.emb1"), "row": 1},
            "images": paths["test"],
            "out": str(tmp_path / "stats.json"),
            "out_raw_csv": str(tmp_path / "sims.csv"),
        }
        assert cli.run("audit", audit_cfg) == 0
        stats = load_json(audit_cfg["out"])["payload"]
        assert stats["min"] <= stats["median"] <= stats["max"]
        n_rows = len(open(audit_cfg["out_raw_csv"]).read().strip().splitlines())
        assert n_rows == stats["n"] + 1

    def test_zeroshot_training(self, tmp_path):
        paths = run_pipeline(tmp_path)
        cfg = {
            "class_embeddings": str(tmp_path / "dirs.emb1"),
            "out": str(tmp_path / "zs.json"),
        }
        assert cli.run("probe-train", cfg, method="zeroshot") == 0
        doc = load_json(cfg["out"])
        assert doc["provenance"] == "zeroshot"
        assert doc["normalize_input"] is True


class TestInvertCommands:
    def test_invert_emits_contract_fields(self, tmp_path):
        cfg = {
            "encoder_seed": 5,
            "initial_text": "cat",
            "target_from": {"text": "cat"},
            "target_text": "cat",
            "inversion": {"seed": 0, "max_iter": 5},
            "out": str(tmp_path / "inv.json"),
        }
        assert cli.run("invert", cfg) == 0
        payload = load_json(cfg["out"])["payload"]
        for key in ("initial", "target", "eot_index", "final_loss",
                    "recovered_text", "success"):
            assert key in payload
        assert payload["success"] is True

    def test_invert_probe_row_target_reports_na(self, tmp_path):
        paths = run_pipeline(tmp_path)
        # dim-16 probe cannot feed the 32-dim encoder; build a toy probe
        from corelens.probes import zero_shot_matrix

        rng = np.random.default_rng(1)
        probe = zero_shot_matrix(rng.normal(size=(2, 32)))
        probe_path = str(tmp_path / "p32.json")
        with open(probe_path, "w") as fh:
            json.dump(probe.to_dict(), fh)
        cfg = {
            "encoder_seed": 5,
            "initial_text": "cat",
            "target_from": {"probe": probe_path, "row": 0},
            "inversion": {"seed": 0, "max_iter": 5},
            "out": str(tmp_path / "inv.json"),
        }
        assert cli.run("invert", cfg) == 0
        assert load_json(cfg["out"])["payload"]["success"] == "n/a"

    def test_grid_csv_shape(self, tmp_path):
        cfg = {
            "encoder_seed": 5,
            "words": ["cat", "dog", "cow"],
            "inversion": {"seed": 0, "max_iter": 5},
            "out_csv": str(tmp_path / "grid.csv"),
            "out_json": str(tmp_path / "grid.json"),
        }
        assert cli.run("invert-grid", cfg) == 0
        lines = open(cfg["out_csv"]).read().strip().splitlines()
        assert lines[0] == "initial,cat,dog,cow"
        assert len(lines) == 4
        runs = load_json(cfg["out_json"])["payload"]["runs"]
        assert len(runs) == 9

    def test_grid_results_independent_of_thread_cap(self, tmp_path, monkeypatch):
        def grid(csv_name):
            cfg = {
                "encoder_seed": 5,
                "words": ["cat", "dog"],
                "inversion": {"seed": 0, "max_iter": 10},
                "out_csv": str(tmp_path / csv_name),
            }
            assert cli.run("invert-grid", cfg) == 0
            return open(cfg["out_csv"]).read()

        monkeypatch.setenv("CORELENS_THREADS", "1")
        serial = grid("serial.csv")
        monkeypatch.setenv("CORELENS_THREADS", "3")
        threaded = grid("threaded.csv")
        assert serial == threaded


class TestDeterminism:
    def test_rerun_byte_identical_modulo_timestamp(self, tmp_path):
        paths = run_pipeline(tmp_path)
        first = {key: open(path, "rb").read() for key, path in paths.items()}
        first_meta = {key: open(paths[key] + ".meta.json", "rb").read()
                      for key in ("data", "train", "test")}
        run_pipeline(tmp_path)  # identical configs, same output paths
        for key in ("data", "train", "test"):
            assert open(paths[key], "rb").read() == first[key]
            assert open(paths[key] + ".meta.json", "rb").read() == first_meta[key]
        # JSON artifacts identical once the isolated timestamp key is dropped
        for key in ("probe", "report"):
            doc_a = json.loads(first[key])
            doc_b = load_json(paths[key])
            doc_a.pop("timestamp")
            doc_b.pop("timestamp")
            assert json.dumps(doc_a, sort_keys=True) == json.dumps(doc_b, sort_keys=True)
        assert open(paths["report_csv"], "rb").read() == first["report_csv"]


class TestValidationAndExitCodes:
    def test_missing_seed_is_config_error(self, tmp_path):
        cfg = gen_config(tmp_path)
        del cfg["seed"]
        with pytest.raises(Exception) as err:
            cli.run("gen-synth", cfg)
        assert getattr(err.value, "exit_code", None) == 2

    def test_main_exit_codes(self, tmp_path):
        cfg_path = write_config(tmp_path, "bad.json", {"out": "x"})
        assert cli.main(["gen-synth", "--config", cfg_path]) == 2
        missing = str(tmp_path / "none.json")
        assert cli.main(["gen-synth", "--config", missing]) == 2

    def test_eval_dim_mismatch_is_data_error(self, tmp_path):
        paths = run_pipeline(tmp_path)
        gen = gen_config(tmp_path, out_name="other.emb1", dim=8,
                         directions_out=str(tmp_path / "d8.emb1"))
        assert cli.run("gen-synth", gen) == 0
        cfg_path = write_config(tmp_path, "eval.json", {
            "probe": paths["probe"], "in": gen["out"],
            "out": str(tmp_path / "r.json"),
        })
        assert cli.main(["eval", "--config", cfg_path]) == 3

    def test_malformed_emb1_is_data_error(self, tmp_path):
        bad = str(tmp_path / "bad.emb1")
        with open(bad, "wb") as fh:
            fh.write(b"JUNKJUNKJUNKJUNKJUNKJUNK")
        cfg_path = write_config(tmp_path, "split.json", {
            "in": bad, "out_train": "t", "out_val": "v", "out_test": "s",
            "fractions": [0.6, 0.2, 0.2], "seed": 1,
        })
        assert cli.main(["split", "--config", cfg_path]) == 3

    def test_dependent_background_is_data_error(self, tmp_path):
        paths = run_pipeline(tmp_path)
        from corelens.embeddings import EmbeddingSet, write_embeddings

        dup = EmbeddingSet.build(np.array([[1.0] * 16, [2.0] * 16]),
                                 [0, 1], [0, 0])
        bg = str(tmp_path / "dup.emb1")
        write_embeddings(dup, bg)
        cfg_path = write_config(tmp_path, "distill.json", {
            "in": paths["test"], "out": str(tmp_path / "o.emb1"),
            "background": bg,
        })
        assert cli.main(["distill", "--config", cfg_path]) == 3

    def test_malformed_probe_file_is_data_error(self, tmp_path):
        paths = run_pipeline(tmp_path)
        bad_probe = str(tmp_path / "bad.probe")
        with open(bad_probe, "w") as fh:
            fh.write("{not json")
        cfg_path = write_config(tmp_path, "ev.json", {
            "probe": bad_probe, "in": paths["test"],
            "out": str(tmp_path / "r.json"),
        })
        assert cli.main(["eval", "--config", cfg_path]) == 3

    def test_yaml_config_accepted(self, tmp_path):
        cfg = gen_config(tmp_path)
        path = str(tmp_path / "gen.yaml")
        import yaml

        with open(path, "w") as fh:
            yaml.safe_dump(cfg, fh)
        assert cli.main(["gen-synth", "--config", path]) == 0
        assert os.path.exists(cfg["out"])
