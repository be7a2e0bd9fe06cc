"""Acceptance suite: one test per primary criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s`. Thresholds and tolerances
are pinned here and must not be loosened; the inversion-grid success-rate
requirement is asserted as stated even though the measured rate on this
implementation falls short (see the failure message for the measured value).
"""

import json
import math
import os
import time

import numpy as np
import pytest

import corelens as cl
from corelens import cli
from corelens.encoder import CONTEXT_LENGTH, D_MODEL
from corelens.errors import CorelensError
from corelens.rng import Xoshiro256pp

PHI_2 = 0.5 * (1 + math.erf(2.0 / math.sqrt(2.0)))  # 0.97725: Phi(beta/sigma)
CORPUS = ["cat", "dog", "cow", "hen", "fox", "owl"]
GRID_ENCODER_SEED = 5


def report(line):
    print(f"\n[ACCEPTANCE] {line}")


def seeded_bases(count=100, dim=32, max_m=8):
    cases = []
    i = 0
    while len(cases) < count:
        m = 1 + (i % max_m)
        rng = Xoshiro256pp(9000 + i)
        vectors = [rng.normals((dim,)) for _ in range(m)]
        basis = cl.build_basis(vectors)
        if basis.condition_estimate <= 1e6:
            cases.append((vectors, basis))
        i += 1
    return cases


class TestProjectorAlgebra:
    def test_criterion_projector_algebra(self):
        t0 = time.time()
        cases = seeded_bases()
        rng = Xoshiro256pp(123)
        worst = {"sym": 0.0, "idem": 0.0, "annihilate": 0.0, "contract": 0.0}
        for vectors, basis in cases:
            p = cl.projector_matrix(basis).matrix
            worst["sym"] = max(worst["sym"], np.abs(p - p.T).max())
            worst["idem"] = max(worst["idem"], np.abs(p @ p - p).max())
            for col in vectors:
                ratio = np.linalg.norm(p @ col) / np.linalg.norm(col)
                worst["annihilate"] = max(worst["annihilate"], ratio)
            v = rng.normals((basis.dim,))
            worst["contract"] = max(
                worst["contract"],
                np.linalg.norm(p @ v) / np.linalg.norm(v))
        elapsed = time.time() - t0
        assert worst["sym"] <= 1e-9
        assert worst["idem"] <= 1e-8
        assert worst["annihilate"] <= 1e-8
        assert worst["contract"] <= 1.0 + 1e-12
        assert elapsed < 5.0
        report(f"PASS projector algebra: 100 bases, max asym {worst['sym']:.2e}, "
               f"max idem {worst['idem']:.2e}, {elapsed:.2f}s")

    def test_criterion_gram_path_equals_orthonormal_oracle(self):
        worst = 0.0
        for _, basis in seeded_bases():
            p_gram = cl.projector_matrix(basis, method="gram").matrix
            p_orth = cl.projector_matrix(basis, method="orthonormal").matrix
            worst = max(worst, np.abs(p_gram - p_orth).max())
        assert worst <= 1e-8
        report(f"PASS Gram-inverse vs Gram-Schmidt paths: max abs diff {worst:.2e}")


class TestSyntheticSpuriousBenchmark:
    def test_criterion_erm_dfr_projection(self):
        t0 = time.time()
        cfg = cl.SyntheticConfig(group_counts=(900, 100, 100, 900), dim=64,
                                 beta_core=1.0, beta_spur=1.0, sigma=0.5,
                                 seed=1)
        ds, u_core, u_spur = cl.generate_synthetic(cfg)
        train, val, test = cl.split(ds, (0.6, 0.2, 0.2), seed=101)
        tc = cl.TrainConfig(seed=7)

        erm = cl.train_erm(train, val, tc)
        rep_erm = cl.group_report(cl.predict(erm.probe, test)[0], test)

        dfr = cl.train_dfr(train, val, tc)
        rep_dfr = cl.group_report(cl.predict(dfr.probe, test)[0], test)

        basis = cl.build_basis([u_spur])
        proj = cl.projector_matrix(basis)
        train_p, val_p, test_p = (proj.apply(s) for s in (train, val, test))
        erm_p = cl.train_erm(train_p, val_p, tc)
        rep_proj = cl.group_report(cl.predict(erm_p.probe, test_p)[0], test_p)

        elapsed = time.time() - t0
        assert rep_erm.wga <= 0.75, f"ERM WGA {rep_erm.wga}"
        assert rep_erm.best_group - rep_erm.wga >= 0.10  # shortcut hurts minorities
        assert rep_dfr.wga >= 0.90, f"DFR WGA {rep_dfr.wga}"
        assert rep_proj.wga >= 0.90, f"projected ERM WGA {rep_proj.wga}"
        assert abs(rep_proj.avg_sample - PHI_2) <= 0.03, \
            f"projected avg_sample {rep_proj.avg_sample} vs oracle {PHI_2:.4f}"
        assert elapsed < 60.0
        report(f"PASS synthetic benchmark: ERM wga {rep_erm.wga:.3f} <= 0.75, "
               f"DFR wga {rep_dfr.wga:.3f} >= 0.90, projected wga "
               f"{rep_proj.wga:.3f} >= 0.90, avg {rep_proj.avg_sample:.4f} "
               f"within 3pts of {PHI_2:.4f}, {elapsed:.1f}s")


class TestEncoderGradients:
    def test_criterion_finite_difference_check(self):
        t0 = time.time()
        h = 1e-5
        worst = 0.0
        for case in range(20):
            weights = cl.init_encoder(3000 + case)
            rng = Xoshiro256pp(4000 + case)
            e = 0.5 * rng.normals((CONTEXT_LENGTH, D_MODEL))
            eot = 2 + (case % (CONTEXT_LENGTH - 2))
            upstream = rng.normals((D_MODEL,))
            _, cache = cl.encode_forward(weights, e, eot)
            analytic = cl.encode_backward(weights, cache, upstream)
            fd = np.zeros_like(e)
            for i in range(CONTEXT_LENGTH):
                for j in range(D_MODEL):
                    ep = e.copy()
                    ep[i, j] += h
                    em = e.copy()
                    em[i, j] -= h
                    fp = upstream @ cl.encode_forward(weights, ep, eot)[0].vector
                    fm = upstream @ cl.encode_forward(weights, em, eot)[0].vector
                    fd[i, j] = (fp - fm) / (2 * h)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6)
            worst = max(worst, (np.abs(analytic - fd) / denom).max())
        elapsed = time.time() - t0
        assert worst <= 1e-4
        assert elapsed < 30.0
        report(f"PASS encoder gradients: 20 cases, max rel err {worst:.2e}, "
               f"{elapsed:.1f}s")


class TestInversionLossUnits:
    def test_criterion_loss_unit_cases(self):
        unit = np.zeros(4)
        unit[0] = 1.0
        assert abs(cl.inversion_loss(unit, unit, 1.0) - (-1.0)) <= 1e-12
        assert abs(cl.inversion_loss([0.0, 1.0], [1.0, 0.0], 0.5) - 2.0) <= 1e-12
        assert abs(cl.inversion_loss([2.0, 0.0], [1.0, 0.0], 1.0) - 0.0) <= 1e-12
        report("PASS loss unit cases exact to 1e-12")


class TestInversionGrid:
    def test_criterion_fixed_points_and_grid(self):
        t0 = time.time()
        weights = cl.init_encoder(GRID_ENCODER_SEED)
        cfg = cl.InversionConfig()  # spec defaults: lam 1.0, 3000 iters, lr 0.05

        for word in CORPUS:
            target = cl.encode_text(weights, word)
            res = cl.invert(target, word, cfg, weights, target_text=word)
            assert abs(res.loss_trace[0] - (-cfg.lam)) <= 1e-9, word
            assert res.recovered_text == word, (word, res.recovered_text)

        pairs = [(a, b) for a in CORPUS for b in CORPUS if a != b]
        cells = cl.inversion_grid(CORPUS, weights, cfg, cells=pairs)
        assert len(cells) == 30
        for cell in cells:
            assert cell.final_loss <= cell.initial_loss + 1e-12, \
                (cell.initial, cell.target)
            assert cell.initial_loss >= -cfg.lam - 1e-12
            assert cell.final_loss >= -cfg.lam - 1e-12
        rate = sum(c.success for c in cells) / len(cells)
        elapsed = time.time() - t0
        assert elapsed < 600.0
        status = "PASS" if rate >= 0.5 else "FAIL"
        report(f"{status} inversion grid: fixed points exact for all 6 words, "
               f"loss bounds hold on all 30 runs, success rate {rate:.3f} "
               f"(required >= 0.5), {elapsed:.0f}s")
        assert rate >= 0.5, (
            f"grid success rate {rate:.3f} < 0.5: with this randomly "
            "initialized encoder (d_model 32, init std 0.02, near-uniform "
            "attention) the distance-minus-cosine objective reaches its "
            "global minimum on every run, but the optimized rows leave the "
            "token-embedding scale, so nearest-token decoding recovers the "
            "target letters only sporadically"
        )


class TestMetricsExactness:
    def test_criterion_hand_count_and_fuzz(self):
        labels = [0, 0, 0, 0, 0, 0]
        attrs = [0, 0, 0, 0, 1, 1]
        rows = np.arange(12.0).reshape(6, 2)
        ds = cl.EmbeddingSet.build(rows, labels, attrs, num_classes=2,
                                   num_attributes=2)
        rep = cl.group_report([0, 0, 0, 1, 0, 1], ds)
        assert rep.per_group[0].accuracy == 0.75
        assert rep.per_group[1].accuracy == 0.5
        assert rep.wga == 0.5
        assert rep.avg_sample == 4 / 6
        assert rep.avg_group == 0.625

        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            num_attr = int(rng.integers(1, 4))
            labels = rng.integers(0, 3, size=n)
            attrs = rng.integers(0, num_attr, size=n)
            preds = rng.integers(0, 3, size=n)
            table = cl.EmbeddingSet.build(np.zeros((n, 2)) + 1.0, labels,
                                          attrs, num_classes=3,
                                          num_attributes=num_attr)
            r = cl.group_report(preds, table)
            assert r.wga <= r.avg_group + 1e-12
            assert r.avg_group <= r.best_group + 1e-12
        report("PASS metrics: hand count exact, 1000-table ordering fuzz")


class TestCliDeterminism:
    def test_criterion_byte_identical_rerun(self, tmp_path):
        def pipeline():
            gen = {"out": str(tmp_path / "s.emb1"), "group_counts": [40, 8, 8, 40],
                   "dim": 12, "beta_core": 1.0, "beta_spur": 1.0, "sigma": 0.5,
                   "seed": 21, "directions_out": str(tmp_path / "d.emb1")}
            assert cli.run("gen-synth", gen) == 0
            sp = {"in": gen["out"], "out_train": str(tmp_path / "tr.emb1"),
                  "out_val": str(tmp_path / "va.emb1"),
                  "out_test": str(tmp_path / "te.emb1"),
                  "fractions": [0.6, 0.2, 0.2], "seed": 2}
            assert cli.run("split", sp) == 0
            pt = {"train": sp["out_train"], "val": sp["out_val"],
                  "out": str(tmp_path / "p.json"),
                  "train_config": {"seed": 4, "epochs": 2}}
            assert cli.run("probe-train", pt, method="dfr") == 0
            ev = {"probe": pt["out"], "in": sp["out_test"],
                  "out": str(tmp_path / "r.json"),
                  "out_csv": str(tmp_path / "r.csv")}
            assert cli.run("eval", ev) == 0
            return [gen["out"], gen["out"] + ".meta.json", sp["out_train"],
                    sp["out_test"]], [pt["out"], ev["out"]], [ev["out_csv"]]

        binaries, jsons, csvs = pipeline()
        first_bin = [open(p, "rb").read() for p in binaries]
        first_json = [json.load(open(p)) for p in jsons]
        first_csv = [open(p, "rb").read() for p in csvs]
        pipeline()
        for path, blob in zip(binaries, first_bin):
            assert open(path, "rb").read() == blob, path
        for path, doc in zip(jsons, first_json):
            again = json.load(open(path))
            doc.pop("timestamp", None)
            again.pop("timestamp", None)
            assert json.dumps(again, sort_keys=True) == \
                json.dumps(doc, sort_keys=True), path
        for path, blob in zip(csvs, first_csv):
            assert open(path, "rb").read() == blob, path
        report("PASS CLI determinism: reruns byte-identical modulo timestamp key")


class TestEmb1Contract:
    def test_criterion_round_trip_and_header_fuzz(self, tmp_path):
        rng = np.random.default_rng(77)
        rows = rng.normal(size=(9, 5))
        ds = cl.EmbeddingSet.build(rows, rng.integers(0, 2, 9),
                                   rng.integers(0, 2, 9))
        p1 = str(tmp_path / "a.emb1")
        p2 = str(tmp_path / "b.emb1")
        cl.write_embeddings(ds, p1)
        cl.write_embeddings(cl.read_embeddings(p1), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
        assert open(p1 + ".meta.json", "rb").read() == \
            open(p2 + ".meta.json", "rb").read()

        good = open(p1, "rb").read()
        fuzz_path = str(tmp_path / "fuzz.emb1")
        failures = 0
        for trial in range(300):
            blob = bytearray(good)
            n_mut = int(rng.integers(1, 6))
            for _ in range(n_mut):
                pos = int(rng.integers(0, min(len(blob), 24)))
                blob[pos] = int(rng.integers(0, 256))
            if rng.random() < 0.3:
                blob = blob[:int(rng.integers(0, len(blob)))]
            with open(fuzz_path, "wb") as fh:
                fh.write(bytes(blob))
            try:
                cl.read_embeddings(fuzz_path)
            except CorelensError:
                failures += 1
            # a mutation may leave the header valid; reading then succeeds
        assert failures > 0
        report(f"PASS EMB1: round trip bit-exact, {failures}/300 corrupted "
               "headers rejected cleanly, zero crashes")
