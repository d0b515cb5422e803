import json
import math

import numpy as np
import pytest

import avloc


def test_losses_and_reduction():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(5, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    a = rng.normal(size=(5, 4))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    base, gv, _, ga = avloc.contrastive_loss(v, a, 0.07)
    itr, _, _, _ = avloc.iterative_loss(v, np.zeros_like(v), [False] * 5, a, np.eye(5), 0.07)
    assert abs(base - itr) <= 1e-12
    assert gv.shape == (5, 4) and ga.shape == (5, 4)
    same = np.tile([1.0, 0.0, 0.0, 0.0], (5, 1))
    assert abs(avloc.contrastive_loss(same, same, 0.07)[0] - math.log(5)) <= 1e-12
    y = avloc.relation_matrix(a, 2.0)
    assert np.array_equal(y, np.eye(5))
    with pytest.raises(ValueError):
        avloc.contrastive_loss(v, a[:3], 0.07)


def test_localization_and_metrics():
    r = np.array([[1.0, 3.0], [2.0, 5.0]])
    n, degenerate = avloc.minmax_normalize(r)
    assert not degenerate
    assert np.allclose(n, [[0, 0.5], [0.25, 1]])
    assert avloc.threshold_region(n, 0.3) == [(0, 1), (1, 1)]
    _, degenerate = avloc.minmax_normalize(np.full((3, 3), 0.2))
    assert degenerate
    up = avloc.upsample_bilinear(n, 4, 4)
    assert up.shape == (4, 4) and up[3, 3] == 1.0
    g = avloc.consensus_map([(0, 0, 2, 2)], 4, 4, 1)
    assert avloc.ciou(g, g, 0.5) == 1.0
    thresholds, ratios, auc = avloc.success_curve([0.2, 0.6, 1.0])
    assert len(thresholds) == 21
    assert ratios[10] == pytest.approx(2 / 3)
    assert 0.0 <= auc <= 1.0


def test_log_mel_shape():
    t = np.arange(8000) / 8000.0
    lms = avloc.log_mel(np.sin(2 * np.pi * 440 * t), 8000.0)
    assert lms.shape[0] == 64
    assert np.isfinite(lms).all()


def test_gradcheck():
    assert avloc.gradcheck(seeds=2)["passed"]
    assert not avloc.gradcheck(seeds=1, corrupt=True)["passed"]


def test_end_to_end(tmp_path):
    corpus = tmp_path / "corpus"
    avloc.gen_corpus(corpus, {"train_instances": 16, "test_instances": 4}, seed=2)
    assert json.loads((corpus / "manifest.json").read_text())["num_instances"] == 20
    cfg = {"train": {"total_epochs": 2, "initial_epochs": 1, "k": 8}}
    log = avloc.train(corpus, tmp_path / "run", cfg, variant="full")
    assert [row["epoch"] for row in log] == [1, 2]
    assert log[0]["iterative_evals"] == 0 and log[1]["iterative_evals"] > 0
    again = avloc.train(corpus, tmp_path / "run2", cfg, variant="full", threads=3)
    assert again == log
    res = avloc.evaluate(corpus, tmp_path / "run" / "checkpoint", tmp_path / "eval",
                         export_heatmaps=True)
    assert len(res["per_instance"]) == 4
    assert len(list((tmp_path / "eval" / "heatmaps").glob("*.pgm"))) == 4
    inst = sorted((corpus / "test").iterdir())[0]
    heatmap, region, degenerate = avloc.localize(tmp_path / "run" / "checkpoint",
                                                 inst / "image.avic", inst / "audio.raw",
                                                 tmp_path / "one.pgm")
    assert heatmap.shape == (64, 64)
    assert all(0 <= i < 8 and 0 <= j < 8 for i, j in region)
    assert not degenerate
    with pytest.raises(ValueError):
        avloc.train(corpus, tmp_path / "bad", {"train": {"tau": -1}})
