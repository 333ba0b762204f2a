import numpy as np
import pytest

import ctlkit


def test_separable_toy_set_scores_perfectly():
    ds = ctlkit.generate_synthetic(classes=2, per_class=2, dim=4, sigma=0.0, views=1, seed=1)
    assert len(ds) == 4
    assert ctlkit.evaluate(ds, "centroid")["mAP"] == 1.0


def test_dataset_arrays_round_trip(tmp_path):
    ds = ctlkit.generate_synthetic(5, 4, 8, 0.2, 2, seed=3)
    vecs = ds.vectors()
    assert vecs.shape == (20, 8)
    assert vecs.dtype == np.float32
    rebuilt = ctlkit.Dataset(vecs, ds.ids(), ds.class_ids(), ds.view_ids(), ds.splits())
    assert rebuilt == ds
    path = tmp_path / "d.bin"
    ctlkit.save_dataset(ds, path)
    assert ctlkit.load_dataset(path) == ds
    assert path.stat().st_size == 18 + 20 * (16 + 4 * 8)


def test_metrics():
    assert ctlkit.average_precision([True, False, True], 2) == pytest.approx(0.8333333, abs=1e-6)
    assert ctlkit.accuracy_at_k([False] * 10 + [True], 10) == 0
    assert ctlkit.accuracy_at_k([False] * 10 + [True], 20) == 1


def test_schedule():
    assert ctlkit.lr_at_epoch(0) == 1e-4
    assert ctlkit.lr_at_epoch(40) == 1e-5
    assert ctlkit.lr_at_epoch(70) == 1e-6


def test_train_embed_evaluate_is_deterministic():
    ds = ctlkit.generate_synthetic(12, 6, 8, 0.15, 2, seed=4)
    enc_a, log_a = ctlkit.train(ds, "epochs=3\nbase_lr=0.001\n")
    enc_b, log_b = ctlkit.train(ds, "epochs=3\nbase_lr=0.001\n")
    assert log_a == log_b
    assert enc_a.to_bytes() == enc_b.to_bytes()
    assert log_a.splitlines()[0] == "epoch,lr,triplet,ctl,center,classification,total"
    emb = enc_a.embed(ds)
    report = ctlkit.evaluate(emb, "instance", cross_view=True)
    assert 0.0 <= report["mAP"] <= 1.0
    assert report["queries_evaluated"] + report["queries_skipped"] == 12


def test_errors():
    with pytest.raises(ctlkit.DataError):
        ctlkit.load_dataset("/nonexistent/file.bin")
    with pytest.raises(ctlkit.DataError):
        ctlkit.train(ctlkit.generate_synthetic(4, 4, 4, 0.1, 1, seed=1), "learning_rate=1\n")
    vecs = np.array([[0, 0], [1, 0]], dtype=np.float32)
    ds = ctlkit.Dataset(vecs, [1, 2], [0, 0], [0, 1], ["gallery", "query"])
    with pytest.raises(ctlkit.ZeroNormError):
        ctlkit.evaluate(ds, "instance")
    with pytest.raises(ValueError):
        ctlkit.evaluate(ds, "cluster")


def test_bench_ratios():
    ds = ctlkit.generate_synthetic(50, 11, 8, 0.2, 2, seed=5)
    rows = {r["mode"]: r for r in ctlkit.bench(ds, repeats=3)}
    assert rows["instance"]["candidates"] == 500
    assert rows["centroid"]["candidates"] == 50
    assert rows["instance"]["payload_bytes"] == 10 * rows["centroid"]["payload_bytes"]
