import json
import os
import subprocess

import numpy as np
import pytest

import ufd


def blobs(n=200, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.normal(size=(n, dim)).astype(np.float32)
    x[:, 0] += np.where(labels == 1, 4.0, -4.0)
    x[:, 1] += 6.0
    return x, labels


def test_bank_round_trip(tmp_path):
    x, y = blobs()
    bank = ufd.build_bank(x, y.tolist(), source_tags=["s"] * len(y), metadata={"encoder_id": "enc", "layer_id": "L1"})
    assert len(bank) == 200 and bank.dim == 8
    assert bank.count(ufd.Label.FAKE) == 100
    assert bank.encoder_id == "enc" and bank.layer_id == "L1"
    np.testing.assert_array_equal(bank.raw, x)
    np.testing.assert_allclose(np.linalg.norm(bank.unit, axis=1), 1.0, atol=1e-6)

    path = tmp_path / "b.ufdb"
    ufd.save_bank(bank, path)
    assert os.path.getsize(path) == ufd.encoded_size(bank)
    assert ufd.load_bank(path) == bank
    assert ufd.decode_bank(ufd.encode_bank(bank)) == bank


def test_corruption_raises_with_code():
    x, y = blobs(n=10)
    data = bytearray(ufd.encode_bank(ufd.build_bank(x, y.tolist())))
    data[40] ^= 1
    with pytest.raises(ufd.UfdError) as info:
        ufd.decode_bank(bytes(data))
    assert info.value.code == "ChecksumMismatch"


def test_merge_and_subsample():
    x, y = blobs()
    bank = ufd.build_bank(x, y.tolist())
    merged = ufd.merge_banks([bank, bank])
    assert len(merged) == 400
    sub = ufd.subsample_bank(merged, total=51, seed=3)
    assert len(sub) == 51 and sub.count(ufd.Label.REAL) == 26
    assert ufd.subsample_bank(merged, total=51, seed=3) == sub


def test_knn_scores_separable_blobs():
    x, y = blobs(seed=1)
    bank = ufd.build_bank(x, y.tolist())
    q, qy = blobs(n=50, seed=2)
    out = ufd.knn_score(q, bank, k=3)
    np.testing.assert_array_equal(out["decision"], qy)
    np.testing.assert_allclose(out["score"], out["d_real"] - out["d_fake"])
    assert ufd.average_precision(out["score"].tolist(), qy.tolist()) == 1.0


def test_metrics():
    scores, truth = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    assert ufd.average_precision(scores, truth) == pytest.approx(0.8333333333333333)
    acc = ufd.accuracy_at_threshold(scores, truth, 0.5)
    assert acc["real_accuracy"] == 1.0 and acc["fake_accuracy"] == 0.5
    assert acc["accuracy"] == acc["balanced_accuracy"] == 0.75
    threshold, best = ufd.calibrate_threshold(scores, truth)
    assert best >= acc["balanced_accuracy"]
    assert ufd.pr_curve(scores, truth)[-1] == (1.0, 0.5)


def test_train_linear_is_deterministic(tmp_path):
    x, y = blobs(n=400, seed=4)
    bank = ufd.build_bank(x, y.tolist())
    model, report = ufd.train_linear(bank, epochs=30, seed=5)
    again, _ = ufd.train_linear(bank, epochs=30, seed=5)
    assert model.weights == again.weights and model.bias == again.bias
    assert report["epochs"][0]["train_loss"] < report["initial_train_loss"]
    _, decision = model.predict(x)
    assert (decision == y).mean() == 1.0
    path = tmp_path / "m.json"
    ufd.save_model(model, path)
    assert ufd.load_model(path).weights == model.weights


def test_run_cli_inspect(tmp_path):
    x, y = blobs(n=20)
    path = tmp_path / "b.ufdb"
    ufd.save_bank(ufd.build_bank(x, y.tolist()), path)
    status, out, err = ufd.run_cli(["bank", "inspect", str(path)])
    assert status == 0, err
    assert "N=20 (10 real / 10 fake)" in out
    assert ufd.run_cli(["bank", "inspect", str(tmp_path / "missing.ufdb")])[0] == 2


def test_cli_binary_calibrate(tmp_path):
    cli = os.environ.get("UFD_CLI")
    if not cli:
        pytest.skip("UFD_CLI not set")
    scores = tmp_path / "s.jsonl"
    scores.write_text(
        "\n".join(json.dumps({"score": s, "truth": t}) for s, t in [(0.1, "real"), (0.2, "real"), (0.8, "fake")])
    )
    result = subprocess.run([cli, "calibrate", "--scores", str(scores)], capture_output=True, text=True, check=True)
    assert json.loads(result.stdout)["balanced_accuracy"] == 1.0
