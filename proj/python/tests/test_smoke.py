import numpy as np
import pytest

import fimfuse


@pytest.fixture(scope="module")
def data():
    return fimfuse.synth(seed=3, latent_dim=3, d_img=6, d_txt=5, num_train=200, num_dev=60, num_test=60)


def small(mode):
    return {"n": 4, "m": 8, "fusion_mode": mode}


def test_synth_shapes_and_determinism(data):
    again = fimfuse.synth(seed=3, latent_dim=3, d_img=6, d_txt=5, num_train=200, num_dev=60, num_test=60)
    assert len(data) == 320
    assert data.image("train").shape == (200, 6)
    assert data.text("dev").shape == (60, 5)
    np.testing.assert_array_equal(data.image("test"), again.image("test"))
    assert set(np.unique(data.labels("train"))) <= {0, 1}


def test_dataset_round_trip(data, tmp_path):
    path = str(tmp_path / "d.fimf")
    data.write(path)
    back = fimfuse.read_dataset(path)
    assert back.ids("test") == data.ids("test")
    np.testing.assert_array_equal(back.text("train"), data.text("train"))
    assert back.manifest["d_img"] == 6


def test_bad_files_raise_typed_errors(tmp_path):
    with pytest.raises(fimfuse.IoError):
        fimfuse.read_dataset(str(tmp_path / "missing.fimf"))
    junk = tmp_path / "junk.fimf"
    junk.write_bytes(b"JUNKJUNK")
    with pytest.raises(fimfuse.Error):
        fimfuse.read_dataset(str(junk))


def test_parameter_count():
    assert fimfuse.parameter_count({"d_img": 1, "d_txt": 1, "n": 1, "m": 1, "fusion_mode": "concat"}) > 0
    cross = {"d_img": 6, "d_txt": 5, "n": 4, "m": 8, "fusion_mode": "cross"}
    assert fimfuse.init_model(cross, 1).num_parameters == fimfuse.parameter_count(cross)
    with pytest.raises(fimfuse.ConfigError):
        fimfuse.parameter_count({"fusion_mode": "sideways"})


def test_fit_evaluate_save_load(data, tmp_path):
    model, history = fimfuse.fit(data, small("cross"), {"max_epochs": 3, "batch_size": 16,
                                                       "learning_rate": 0.01, "seed": 5})
    assert len(history["epochs"]) == 3
    again, _ = fimfuse.fit(data, small("cross"), {"max_epochs": 3, "batch_size": 16,
                                                 "learning_rate": 0.01, "seed": 5}, threads=3)
    np.testing.assert_array_equal(model.parameters(), again.parameters())

    p = model.predict(data, "test")
    assert p.shape == (60,) and np.all((p >= 0) & (p <= 1))
    report = model.evaluate(data, "test")
    entry = next(e for e in report if e["metric"] == "auroc")
    assert entry["value"] == pytest.approx(fimfuse.auroc(p, data.labels("test")), abs=1e-12)

    path = str(tmp_path / "m.fimm")
    model.save(path)
    loaded = fimfuse.load_checkpoint(path)
    assert loaded.config["fusion_mode"] == "cross"
    np.testing.assert_allclose(loaded.parameters(), model.parameters().astype(np.float32), rtol=0)


def test_metrics():
    assert fimfuse.auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    with pytest.raises(fimfuse.UndefinedMetricError):
        fimfuse.auroc([0.1, 0.2], [1, 1])
    r = fimfuse.micro_f1([[0.9, 0.1], [0.2, 0.7]], [[1, 0], [0, 0]])
    assert (r["tp"], r["fp"], r["fn"]) == (1, 1, 0)
    assert r["f1"] == pytest.approx(2 / 3)


def test_interpret_pieces(data):
    model = fimfuse.init_model({"d_img": 6, "d_txt": 5, "n": 4, "m": 8, "fusion_mode": "cross"}, 2)
    d = model.gradient_matrix()
    assert d.shape == (4, 4)
    bits = fimfuse.binarize(np.arange(1.0, 101.0).reshape(10, 10), 20, 80)
    assert bits.sum() == 40
    pts = np.vstack([np.zeros((5, 2)), np.full((5, 2), 10.0)])
    km = fimfuse.kmeans(pts, 2, seed=1)
    assert len(set(km["assignments"][:5])) == 1 and km["assignments"][0] != km["assignments"][5]
    report = model.interpret(data, k=3, seed=4)
    assert report["k"] == 3 and report["model_crc"] == model.crc
    with pytest.raises(fimfuse.ModeError):
        fimfuse.init_model(small("align") | {"d_img": 6, "d_txt": 5}, 1).gradient_matrix()
