import numpy as np
import pytest

import neurovid as nv


def tiny_config():
    cfg = nv.RunConfig()
    cfg.apply(
        {
            "train_windows": "24",
            "test_windows": "8",
            "voxels": "96",
            "repeats": "6",
            "embed_dim": "16",
            "depth": "1",
            "heads": "2",
            "decoder_dim": "8",
            "decoder_depth": "1",
            "pretrain_steps": "4",
            "contrastive_steps": "4",
            "traingen_steps": "4",
            "cotrain_steps": "4",
            "gen_model_dim": "16",
            "gen_depth": "1",
            "ddim_steps": "4",
            "nway_trials": "10",
            "seed": "5",
        }
    )
    return cfg


def test_config_roundtrip_and_hash():
    cfg = tiny_config()
    assert cfg.to_dict()["voxels"] == "96"
    h = cfg.hash()
    assert h == tiny_config().hash()
    cfg.apply({"seed": "6"})
    assert cfg.hash() != h


def test_config_rejects_bad_values():
    cfg = nv.RunConfig()
    with pytest.raises(nv.ConfigError):
        cfg.apply({"voxels": "-1"})
    with pytest.raises(nv.ConfigError):
        cfg.apply({"no_such_key": "1"})


def test_ssim_and_nway():
    rng = np.random.default_rng(0)
    img = rng.random((16, 16))
    assert nv.ssim(img, img) == 1.0
    assert nv.ssim(img, 1.0 - img) < 1.0

    gt = np.zeros(8)
    gt[3] = 1.0
    assert nv.nway_topk(gt.tolist(), gt.tolist(), 2, 1, 50, 7) == 1.0


def test_stats_helpers():
    a = [0.1, 0.2, 0.15, 0.18]
    assert nv.ablation_stats(a, a) == 1.0
    assert nv.p_band(0.001) == "p<0.01"


def test_container_roundtrip(tmp_path):
    c = nv.Container()
    arr = np.arange(6.0).reshape(2, 3)
    c.put("x", arr)
    c.put_string("tag", "hello")
    path = str(tmp_path / "t.nct")
    c.save(path)

    loaded = nv.Container.load(path)
    assert loaded.names() == ["x", "tag"]
    np.testing.assert_array_equal(loaded.array("x"), arr)
    assert loaded.string("tag") == "hello"


def test_pipeline_stages_and_prereqs(tmp_path):
    cfg = tiny_config()
    run_dir = str(tmp_path / "run")
    pipe = nv.Pipeline(cfg, run_dir)

    with pytest.raises(nv.PrereqError):
        pipe.run_stage("pretrain")

    pipe.run_stage("gen-data")
    pipe.run_stage("pretrain")
    assert pipe.stage_done("gen-data")
    assert not pipe.stage_done("sample")
    assert "cotrain" in nv.Pipeline.stage_names()
