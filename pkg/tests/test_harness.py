import json
import math

import numpy as np
import pytest

from conftest import make_dataset
from ssbnet.errors import ConfigError, DataError
from ssbnet.harness import (
    RunConfig,
    augment,
    bench_case,
    evaluate_checkpoint,
    load_split,
    read_batch_file,
    read_metrics,
    read_netpbm,
    train,
    visualize,
    write_batch_file,
    write_pgm,
    write_ppm,
    write_visualization,
)
from ssbnet.harness.bench import to_csv
from ssbnet.harness.data import RECORD_BYTES
from ssbnet.network import build_network, micro_spec
from ssbnet.sampler import bilinear_resize_array


class TestData:
    def test_record_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 256, (5, 32, 32, 3), dtype=np.uint8)
        y = np.array([0, 9, 3, 3, 1])
        write_batch_file(tmp_path / "b.bin", x, y)
        assert (tmp_path / "b.bin").stat().st_size == 5 * RECORD_BYTES
        x2, y2 = read_batch_file(tmp_path / "b.bin")
        np.testing.assert_array_equal(x2, x)
        np.testing.assert_array_equal(y2, y)

    def test_channel_planes(self, tmp_path):
        # record layout: label, 1024 red, 1024 green, 1024 blue bytes
        rec = np.zeros(RECORD_BYTES, np.uint8)
        rec[0] = 4
        rec[1 : 1 + 1024] = 10
        rec[1 + 1024 : 1 + 2048] = 20
        rec[1 + 2048 :] = 30
        rec[1 + 32 + 5] = 99  # red, row 1, column 5
        (tmp_path / "b.bin").write_bytes(rec.tobytes())
        x, y = read_batch_file(tmp_path / "b.bin")
        assert y.tolist() == [4]
        assert x[0, 0, 0].tolist() == [10, 20, 30]
        assert x[0, 1, 5, 0] == 99

    def test_corrupt_length_reports_offset(self, tmp_path):
        (tmp_path / "b.bin").write_bytes(bytes(2 * RECORD_BYTES + 100))
        with pytest.raises(DataError, match=f"offset {2 * RECORD_BYTES}"):
            read_batch_file(tmp_path / "b.bin")

    def test_bad_label_reports_offset(self, tmp_path):
        raw = bytearray(3 * RECORD_BYTES)
        raw[RECORD_BYTES] = 12
        (tmp_path / "b.bin").write_bytes(bytes(raw))
        with pytest.raises(DataError, match=f"offset {RECORD_BYTES}"):
            read_batch_file(tmp_path / "b.bin")

    def test_subset(self, cifar_dir):
        x, y = load_split(cifar_dir, "train", 300)
        assert x.shape == (300, 32, 32, 3) and y.shape == (300,)
        full, _ = load_split(cifar_dir, "train")
        np.testing.assert_array_equal(full[:300], x)

    def test_augment_shapes_and_determinism(self):
        x = np.random.default_rng(0).integers(0, 256, (6, 32, 32, 3), dtype=np.uint8)
        a = augment(x, np.random.default_rng(1))
        b = augment(x, np.random.default_rng(1))
        assert a.shape == x.shape and a.dtype == np.uint8
        np.testing.assert_array_equal(a, b)

    def test_augment_is_crop_or_flipped_crop(self):
        x = np.random.default_rng(0).integers(1, 256, (20, 32, 32, 3), dtype=np.uint8)
        out = augment(x, np.random.default_rng(3))
        padded = np.pad(x, ((0, 0), (4, 4), (4, 4), (0, 0)))
        for i in range(len(x)):
            crops = [
                padded[i, dy : dy + 32, dx : dx + 32][:, ::flip]
                for dy in range(9)
                for dx in range(9)
                for flip in (1, -1)
            ]
            assert any(np.array_equal(out[i], c) for c in crops)


class TestNetpbm:
    def test_ppm_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (7, 5, 3), dtype=np.uint8)
        write_ppm(tmp_path / "a.ppm", img)
        assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n5 7\n255\n")
        np.testing.assert_array_equal(read_netpbm(tmp_path / "a.ppm"), img)

    def test_pgm_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (4, 6), dtype=np.uint8)
        write_pgm(tmp_path / "a.pgm", img)
        np.testing.assert_array_equal(read_netpbm(tmp_path / "a.pgm"), img)

    def test_header_comments(self, tmp_path):
        (tmp_path / "c.ppm").write_bytes(b"P6 # made by hand\n1 1\n# depth\n255\n\x01\x02\x03")
        assert read_netpbm(tmp_path / "c.ppm").tolist() == [[[1, 2, 3]]]

    def test_float_input_rounded_and_clipped(self, tmp_path):
        write_pgm(tmp_path / "f.pgm", np.array([[-3.0, 127.5, 300.0]]))
        assert read_netpbm(tmp_path / "f.pgm").tolist() == [[0, 128, 255]]

    @pytest.mark.parametrize("raw", [b"P3\n1 1\n255\n1 2 3", b"P6\n2 2\n255\n\x00", b"P6\n1 1\n65535\n\x00\x00"])
    def test_rejects(self, tmp_path, raw):
        (tmp_path / "x.ppm").write_bytes(raw)
        with pytest.raises(DataError):
            read_netpbm(tmp_path / "x.ppm")


class TestConfig:
    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_dict({"data": "d", "out": "o", "epoch": 3})

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="data"):
            RunConfig.from_dict({"out": "o"})

    @pytest.mark.parametrize(
        "bad",
        [{"epochs": -1}, {"batch_size": 0}, {"lr": float("nan")}, {"variant": "x"}, {"schedule": "linear"}, {"momentum": 1.0}, {"epochs": True}],
    )
    def test_invalid_values(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"data": "d", "out": "o", **bad})

    def test_relative_paths(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"data": "cifar", "out": "runs/a"}))
        cfg = RunConfig.load(tmp_path / "c.json")
        assert cfg.data == str(tmp_path / "cifar")

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError, match="JSON"):
            RunConfig.load(tmp_path / "c.json")

    def test_missing_dataset(self, tmp_path):
        cfg = RunConfig(data=str(tmp_path / "none"), out=str(tmp_path / "o"))
        with pytest.raises(DataError, match="does not exist"):
            cfg.validate_paths()

    def test_out_is_file(self, tmp_path, cifar_dir):
        (tmp_path / "f").write_text("")
        with pytest.raises(ConfigError, match="not a directory"):
            RunConfig(data=str(cifar_dir), out=str(tmp_path / "f")).validate_paths()

    def test_network_spec(self):
        cfg = RunConfig(data="d", out="o", variant="bilinear", sampling_sizes=[12, 6], saliency_kernel=3)
        spec = cfg.network_spec()
        assert spec.variant.kind == "bilinear"
        assert [g.sampling_size for g in spec.groups] == [None, (12, 12), (6, 6)]
        assert spec.num_classes == 10

    def test_cosine_schedule(self):
        cfg = RunConfig(data="d", out="o", lr=0.1, epochs=4, warmup_epochs=1)
        steps = 10
        assert cfg.lr_at(0, 0, steps) == pytest.approx(0.01)
        assert cfg.lr_at(0, 9, steps) == pytest.approx(0.1)
        assert cfg.lr_at(1, 0, steps) == pytest.approx(0.1)
        assert cfg.lr_at(2, 5, steps) == pytest.approx(0.05)
        assert cfg.lr_at(3, 9, steps) == pytest.approx(0.5 * 0.1 * (1 + math.cos(math.pi * 29 / 30)))

    def test_step_schedule(self):
        cfg = RunConfig(data="d", out="o", lr=1.0, schedule="step", step_milestones=[2, 4], step_gamma=0.5)
        assert [cfg.lr_at(e, 0, 5) for e in range(6)] == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]


@pytest.fixture(scope="module")
def run(cifar_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    cfg = RunConfig(data=str(cifar_dir), out=str(out / "a"), epochs=2, batch_size=32, train_subset=256, val_subset=100)
    return cfg, train(cfg)


class TestTraining:
    def test_metrics_log(self, run):
        cfg, result = run
        rows = read_metrics(result.metrics_path)
        assert [r.epoch for r in rows] == [0, 1, 2]
        assert rows == [
            type(r)(r.epoch, r.train_loss, r.train_acc, r.val_acc, round(r.wall_time, 3)) for r in result.metrics
        ]
        assert rows[1].train_loss < rows[0].train_loss
        assert all(0 <= r.val_acc <= 1 for r in rows)

    def test_eval_matches_log(self, run):
        cfg, result = run
        acc = evaluate_checkpoint(cfg, result.checkpoint)
        assert acc == result.metrics[-1].val_acc
        assert evaluate_checkpoint(cfg, result.checkpoint) == acc

    def test_eval_rejects_mismatched_spec(self, run):
        cfg, result = run
        other = RunConfig(**{**cfg.to_dict(), "variant": "bilinear"})
        with pytest.raises(ConfigError):
            evaluate_checkpoint(other, result.checkpoint)

    def test_fresh_network_near_chance(self, tmp_path):
        # labels independent of the pixels: any fixed classifier scores about 10%
        data = make_dataset(tmp_path / "noise", per_file=10, test_size=1000, seed=11, informative=False)
        for seed in range(3):
            acc = evaluate_checkpoint(RunConfig(data=str(data), out=str(tmp_path / "o"), seed=seed), None)
            assert 0.05 <= acc <= 0.15

    def test_deterministic_checkpoint(self, cifar_dir, tmp_path):
        kwargs = dict(data=str(cifar_dir), epochs=1, batch_size=32, train_subset=64, val_subset=32, seed=5)
        a = train(RunConfig(out=str(tmp_path / "a"), **kwargs))
        b = train(RunConfig(out=str(tmp_path / "b"), **kwargs))
        assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
        strip = lambda rows: [(r.epoch, r.train_loss, r.train_acc, r.val_acc) for r in rows]
        assert strip(a.metrics) == strip(b.metrics)

    def test_corrupt_dataset(self, tmp_path):
        data = make_dataset(tmp_path / "c", per_file=4, test_size=4)
        with open(data / "data_batch_3.bin", "ab") as fh:
            fh.write(b"\0" * 17)
        with pytest.raises(DataError, match="offset"):
            train(RunConfig(data=str(data), out=str(tmp_path / "o"), epochs=1, batch_size=4))


class TestBench:
    def test_case(self):
        row = bench_case(16, 4, 8, reps=3, warmup=1)
        assert row.dense_ns > 0 and row.sparse_ns > 0
        text = to_csv([row])
        assert text.splitlines()[0] == "H_in,W_in,H_r,W_r,D,dense_ns,sparse_ns,speedup"
        assert text.splitlines()[1].startswith("16,16,4,4,8,")

    def test_identity_size_no_pathology(self):
        row = bench_case(32, 32, 64, reps=20, warmup=3)
        assert row.sparse_ns < 2 * row.dense_ns


class TestVisualize:
    def image(self, seed=0):
        return np.random.default_rng(seed).integers(0, 256, (40, 48, 3), dtype=np.uint8)

    def test_fresh_network_samples_uniformly(self):
        net = build_network(micro_spec(), seed=0)
        vis = visualize(net, self.image(), "2-2")
        h = vis.resized.shape[0]
        assert vis.resized.shape == (16, 16, 3) and vis.sampled.shape == (8, 8, 3)
        block = vis.resized.reshape(8, h // 8, 8, h // 8, 3).mean(axis=(1, 3))
        np.testing.assert_allclose(vis.sampled, block, atol=1e-5)
        np.testing.assert_array_equal(vis.saliency, 0.5)

    def test_constant_gray(self):
        net = build_network(micro_spec(), seed=0)
        net.layer("3-2").head.conv.bn.gamma.data[:] = 4.0
        vis = visualize(net, np.full((32, 32, 3), 128, np.uint8), "3-2")
        np.testing.assert_allclose(vis.sampled, 128.0, atol=1e-9)

    def test_resized_matches_bilinear(self):
        net = build_network(micro_spec(), seed=0)
        img = self.image(1)
        vis = visualize(net, img, "3-2")
        np.testing.assert_allclose(vis.resized, bilinear_resize_array(img.astype(np.float64), 8, 8))

    def test_files_deterministic(self, tmp_path):
        net = build_network(micro_spec(), seed=0)
        net.layer("2-2").head.conv.bn.gamma.data[:] = 2.0
        a = write_visualization(visualize(net, self.image(), "2-2"), tmp_path / "a")
        b = write_visualization(visualize(net, self.image(), "2-2"), tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()
        sal = read_netpbm(a["saliency"])
        assert sal.shape == (16, 16) and sal.std() > 0

    def test_unsampled_selector(self):
        net = build_network(micro_spec(), seed=0)
        with pytest.raises(ConfigError, match="valid selectors: 2-2, 3-2"):
            visualize(net, self.image(), "1-1")

    def test_non_sampling_variant(self):
        net = build_network(micro_spec(variant="bilinear"), seed=0)
        with pytest.raises(ConfigError):
            visualize(net, self.image(), "2-2")
