"""Acceptance criteria 1-8.  Each test carries a ``criterion`` marker; the
terminal summary prints one PASS/FAIL line per criterion.

Criterion 6 (full run) reads a real CIFAR-10 binary dataset from
``$SSB_CIFAR10_DIR`` and fails when it is absent.
"""

import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import test_gradients as grads
import test_sampler
from conftest import SEEDS, inverse_oracle, make_dataset, overlap_oracle, sample_oracle
from ssbnet.autodiff import float64_mode
from ssbnet.checkpoint import Checkpoint, save_checkpoint
from ssbnet.cli import main
from ssbnet.flops import count
from ssbnet.harness import RunConfig, read_metrics, train, write_ppm
from ssbnet.harness.bench import bench_case, to_csv
from ssbnet.harness.data import check_dataset
from ssbnet.network import build_network, micro_spec, spec_by_name
from ssbnet.sampler import (
    inverse_sample,
    inverse_sample_sparse,
    marginalize,
    sample,
    sample_sparse,
    sampling_weights,
)

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts"


@pytest.mark.criterion("1", "weight-matrix properties over 1000 random saliency maps")
def test_criterion_1_weight_properties():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    for _ in range(1000):
        h, w = (int(v) for v in rng.integers(4, 129, 2))
        hr, wr = int(rng.integers(2, h + 1)), int(rng.integers(2, w + 1))
        marg = marginalize(test_sampler.random_saliency(rng, h, w))
        sw = sampling_weights(marg, hr, wr)
        test_sampler.check_axis(sw.y, marg.sy, hr)
        test_sampler.check_axis(sw.x, marg.sx, wr)
    assert time.perf_counter() - start < 30


@pytest.mark.criterion("2", "sample/inverse_sample vs brute-force oracle, all shapes up to 8x8x4")
def test_criterion_2_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    cases = 0
    for h in range(1, 9):
        for wd in range(1, 9):
            for hr in range(1, h + 1):
                for wr in range(1, wd + 1):
                    d = 1 + cases % 4
                    cases += 1
                    w = sampling_weights(marginalize(test_sampler.random_saliency(rng, h, wd)), hr, wr)
                    gy, gx = overlap_oracle(w.y.marginal, hr), overlap_oracle(w.x.marginal, wr)
                    x = rng.standard_normal((h, wd, d))
                    y = rng.standard_normal((hr, wr, d))
                    fwd, inv = sample_oracle(x, gy, gx), inverse_oracle(y, gy, gx)
                    np.testing.assert_allclose(sample(x, w), fwd, atol=1e-6)
                    np.testing.assert_allclose(sample_sparse(x, w), fwd, atol=1e-6)
                    np.testing.assert_allclose(inverse_sample(y, w), inv, atol=1e-6)
                    np.testing.assert_allclose(inverse_sample_sparse(y, w), inv, atol=1e-6)
    assert cases == 36 * 36
    assert time.perf_counter() - start < 60


@pytest.mark.criterion("3", "finite-difference gradient suite, every primitive and the SSB layer, 5 seeds")
def test_criterion_3_gradients():
    start = time.perf_counter()
    for seed in SEEDS:
        for name in sorted(grads.CASES):
            grads.test_primitive(name, seed)
        for training in (True, False):
            grads.test_batchnorm(seed, training)
        grads.test_axis_weights(seed)
        for kernel in ("dense", "sparse"):
            grads.test_ssb_layer(seed, kernel)
        test_sampler.TestSamplerBackward().test_finite_differences(seed)
    assert time.perf_counter() - start < 300


@pytest.mark.criterion("4a", "ResNet-D-50 @224 within 10% of 4.3 GFLOPs, 2xMAC")
def test_criterion_4_resnet_d_50_flops():
    start = time.perf_counter()
    flops = count(spec_by_name("resnet-d-50"), 224, "2xmac").total_flops
    assert time.perf_counter() - start < 1
    assert abs(flops - 4.3e9) <= 0.1 * 4.3e9, f"2xMAC total {flops / 1e9:.3f}G vs 4.3G"


@pytest.mark.criterion("4b", "SSB-ResNet-D-50 / ResNet-D-50 cost ratio 0.70 +- 0.05")
def test_criterion_4_ratio():
    start = time.perf_counter()
    base = count(spec_by_name("resnet-d-50"), 224, "2xmac").total_flops
    ssb = count(spec_by_name("ssb-resnet-d-50"), 224, "2xmac").total_flops
    assert time.perf_counter() - start < 1
    assert abs(ssb / base - 0.70) <= 0.05, f"ratio {ssb / base:.4f}"


@pytest.mark.criterion("5", "fresh adaptive network bitwise equal to uniform-mechanism network")
def test_criterion_5_initialization_equivalence():
    x = np.random.default_rng(5).standard_normal((4, 32, 32, 3)).astype(np.float32)
    for seed in SEEDS:
        a = build_network(micro_spec(variant="adaptive"), seed)
        u = build_network(micro_spec(variant="uniform-mechanism"), seed)
        for training in (False, True):
            assert a(x, training).data.tobytes() == u(x, training).data.tobytes()


def _full_run(data, out, variant):
    cfg = RunConfig(data=str(data), out=str(out / variant), variant=variant, epochs=20, batch_size=128, seed=0)
    return train(cfg).metrics[-1].val_acc


@pytest.mark.criterion("6", "micro net, 20 epochs full CIFAR-10: both variants >= 70%, within 1.5%")
def test_criterion_6_full_cifar(tmp_path):
    data = os.environ.get("SSB_CIFAR10_DIR")
    assert data, "CIFAR-10 binary dataset unavailable: set SSB_CIFAR10_DIR to a directory with data_batch_1..5.bin and test_batch.bin"
    check_dataset(data)
    adaptive = _full_run(data, tmp_path, "adaptive")
    uniform = _full_run(data, tmp_path, "uniform-mechanism")
    assert adaptive >= 0.70 and uniform >= 0.70, (adaptive, uniform)
    assert abs(adaptive - uniform) <= 0.015, (adaptive, uniform)


@pytest.mark.criterion("6-smoke", "512-sample smoke run: loss decreases, under 2 minutes")
def test_criterion_6_smoke(tmp_path):
    data = os.environ.get("SSB_CIFAR10_DIR") or make_dataset(tmp_path / "cifar", per_file=128, test_size=256)
    start = time.perf_counter()
    cfg = RunConfig(data=str(data), out=str(tmp_path / "run"), epochs=1, batch_size=32, train_subset=512, val_subset=256)
    rows = read_metrics(train(cfg).metrics_path)
    assert time.perf_counter() - start < 120
    assert rows[1].train_loss < rows[0].train_loss


@pytest.mark.criterion("7", "sparse sampler faster than dense at 64x64 -> 16x16, D=256")
def test_criterion_7_benchmark():
    row = bench_case(64, 16, 256, reps=20, warmup=3)  # raises if the correctness gate fails
    ARTIFACTS.mkdir(exist_ok=True)
    (ARTIFACTS / "bench_64_16_256.csv").write_text(to_csv([row]))
    assert row.sparse_ns < row.dense_ns, f"dense {row.dense_ns} ns, sparse {row.sparse_ns} ns"


GOLDEN_SHA256 = {
    # fixed network (seed 0, saliency gamma 2.0, beta 0.1) on a seeded 40x48 image
    "2-2/saliency.pgm": "7d33e8a56daa91266ad162a98d57a451ead95933d7b414f0f62f234bb81b987e",
    "2-2/resized.ppm": "37e857fa0a84476c85dbb8275bfb9bb64e48fac8531780f6d47eeae638465ac7",
    "2-2/sampled.ppm": "1a0e9661e47305f4f16668bce7223d555ae4f2a1eec32aece1486725a06bda1a",
    "3-2/saliency.pgm": "8de48ce06725273588eab7d63f2439d6edc888d570b2614ad236bb46250804b2",
    "3-2/resized.ppm": "8e2311db64e8abe9238a6ec68ed8ba32aaeea55d80aa214ea5310c3bc98f1b08",
    "3-2/sampled.ppm": "68930cdbc5dd89699aa5fd01d716191c071994c1eeb28e21ddac21fdf3e94ccb",
}


def _fixed_checkpoint(path):
    net = build_network(micro_spec(), seed=0)
    for name, p in net.params.items():
        if name.endswith("saliency.bn.gamma"):
            p.data[:] = 2.0
        elif name.endswith("saliency.bn.beta"):
            p.data[:] = 0.1
    save_checkpoint(path, Checkpoint(net.state_dict()))


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.mark.criterion("8", "train/eval/visualize bitwise reproducible; golden image hashes")
def test_criterion_8_determinism(tmp_path, capsys):
    data = make_dataset(tmp_path / "cifar", per_file=32, test_size=64)
    ckpts, accs = [], []
    for run in ("a", "b"):
        cfg = RunConfig(data=str(data), out=str(tmp_path / run), epochs=1, batch_size=32, train_subset=96, val_subset=64, seed=3)
        res = train(cfg)
        ckpts.append(res.checkpoint.read_bytes())
        config = tmp_path / f"{run}.json"
        config.write_text(json.dumps({"data": str(data), "out": str(tmp_path / run), "val_subset": 64, "seed": 3}))
        assert main(["eval", "--config", str(config), "--checkpoint", str(res.checkpoint)]) == 0
        accs.append(capsys.readouterr().out)
    assert ckpts[0] == ckpts[1]
    assert accs[0] == accs[1]

    _fixed_checkpoint(tmp_path / "fixed.ssb")
    image = tmp_path / "in.ppm"
    write_ppm(image, np.random.default_rng(8).integers(0, 256, (40, 48, 3)))
    hashes = {}
    for layer in ("2-2", "3-2"):
        for rep in ("x", "y"):
            out = tmp_path / f"vis_{layer}_{rep}"
            argv = ["visualize", "--checkpoint", str(tmp_path / "fixed.ssb"), "--image", str(image), "--layer", layer, "--out", str(out)]
            assert main(argv) == 0
            for name in ("saliency.pgm", "resized.ppm", "sampled.ppm"):
                key = f"{layer}/{name}"
                digest = _sha(out / name)
                assert hashes.setdefault(key, digest) == digest, f"{key} differs between runs"
    capsys.readouterr()
    assert hashes == GOLDEN_SHA256
