import json

import numpy as np
import pytest

from ssbnet.harness.data import TEST_FILE, TRAIN_FILES, write_batch_file

SEEDS = [0, 1, 2, 3, 4]


def overlap_oracle(marginal, r):
    """Interval-overlap weights by direct enumeration, independent of the library."""
    marginal = [float(v) for v in marginal]
    total = sum(marginal)
    edges_s = [0.0]
    for v in marginal:
        edges_s.append(edges_s[-1] + v / total)
    edges_s[-1] = 1.0
    g = np.zeros((r, len(marginal)))
    for i in range(r):
        lo_u, hi_u = i / r, (i + 1) / r
        for j in range(len(marginal)):
            lo = max(edges_s[j], lo_u)
            hi = min(edges_s[j + 1], hi_u)
            if hi > lo:
                g[i, j] = hi - lo
    return g


def sample_oracle(x, gy, gx):
    """Nested-loop evaluation of the scaled separable weighted sum."""
    hr, h = gy.shape
    wr, w = gx.shape
    out = np.zeros((hr, wr, x.shape[2]))
    for i in range(hr):
        for j in range(wr):
            for a in range(h):
                for b in range(w):
                    out[i, j] += gy[i, a] * gx[j, b] * x[a, b]
    return out * hr * wr


def inverse_oracle(y, gy, gx):
    hr, h = gy.shape
    wr, w = gx.shape
    out = np.zeros((h, w, y.shape[2]))
    for a in range(h):
        for b in range(w):
            for i in range(hr):
                for j in range(wr):
                    out[a, b] += gy[i, a] * gx[j, b] * y[i, j]
    return out * h * w


def make_dataset(root, per_file=64, test_size=64, seed=0, informative=True):
    """CIFAR-format batches; with ``informative`` each class has its own mean color."""
    rng = np.random.default_rng(seed)
    palette = rng.integers(30, 226, size=(10, 1, 1, 3))

    def draw(n):
        y = rng.integers(0, 10, n)
        mean = palette[y] if informative else 128
        x = np.clip(mean + rng.normal(0, 30, (n, 32, 32, 3)), 0, 255).astype(np.uint8)
        return x, y

    root.mkdir(parents=True, exist_ok=True)
    for name in TRAIN_FILES:
        write_batch_file(root / name, *draw(per_file))
    write_batch_file(root / TEST_FILE, *draw(test_size))
    return root


@pytest.fixture(scope="session")
def cifar_dir(tmp_path_factory):
    return make_dataset(tmp_path_factory.mktemp("cifar"), per_file=128, test_size=200)


@pytest.fixture
def write_config(tmp_path):
    def _write(data_dir, **overrides):
        doc = {
            "data": str(data_dir),
            "out": str(tmp_path / "run"),
            "epochs": 1,
            "batch_size": 32,
            "train_subset": 128,
            "val_subset": 100,
        }
        doc.update(overrides)
        path = tmp_path / f"config_{len(list(tmp_path.glob('config_*.json')))}.json"
        path.write_text(json.dumps(doc))
        return path

    return _write


# --------------------------------------------------------------------------- acceptance reporting

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label, title = marker.args
        detail = ""
        if report.failed:
            text = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else str(report.longrepr)
            detail = " ".join(text.split())[:160]
        _CRITERIA.append((label, title, report.outcome.upper(), detail, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, title, outcome, detail, duration in _CRITERIA:
        line = f"criterion {label:<10} {outcome:<7} {title} ({duration:.1f}s)"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
