"""Smoke test for the cpbench_py extension module.

Uses an installed `cpbench_py` if one is importable (for example after
`maturin develop -m crates/python/Cargo.toml`); otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import importlib
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        return importlib.import_module("cpbench_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "cpbench-python"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "release", "libcpbench_py.so")
    if sys.platform == "darwin":
        lib = lib[:-3] + ".dylib"
    dest = tempfile.mkdtemp(prefix="cpbench_py_")
    shutil.copy(lib, os.path.join(dest, "cpbench_py.so"))
    sys.path.insert(0, dest)
    return importlib.import_module("cpbench_py")


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    cp = load()

    p = cp.softmax([math.log(2.0), 0.0])
    assert close(p[0], 2 / 3) and close(p[1], 1 / 3), p
    assert cp.softmax([5.0, 5.0], t=3.0) == [0.5, 0.5]

    assert close(cp.score_lac([0.7, 0.2, 0.1], 0), 0.3)
    assert close(cp.score_aps([0.5, 0.3, 0.2], 1, 1.0), 0.8)
    assert close(cp.score_raps([0.5, 0.3, 0.2], 2, 0.0, lam=0.1, k_reg=2), 0.9)
    assert cp.score_raps([0.5, 0.3, 0.2], 2, 0.3, lam=0.0) == cp.score_aps([0.5, 0.3, 0.2], 2, 0.3)

    assert cp.calibrate([i / 10 for i in range(1, 10)], 0.1) == 0.9
    assert math.isinf(cp.calibrate([0.1, 0.2, 0.3, 0.4], 0.1))
    assert cp.predict_set([0.7, 0.2, 0.1], 0.35, method="lac") == [0]
    assert cp.predict_set([0.5, 0.3, 0.2], 0.85, method="aps", u=1.0) == [0, 1]
    assert cp.predict_set([0.5, 0.3, 0.2], math.inf, method="raps") == [0, 1, 2]

    ds = cp.generate(10, 4000, 0.7, seed=3)
    assert ds.n == 4000 and ds.num_classes == 10 and ds.kind == "probabilities"
    assert abs(ds.accuracy() - 0.7) < 0.05
    cal, test = ds.split(0.5, seed=1)
    assert cal.n + test.n == ds.n
    q, sets = cp.conformalize(cal, test, method="aps", alpha=0.1, seed=9)
    labels = test.labels
    cov = cp.coverage(sets, labels)
    assert 0.85 < cov < 0.95, cov
    per_class = cp.class_conditional_coverage(sets, labels, 10)
    assert cp.mccc(per_class) <= cov <= max(per_class.values())
    assert cp.cov_gap(per_class, 0.1) >= 0.0
    assert cp.avg_set_size(sets) >= 1.0
    assert 0.0 <= cp.ece(test.rows(), labels) <= 1.0

    predictor = cp.ConformalPredictor.fit(cal, method="aps", alpha=0.1, seed=9)
    assert predictor.q_alpha == q and predictor.n_cal == cal.n
    assert predictor.predict_dataset(test, seed=9) == sets

    logits = ds.to_log_probabilities()
    report = cp.run_conformal(logits, method="raps", temperature=1.5, seed=2)
    assert report["T"] == 1.5 and report["method"] == "raps"
    assert report["n_cal"] == 2000 and report["n_test"] == 2000
    assert logits.with_temperature(1.0).predictions() == logits.predictions()

    shifted_cal, shifted_test = cp.generate_pair(10, 2000, 0.7, 0.3, noise_scale=1.0, seed=4)
    assert shifted_test.accuracy() < shifted_cal.accuracy()

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ds.cpl")
        small = cp.Dataset([[0.25, 0.75]], labels=[1], kind="probabilities")
        small.write(path)
        back = cp.Dataset.read(path)
        assert back.rows() == [[0.25, 0.75]] and back.labels == [1]
        with open(path, "r+b") as f:
            f.write(b"XXXX")
        try:
            cp.Dataset.read(path)
        except ValueError:
            pass
        else:
            raise AssertionError("corrupted file was accepted")

    try:
        cp.run_conformal(ds, temperature=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("temperature on probabilities was accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
