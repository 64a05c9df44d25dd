"""Smoke test for the Python bindings.

Builds the extension with cargo (unless CYBERSCORE_LIB points at a built
library), imports it and exercises each exposed operation on small inputs.

    python3 python/smoke_test.py
"""

import importlib.util
import math
import os
import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def built_library() -> Path:
    if "CYBERSCORE_LIB" in os.environ:
        return Path(os.environ["CYBERSCORE_LIB"])
    subprocess.run(
        ["cargo", "build", "--release", "-p", "cyberscore-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    return ROOT / "target" / "release" / "libcyberscore_py.so"


def load(lib: Path, workdir: Path):
    target = workdir / "cyberscore.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("cyberscore", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check_statistics(cs) -> None:
    rng = random.Random(0)
    t = 120
    factors = [[rng.gauss(0.005, 0.04) for _ in range(t)] for _ in range(2)]
    portfolios = [
        [0.8 * factors[0][i] + 0.2 * factors[1][i] + rng.gauss(0, 0.02) for i in range(t)]
        for _ in range(5)
    ]
    grs = cs.grs_test(portfolios, factors)
    assert (grs.n, grs.t, grs.k) == (5, t, 2)
    assert 0.0 <= grs.p_value <= 1.0 and len(grs.alphas) == 5

    w = cs.welch_test([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    assert abs(w.mean_difference + 1.0) < 1e-12
    assert abs(w.df - 4.0) < 1e-12

    try:
        cs.welch_test([1.0], [2.0, 3.0])
    except ValueError:
        pass
    else:
        raise AssertionError("one observation must be rejected")

    days = [f"2020-{m:02d}-{d:02d}" for m in range(1, 13) for d in range(1, 29)]
    market = {d: rng.gauss(0, 0.01) for d in days}
    asset = {d: 0.001 + 1.2 * market[d] for d in days}
    event = days[300]
    asset[event] += 0.05
    rows = cs.car(asset, market, days, event, [(0, 0), (-1, 1)], estimation_days=200)
    assert abs(rows[0].car - 0.05) < 1e-9, rows[0]
    assert abs(rows[1].car - 0.05) < 1e-9, rows[1]


def check_text_and_clusters(cs) -> None:
    sentences = cs.preprocess("The attacker gained access. It stole the data!", ["the", "it"])
    assert sentences == [["attacker", "gained", "access"], ["stole", "data"]], sentences
    assert cs.segment(sentences, 4) == [["attacker", "gained", "access", "stole", "data"]]

    rng = random.Random(1)
    vectors, truth = [], []
    for g in range(3):
        for _ in range(10):
            v = [0.05] * 6
            v[g] = 1.0
            vectors.append([x + 0.05 * rng.random() for x in v])
            truth.append(g)
    for method in ["kmeans(k=3)", "louvain", "spectral(k=3;egn=3)"]:
        labels = cs.cluster(vectors, method, 7)
        groups = {tuple(i for i, l in enumerate(labels) if l == c) for c in set(labels)}
        expected = {tuple(i for i, t in enumerate(truth) if t == g) for g in range(3)}
        assert groups == expected, (method, labels)
    assert cs.modularity(vectors, truth) > 0.5

    maxima = cs.paragraph_maxima([[1.0, 0.0], [0.6, 0.8]], [[1.0, 0.0]])
    assert [round(m, 12) for m in maxima] == [1.0, 0.6]
    assert math.isclose(cs.cyber_score([1.0, 0.6], 1.0), 0.8)


def check_embedding(cs) -> None:
    topics = [["alpha", "beta", "gamma", "delta"], ["omega", "sigma", "kappa", "theta"]]
    rng = random.Random(2)
    docs = [[rng.choice(topics[i % 2]) for _ in range(30)] for i in range(40)]
    model = cs.EmbeddingModel(docs, seed=3, dim=16, epochs=20)
    assert model.vocab_size == 8
    assert len(model.vectors) == 40 and len(model.vectors[0]) == 16
    assert len(model.epoch_loss) == 20
    v = model.infer(["alpha", "beta"], steps=10, seed=1)
    assert len(v) == 16 and v == model.infer(["alpha", "beta"], steps=10, seed=1)


def check_pipeline(cs, workdir: Path) -> None:
    data, out = workdir / "data", workdir / "out"
    files = cs.synth(str(data), seed=4, n_firms=30, n_months=48, kb_entries=100)
    assert any(f.endswith("manifest.json") for f in files)

    params = cs.Params(seed=4)
    params.n_bins = [5]
    params.fm_portfolios = 5
    params.cluster_grid = ["louvain", "kmeans(k=4)"]
    params.set_embedding(dim=16, epochs=5, infer_steps=5)
    params.validate()
    assert cs.Params.from_json(params.to_json()).n_bins == [5]

    pipe = cs.Pipeline(str(data), str(out), params)
    assert pipe.stages()[-1] == "report"
    written = pipe.run("report")
    names = {Path(p).name for p in written}
    for expected in ["scores.csv", "alphas.csv", "grs.csv", "car.csv", "determinants.csv"]:
        assert expected in names, expected
    header = (out / "grs.csv").read_text().splitlines()[0]
    assert header.startswith("# produced-by: cyberscore grs config-hash: "), header

    try:
        cs.Pipeline(str(workdir / "missing"), str(out), params).run("prep")
    except OSError as e:
        assert "missing" in str(e)
    else:
        raise AssertionError("a missing input must raise")


def main() -> int:
    lib = built_library()
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        cs = load(lib, workdir)
        check_statistics(cs)
        check_text_and_clusters(cs)
        check_embedding(cs)
        check_pipeline(cs, workdir)
    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
