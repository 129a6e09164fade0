"""Builds the extension module and exercises the Python API end to end.

Usage: python3 python/smoke_test.py [--no-build]
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LIB = os.path.join(ROOT, "target", "release", "libinnovbench.so")
FIXTURE = os.path.join(ROOT, "crates", "core", "tests", "fixtures", "five_sentences.iemb")


def load_module(build):
    if build or not os.path.exists(LIB):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "innovbench-python"],
            cwd=ROOT,
            check=True,
        )
    dest = tempfile.mkdtemp()
    shutil.copy(LIB, os.path.join(dest, "innovbench.so"))
    sys.path.insert(0, dest)
    import innovbench

    return innovbench


def main():
    ib = load_module("--no-build" not in sys.argv)

    p = ib.Dist([0.5, 0.25, 0.25, 0.0])
    q = ib.Dist.uniform(4)
    assert len(p) == 4 and p.support() == [0, 1, 2]
    assert math.isclose(ib.tv_distance(p, q), 0.25)
    pi = ib.Partition([0, 1, 1, 1])
    pc = ib.coarsen(p, pi)
    assert math.isclose(sum(pc.mass), 1.0)
    assert math.isclose(pc.mass[1], 0.5 / 3)
    assert ib.miscalibration(pc, pc) < 1e-12
    try:
        ib.Dist([0.5, 0.6])
    except ValueError:
        pass
    else:
        raise AssertionError("unnormalized mass accepted")

    meta = ib.MetaSpec.uniform_k(10, 3)
    world = meta.sample_world(7)
    corpus = world.sample_corpus(6, 8)
    post = meta.posterior(corpus)
    marg = post.fact_marginals()
    assert len(marg) == 10
    for y in corpus.observed():
        assert math.isclose(marg[y], 1.0)
    assert post.regularity() >= 1.0 - 1e-12

    g = ib.Model.build('{"kind": "spike", "beta": 0.5}', world, corpus, 3)
    assert ib.hallucination_rate(g, world) <= ib.innovation_rate(g, corpus) + 1e-12
    emp = ib.Model.empirical(corpus)
    assert ib.innovation_rate(emp, corpus) == 0.0
    assert 0.0 <= ib.good_turing(corpus) <= 1.0

    point, lo, hi = ib.clopper_pearson(0, 10)
    assert point == 0.0 and lo == 0.0 and 0.25 < hi < 0.35

    assert "markov" in ib.theorems()
    rep = ib.mc_verify("highconf", ib.MetaSpec.uniform_k(12, 3), "empirical", 8, None, 2000, 1)
    assert rep["pass"] and rep["trials"] == 2000

    table = ib.EmbeddingTable.load(FIXTURE)
    assert (table.count, table.dim) == (5, 8)
    a, b = table.row(0), table.row(1)
    assert abs(sum(x * y for x, y in zip(a, b)) - 1.0) < 1e-6
    assert table.semantic_innovation_rate(table, 0.95) == 0.0

    reviews = [
        "The kettle boils water fast.",
        "The kettle is loud.",
        "The lamp is bright.",
        "The lamp boils nothing.",
    ]
    lm = ib.NgramModel(reviews, 2)
    assert lm.order == 2
    assert math.isclose(lm.prob(["the"], "kettle"), 0.5)
    gens = lm.generate(20, 5)
    assert gens == lm.generate(20, 5) and len(gens) == 20
    assert ib.preprocess("Hello, World!") == ["hello", "world"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
