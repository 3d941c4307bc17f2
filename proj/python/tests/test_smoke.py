import json
import math
import pathlib
import random

import pytest

import provsyn

ROOT = pathlib.Path(__file__).resolve().parents[2]
TOY = ROOT / "data" / "toy"


def star(leaves):
    return {
        "directed": False,
        "manifest": "t",
        "nodes": [{"id": 0, "type": "process", "name": "[null]"}]
        + [{"id": i, "type": "file", "name": "[null]"} for i in range(1, leaves + 1)],
        "edges": [{"src": 0, "dst": i, "type": "read"} for i in range(1, leaves + 1)],
    }


def path(n):
    return {
        "directed": False,
        "manifest": "t",
        "nodes": [{"id": i, "type": "process", "name": "[null]"} for i in range(n)],
        "edges": [{"src": i, "dst": i + 1, "type": "clone"} for i in range(n - 1)],
    }


@pytest.fixture(scope="module")
def toy_graph():
    return provsyn.parse_events(TOY / "events.jsonl", ROOT / "manifests" / "toy.json")


def test_parse_and_balance(toy_graph):
    assert toy_graph["directed"]
    assert len(toy_graph["nodes"]) > 10
    rep = provsyn.label_balance(toy_graph)
    assert 0.0 < rep["node_entropy"] <= math.log(3) + 1e-12


def test_dfs_code_is_permutation_invariant():
    g = star(4)
    code = provsyn.min_dfs_code(g)
    shuffled = json.loads(json.dumps(g))
    ids = list(range(5))
    random.Random(3).shuffle(ids)
    for n in shuffled["nodes"]:
        n["id"] = ids[n["id"]] + 100
    for e in shuffled["edges"]:
        e["src"], e["dst"] = sorted((ids[e["src"]] + 100, ids[e["dst"]] + 100))
    assert provsyn.min_dfs_code(shuffled) == code
    back = provsyn.decode(code)
    assert provsyn.canonical_certificate(back) == provsyn.canonical_certificate(g)


def test_sampler_and_refine(toy_graph):
    corpus = provsyn.sample_corpus(
        toy_graph, {"max_nodes": 10, "max_edges": 12, "min_nodes": 3, "min_edges": 2, "seed": 1}
    )
    assert corpus
    for s in corpus:
        assert len(s["nodes"]) <= 10
        assert len(s["node_map"]) == len(s["nodes"])
    r = provsyn.refine(corpus[0], ROOT / "rules" / "toy.rules.json")
    assert set(r) >= {"graph", "empty", "removed_edges", "removed_nodes"}


def test_metrics():
    stars = [star(k) for k in range(3, 8)]
    value, _ = provsyn.mmd(stars, stars, "degree")
    assert abs(value) <= 1e-9
    paths = [path(k) for k in range(4, 9)]
    assert provsyn.mmd(stars, paths, "degree")[0] > 0.1
    assert provsyn.name_similarity("/usr/bin/bash", "/usr/bin/bash", "bleu") == 1.0
    assert provsyn.lcs_length(list("ABCBDAB"), list("BDCABA")) == 4
    assert provsyn.dtw_distance(list("abc"), list("abc")) == 0.0
    assert abs(provsyn.entropy([2, 2, 2, 2]) - math.log(4)) < 1e-12
    assert abs(provsyn.gini([2, 2, 2, 2]) - 0.75) < 1e-12
    rep = provsyn.diversity(stars, stars)
    assert rep["novelty_pct"] == 0.0


def test_errors_carry_codes():
    with pytest.raises(provsyn.ProvsynError) as err:
        provsyn.mmd([star(3)], [star(4)], "degree")
    assert err.value.code == "EmptySet"
    with pytest.raises(provsyn.ProvsynError) as err:
        provsyn.mmd([star(3), star(4)], [star(4), star(5)], "nope")
    assert err.value.validation


def test_run_pipeline(tmp_path):
    rep = provsyn.run_pipeline(TOY / "pipeline.json", tmp_path)
    assert rep["counts"]
    assert {"mmd", "balance", "diversity"} <= set(rep["eval"])
    assert (tmp_path / "report.json").exists()
