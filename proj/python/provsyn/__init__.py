"""Python bindings for the provsyn library.

Graphs, DFS codes and reports are plain dicts and lists in the same JSON
layout the command-line tool reads and writes.
"""

import json

from . import _core
from ._core import ProvsynError, dtw_distance, entropy, gini, lcs_length, name_similarity

__all__ = [
    "ProvsynError",
    "parse_events",
    "sample_corpus",
    "min_dfs_code",
    "decode",
    "canonical_certificate",
    "refine",
    "mmd",
    "name_similarity",
    "lcs_length",
    "dtw_distance",
    "entropy",
    "gini",
    "label_balance",
    "diversity",
    "run_pipeline",
]


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def parse_events(events_path, manifest_path):
    return json.loads(_core.parse_events(str(events_path), str(manifest_path)))


def sample_corpus(graph, config=None, workers=1):
    """Sampled training subgraphs as graph dicts with extra origin and node_map keys."""
    return json.loads(_core.sample_corpus(_dump(graph), _dump(config or {}), workers))


def min_dfs_code(graph):
    return json.loads(_core.min_dfs_code(_dump(graph)))


def decode(code):
    return json.loads(_core.decode(_dump(code)))


def canonical_certificate(graph):
    return _core.canonical_certificate(_dump(graph))


def refine(graph, rules):
    """`rules` is a rule-set dict or the path of a rules file."""
    if not isinstance(rules, dict):
        with open(rules) as fh:
            rules = fh.read()
    return json.loads(_core.refine(_dump(graph), _dump(rules)))


def mmd(x, y, metric="degree"):
    """Returns (mmd2, sigma)."""
    return _core.mmd(_dump(list(x)), _dump(list(y)), metric)


def label_balance(graph):
    return json.loads(_core.label_balance(_dump(graph)))


def diversity(generated, train):
    return json.loads(_core.diversity(_dump(list(generated)), _dump(list(train))))


def run_pipeline(config_path, out_dir, workers=1):
    return json.loads(_core.run_pipeline(str(config_path), str(out_dir), workers))
