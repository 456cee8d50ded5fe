import pytest

from hkgkit.ingest import write_facts
from hkgkit.synthetic import random_hkg


def write_graph(graph, directory, fmt="tsv"):
    ext = "tsv" if fmt == "tsv" else "jsonl"
    paths = {}
    for name, facts in graph.splits():
        paths[name] = str(directory / f"{name}.{ext}")
        write_facts(paths[name], facts, graph.entity_vocab, graph.relation_vocab, fmt=fmt)
    return paths


@pytest.fixture
def hkg_dir(tmp_path):
    """Small random HKG written as train/valid/test statement files."""
    g = random_hkg(11, n_entities=25, n_relations=4, max_arity=3, split_sizes=(60, 15, 15))
    d = tmp_path / "data"
    d.mkdir()
    return d, write_graph(g, d), g
