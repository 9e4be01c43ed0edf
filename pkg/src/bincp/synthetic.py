"""Small synthetic knowledge graphs with learnable block structure.

Entities are split into clusters. Each relation maps every cluster to a fixed
target cluster, and a fact (s, r, o) exists only when o lies in the target
cluster of s's cluster under r. Facts are sampled from that rule, so held-out
facts follow the same pattern as the training ones.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def block_graph(
    n_entities: int = 400,
    n_relations: int = 4,
    n_clusters: int = 20,
    n_facts: int = 6000,
    n_valid: int = 300,
    n_test: int = 300,
    seed: int = 0,
) -> dict[str, list[tuple[str, str, str]]]:
    """Return string (subject, relation, object) triples for train/valid/test."""
    rng = np.random.default_rng(seed)
    cluster = rng.integers(0, n_clusters, size=n_entities)
    members = [np.flatnonzero(cluster == c) for c in range(n_clusters)]
    target = np.stack([rng.permutation(n_clusters) for _ in range(n_relations)])

    facts: dict[tuple[int, int, int], None] = {}
    budget = 50 * n_facts
    while len(facts) < n_facts and budget:
        budget -= 1
        s = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        pool = members[target[r, cluster[s]]]
        if len(pool) == 0:
            continue
        o = int(pool[rng.integers(len(pool))])
        facts.setdefault((s, r, o), None)

    rows = list(facts)
    order = rng.permutation(len(rows))
    rows = [rows[n] for n in order]

    def fmt(part):
        return [(f"e{s}", f"r{r}", f"e{o}") for s, r, o in part]

    held = n_valid + n_test
    return {
        "valid": fmt(rows[:n_valid]),
        "test": fmt(rows[n_valid:held]),
        "train": fmt(rows[held:]),
    }


def uniform_negatives(
    known: set[tuple[str, str, str]],
    entities: list[str],
    relations: list[str],
    n: int,
    seed: int = 0,
) -> list[tuple[str, str, str]]:
    """Uniformly random (subject, relation, object) triples not in ``known``."""
    rng = np.random.default_rng(seed)
    out: dict[tuple[str, str, str], None] = {}
    while len(out) < n:
        t = (
            entities[rng.integers(len(entities))],
            relations[rng.integers(len(relations))],
            entities[rng.integers(len(entities))],
        )
        if t not in known:
            out.setdefault(t, None)
    return list(out)


def write_dataset(splits: dict[str, list[tuple[str, str, str]]], directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        with open(directory / f"{name}.txt", "w", encoding="utf-8") as fh:
            for s, r, o in rows:
                fh.write(f"{s}\t{r}\t{o}\n")
    return directory
