"""Triple files, vocabularies, inverse augmentation and the filter index."""

from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

INVERSE_SUFFIX = "_inv"
SPLITS = ("train", "valid", "test")


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Triple(NamedTuple):
    subject: int
    object: int
    relation: int


class Vocab:
    """Bidirectional string <-> id map with ids assigned in insertion order."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._names.append(name)
            self._ids[name] = idx
        return idx

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._ids

    def __iter__(self):
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._names == other._names

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> list[str]:
        return list(self._names)


def parse_triples(lines: Iterable[str]) -> list[tuple[str, str, str]]:
    """Parse ``subject \\t relation \\t object`` lines.

    Blank lines are skipped. Returns (subject, relation, object) string tuples
    in file order.

    Raises:
        ParseError: a nonblank line does not have exactly three fields.
    """
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        out.append((fields[0], fields[1], fields[2]))
    return out


def read_triples(path: str | os.PathLike) -> list[tuple[str, str, str]]:
    with open(path, encoding="utf-8") as fh:
        try:
            return parse_triples(fh)
        except ParseError as exc:
            raise ParseError(exc.lineno, f"{path}: {exc.args[0]}") from None


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Integer-coded splits plus the set of every known-true triple.

    Split arrays have shape (n, 3) with columns (subject, object, relation).
    Relation ids in ``[n_relations, 2 * n_relations)`` are inverses.
    """

    entity_vocab: Vocab
    relation_vocab: Vocab
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    filter_index: frozenset
    augmented: bool = True
    unseen_count: int = 0
    duplicate_count: int = 0
    _known_objects: dict = field(default_factory=dict, repr=False)

    @property
    def n_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def n_relations(self) -> int:
        return len(self.relation_vocab)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def inverse_relation(self, k: int) -> int:
        nr = self.n_relations
        return k + nr if k < nr else k - nr

    def relation_name(self, k: int) -> str:
        nr = self.n_relations
        if k < nr:
            return self.relation_vocab.name(k)
        return self.relation_vocab.name(k - nr) + INVERSE_SUFFIX

    def relation_id(self, name: str) -> int:
        if name in self.relation_vocab:
            return self.relation_vocab.id(name)
        if name.endswith(INVERSE_SUFFIX):
            return self.relation_vocab.id(name[: -len(INVERSE_SUFFIX)]) + self.n_relations
        raise KeyError(name)

    def check_triple(self, t: Sequence[int]) -> None:
        i, j, k = (int(x) for x in t)
        if not (0 <= i < self.n_entities and 0 <= j < self.n_entities):
            raise IndexError(f"entity id out of range in {tuple(t)} (N_e={self.n_entities})")
        if not 0 <= k < 2 * self.n_relations:
            raise IndexError(f"relation id out of range in {tuple(t)} (2*N_r={2 * self.n_relations})")

    def is_known(self, t: Sequence[int]) -> bool:
        self.check_triple(t)
        return (int(t[0]), int(t[1]), int(t[2])) in self.filter_index

    def known_objects(self, subject: int, relation: int) -> np.ndarray:
        """Every object j such that (subject, j, relation) is a known fact."""
        return self._known_objects.get((int(subject), int(relation)), _EMPTY)

    def encode(self, triples: Iterable[tuple[str, str, str]]) -> np.ndarray:
        """Map (subject, relation, object) strings to an id array using this vocab.

        Raises:
            KeyError: a name is not in the vocabulary.
        """
        rows = [
            (self.entity_vocab.id(s), self.entity_vocab.id(o), self.relation_id(r))
            for s, r, o in triples
        ]
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    def write_vocab(self, entity_path: str | os.PathLike, relation_path: str | os.PathLike) -> None:
        with open(entity_path, "w", encoding="utf-8") as fh:
            for idx, name in enumerate(self.entity_vocab):
                fh.write(f"{idx}\t{name}\n")
        with open(relation_path, "w", encoding="utf-8") as fh:
            for k in range(2 * self.n_relations):
                fh.write(f"{k}\t{self.relation_name(k)}\n")


_EMPTY = np.empty(0, dtype=np.int64)


def _dedup(rows: list[tuple[int, int, int]]) -> tuple[list[tuple[int, int, int]], int]:
    seen = dict.fromkeys(rows)
    return list(seen), len(rows) - len(seen)


def build_graph(
    train: Sequence[tuple[str, str, str]],
    valid: Sequence[tuple[str, str, str]] = (),
    test: Sequence[tuple[str, str, str]] = (),
    augment: bool = True,
) -> KnowledgeGraph:
    """Assign ids and assemble a :class:`KnowledgeGraph`.

    Ids follow first appearance across train, then valid, then test. With
    ``augment`` every train triple (i, j, k) also gets (j, i, k + N_r).
    Inverses of every split always go into the filter index.
    """
    entities = Vocab()
    relations = Vocab()
    for split in (train, valid, test):
        for s, r, o in split:
            entities.add(s)
            relations.add(r)
            entities.add(o)

    for name in relations:
        if name.endswith(INVERSE_SUFFIX) and name[: -len(INVERSE_SUFFIX)] in relations:
            raise ValueError(f"relation {name!r} collides with the inverse of {name[: -len(INVERSE_SUFFIX)]!r}")

    train_ent = set()
    train_rel = set()
    for s, r, o in train:
        train_ent.update((s, o))
        train_rel.add(r)
    unseen = sum(
        1
        for split in (valid, test)
        for s, r, o in split
        if s not in train_ent or o not in train_ent or r not in train_rel
    )
    if unseen:
        logger.warning("%d valid/test triples mention entities or relations absent from train", unseen)

    nr = len(relations)

    def encode(split):
        return [(entities.id(s), entities.id(o), relations.id(r)) for s, r, o in split]

    coded = {}
    dup_total = 0
    for name, split in zip(SPLITS, (train, valid, test)):
        rows, dups = _dedup(encode(split))
        if dups:
            logger.info("dropped %d duplicate triples from %s", dups, name)
        dup_total += dups
        coded[name] = rows

    if augment:
        inv = [(j, i, k + nr) for i, j, k in coded["train"]]
        coded["train"], _ = _dedup(coded["train"] + inv)

    known = set()
    for rows in coded.values():
        for i, j, k in rows:
            known.add((i, j, k))
            known.add((j, i, k + nr if k < nr else k - nr))

    by_query: dict[tuple[int, int], list[int]] = {}
    for i, j, k in known:
        by_query.setdefault((i, k), []).append(j)
    known_objects = {key: np.array(sorted(v), dtype=np.int64) for key, v in by_query.items()}

    def as_array(rows):
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    return KnowledgeGraph(
        entity_vocab=entities,
        relation_vocab=relations,
        train=as_array(coded["train"]),
        valid=as_array(coded["valid"]),
        test=as_array(coded["test"]),
        filter_index=frozenset(known),
        augmented=augment,
        unseen_count=unseen,
        duplicate_count=dup_total,
        _known_objects=known_objects,
    )


def load_dataset(directory: str | os.PathLike, augment: bool = True) -> KnowledgeGraph:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from a directory."""
    directory = Path(directory)
    splits = []
    for name in SPLITS:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise FileNotFoundError(f"missing {path}")
        splits.append(read_triples(path))
    return build_graph(*splits, augment=augment)


def read_vocab(path: str | os.PathLike) -> list[str]:
    """Read an ``id \\t name`` dump, checking ids run 0..n-1 in order."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            idx, _, name = line.partition("\t")
            if int(idx) != len(names):
                raise ParseError(lineno, f"expected id {len(names)}, got {idx}")
            names.append(name)
    return names
