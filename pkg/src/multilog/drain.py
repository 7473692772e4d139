"""Fixed-depth parse tree template miner (Drain).

Messages are split on whitespace and any token containing a digit is
replaced by the wildcard before descending the tree.  The tree is keyed by
token count, then by the first ``depth - 2`` tokens; each leaf holds the
candidate templates compared by positional token similarity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

WILDCARD = "[*]"


@dataclass
class EventTemplate:
    id: int
    tokens: list[str]
    count: int = 0

    def __str__(self) -> str:
        return " ".join(self.tokens)


@dataclass
class _Node:
    children: dict[str, "_Node"] = field(default_factory=dict)
    templates: list[int] = field(default_factory=list)


def tokenize(message: str) -> list[str]:
    return [WILDCARD if any(c.isdigit() for c in tok) else tok for tok in message.split()]


class TemplateRegistry:
    """Template store plus the prefix tree used to find candidates.

    ``oov_id`` (== template count) is reserved for lines that no frozen
    template matches; ``pad_id`` sits one above it.
    """

    def __init__(self, depth: int = 4, sim_threshold: float = 0.5, max_children: int = 100):
        if depth < 3:
            raise ValueError("depth must be at least 3")
        self.depth = depth
        self.sim_threshold = sim_threshold
        self.max_children = max_children
        self.templates: list[EventTemplate] = []
        self.frozen = False
        self._root: dict[int, _Node] = {}

    def __len__(self) -> int:
        return len(self.templates)

    @property
    def oov_id(self) -> int:
        return len(self.templates)

    @property
    def pad_id(self) -> int:
        return len(self.templates) + 1

    # -- tree ---------------------------------------------------------------

    def _leaf(self, tokens: list[str], create: bool) -> _Node | None:
        node = self._root.get(len(tokens))
        if node is None:
            if not create:
                return None
            node = self._root[len(tokens)] = _Node()
        for tok in tokens[: self.depth - 2]:
            child = node.children.get(tok)
            if child is None:
                if create:
                    key = tok if len(node.children) < self.max_children else WILDCARD
                    child = node.children.setdefault(key, _Node())
                else:
                    child = node.children.get(WILDCARD)
                    if child is None:
                        return None
            node = child
        return node

    def _best_match(self, leaf: _Node, tokens: list[str]) -> int | None:
        # exact cover first: every literal of the template equals the token
        best, best_key = None, None
        for tid in leaf.templates:
            tpl = self.templates[tid].tokens
            if all(t == WILDCARD or t == w for t, w in zip(tpl, tokens)):
                key = (sum(t == w for t, w in zip(tpl, tokens)), -tid)
                if best_key is None or key > best_key:
                    best, best_key = tid, key
        if best is not None:
            return best

        for tid in leaf.templates:
            tpl = self.templates[tid].tokens
            same = sum(1 for t, w in zip(tpl, tokens) if t != WILDCARD and t == w)
            sim = same / len(tokens)
            if sim < self.sim_threshold:
                continue
            key = (sim, tpl.count(WILDCARD), -tid)
            if best_key is None or key > best_key:
                best, best_key = tid, key
        return best

    # -- public -------------------------------------------------------------

    def parse(self, message: str) -> int:
        tokens = tokenize(message)
        if not tokens:
            raise ValueError("cannot parse an empty message")
        leaf = self._leaf(tokens, create=not self.frozen)
        tid = self._best_match(leaf, tokens) if leaf is not None else None
        if self.frozen:
            return self.oov_id if tid is None else tid
        if tid is None:
            tid = len(self.templates)
            self.templates.append(EventTemplate(tid, tokens, 1))
            leaf.templates.append(tid)
            return tid
        tpl = self.templates[tid]
        tpl.tokens = [t if t == w else WILDCARD for t, w in zip(tpl.tokens, tokens)]
        tpl.count += 1
        return tid

    def freeze(self) -> "TemplateRegistry":
        self.frozen = True
        return self

    def save(self, path: str | os.PathLike) -> None:
        lines = [f"{t.id}\t{' '.join(t.tokens)}\n" for t in self.templates]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike, frozen: bool = True, **params) -> "TemplateRegistry":
        reg = cls(**params)
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            tid_text, _, body = line.partition("\t")
            tid = int(tid_text)
            if tid != len(reg.templates):
                raise ValueError(f"{path}: line {line_no} has id {tid}, expected {len(reg.templates)}")
            tokens = body.split(" ")
            reg.templates.append(EventTemplate(tid, tokens))
            reg._leaf(tokens, create=True).templates.append(tid)
        reg.frozen = frozen
        return reg


def parse_line(registry: TemplateRegistry, message: str) -> int:
    return registry.parse(message)


def freeze(registry: TemplateRegistry) -> TemplateRegistry:
    return registry.freeze()


def mine(messages: Iterable[str], **params) -> TemplateRegistry:
    """Build a registry from ``messages`` and freeze it."""
    reg = TemplateRegistry(**params)
    for msg in messages:
        reg.parse(msg)
    return reg.freeze()
