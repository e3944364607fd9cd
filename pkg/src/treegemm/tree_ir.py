"""In-memory and on-disk representation of quantized tree ensembles.

An ensemble is N strictly binary trees with integer thresholds, plus a
zero-padded N x m integer matrix of leaf codes and the quantization
parameters needed to ingest raw rows and to dequantize outputs. Routing is
canonical strict less-than: an input goes LEFT at a node iff
x[feature_index] < threshold.

Classification ensembles carry one output class column per tree
(`tree_classes`); trees for distinct classes may share structure (e.g. a
single trained tree cloned per class with that class's leaf weights).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .quantizer import QuantParams

IR_VERSION = 1

INTERNAL = "internal"
LEAF = "leaf"


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    kind: str                      # "internal" | "leaf"
    feature_index: int = -1        # internal only
    threshold: int = 0             # internal only, integer in [0, 2^p - 1]
    left_child: int = -1           # internal only
    right_child: int = -1          # internal only
    leaf_index: int = -1           # leaf only

    def to_dict(self) -> dict:
        if self.kind == INTERNAL:
            return {
                "node_id": int(self.node_id),
                "kind": INTERNAL,
                "feature_index": int(self.feature_index),
                "threshold": int(self.threshold),
                "left_child": int(self.left_child),
                "right_child": int(self.right_child),
            }
        return {"node_id": int(self.node_id), "kind": LEAF, "leaf_index": int(self.leaf_index)}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if d["kind"] == INTERNAL:
            return cls(node_id=d["node_id"], kind=INTERNAL,
                       feature_index=d["feature_index"], threshold=d["threshold"],
                       left_child=d["left_child"], right_child=d["right_child"])
        return cls(node_id=d["node_id"], kind=LEAF, leaf_index=d["leaf_index"])


@dataclass
class Tree:
    nodes: list[TreeNode]

    def node_map(self) -> dict[int, TreeNode]:
        return {n.node_id: n for n in self.nodes}

    def root_id(self) -> int:
        """The unique node that is nobody's child (validated elsewhere)."""
        children = set()
        for n in self.nodes:
            if n.kind == INTERNAL:
                children.add(n.left_child)
                children.add(n.right_child)
        for n in self.nodes:
            if n.node_id not in children:
                return n.node_id
        return self.nodes[0].node_id

    def n_internal(self) -> int:
        return sum(1 for n in self.nodes if n.kind == INTERNAL)

    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if n.kind == LEAF)


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    leaf_values: np.ndarray            # (N, m) int64, zero-padded
    n_features: int
    input_bits: int
    leaf_quant: QuantParams
    feature_quants: list[QuantParams]
    task: str                          # "classification" | "regression"
    n_classes: int = 1
    tree_classes: np.ndarray | None = None   # (N,) class column per tree

    _packed: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.leaf_values = np.asarray(self.leaf_values, dtype=np.int64)
        if self.tree_classes is None:
            self.tree_classes = np.arange(len(self.trees), dtype=np.int64) % max(self.n_classes, 1)
        else:
            self.tree_classes = np.asarray(self.tree_classes, dtype=np.int64)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_leaf_slots(self) -> int:
        return self.leaf_values.shape[1]

    # ------------------------------------------------------------------ #
    # validation

    def validate(self) -> list[str]:
        """Check all structural invariants; returns violations (empty = valid)."""
        v: list[str] = []
        qmax = (1 << self.input_bits) - 1
        if self.task not in ("classification", "regression"):
            v.append(f"unknown task {self.task!r}")
        if self.task == "regression" and self.n_classes != 1:
            v.append("regression ensembles must have n_classes = 1")
        if self.task == "classification" and self.n_classes < 2:
            v.append("classification ensembles must have n_classes >= 2")
        if len(self.feature_quants) != self.n_features:
            v.append(f"expected {self.n_features} feature quant params, got {len(self.feature_quants)}")
        for j, q in enumerate(self.feature_quants):
            if q.bits != self.input_bits:
                v.append(f"feature {j}: quant bits {q.bits} != input_bits {self.input_bits}")
        if self.leaf_values.ndim != 2 or self.leaf_values.shape[0] != self.n_trees:
            v.append(f"leaf_values must be (n_trees, m), got shape {self.leaf_values.shape}")
            return v
        leaf_qmax = (1 << self.leaf_quant.bits) - 1
        if self.leaf_values.size and (self.leaf_values.min() < 0 or self.leaf_values.max() > leaf_qmax):
            v.append(f"leaf codes outside [0, {leaf_qmax}]")
        if self.tree_classes.shape != (self.n_trees,):
            v.append("tree_classes must have one entry per tree")
        elif self.n_trees and (self.tree_classes.min() < 0 or self.tree_classes.max() >= max(self.n_classes, 1)):
            v.append("tree class column out of range")

        m = self.n_leaf_slots
        for k, tree in enumerate(self.trees):
            tag = f"tree {k}"
            ids = [n.node_id for n in tree.nodes]
            if len(set(ids)) != len(ids):
                v.append(f"{tag}: duplicate node ids")
                continue
            nm = tree.node_map()
            children = []
            for node in tree.nodes:
                if node.kind == INTERNAL:
                    for ch in (node.left_child, node.right_child):
                        if ch not in nm:
                            v.append(f"{tag}: node {node.node_id} references missing child {ch}")
                        children.append(ch)
                    if node.left_child == node.right_child:
                        v.append(f"{tag}: node {node.node_id} has identical children")
                    if not (0 <= node.feature_index < self.n_features):
                        v.append(f"{tag}: node {node.node_id} feature out of range")
                    if not (0 <= node.threshold <= qmax):
                        v.append(f"{tag}: node {node.node_id} threshold {node.threshold} outside [0, {qmax}]")
                elif node.kind == LEAF:
                    if not (0 <= node.leaf_index < m):
                        v.append(f"{tag}: leaf_index {node.leaf_index} outside [0, {m})")
                else:
                    v.append(f"{tag}: node {node.node_id} has unknown kind {node.kind!r}")
            counts = {}
            for ch in children:
                counts[ch] = counts.get(ch, 0) + 1
            multi = [ch for ch, c in counts.items() if c > 1]
            if multi:
                v.append(f"{tag}: not a tree (nodes {sorted(multi)} have multiple parents)")
            roots = [n.node_id for n in tree.nodes if n.node_id not in counts]
            if len(roots) != 1:
                v.append(f"{tag}: not a tree (expected one root, found {len(roots)})")
                continue
            # reachability check doubles as the cycle check
            seen = set()
            stack = [roots[0]]
            while stack:
                nid = stack.pop()
                if nid in seen or nid not in nm:
                    continue
                seen.add(nid)
                node = nm[nid]
                if node.kind == INTERNAL:
                    stack.extend((node.left_child, node.right_child))
            if len(seen) != len(tree.nodes):
                v.append(f"{tag}: not a tree ({len(tree.nodes) - len(seen)} unreachable nodes)")
            leaf_ixs = [n.leaf_index for n in tree.nodes if n.kind == LEAF]
            if len(set(leaf_ixs)) != len(leaf_ixs):
                v.append(f"{tag}: duplicate leaf_index values")
        return v

    # ------------------------------------------------------------------ #
    # traversal (the plaintext reference semantics)

    def _pack(self) -> dict:
        if self._packed is not None:
            return self._packed
        N = self.n_trees
        S = max(len(t.nodes) for t in self.trees)
        feature = np.full((N, S), -1, dtype=np.int32)
        threshold = np.zeros((N, S), dtype=np.int64)
        left = np.full((N, S), -1, dtype=np.int32)
        right = np.full((N, S), -1, dtype=np.int32)
        is_leaf = np.zeros((N, S), dtype=np.uint8)
        leaf_ix = np.full((N, S), -1, dtype=np.int32)
        root = np.zeros(N, dtype=np.int32)
        max_depth = 0
        for k, tree in enumerate(self.trees):
            pos = {n.node_id: i for i, n in enumerate(tree.nodes)}
            root[k] = pos[tree.root_id()]
            for i, n in enumerate(tree.nodes):
                if n.kind == INTERNAL:
                    feature[k, i] = n.feature_index
                    threshold[k, i] = n.threshold
                    left[k, i] = pos[n.left_child]
                    right[k, i] = pos[n.right_child]
                else:
                    is_leaf[k, i] = 1
                    leaf_ix[k, i] = n.leaf_index
            max_depth = max(max_depth, tree_depth(tree))
        self._packed = {
            "feature": feature, "threshold": threshold, "left": left, "right": right,
            "is_leaf": is_leaf, "leaf_ix": leaf_ix, "root": root, "n_steps": max_depth + 1,
        }
        return self._packed

    def traverse_batch(self, X_q, backend: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Route a batch of quantized rows through every tree.

        Returns (leaf_indices, leaf_codes), each of shape (rows, n_trees).
        """
        X_q = np.asarray(X_q, dtype=np.int64)
        if X_q.ndim == 1:
            X_q = X_q.reshape(1, -1)
        if X_q.shape[1] != self.n_features:
            raise InvalidInputError(f"expected {self.n_features} features, got {X_q.shape[1]}")
        qmax = (1 << self.input_bits) - 1
        if X_q.size and (X_q.min() < 0 or X_q.max() > qmax):
            raise InvalidInputError(f"inputs must lie in [0, {qmax}]")
        pk = self._pack()
        slots = kernels.walk_trees(
            (X_q, pk["root"], pk["feature"], pk["threshold"], pk["left"], pk["right"],
             pk["is_leaf"], pk["n_steps"]),
            name=backend,
        )
        kk = np.arange(self.n_trees)[None, :]
        leaf_indices = pk["leaf_ix"][kk, slots].astype(np.int64)
        leaf_codes = self.leaf_values[kk, leaf_indices]
        return leaf_indices, leaf_codes

    def traverse(self, x_q) -> tuple[np.ndarray, np.ndarray]:
        """Single-row traversal: per-tree chosen leaf_index and leaf code."""
        idx, codes = self.traverse_batch(np.asarray(x_q).reshape(1, -1))
        return idx[0], codes[0]

    # ------------------------------------------------------------------ #
    # serialization (the IR file contract)

    def to_dict(self) -> dict:
        return {
            "version": IR_VERSION,
            "task": self.task,
            "n_features": int(self.n_features),
            "input_bits": int(self.input_bits),
            "n_classes": int(self.n_classes),
            "feature_quants": [q.to_dict() for q in self.feature_quants],
            "leaf_quant": self.leaf_quant.to_dict(),
            "trees": [{"nodes": [n.to_dict() for n in t.nodes]} for t in self.trees],
            "leaf_values": [[int(x) for x in row] for row in self.leaf_values],
            "tree_classes": [int(c) for c in self.tree_classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("version") != IR_VERSION:
            raise InvalidInputError(f"unsupported IR version {d.get('version')!r}")
        trees = [Tree(nodes=[TreeNode.from_dict(nd) for nd in t["nodes"]]) for t in d["trees"]]
        n_classes = int(d.get("n_classes", 1))
        tree_classes = d.get("tree_classes")
        if tree_classes is None:
            tree_classes = [k % max(n_classes, 1) for k in range(len(trees))]
        return cls(
            trees=trees,
            leaf_values=np.asarray(d["leaf_values"], dtype=np.int64),
            n_features=int(d["n_features"]),
            input_bits=int(d["input_bits"]),
            leaf_quant=QuantParams.from_dict(d["leaf_quant"]),
            feature_quants=[QuantParams.from_dict(q) for q in d["feature_quants"]],
            task=d["task"],
            n_classes=n_classes,
            tree_classes=np.asarray(tree_classes, dtype=np.int64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def tree_depth(tree: Tree) -> int:
    """Length in edges of the longest root-to-leaf path."""
    nm = tree.node_map()
    depth = 0
    stack = [(tree.root_id(), 0)]
    while stack:
        nid, d = stack.pop()
        node = nm[nid]
        if node.kind == LEAF:
            depth = max(depth, d)
        else:
            stack.append((node.left_child, d + 1))
            stack.append((node.right_child, d + 1))
    return depth


def validate(ensemble: TreeEnsemble) -> list[str]:
    """Module-level alias: list of invariant violations, empty when valid."""
    return ensemble.validate()


def traverse(ensemble: TreeEnsemble, x_q) -> tuple[np.ndarray, np.ndarray]:
    """Module-level alias for single-row traversal."""
    return ensemble.traverse(x_q)
