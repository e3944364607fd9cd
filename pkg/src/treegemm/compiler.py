"""Compile a tree ensemble into the five-tensor GEMM program.

Per tree k (internal nodes in breadth-first order, leaf rows indexed by
leaf_index):

  A[k, j, i] = 1 iff internal node i tests feature j
  B[k, i]    = integer threshold of node i
  C[k, l, i] = +1 / -1 iff leaf l's root path goes left / right at node i
  D[k, l]    = the path code R attains when every decision on leaf l's path
               matches, i.e. the number of LEFT branches on the path (with
               comparison bits in {0, 1}, a matched right branch adds 0)
  L[k, l]    = quantized leaf value

Execution is then P = x.A, Q = TLU_less(P, B), R = Q.C^T, S = TLU_eq(R, D),
per-tree sum = S.L, and exactly one S entry per tree is 1 for every input.
Trees are padded to common node/leaf counts with inert slots: all-zero A
columns and all-zero equality tables.

One look-up table is built per internal node (comparison, p-bit domain) and
one per leaf (equality, offset-encoded signed (p+1)-bit domain).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .quantizer import QuantParams
from .tree_ir import INTERNAL, TreeEnsemble


@dataclass(frozen=True)
class LookupTable:
    """A TLU: `entries[x + input_offset]` is the output for input x."""

    entries: np.ndarray      # uint8, length exactly 2^width
    input_offset: int

    @property
    def width(self) -> int:
        return int(len(self.entries)).bit_length() - 1


def build_comparison_tlu(threshold: int, input_bits: int) -> LookupTable:
    """Table for the decision predicate x < threshold over [0, 2^input_bits)."""
    size = 1 << input_bits
    if not (0 <= threshold <= size):
        raise InvalidInputError(f"threshold {threshold} outside [0, {size}]")
    entries = (np.arange(size) < threshold).astype(np.uint8)
    return LookupTable(entries=entries, input_offset=0)


def build_equality_tlu(target: int, bits: int) -> LookupTable:
    """Table for R == target over the offset-encoded signed (bits+1)-bit domain.

    Signed inputs in [-2^bits, 2^bits - 1] are mapped to indices by adding
    2^bits; exactly one entry is 1.
    """
    offset = 1 << bits
    if not (-offset <= target <= offset - 1):
        raise InvalidInputError(f"equality target {target} outside [{-offset}, {offset - 1}]")
    entries = np.zeros(2 * offset, dtype=np.uint8)
    entries[target + offset] = 1
    return LookupTable(entries=entries, input_offset=offset)


@dataclass
class TensorBundle:
    """The compiled program: five tensors, TLUs, and shape/metadata."""

    A: np.ndarray                 # (N, F, M) int8
    B: np.ndarray                 # (N, M) int64
    C: np.ndarray                 # (N, Lv, M) int8
    D: np.ndarray                 # (N, Lv) int64
    leaf_values: np.ndarray       # (N, Lv) int64  (the L_q tensor)
    cmp_tables: np.ndarray        # (N, M, 2^p) uint8
    eq_tables: np.ndarray         # (N, Lv, 2^(p+1)) uint8
    feat_idx: np.ndarray          # (N, M) int32, -1 on padded slots
    slot_real: np.ndarray         # (N, M) bool
    leaf_real: np.ndarray         # (N, Lv) bool
    leaf_tlu: np.ndarray          # (N, Lv) bool: real leaves that cost a PBS
    root_leaf: np.ndarray         # (N,) bool: trees with no internal node
    internal_counts: np.ndarray   # (N,) int64
    leaf_counts: np.ndarray       # (N,) int64
    path_lengths: np.ndarray      # (N, Lv) int64, 0 on padded slots
    tree_classes: np.ndarray      # (N,) int64
    n_features: int
    input_bits: int
    n_classes: int
    task: str
    leaf_quant: QuantParams

    @property
    def n_trees(self) -> int:
        return self.A.shape[0]

    @property
    def offset(self) -> int:
        return 1 << self.input_bits

    @property
    def trees_per_class(self) -> np.ndarray:
        return np.bincount(self.tree_classes, minlength=max(self.n_classes, 1)).astype(np.int64)

    @property
    def shapes(self) -> dict:
        N, F, M = self.A.shape
        return {
            "n_trees": N,
            "n_features": F,
            "n_internal_slots": M,
            "n_leaf_slots": int(self.C.shape[1]),
            "n_classes": int(self.n_classes),
            "input_bits": int(self.input_bits),
            "cmp_table_size": int(self.cmp_tables.shape[2]),
            "eq_table_size": int(self.eq_tables.shape[2]),
        }

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "shapes": self.shapes,
            "task": self.task,
            "leaf_quant": self.leaf_quant.to_dict(),
            "tree_classes": self.tree_classes.tolist(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "L_q": self.leaf_values.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def _bfs_layout(tree) -> tuple[list, dict]:
    """Breadth-first internal-node order and per-leaf (path, directions)."""
    nm = tree.node_map()
    root = tree.root_id()
    internal_order: list[int] = []
    slot_of: dict[int, int] = {}
    queue = [root]
    while queue:
        nid = queue.pop(0)
        node = nm[nid]
        if node.kind == INTERNAL:
            slot_of[nid] = len(internal_order)
            internal_order.append(nid)
            queue.append(node.left_child)
            queue.append(node.right_child)
    # Root-to-leaf paths as (internal slot, went_left) pairs.
    paths: dict[int, list[tuple[int, bool]]] = {}
    stack = [(root, [])]
    while stack:
        nid, path = stack.pop()
        node = nm[nid]
        if node.kind == INTERNAL:
            s = slot_of[nid]
            stack.append((node.left_child, path + [(s, True)]))
            stack.append((node.right_child, path + [(s, False)]))
        else:
            paths[node.leaf_index] = path
    return internal_order, paths


def compile_ensemble(ensemble: TreeEnsemble) -> TensorBundle:
    """Convert a validated ensemble into its tensor program."""
    violations = ensemble.validate()
    if violations:
        raise InvalidInputError("cannot compile invalid ensemble: " + "; ".join(violations))

    N = ensemble.n_trees
    F = ensemble.n_features
    p = ensemble.input_bits
    Lv = ensemble.n_leaf_slots
    M = max((t.n_internal() for t in ensemble.trees), default=0)
    M = max(M, 1) if any(t.n_internal() for t in ensemble.trees) else 0
    W1 = 1 << p
    offset = 1 << p

    A = np.zeros((N, F, M), dtype=np.int8)
    B = np.zeros((N, M), dtype=np.int64)
    C = np.zeros((N, Lv, M), dtype=np.int8)
    D = np.zeros((N, Lv), dtype=np.int64)
    cmp_tables = np.zeros((N, M, W1), dtype=np.uint8)
    eq_tables = np.zeros((N, Lv, 2 * offset), dtype=np.uint8)
    feat_idx = np.full((N, M), -1, dtype=np.int32)
    slot_real = np.zeros((N, M), dtype=bool)
    leaf_real = np.zeros((N, Lv), dtype=bool)
    path_lengths = np.zeros((N, Lv), dtype=np.int64)
    internal_counts = np.zeros(N, dtype=np.int64)
    leaf_counts = np.zeros(N, dtype=np.int64)

    nm_by_tree = [t.node_map() for t in ensemble.trees]
    for k, tree in enumerate(ensemble.trees):
        internal_order, paths = _bfs_layout(tree)
        internal_counts[k] = len(internal_order)
        leaf_counts[k] = len(paths)
        nm = nm_by_tree[k]
        for i, nid in enumerate(internal_order):
            node = nm[nid]
            A[k, node.feature_index, i] = 1
            B[k, i] = node.threshold
            feat_idx[k, i] = node.feature_index
            slot_real[k, i] = True
            cmp_tables[k, i] = build_comparison_tlu(node.threshold, p).entries
        for leaf_index, path in paths.items():
            leaf_real[k, leaf_index] = True
            path_lengths[k, leaf_index] = len(path)
            lefts = 0
            rights = 0
            for slot, went_left in path:
                C[k, leaf_index, slot] = 1 if went_left else -1
                lefts += went_left
                rights += not went_left
            if lefts > offset - 1 or rights > offset:
                raise InvalidInputError(
                    f"tree {k} leaf {leaf_index}: path code range [{-rights}, {lefts}] does not fit "
                    f"the signed {p + 1}-bit domain; reduce depth or raise input_bits"
                )
            D[k, leaf_index] = lefts
            if path:
                eq_tables[k, leaf_index] = build_equality_tlu(lefts, p).entries

    root_leaf = internal_counts == 0
    leaf_tlu = leaf_real & ~root_leaf[:, None]

    bundle = TensorBundle(
        A=A, B=B, C=C, D=D,
        leaf_values=ensemble.leaf_values.copy(),
        cmp_tables=cmp_tables, eq_tables=eq_tables,
        feat_idx=feat_idx, slot_real=slot_real,
        leaf_real=leaf_real, leaf_tlu=leaf_tlu, root_leaf=root_leaf,
        internal_counts=internal_counts, leaf_counts=leaf_counts,
        path_lengths=path_lengths,
        tree_classes=ensemble.tree_classes.copy(),
        n_features=F, input_bits=p,
        n_classes=ensemble.n_classes, task=ensemble.task,
        leaf_quant=ensemble.leaf_quant,
    )
    _check_construction(bundle)
    return bundle


def _check_construction(bundle: TensorBundle) -> None:
    """Structural self-checks on the freshly built tensors."""
    N, F, M = bundle.A.shape
    for k in range(N):
        mk = int(bundle.internal_counts[k])
        col_sums = bundle.A[k].sum(axis=0)
        assert (col_sums[:mk] == 1).all(), f"tree {k}: A column without exactly one selector"
        assert (col_sums[mk:] == 0).all(), f"tree {k}: padded A column not inert"
        for l in range(bundle.C.shape[1]):
            nnz = int(np.count_nonzero(bundle.C[k, l]))
            assert nnz == int(bundle.path_lengths[k, l]), f"tree {k} leaf {l}: C row nnz != path length"
            assert int((bundle.C[k, l] == 1).sum()) == int(bundle.D[k, l]), \
                f"tree {k} leaf {l}: D is not the attainable path code"
