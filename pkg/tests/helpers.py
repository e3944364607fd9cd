"""Shared test utilities: random ensemble generation and an independent
recursive tree evaluator used as an oracle against the packed/kernel paths."""

from __future__ import annotations

import numpy as np

from treegemm.quantizer import QuantParams
from treegemm.tree_ir import INTERNAL, LEAF, Tree, TreeEnsemble, TreeNode


def _random_structure(rng, p, max_depth, split_prob=0.8):
    """Grow a random strictly binary tree shape; returns list of node dicts."""
    nodes = []

    def grow(depth):
        nid = len(nodes)
        if depth >= max_depth or rng.random() > split_prob:
            nodes.append({"id": nid, "leaf": True})
            return nid
        nodes.append({"id": nid, "leaf": False})
        me = nodes[-1]
        me["feature"] = None       # filled by caller (needs n_features)
        me["threshold"] = int(rng.integers(0, 1 << p))
        me["left"] = grow(depth + 1)
        me["right"] = grow(depth + 1)
        return nid

    grow(0)
    return nodes


def _to_tree(struct, rng, n_features, leaf_start=0):
    """Materialize a structure into IR nodes; leaf indices assigned in id order."""
    ir_nodes = []
    leaf_counter = leaf_start
    for nd in struct:
        if nd["leaf"]:
            ir_nodes.append(TreeNode(node_id=nd["id"], kind=LEAF, leaf_index=leaf_counter))
            leaf_counter += 1
        else:
            ir_nodes.append(TreeNode(
                node_id=nd["id"], kind=INTERNAL,
                feature_index=int(rng.integers(0, n_features)),
                threshold=nd["threshold"],
                left_child=nd["left"], right_child=nd["right"],
            ))
    return Tree(nodes=ir_nodes), leaf_counter - leaf_start


def random_ensemble(rng, p=None, n_features=None, shape=None, max_depth=None,
                    allow_root_leaf=True) -> TreeEnsemble:
    """A random valid ensemble mimicking the layouts the trainer emits.

    Shapes: 'dt' (one structure cloned per class), 'rf' (several structures,
    cloned per class, interleaved), 'boosted' (binary: all trees feed class 1;
    multiclass: round-robin), 'regression' (single output column).
    Depth is capped so signed path codes always fit the (p+1)-bit domain.
    """
    p = int(p if p is not None else rng.integers(2, 9))
    n_features = int(n_features if n_features is not None else rng.integers(1, 6))
    shape = shape or rng.choice(["dt", "rf", "boosted", "regression"])
    cap = min(6, (1 << p) - 1)
    max_depth = int(max_depth if max_depth is not None else rng.integers(1, cap + 1))
    max_depth = min(max_depth, cap)
    split_prob = 0.75 if allow_root_leaf else 1.0

    def structures(count):
        out = []
        for _ in range(count):
            depth = int(rng.integers(0 if allow_root_leaf else 1, max_depth + 1))
            out.append(_random_structure(rng, p, depth, split_prob))
        return out

    if shape == "regression":
        task, n_classes = "regression", 1
        structs = structures(int(rng.integers(1, 8)))
        plan = [(s, 0) for s in structs]
    elif shape == "boosted":
        task = "classification"
        n_classes = int(rng.choice([2, 3]))
        rounds = int(rng.integers(1, 8 if n_classes == 2 else 7))
        structs = structures(rounds * (1 if n_classes == 2 else n_classes))
        if n_classes == 2:
            plan = [(s, 1) for s in structs]
        else:
            plan = [(s, i % n_classes) for i, s in enumerate(structs)]
    else:
        task = "classification"
        n_classes = int(rng.choice([2, 3]))
        n_struct = 1 if shape == "dt" else int(rng.integers(2, 5))
        structs = structures(n_struct)
        plan = [(s, c) for s in structs for c in range(n_classes)]

    trees = []
    leaf_counts = []
    for struct, _cls in plan:
        tree, n_leaves = _to_tree(struct, rng, n_features)
        trees.append(tree)
        leaf_counts.append(n_leaves)

    m = max(leaf_counts)
    leaf_values = np.zeros((len(trees), m), dtype=np.int64)
    for k, n_leaves in enumerate(leaf_counts):
        leaf_values[k, :n_leaves] = rng.integers(0, 1 << p, size=n_leaves)

    return TreeEnsemble(
        trees=trees,
        leaf_values=leaf_values,
        n_features=n_features,
        input_bits=p,
        leaf_quant=QuantParams(scale=float(rng.uniform(0.01, 2.0)),
                               zero_point=int(rng.integers(0, 1 << p)), bits=p),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=p) for _ in range(n_features)],
        task=task,
        n_classes=n_classes,
        tree_classes=np.array([c for _, c in plan], dtype=np.int64),
    )


def recursive_eval(ensemble: TreeEnsemble, x) -> tuple[np.ndarray, np.ndarray]:
    """Independent reference: dictionary-based recursive descent per tree."""
    x = np.asarray(x)
    idxs = np.empty(ensemble.n_trees, dtype=np.int64)
    codes = np.empty(ensemble.n_trees, dtype=np.int64)
    for k, tree in enumerate(ensemble.trees):
        nm = tree.node_map()
        node = nm[tree.root_id()]
        while node.kind == INTERNAL:
            if x[node.feature_index] < node.threshold:
                node = nm[node.left_child]
            else:
                node = nm[node.right_child]
        idxs[k] = node.leaf_index
        codes[k] = ensemble.leaf_values[k, node.leaf_index]
    return idxs, codes


def exhaustive_inputs(p: int, n_features: int) -> np.ndarray:
    """The full integer grid [0, 2^p)^n_features as rows."""
    side = 1 << p
    grids = np.meshgrid(*([np.arange(side)] * n_features), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int64)


def random_inputs(rng, p: int, n_features: int, n: int) -> np.ndarray:
    return rng.integers(0, 1 << p, size=(n, n_features)).astype(np.int64)


def make_stump(p=3, n_features=2, feature=1, threshold=4, n_classes=2,
               left_class=1) -> TreeEnsemble:
    """The depth-1 example: left (x[feature] < threshold) predicts left_class.

    Built as one structural clone per class whose leaf rows are the one-hot
    class weights, quantized with scale 1/(2^p - 1) so codes are 0 or 2^p - 1.
    """
    qmax = (1 << p) - 1
    trees = []
    leaf_values = np.zeros((n_classes, 2), dtype=np.int64)
    for c in range(n_classes):
        trees.append(Tree(nodes=[
            TreeNode(node_id=0, kind=INTERNAL, feature_index=feature,
                     threshold=threshold, left_child=1, right_child=2),
            TreeNode(node_id=1, kind=LEAF, leaf_index=0),
            TreeNode(node_id=2, kind=LEAF, leaf_index=1),
        ]))
        leaf_values[c, 0] = qmax if c == left_class else 0
        leaf_values[c, 1] = 0 if c == left_class else qmax
    return TreeEnsemble(
        trees=trees,
        leaf_values=leaf_values,
        n_features=n_features,
        input_bits=p,
        leaf_quant=QuantParams(scale=1.0 / qmax, zero_point=0, bits=p),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=p) for _ in range(n_features)],
        task="classification",
        n_classes=n_classes,
        tree_classes=np.arange(n_classes, dtype=np.int64),
    )
