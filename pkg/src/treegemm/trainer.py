"""Desk-scale training of tree models directly on quantized integer data.

One greedy CART grower serves three model kinds:

  decision-tree     single tree, Gini impurity (classification) or SSE
  random-forest     bagging over bootstrap samples, per-split random
                    feature subsets of size ceil(sqrt(n_features))
  boosted-ensemble  stagewise regression trees on residuals of a logistic
                    (classification) or squared (regression) loss,
                    fixed learning rate 0.3

Candidate split thresholds are the feature values present at a node, with
canonical strict-less-than routing, so thresholds learned on quantized data
are already integers and need no rounding. Equal-quality splits break ties
toward the lowest feature index, then the lowest threshold, which makes
training deterministic; tree k of a classification ensemble feeds class
column k mod n_classes except for binary boosting, where every tree feeds
class 1 and class 0 stays at raw score zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .quantizer import QuantizedDataset, quantize_leaves
from .tree_ir import INTERNAL, LEAF, Tree, TreeEnsemble, TreeNode

LEARNING_RATE = 0.3

MODEL_KINDS = ("decision-tree", "random-forest", "boosted-ensemble")


@dataclass(frozen=True)
class TrainConfig:
    model_kind: str = "decision-tree"
    max_depth: int = 5
    n_estimators: int = 1
    seed: int = 0
    min_samples_split: int = 2

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise InvalidInputError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.max_depth < 1:
            raise InvalidInputError("max_depth must be >= 1")
        if self.n_estimators < 1:
            raise InvalidInputError("n_estimators must be >= 1")
        if self.min_samples_split < 2:
            raise InvalidInputError("min_samples_split must be >= 2")


def quantize_thresholds(raw_thresholds) -> np.ndarray:
    """Canonicalize thresholds learned with "x <= tau" routing over integers.

    floor(tau) + 1 expressed as strict "x < t" routes every integer input
    exactly as the source predicate did (for tau between two integers or on
    one). Training on integer data makes this a pure renaming.
    """
    t = np.asarray(raw_thresholds, dtype=np.float64)
    return (np.floor(t) + 1).astype(np.int64)


# --------------------------------------------------------------------------- #
# split search


def _best_split_gini(X, onehot, rows, feats):
    """Best (gain, feature, threshold) under Gini, or None.

    Iterates features ascending and thresholds ascending with strict-greater
    acceptance, which yields the lowest-feature / lowest-threshold tie-break.
    """
    n = rows.size
    total = onehot[rows].sum(axis=0)
    parent = 1.0 - ((total / n) ** 2).sum()
    best = None
    best_gain = 0.0
    for f in feats:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cut = np.nonzero(xs[1:] != xs[:-1])[0] + 1
        if cut.size == 0:
            continue
        cum = np.cumsum(onehot[rows[order]], axis=0)
        nl = cut.astype(np.float64)
        nr = n - nl
        left = cum[cut - 1]
        right = total - left
        gl = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        gains = parent - (nl * gl + nr * gr) / n
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            best = (best_gain, int(f), float(xs[cut[i]]))
    return best


def _best_split_sse(X, y, rows, feats):
    """Best split by total squared-error decrease, same tie-break rules."""
    n = rows.size
    yv = y[rows]
    total_sum = yv.sum()
    total_sq = (yv ** 2).sum()
    parent = total_sq - total_sum ** 2 / n
    if parent <= 1e-12:
        return None
    best = None
    best_gain = 1e-12
    for f in feats:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cut = np.nonzero(xs[1:] != xs[:-1])[0] + 1
        if cut.size == 0:
            continue
        ys = yv[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys ** 2)
        nl = cut.astype(np.float64)
        nr = n - nl
        lsum, lsq = csum[cut - 1], csq[cut - 1]
        sse_l = lsq - lsum ** 2 / nl
        sse_r = (total_sq - lsq) - (total_sum - lsum) ** 2 / nr
        gains = parent - (sse_l + sse_r)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            best = (best_gain, int(f), float(xs[cut[i]]))
    return best


def _grow(X, target, rows, depth, *, classification, onehot, max_depth,
          min_samples_split, rng, n_sub, path_budget=None, lefts=0, rights=0):
    """Recursive grower; returns nested dicts with vector or scalar leaves.

    path_budget = (max_lefts, max_rights) keeps every root-to-leaf path code
    inside the signed (p+1)-bit equality domain when training for a target
    bit-width; it only binds when max_depth approaches 2^p.
    """
    n = rows.size
    if classification:
        counts = onehot[rows].sum(axis=0)
        leaf_value = counts / n
        pure = counts.max() == n
    else:
        yv = target[rows]
        leaf_value = float(yv.mean())
        pure = bool(yv.min() == yv.max())

    if depth >= max_depth or n < min_samples_split or pure:
        return {"value": leaf_value}
    if path_budget is not None and (lefts + 1 > path_budget[0] or rights + 1 > path_budget[1]):
        return {"value": leaf_value}

    F = X.shape[1]
    if n_sub is not None and n_sub < F:
        feats = np.sort(rng.choice(F, size=n_sub, replace=False))
    else:
        feats = np.arange(F)

    if classification:
        split = _best_split_gini(X, onehot, rows, feats)
    else:
        split = _best_split_sse(X, target, rows, feats)
    if split is None:
        return {"value": leaf_value}

    _, f, thr = split
    mask = X[rows, f] < thr
    kw = dict(classification=classification, onehot=onehot, max_depth=max_depth,
              min_samples_split=min_samples_split, rng=rng, n_sub=n_sub,
              path_budget=path_budget)
    return {
        "feature": f,
        "threshold": thr,
        "left": _grow(X, target, rows[mask], depth + 1, lefts=lefts + 1, rights=rights, **kw),
        "right": _grow(X, target, rows[~mask], depth + 1, lefts=lefts, rights=rights + 1, **kw),
    }


def _predict_node(tree, X, out, rows):
    if "value" in tree:
        out[rows] = tree["value"]
        return
    mask = X[rows, tree["feature"]] < tree["threshold"]
    _predict_node(tree["left"], X, out, rows[mask])
    _predict_node(tree["right"], X, out, rows[~mask])


def _predict_tree(tree, X, width=None):
    """Vectorized dict-tree prediction; (n,) scalar or (n, width) vector."""
    n = X.shape[0]
    out = np.zeros(n if width is None else (n, width), dtype=np.float64)
    _predict_node(tree, X, out, np.arange(n))
    return out


# --------------------------------------------------------------------------- #
# model building


def _grow_forest_trees(X, y, cfg, classification, onehot, path_budget):
    """(tree, for-class) plan for decision-tree / random-forest kinds."""
    n = X.shape[0]
    if cfg.model_kind == "decision-tree":
        tree = _grow(X, y, np.arange(n), 0, classification=classification,
                     onehot=onehot, max_depth=cfg.max_depth,
                     min_samples_split=cfg.min_samples_split, rng=None, n_sub=None,
                     path_budget=path_budget)
        return [tree]
    n_sub = int(np.ceil(np.sqrt(X.shape[1])))
    trees = []
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_estimators)
    for e in range(cfg.n_estimators):
        rng = np.random.default_rng(children[e])
        rows = np.sort(rng.integers(0, n, size=n))
        trees.append(_grow(X, y, rows, 0, classification=classification,
                           onehot=onehot, max_depth=cfg.max_depth,
                           min_samples_split=cfg.min_samples_split,
                           rng=rng, n_sub=n_sub, path_budget=path_budget))
    return trees


def _grow_boosted(X, y, cfg, classification, n_classes, path_budget):
    """Stagewise residual fitting; returns [(class_col, tree, clamp)] in order."""
    n = X.shape[0]
    plan = []
    if classification:
        if n_classes == 2:
            F = np.zeros(n)
            y1 = (y == 1).astype(np.float64)
            for _ in range(cfg.n_estimators):
                resid = y1 - 1.0 / (1.0 + np.exp(-F))
                tree = _grow(X, resid, np.arange(n), 0, classification=False,
                             onehot=None, max_depth=cfg.max_depth,
                             min_samples_split=cfg.min_samples_split, rng=None,
                             n_sub=None, path_budget=path_budget)
                _scale_leaves(tree, LEARNING_RATE, -1.0, 1.0)
                F = F + _predict_tree(tree, X)
                plan.append((1, tree))
        else:
            F = np.zeros((n, n_classes))
            onehot_y = np.eye(n_classes)[y]
            for _ in range(cfg.n_estimators):
                e = np.exp(F - F.max(axis=1, keepdims=True))
                prob = e / e.sum(axis=1, keepdims=True)
                resid = onehot_y - prob
                round_trees = []
                for c in range(n_classes):
                    tree = _grow(X, resid[:, c], np.arange(n), 0, classification=False,
                                 onehot=None, max_depth=cfg.max_depth,
                                 min_samples_split=cfg.min_samples_split, rng=None,
                                 n_sub=None, path_budget=path_budget)
                    _scale_leaves(tree, LEARNING_RATE, -1.0, 1.0)
                    round_trees.append(tree)
                for c, tree in enumerate(round_trees):
                    F[:, c] += _predict_tree(tree, X)
                    plan.append((c, tree))
    else:
        span = float(y.max() - y.min()) or 1.0
        F = np.zeros(n)
        for _ in range(cfg.n_estimators):
            resid = y - F
            tree = _grow(X, resid, np.arange(n), 0, classification=False,
                         onehot=None, max_depth=cfg.max_depth,
                         min_samples_split=cfg.min_samples_split, rng=None,
                         n_sub=None, path_budget=path_budget)
            _scale_leaves(tree, LEARNING_RATE, -span, span)
            F = F + _predict_tree(tree, X)
            plan.append((0, tree))
    return plan


def _scale_leaves(tree, factor, lo, hi):
    """Learning-rate scaling plus the pre-quantization leaf clamp."""
    if "value" in tree:
        tree["value"] = float(np.clip(tree["value"] * factor, lo, hi))
        return
    _scale_leaves(tree["left"], factor, lo, hi)
    _scale_leaves(tree["right"], factor, lo, hi)


def _leaf_plan(X, y, cfg, path_budget=None) -> tuple[list, str, int]:
    """Grow the model and flatten it to [(class_col, tree, leaf_scalar_fn)]."""
    classification = np.issubdtype(np.asarray(y).dtype, np.integer)
    if classification:
        y = np.asarray(y, dtype=np.int64)
        if y.min() < 0:
            raise InvalidInputError("class labels must be non-negative integers")
        n_classes = max(2, int(y.max()) + 1)
        onehot = np.eye(n_classes)[y]
    else:
        y = np.asarray(y, dtype=np.float64)
        n_classes = 1
        onehot = None

    if cfg.model_kind == "boosted-ensemble":
        plan = _grow_boosted(X, y, cfg, classification, n_classes, path_budget)
        task = "classification" if classification else "regression"
        return plan, task, n_classes

    trees = _grow_forest_trees(X, y, cfg, classification, onehot, path_budget)
    if classification:
        # Clone each structure once per class with that class's leaf weight.
        plan = [(c, _project_leaves(t, c)) for t in trees for c in range(n_classes)]
        return plan, "classification", n_classes
    scale = 1.0 / len(trees) if cfg.model_kind == "random-forest" else 1.0
    plan = []
    for t in trees:
        if scale != 1.0:
            t = _copy_scaled(t, scale)
        plan.append((0, t))
    return plan, "regression", 1


def _project_leaves(tree, c):
    if "value" in tree:
        return {"value": float(tree["value"][c])}
    return {"feature": tree["feature"], "threshold": tree["threshold"],
            "left": _project_leaves(tree["left"], c),
            "right": _project_leaves(tree["right"], c)}


def _copy_scaled(tree, scale):
    if "value" in tree:
        return {"value": float(tree["value"]) * scale}
    return {"feature": tree["feature"], "threshold": tree["threshold"],
            "left": _copy_scaled(tree["left"], scale),
            "right": _copy_scaled(tree["right"], scale)}


def _dict_to_ir(tree) -> tuple[Tree, list[float]]:
    """BFS numbering: node ids and leaf indices in breadth-first order."""
    order = [tree]
    i = 0
    while i < len(order):
        nd = order[i]
        i += 1
        if "value" not in nd:
            order.append(nd["left"])
            order.append(nd["right"])
    pos = {id(nd): k for k, nd in enumerate(order)}
    nodes: list[TreeNode] = []
    leaf_values: list[float] = []
    for k, nd in enumerate(order):
        if "value" in nd:
            nodes.append(TreeNode(node_id=k, kind=LEAF, leaf_index=len(leaf_values)))
            leaf_values.append(float(nd["value"]))
        else:
            nodes.append(TreeNode(
                node_id=k, kind=INTERNAL,
                feature_index=int(nd["feature"]),
                threshold=int(nd["threshold"]),
                left_child=pos[id(nd["left"])],
                right_child=pos[id(nd["right"])],
            ))
    return Tree(nodes=nodes), leaf_values


def train(dataset: QuantizedDataset, y, cfg: TrainConfig) -> TreeEnsemble:
    """Alg. pipeline step: fit on integer data, quantize leaves, emit the IR."""
    X = np.asarray(dataset.values, dtype=np.float64)
    y = np.asarray(y)
    if X.size == 0 or X.shape[0] == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if y.shape[0] != X.shape[0]:
        raise InvalidInputError("labels are not aligned with rows")
    bits = dataset.per_feature_params[0].bits

    # Keep every path code inside the signed (bits+1)-bit equality domain.
    budget = ((1 << bits) - 1, 1 << bits)
    plan, task, n_classes = _leaf_plan(X, y, cfg, path_budget=budget)
    ir_trees = []
    float_leaves = []
    for _cls, tree in plan:
        t, leaves = _dict_to_ir(tree)
        ir_trees.append(t)
        float_leaves.append(leaves)

    all_values = np.concatenate([np.asarray(v) for v in float_leaves])
    _, leaf_quant = quantize_leaves(all_values.reshape(-1, 1), bits)
    from .quantizer import quantize as _q
    m = max(len(v) for v in float_leaves)
    leaf_matrix = np.zeros((len(ir_trees), m), dtype=np.int64)
    for k, vals in enumerate(float_leaves):
        for i, v in enumerate(vals):
            leaf_matrix[k, i] = _q(v, leaf_quant)

    return TreeEnsemble(
        trees=ir_trees,
        leaf_values=leaf_matrix,
        n_features=dataset.n_features,
        input_bits=bits,
        leaf_quant=leaf_quant,
        feature_quants=list(dataset.per_feature_params),
        task=task,
        n_classes=n_classes,
        tree_classes=np.array([c for c, _ in plan], dtype=np.int64),
    )


@dataclass
class FloatModel:
    """Float-trained reference sharing the exact same growing procedure."""

    plan: list               # [(class_col, dict tree)]
    task: str
    n_classes: int

    def predict_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        scores = np.zeros((X.shape[0], max(self.n_classes, 1)))
        for c, tree in self.plan:
            scores[:, c] += _predict_tree(tree, X)
        return scores

    def predict(self, X) -> np.ndarray:
        scores = self.predict_scores(X)
        if self.task == "classification":
            return scores.argmax(axis=1)
        return scores[:, 0]


def train_float_reference(X, y, cfg: TrainConfig) -> FloatModel:
    """Identically configured training on raw float features (no quantization)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.size == 0 or X.shape[0] == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if y.shape[0] != X.shape[0]:
        raise InvalidInputError("labels are not aligned with rows")
    plan, task, n_classes = _leaf_plan(X, y, cfg)
    return FloatModel(plan=plan, task=task, n_classes=n_classes)
