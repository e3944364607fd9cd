"""Convert fitted scikit-learn tree models into the engine's model IR JSON.

Supported: DecisionTreeClassifier, RandomForestClassifier,
GradientBoostingClassifier (binary or multiclass, init='zero'). The source
model must have been fitted on data already quantized with the supplied
per-feature parameters; thresholds then sit between integers and the
"x <= tau" split rewrites exactly to canonical "x < floor(tau) + 1".

Leaf layout in the IR: scalar leaves plus a per-tree output class column.
A decision tree exports one structural clone per class carrying that
class's one-vs-rest weight (1 at the leaf's majority class); a random
forest exports per-class clones with class-probability leaves (soft
voting); gradient boosting exports its stage trees with learning-rate
scaled raw scores (binary: all trees feed class 1, class 0 stays at raw 0).
Leaf values are quantized globally to the target bit-width.
"""

from __future__ import annotations

import hashlib
import json
import sklearn
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.tree import DecisionTreeClassifier

import numpy as np

from .quant import fit_params, quantize

IR_VERSION = 1


class ExportError(ValueError):
    pass


def _canonical_threshold(tau: float, bits: int) -> int:
    """sklearn routes left when x <= tau; over integers that is x < floor(tau)+1."""
    t = int(np.floor(tau)) + 1
    if not (0 <= t <= (1 << bits) - 1):
        raise ExportError(
            f"threshold {tau} does not separate quantized {bits}-bit integers; "
            "the model must be retrained on data quantized with the supplied parameters"
        )
    return t


def _tree_nodes(tree, bits: int):
    """sklearn tree_ arrays -> IR node dicts plus per-leaf sklearn node ids."""
    nodes = []
    leaf_of = {}
    for i in range(tree.node_count):
        if tree.children_left[i] == -1:
            leaf_index = len(leaf_of)
            leaf_of[i] = leaf_index
            nodes.append({"node_id": i, "kind": "leaf", "leaf_index": leaf_index})
        else:
            nodes.append({
                "node_id": i,
                "kind": "internal",
                "feature_index": int(tree.feature[i]),
                "threshold": _canonical_threshold(float(tree.threshold[i]), bits),
                "left_child": int(tree.children_left[i]),
                "right_child": int(tree.children_right[i]),
            })
    return nodes, leaf_of


def _plan(model, bits: int):
    """Flatten the model into [(class_col, ir_nodes, leaf_float_values)]."""
    if isinstance(model, DecisionTreeClassifier):
        n_classes = int(model.n_classes_)
        nodes, leaf_of = _tree_nodes(model.tree_, bits)
        counts = model.tree_.value[:, 0, :]
        out = []
        for c in range(n_classes):
            vals = [0.0] * len(leaf_of)
            for skl_node, leaf_index in leaf_of.items():
                vals[leaf_index] = 1.0 if int(np.argmax(counts[skl_node])) == c else 0.0
            out.append((c, nodes, vals))
        return out, "classification", n_classes

    if isinstance(model, RandomForestClassifier):
        n_classes = int(model.n_classes_)
        out = []
        for est in model.estimators_:
            nodes, leaf_of = _tree_nodes(est.tree_, bits)
            counts = est.tree_.value[:, 0, :]
            for c in range(n_classes):
                vals = [0.0] * len(leaf_of)
                for skl_node, leaf_index in leaf_of.items():
                    row = counts[skl_node]
                    vals[leaf_index] = float(row[c] / row.sum())
                out.append((c, nodes, vals))
        return out, "classification", n_classes

    if isinstance(model, GradientBoostingClassifier):
        if model.init != "zero":
            raise ExportError(
                "gradient boosting must be fitted with init='zero'; the IR has no "
                "intercept slot, so a non-zero initial raw score cannot be represented"
            )
        n_classes = int(model.n_classes_)
        lr = float(model.learning_rate)
        out = []
        for stage in model.estimators_:
            for col, est in enumerate(stage):
                nodes, leaf_of = _tree_nodes(est.tree_, bits)
                value = est.tree_.value[:, 0, 0]
                vals = [0.0] * len(leaf_of)
                for skl_node, leaf_index in leaf_of.items():
                    vals[leaf_index] = lr * float(value[skl_node])
                out.append((1 if n_classes == 2 else col, nodes, vals))
        return out, "classification", n_classes

    raise ExportError(f"unsupported model type {type(model).__name__}")


def export_model(model, feature_params: list[dict], bits: int) -> tuple[dict, dict]:
    """Build (ir_dict, manifest_dict) from a fitted model.

    feature_params are the per-column scale/zero-point dicts the training
    data was quantized with; they are embedded so the engine can quantize
    raw inference rows identically.
    """
    n_features = int(model.n_features_in_)
    if len(feature_params) != n_features:
        raise ExportError(f"model has {n_features} features but {len(feature_params)} params were supplied")
    for p in feature_params:
        if int(p["bits"]) != bits:
            raise ExportError("feature quantization bits disagree with --bits")

    plan, task, n_classes = _plan(model, bits)
    all_leaf_values = np.concatenate([np.asarray(vals, dtype=np.float64) for _, _, vals in plan])
    leaf_quant = fit_params(all_leaf_values, bits)
    m = max(len(vals) for _, _, vals in plan)
    leaf_matrix = []
    for _, _, vals in plan:
        codes = quantize(np.asarray(vals), leaf_quant).tolist()
        leaf_matrix.append(codes + [0] * (m - len(codes)))

    ir = {
        "version": IR_VERSION,
        "task": task,
        "n_features": n_features,
        "input_bits": bits,
        "n_classes": n_classes,
        "feature_quants": [
            {"scale": float(p["scale"]), "zero_point": int(p["zero_point"]), "bits": int(p["bits"])}
            for p in feature_params
        ],
        "leaf_quant": {"scale": float(leaf_quant["scale"]),
                       "zero_point": int(leaf_quant["zero_point"]),
                       "bits": int(leaf_quant["bits"])},
        "trees": [{"nodes": nodes} for _, nodes, _ in plan],
        "leaf_values": leaf_matrix,
        "tree_classes": [c for c, _, _ in plan],
    }

    ir_bytes = (json.dumps(ir, indent=1) + "\n").encode()
    manifest = {
        "schema_version": 1,
        "framework": "scikit-learn",
        "framework_version": sklearn.__version__,
        "model_kind": type(model).__name__,
        "n_features": n_features,
        "input_bits": bits,
        "n_trees": len(plan),
        "n_classes": n_classes,
        "ir_sha256": hashlib.sha256(ir_bytes).hexdigest(),
    }
    return ir, manifest


def write_export(model, feature_params: list[dict], bits: int, out_path) -> dict:
    """Export and write <out>.json plus <out>.manifest.json; returns the manifest."""
    from pathlib import Path

    ir, manifest = export_model(model, feature_params, bits)
    out = Path(out_path)
    out.write_text(json.dumps(ir, indent=1) + "\n")
    manifest_path = out.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
