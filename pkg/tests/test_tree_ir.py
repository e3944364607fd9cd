import numpy as np
import pytest
from helpers import exhaustive_inputs, make_stump, random_ensemble, recursive_eval

from treegemm.errors import InvalidInputError
from treegemm.quantizer import QuantParams
from treegemm.tree_ir import INTERNAL, LEAF, Tree, TreeEnsemble, TreeNode, tree_depth


def leaf_only_ensemble():
    return TreeEnsemble(
        trees=[Tree(nodes=[TreeNode(node_id=0, kind=LEAF, leaf_index=0)])],
        leaf_values=np.array([[5]], dtype=np.int64),
        n_features=2,
        input_bits=3,
        leaf_quant=QuantParams(scale=1.0, zero_point=0, bits=3),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=3)] * 2,
        task="regression",
        n_classes=1,
    )


def test_stump_routes_like_the_decision_function():
    ens = make_stump()
    # Encoded "x2 > 3" as left iff x2 < 4: x2=2 goes left -> class-1 leaf.
    idx, codes = ens.traverse(np.array([0, 2]))
    assert idx.tolist() == [0, 0]
    assert codes.tolist() == [0, 7]        # class-1 clone holds the weight
    idx, codes = ens.traverse(np.array([0, 5]))
    assert idx.tolist() == [1, 1]
    assert codes.tolist() == [7, 0]


def test_root_leaf_tree_returns_its_leaf_everywhere():
    ens = leaf_only_ensemble()
    for x in exhaustive_inputs(3, 2):
        idx, codes = ens.traverse(x)
        assert idx.tolist() == [0]
        assert codes.tolist() == [5]


def test_traverse_matches_recursive_oracle_exhaustively():
    rng = np.random.default_rng(123)
    for _ in range(20):
        ens = random_ensemble(rng, p=3, n_features=2, max_depth=4)
        X = exhaustive_inputs(3, 2)
        idx, codes = ens.traverse_batch(X)
        for i, x in enumerate(X):
            oidx, ocodes = recursive_eval(ens, x)
            assert np.array_equal(idx[i], oidx)
            assert np.array_equal(codes[i], ocodes)


def test_traverse_backend_parity():
    rng = np.random.default_rng(5)
    ens = random_ensemble(rng, p=4, n_features=3, max_depth=5)
    X = rng.integers(0, 16, size=(200, 3)).astype(np.int64)
    a = ens.traverse_batch(X, backend="numpy")
    b = ens.traverse_batch(X, backend="numba")
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_traverse_rejects_bad_inputs():
    ens = make_stump()
    with pytest.raises(InvalidInputError):
        ens.traverse(np.array([1, 2, 3]))
    with pytest.raises(InvalidInputError):
        ens.traverse(np.array([0, 9]))       # above 2^3 - 1
    with pytest.raises(InvalidInputError):
        ens.traverse(np.array([0, -1]))


def test_validate_accepts_minimal_and_random_ensembles():
    assert leaf_only_ensemble().validate() == []
    rng = np.random.default_rng(99)
    for _ in range(25):
        assert random_ensemble(rng).validate() == []


def test_validate_flags_feature_out_of_range():
    ens = make_stump()
    bad = TreeNode(node_id=0, kind=INTERNAL, feature_index=2, threshold=4,
                   left_child=1, right_child=2)
    ens.trees[0] = Tree(nodes=[bad] + ens.trees[0].nodes[1:])
    assert any("feature out of range" in v for v in ens.validate())


def test_validate_flags_cycles_and_multi_parents():
    nodes = [
        TreeNode(node_id=0, kind=INTERNAL, feature_index=0, threshold=1,
                 left_child=1, right_child=2),
        TreeNode(node_id=1, kind=INTERNAL, feature_index=0, threshold=1,
                 left_child=0, right_child=2),
        TreeNode(node_id=2, kind=LEAF, leaf_index=0),
    ]
    ens = leaf_only_ensemble()
    ens.trees = [Tree(nodes=nodes)]
    ens.leaf_values = np.array([[1]], dtype=np.int64)
    msgs = ens.validate()
    assert any("not a tree" in v for v in msgs)


def test_validate_flags_threshold_and_leaf_index_range():
    ens = make_stump(p=3)
    bad = TreeNode(node_id=0, kind=INTERNAL, feature_index=1, threshold=8,
                   left_child=1, right_child=2)
    ens.trees[0] = Tree(nodes=[bad] + ens.trees[0].nodes[1:])
    assert any("threshold" in v for v in ens.validate())

    ens2 = leaf_only_ensemble()
    ens2.trees = [Tree(nodes=[TreeNode(node_id=0, kind=LEAF, leaf_index=3)])]
    assert any("leaf_index" in v for v in ens2.validate())


def test_validate_flags_duplicate_leaf_indices():
    nodes = [
        TreeNode(node_id=0, kind=INTERNAL, feature_index=0, threshold=2,
                 left_child=1, right_child=2),
        TreeNode(node_id=1, kind=LEAF, leaf_index=0),
        TreeNode(node_id=2, kind=LEAF, leaf_index=0),
    ]
    ens = leaf_only_ensemble()
    ens.trees = [Tree(nodes=nodes)]
    ens.leaf_values = np.array([[1, 2]], dtype=np.int64)
    assert any("duplicate leaf_index" in v for v in ens.validate())


def test_ir_json_round_trip_is_stable():
    rng = np.random.default_rng(321)
    ens = random_ensemble(rng, p=4)
    d = ens.to_dict()
    ens2 = TreeEnsemble.from_dict(d)
    assert ens2.to_dict() == d
    X = rng.integers(0, 16, size=(50, ens.n_features)).astype(np.int64)
    a, b = ens.traverse_batch(X), ens2.traverse_batch(X)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_ir_save_load(tmp_path):
    ens = make_stump()
    path = tmp_path / "model.json"
    ens.save(path)
    again = TreeEnsemble.load(path)
    assert again.to_dict() == ens.to_dict()
    # Re-saving produces byte-identical files.
    p2 = tmp_path / "model2.json"
    again.save(p2)
    assert path.read_bytes() == p2.read_bytes()


def test_tree_classes_default_round_robin():
    d = make_stump(n_classes=3, left_class=2).to_dict()
    del d["tree_classes"]
    ens = TreeEnsemble.from_dict(d)
    assert ens.tree_classes.tolist() == [0, 1, 2]


def test_tree_depth():
    ens = make_stump()
    assert tree_depth(ens.trees[0]) == 1
    assert tree_depth(leaf_only_ensemble().trees[0]) == 0
