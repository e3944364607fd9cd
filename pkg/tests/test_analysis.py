import numpy as np
import pytest
from helpers import exhaustive_inputs, make_stump, random_ensemble, random_inputs

from treegemm.analysis import analyze, pbs_cost_estimate
from treegemm.compiler import compile_ensemble
from treegemm.engine import evaluate_batch
from treegemm.errors import ConfigurationError
from treegemm.quantizer import QuantParams
from treegemm.tree_ir import LEAF, Tree, TreeEnsemble, TreeNode


def test_global_bound_is_input_bits_plus_one():
    ens = make_stump(p=6, threshold=33)
    report = analyze(compile_ensemble(ens))
    assert report.global_max_bits == 7
    assert report.per_step["path_sum"].bits == 7
    assert not report.per_step["clear_aggregate"].encrypted


def test_root_leaf_only_ensemble():
    ens = TreeEnsemble(
        trees=[Tree(nodes=[TreeNode(node_id=0, kind=LEAF, leaf_index=0)])],
        leaf_values=np.array([[3]], dtype=np.int64),
        n_features=1,
        input_bits=5,
        leaf_quant=QuantParams(scale=1.0, zero_point=0, bits=5),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=5)],
        task="regression",
        n_classes=1,
    )
    report = analyze(compile_ensemble(ens))
    assert report.pbs_count == 0
    assert report.pbs_input_widths == []
    assert report.global_max_bits == 5


def test_pbs_count_and_widths():
    b = compile_ensemble(make_stump(p=3))
    report = analyze(b)
    # Two clones: one comparison (width p) + two equalities (width p+1) each.
    assert report.pbs_count == 6
    assert sorted(report.pbs_input_widths) == [3, 3, 4, 4, 4, 4]


def test_intervals_contain_all_observed_values():
    rng = np.random.default_rng(60)
    for _ in range(12):
        ens = random_ensemble(rng)
        b = compile_ensemble(ens)
        report = analyze(b)
        X = random_inputs(rng, ens.input_bits, ens.n_features, 400)
        results = evaluate_batch(b, X, trace=True)
        sr = report.per_step
        for res in results:
            tr = res.trace
            real_P = tr["P"][b.slot_real]
            if real_P.size:
                assert real_P.min() >= sr["feature_select"].min_value
                assert real_P.max() <= sr["feature_select"].max_value
            real_R = tr["R"][b.leaf_tlu]
            if real_R.size:
                assert real_R.min() >= sr["path_sum"].min_value
                assert real_R.max() <= sr["path_sum"].max_value
            sums = res.per_tree_sums[np.arange(b.n_trees), b.tree_classes]
            assert sums.min() >= sr["per_tree_sum"].min_value
            assert sums.max() <= sr["per_tree_sum"].max_value
            assert res.aggregate.min() >= sr["clear_aggregate"].min_value
            assert res.aggregate.max() <= sr["clear_aggregate"].max_value


def test_signed_bound_attained_with_a_right_branch():
    # Any input that goes left at the root makes the rightmost leaf's path
    # code negative, which is what forces the extra sign bit.
    ens = make_stump(p=3, threshold=4)
    b = compile_ensemble(ens)
    X = exhaustive_inputs(3, 2)
    results = evaluate_batch(b, X, trace=True)
    r_min = min(res.trace["R"][b.leaf_tlu].min() for res in results)
    assert r_min < 0
    assert analyze(b).per_step["path_sum"].min_value <= r_min


def test_interval_refinement_for_never_firing_comparisons():
    # threshold 0 means nothing ever routes left, so path codes with that
    # node can never count it as a left hit.
    ens = make_stump(p=3, threshold=0, n_classes=2)
    report = analyze(compile_ensemble(ens))
    assert report.per_step["path_sum"].max_value == 0
    assert report.per_step["path_sum"].min_value == 0


def test_norm2_constants():
    ens = make_stump(p=3)
    report = analyze(compile_ensemble(ens))
    assert report.norm2_constants["feature_select"] == 1.0
    assert report.norm2_constants["path_sum"] == 1.0     # depth-1 paths
    assert report.norm2_constants["per_tree_sum"] == pytest.approx(7.0)


def test_cost_estimate():
    b = compile_ensemble(make_stump(p=3))
    report = analyze(b)
    table = {3: 1.0, 4: 2.0}
    assert pbs_cost_estimate(report, table) == pytest.approx(2 * 1.0 + 4 * 2.0)

    # Zero TLUs cost zero.
    leaf_only = TreeEnsemble(
        trees=[Tree(nodes=[TreeNode(node_id=0, kind=LEAF, leaf_index=0)])],
        leaf_values=np.array([[0]], dtype=np.int64),
        n_features=1, input_bits=3,
        leaf_quant=QuantParams(scale=1.0, zero_point=0, bits=3),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=3)],
        task="regression", n_classes=1,
    )
    assert pbs_cost_estimate(analyze(compile_ensemble(leaf_only)), table) == 0.0

    with pytest.raises(ConfigurationError):
        pbs_cost_estimate(report, {3: 1.0})


def test_cost_doubles_with_tree_count():
    rng = np.random.default_rng(3)
    ens = random_ensemble(rng, p=4, shape="rf", allow_root_leaf=False)
    b1 = compile_ensemble(ens)
    doubled = TreeEnsemble(
        trees=ens.trees * 2,
        leaf_values=np.vstack([ens.leaf_values, ens.leaf_values]),
        n_features=ens.n_features, input_bits=ens.input_bits,
        leaf_quant=ens.leaf_quant, feature_quants=ens.feature_quants,
        task=ens.task, n_classes=ens.n_classes,
        tree_classes=np.concatenate([ens.tree_classes, ens.tree_classes]),
    )
    b2 = compile_ensemble(doubled)
    table = {w: 1.5 ** w for w in range(2, 10)}
    assert pbs_cost_estimate(analyze(b2), table) == pytest.approx(2 * pbs_cost_estimate(analyze(b1), table))


def test_exponential_cost_table_shape():
    # With a user-supplied exponential per-width cost, moving p 4 -> 7 grows
    # the per-TLU cost superlinearly in the width difference.
    cost = {w: 2.0 ** w for w in range(2, 12)}
    e4 = make_stump(p=4, threshold=3)
    e7 = make_stump(p=7, threshold=3)
    c4 = pbs_cost_estimate(analyze(compile_ensemble(e4)), cost)
    c7 = pbs_cost_estimate(analyze(compile_ensemble(e7)), cost)
    assert c7 / c4 == pytest.approx(8.0)
    assert c7 / c4 > 7 / 4


def test_report_serialization_and_table():
    report = analyze(compile_ensemble(make_stump(p=4)))
    d = report.to_dict()
    assert d["global_max_bits"] == 5
    assert "path_sum" in d["per_step"]
    text = report.format_table()
    assert "global encrypted max bits: 5" in text
    assert "PBS count" in text
