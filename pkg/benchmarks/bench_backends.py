"""Benchmark the numba kernels against the pure-numpy fallback.

Times compiled-bundle evaluation (noiseless and noisy) and packed tree
traversal on a few workload sizes, checks the outputs are bit-identical,
and prints a speedup table.

    python3 benchmarks/bench_backends.py [--rows 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from treegemm import kernels
from treegemm.compiler import compile_ensemble
from treegemm.engine import NoiseModel, run_raw
from treegemm.quantizer import QuantParams
from treegemm.tree_ir import INTERNAL, LEAF, Tree, TreeEnsemble, TreeNode


def full_tree(depth, p, n_features, rng, leaf_counter):
    """A complete depth-d tree with random features/thresholds."""
    nodes = []

    def grow(d):
        nid = len(nodes)
        if d == depth:
            nodes.append(TreeNode(node_id=nid, kind=LEAF, leaf_index=next(leaf_counter)))
            return nid
        nodes.append(None)
        left = grow(d + 1)
        right = grow(d + 1)
        nodes[nid] = TreeNode(node_id=nid, kind=INTERNAL,
                              feature_index=int(rng.integers(0, n_features)),
                              threshold=int(rng.integers(1, 1 << p)),
                              left_child=left, right_child=right)
        return nid

    grow(0)
    return Tree(nodes=nodes)


def make_workload(n_trees, depth, p, n_features, seed):
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        counter = iter(range(1 << depth))
        trees.append(full_tree(depth, p, n_features, rng, counter))
    m = 1 << depth
    leaves = rng.integers(0, 1 << p, size=(n_trees, m)).astype(np.int64)
    ens = TreeEnsemble(
        trees=trees, leaf_values=leaves, n_features=n_features, input_bits=p,
        leaf_quant=QuantParams(scale=0.01, zero_point=0, bits=p),
        feature_quants=[QuantParams(scale=1.0, zero_point=0, bits=p)] * n_features,
        task="classification", n_classes=2,
        tree_classes=np.arange(n_trees, dtype=np.int64) % 2,
    )
    return compile_ensemble(ens)


def bench(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases = [
        ("stumps  N=50 d=1 p=6", make_workload(50, 1, 6, 10, 0)),
        ("forest  N=20 d=5 p=6", make_workload(20, 5, 6, 10, 1)),
        ("deep    N=10 d=6 p=8", make_workload(10, 6, 8, 20, 2)),
    ]
    noise = NoiseModel(p_error=0.05, seed=7)
    rng = np.random.default_rng(0)

    print(f"{'case':<24}{'mode':<12}{'numpy':>10}{'numba':>10}{'speedup':>9}")
    for name, bundle in cases:
        X = rng.integers(0, 1 << bundle.input_bits,
                         size=(args.rows, bundle.n_features)).astype(np.int64)
        for mode, nm in (("noiseless", None), ("p_err=.05", noise)):
            out_np = run_raw(bundle, X, nm, backend="numpy")
            out_nb = run_raw(bundle, X, nm, backend="numba")   # includes JIT warm-up
            for a, b in zip(out_np[:4], out_nb[:4]):
                assert np.array_equal(a, b), "backends disagree"
            t_np = bench(lambda: run_raw(bundle, X, nm, backend="numpy"), args.repeat)
            t_nb = bench(lambda: run_raw(bundle, X, nm, backend="numba"), args.repeat)
            print(f"{name:<24}{mode:<12}{t_np * 1e3:>8.1f}ms{t_nb * 1e3:>8.1f}ms{t_np / t_nb:>8.1f}x")
    print("\noutputs bit-identical across backends for every case")


if __name__ == "__main__":
    main()
