"""Operator CLI: quantize, train, compile, analyze, infer, and the two
sweep experiments (precision sweep and TLU-failure-probability sweep).

Exit codes: 0 success, 2 usage error, 3 data error, 4 contract violation.
All commands are deterministic under fixed seeds: outputs are byte-identical
across re-runs and worker counts.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import engine, metrics
from .analysis import analyze as analyze_bundle
from .analysis import pbs_cost_estimate
from .compiler import compile_ensemble
from .errors import ConfigurationError, ContractViolationError, InvalidInputError
from .quantizer import quantize_rows, train_quantizer
from .trainer import TrainConfig, train, train_float_reference
from .tree_ir import TreeEnsemble

SCHEMA_VERSION = 1

MODEL_NAMES = {"dt": "decision-tree", "rf": "random-forest", "xgb-like": "boosted-ensemble"}


def guard(f):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except InvalidInputError as e:
            click.echo(f"data error: {e}", err=True)
            sys.exit(3)
        except ContractViolationError as e:
            click.echo(f"contract violation: {e}", err=True)
            sys.exit(4)
        except ConfigurationError as e:
            raise click.UsageError(str(e))

    return wrapper


# --------------------------------------------------------------------------- #
# CSV plumbing


def read_table(path: str, label: str | None):
    """Parse a numeric CSV with a header; returns (names, X, labels or None)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return [], np.zeros((0, 0)), None
        rows = list(reader)
    if label is not None and label not in header:
        raise InvalidInputError(f"label column {label!r} not found in {path}")
    label_pos = header.index(label) if label is not None else None
    feat_names = [h for i, h in enumerate(header) if i != label_pos]
    X = np.zeros((len(rows), len(feat_names)), dtype=np.float64)
    labels = [] if label_pos is not None else None
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise InvalidInputError(f"row {r + 1}: expected {len(header)} cells, got {len(row)}")
        c = 0
        for i, cell in enumerate(row):
            if i == label_pos:
                labels.append(cell)
                continue
            try:
                X[r, c] = float(cell)
            except ValueError:
                raise InvalidInputError(
                    f"row {r + 1}, column {header[i]!r}: could not parse {cell!r} as a number")
            if not np.isfinite(X[r, c]):
                raise InvalidInputError(f"row {r + 1}, column {header[i]!r}: non-finite value")
            c += 1
    return feat_names, X, labels


def parse_labels(raw: list[str], task: str) -> np.ndarray:
    if task == "regression":
        return np.array([float(v) for v in raw], dtype=np.float64)
    out = np.empty(len(raw), dtype=np.int64)
    for i, v in enumerate(raw):
        fv = float(v)
        if fv != int(fv) or fv < 0:
            raise InvalidInputError(f"row {i + 1}: class label {v!r} is not a non-negative integer")
        out[i] = int(fv)
    return out


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    """Schema-versioned, append-safe CSV: appends when the header matches."""
    p = Path(path)
    exists = p.exists() and p.stat().st_size > 0
    if exists:
        with p.open(newline="") as fh:
            old_header = next(csv.reader(fh), None)
        if old_header != header:
            raise InvalidInputError(f"{path} exists with a different schema; refusing to append")
    with p.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not exists:
            w.writerow(header)
        w.writerows(rows)


def _csv_list(value: str, cast):
    try:
        return [cast(v) for v in value.split(",") if v.strip() != ""]
    except ValueError:
        raise click.UsageError(f"could not parse list {value!r}")


def _cfg(model: str, n_estimators: int, max_depth: int, seed: int) -> TrainConfig:
    return TrainConfig(model_kind=MODEL_NAMES[model], n_estimators=n_estimators,
                       max_depth=max_depth, seed=seed)


def _fit_point(X, y, test, tr, bits, cfg):
    """Quantize on the training fold, train, compile; returns eval pieces."""
    ds, params = train_quantizer(X[tr], bits)
    ens = train(ds, y[tr], cfg)
    bundle = compile_ensemble(ens)
    Xq_test = quantize_rows(X[test], params)
    return bundle, Xq_test


def _predict_bundle(bundle, Xq, noise=None, workers=1):
    """Batch predictions and scores via the array path."""
    tree_sums, _, _, fails, _ = engine.run_raw(bundle, Xq, noise, workers=workers)
    C = max(bundle.n_classes, 1)
    agg = np.zeros((Xq.shape[0], C), dtype=np.int64)
    for c in range(C):
        cols = bundle.tree_classes == c
        if cols.any():
            agg[:, c] = tree_sums[:, cols].sum(axis=1)
    counts = bundle.trees_per_class
    scores = (agg - counts * bundle.leaf_quant.zero_point) * bundle.leaf_quant.scale
    if bundle.task == "classification":
        pred = scores.argmax(axis=1)
    else:
        pred = scores[:, 0]
    return pred, scores, fails


@click.group()
@click.version_option()
def main():
    """Quantized tree ensembles compiled to tensor form, exact or noisy."""


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--bits", type=int, required=True, help="Quantization bit-width p.")
@click.option("--label", required=True, help="Name of the label column.")
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory for quantized.csv and params.json.")
@guard
def quantize(dataset, bits, label, out):
    """Quantize a CSV dataset column by column."""
    names, X, labels = read_table(dataset, label)
    ds, params = train_quantizer(X, bits)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "quantized.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label])
        for i in range(X.shape[0]):
            w.writerow([int(v) for v in ds.values[i]] + [labels[i]])
    payload = {
        "schema_version": SCHEMA_VERSION,
        "bits": bits,
        "label": label,
        "features": [{"name": n, **p.to_dict()} for n, p in zip(names, params)],
    }
    (outdir / "params.json").write_text(json.dumps(payload, indent=1) + "\n")
    click.echo(f"wrote {outdir / 'quantized.csv'} and {outdir / 'params.json'}")


TRAIN_OPTS = [
    click.option("--model", type=click.Choice(sorted(MODEL_NAMES)), default="dt", show_default=True),
    click.option("--n-estimators", type=int, default=50, show_default=True),
    click.option("--max-depth", type=int, default=5, show_default=True),
    click.option("--seed", type=int, default=0, show_default=True),
]


def train_opts(f):
    for opt in reversed(TRAIN_OPTS):
        f = opt(f)
    return f


@main.command(name="train")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--bits", type=int, default=6, show_default=True)
@click.option("--label", required=True)
@click.option("--task", type=click.Choice(["classification", "regression"]),
              default="classification", show_default=True)
@train_opts
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@guard
def train_cmd(dataset, bits, label, task, model, n_estimators, max_depth, seed, out):
    """Quantize, fit, and write the model IR JSON."""
    _, X, raw = read_table(dataset, label)
    y = parse_labels(raw, task)
    ds, _ = train_quantizer(X, bits)
    ens = train(ds, y, _cfg(model, n_estimators, max_depth, seed))
    ens.save(out)
    click.echo(f"wrote {out} ({ens.n_trees} trees, p={bits})")


@main.command(name="compile")
@click.argument("model_ir", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@guard
def compile_cmd(model_ir, out):
    """Compile model IR into the five-tensor bundle artifact."""
    bundle = compile_ensemble(TreeEnsemble.load(model_ir))
    bundle.save(out)
    click.echo(f"wrote {out} ({bundle.n_trees} trees, "
               f"{int(bundle.internal_counts.sum())} decision nodes)")


@main.command(name="analyze")
@click.argument("model_ir", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Also write the report as JSON.")
@click.option("--cost-table", help="Comma list of width:cost pairs for a PBS cost estimate.")
@guard
def analyze_cmd(model_ir, out, cost_table):
    """Bit-width report for the compiled model."""
    bundle = compile_ensemble(TreeEnsemble.load(model_ir))
    report = analyze_bundle(bundle)
    click.echo(report.format_table())
    if cost_table:
        table = {}
        for pair in cost_table.split(","):
            w, _, c = pair.partition(":")
            table[int(w)] = float(c)
        click.echo(f"relative PBS cost: {pbs_cost_estimate(report, table):g}")
    if out:
        Path(out).write_text(report.to_json() + "\n")


@main.command()
@click.argument("model_ir", type=click.Path(exists=True, dir_okay=False))
@click.argument("inputs", type=click.Path(exists=True, dir_okay=False))
@click.option("--label", default=None, help="Label column to ignore in the input CSV.")
@click.option("--p-error", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False),
              help="Dump per-row P/Q/R/S tensors as JSON.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@guard
def infer(model_ir, inputs, label, p_error, seed, workers, trace_path, out):
    """Batch inference: one prediction row per input row.

    Inputs are raw feature values in training column order; they are
    quantized client-side with the parameters stored in the model.
    """
    ens = TreeEnsemble.load(model_ir)
    violations = ens.validate()
    if violations:
        raise InvalidInputError("model IR is invalid: " + "; ".join(violations))
    bundle = compile_ensemble(ens)
    names, X, _ = read_table(inputs, label)
    if X.shape[0] and len(names) != ens.n_features:
        raise InvalidInputError(
            f"model expects {ens.n_features} feature columns, input has {len(names)}")
    noise = engine.NoiseModel(p_error=p_error, seed=seed) if p_error > 0 else None
    Xq = quantize_rows(X, ens.feature_quants) if X.shape[0] else np.zeros((0, ens.n_features), dtype=np.int64)

    header = ["schema_version", "row", "prediction"]
    if ens.task == "classification":
        header += [f"score_{c}" for c in range(ens.n_classes)]
    rows = []
    if X.shape[0]:
        pred, scores, _ = _predict_bundle(bundle, Xq, noise, workers=workers)
        for i in range(X.shape[0]):
            if ens.task == "classification":
                rows.append([SCHEMA_VERSION, i, int(pred[i])] + [repr(float(s)) for s in scores[i]])
            else:
                rows.append([SCHEMA_VERSION, i, repr(float(pred[i]))])
    Path(out).write_text("")
    write_csv(out, header, rows)

    if trace_path:
        results = engine.evaluate_batch(bundle, Xq, noise, trace=True)
        dump = []
        for i, res in enumerate(results):
            tr = res.trace
            dump.append({
                "row": i,
                "P": tr["P"].tolist(), "Q": tr["Q"].tolist(),
                "R": tr["R"].tolist(), "S": tr["S"].tolist(),
                "per_tree_sums": res.per_tree_sums.tolist(),
                "aggregate": res.aggregate.tolist(),
            })
        Path(trace_path).write_text(json.dumps(dump) + "\n")
    click.echo(f"wrote {out} ({len(rows)} predictions)")


@main.command(name="sweep-bits")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--label", required=True)
@click.option("--bits", default="2,3,4,5,6,8", show_default=True,
              help="Comma list of bit-widths to sweep.")
@train_opts
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@guard
def sweep_bits(dataset, label, bits, model, n_estimators, max_depth, seed, folds,
               repeats, workers, out):
    """Accuracy/f1/AP versus quantization precision, with a float reference."""
    bit_list = _csv_list(bits, int)
    if any(b < 2 for b in bit_list):
        raise click.UsageError("sweep bit-widths must be >= 2")
    _, X, raw = read_table(dataset, label)
    y = parse_labels(raw, "classification")
    cfg = _cfg(model, n_estimators, max_depth, seed)
    binary = int(y.max()) + 1 == 2
    splits = list(metrics.cv_splits(y, folds, repeats, seed))

    def run_split(split):
        _, _, tr, te = split
        fm = train_float_reference(X[tr], y[tr], cfg)
        fscores = fm.predict_scores(X[te])
        fpred = fm.predict(X[te])
        point = {"float": (fpred, fscores)}
        for b in bit_list:
            bundle, Xq_test = _fit_point(X, y, te, tr, b, cfg)
            pred, scores, _ = _predict_bundle(bundle, Xq_test)
            point[b] = (pred, scores)
        return point

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_split = list(pool.map(run_split, splits))
    else:
        per_split = [run_split(s) for s in splits]

    def agg(metric_fn):
        return lambda key: float(np.mean([
            metric_fn(y[te], per_split[i][key]) for i, (_, _, _, te) in enumerate(splits)]))

    acc = agg(lambda yt, pv: metrics.accuracy(yt, pv[0]))
    f1 = agg(lambda yt, pv: metrics.f1_binary(yt, pv[0]) if binary else float("nan"))
    ap = agg(lambda yt, pv: metrics.average_precision(yt, pv[1][:, 1]) if binary else float("nan"))

    header = ["schema_version", "bits", "model", "n_estimators", "max_depth",
              "folds", "repeats", "seed", "accuracy", "f1", "average_precision",
              "float_accuracy", "float_f1", "float_average_precision"]
    rows = []
    facc, ff1, fap = acc("float"), f1("float"), ap("float")
    for b in bit_list:
        rows.append([SCHEMA_VERSION, b, model, n_estimators, max_depth, folds, repeats, seed,
                     repr(acc(b)), repr(f1(b)), repr(ap(b)),
                     repr(facc), repr(ff1), repr(fap)])
    write_csv(out, header, rows)
    click.echo(f"wrote {out} ({len(rows)} sweep points)")


@main.command(name="sweep-perror")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--label", required=True)
@click.option("--p-error", "p_errors", default="1e-40,0.001,0.01,0.05,0.1,0.2",
              show_default=True, help="Comma list of TLU failure probabilities.")
@click.option("--bits", type=int, default=6, show_default=True)
@train_opts
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--repeats", type=int, default=1, show_default=True)
@click.option("--noise-seeds", type=int, default=20, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@guard
def sweep_perror(dataset, label, p_errors, bits, model, n_estimators, max_depth,
                 seed, folds, repeats, noise_seeds, workers, out):
    """Accuracy under TLU noise versus the configured failure probability."""
    pe_list = _csv_list(p_errors, float)
    _, X, raw = read_table(dataset, label)
    y = parse_labels(raw, "classification")
    cfg = _cfg(model, n_estimators, max_depth, seed)
    splits = list(metrics.cv_splits(y, folds, repeats, seed))

    def run_split(args):
        si, (_, _, tr, te) = args
        bundle, Xq_test = _fit_point(X, y, te, tr, bits, cfg)
        pbs = analyze_bundle(bundle).pbs_count
        base_pred, _, _ = _predict_bundle(bundle, Xq_test)
        base_acc = metrics.accuracy(y[te], base_pred)
        point = {}
        for pi, pe in enumerate(pe_list):
            accs, fail_counts = [], 0
            for s in range(noise_seeds):
                ns = int(np.random.SeedSequence(entropy=(seed, si, pi, s)).generate_state(1)[0])
                noise = engine.NoiseModel(p_error=pe, seed=ns)
                pred, _, fails = _predict_bundle(bundle, Xq_test, noise)
                accs.append(metrics.accuracy(y[te], pred))
                fail_counts += int(fails.sum())
            draws = pbs * Xq_test.shape[0] * noise_seeds
            point[pe] = (float(np.mean(accs)),
                         fail_counts / (Xq_test.shape[0] * noise_seeds),
                         fail_counts / draws if draws else 0.0,
                         base_acc)
        return point

    tasks = list(enumerate(splits))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_split = list(pool.map(run_split, tasks))
    else:
        per_split = [run_split(t) for t in tasks]

    header = ["schema_version", "p_error", "bits", "model", "accuracy",
              "mean_tlu_failures", "observed_failure_rate", "noiseless_accuracy"]
    rows = []
    for pe in pe_list:
        acc = float(np.mean([p[pe][0] for p in per_split]))
        mean_fail = float(np.mean([p[pe][1] for p in per_split]))
        rate = float(np.mean([p[pe][2] for p in per_split]))
        base = float(np.mean([p[pe][3] for p in per_split]))
        rows.append([SCHEMA_VERSION, repr(pe), bits, model,
                     repr(acc), repr(mean_fail), repr(rate), repr(base)])
    write_csv(out, header, rows)
    click.echo(f"wrote {out} ({len(rows)} sweep points)")


if __name__ == "__main__":
    main()
