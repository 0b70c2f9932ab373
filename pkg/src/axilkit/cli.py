"""Command-line interface.

Exit codes: 0 success, 1 invariant violation, 2 bad input or arguments,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis
from .axil import (axil_fit, axil_transform, load_state,
                   oracle_weights, read_weights_csv, reconstruct, save_state,
                   write_weights_csv)
from .bench import loglog_slope, run_bench
from .io import DataError, ExplainTable, load_csv
from .trainer import (Dataset, GbmModel, TrainConfig, leaf_assignments,
                      dumps_model, load_model, loads_model, save_model,
                      train_gbm)

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class InvariantViolation(Exception):
    """A verification check failed."""


def sample_data_path() -> Path:
    """Location of the bundled 29-row synthetic countries CSV."""
    return Path(str(resources.files("axilkit") / "data" / "countries.csv"))


def _header(path):
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None


def _load_for_model(path, meta, require_target):
    """Load a CSV using the column roles recorded with the model."""
    header = _header(path)
    target = meta.get("target")
    if target not in header:
        if require_target:
            raise DataError(f"{path}: column {target!r} not found")
        target = None
    label = meta.get("label_column")
    if label not in header:
        label = None
    return load_csv(path, target, label, feature_columns=meta.get("feature_names"))


# -- commands ----------------------------------------------------------------

def cmd_train(data, target, out, trees=100, leaves=31, learning_rate=0.1,
              min_leaf=1, label_column=None):
    ds = load_csv(data, target, label_column)
    cfg = TrainConfig(num_trees=trees, learning_rate=learning_rate,
                      max_leaves=leaves, min_leaf_size=min_leaf)
    model = train_gbm(ds, cfg)
    model.metadata = {"target": target, "label_column": label_column,
                      "feature_names": list(ds.feature_names)}
    save_model(model, out)
    return model


def cmd_axil_fit(model_path, data, out):
    model = load_model(model_path)
    if not isinstance(model, GbmModel):
        raise DataError("axil-fit needs a gradient boosting model")
    ds = _load_for_model(data, model.metadata, require_target=True)
    state = axil_fit(leaf_assignments(model, ds.features), model.learning_rate)
    save_state(state, out, model=dumps_model(model),
               y_train=np.asarray(ds.target),
               train_labels=ds.instance_labels())
    return state


def _open_state(path):
    state, extra = load_state(path)
    model = loads_model(extra["model"])
    return state, model, extra


def _transform(state, model, extra, ds):
    return axil_transform(state, leaf_assignments(model, ds.features),
                          train_labels=list(extra["train_labels"]),
                          new_labels=ds.instance_labels())


def cmd_axil_transform(state_path, data, out):
    state, model, extra = _open_state(state_path)
    ds = _load_for_model(data, model.metadata, require_target=False)
    K = _transform(state, model, extra, ds)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        write_weights_csv(K, fh)
    return K


def _pick_instance(ds: Dataset, instance):
    labels = ds.instance_labels()
    if ds.labels is not None and str(instance) in labels:
        return labels.index(str(instance))
    try:
        idx = int(instance)
    except (TypeError, ValueError):
        raise DataError(f"no instance labelled {instance!r}") from None
    if not 0 <= idx < ds.n_instances:
        raise DataError(f"instance index {idx} out of range")
    return idx


def cmd_explain(state_path, data, instance, out=None, fmt="text"):
    state, model, extra = _open_state(state_path)
    ds = _load_for_model(data, model.metadata, require_target=False)
    idx = _pick_instance(ds, instance)
    # transform the whole file so the column matches axil-transform output bit-for-bit
    K = _transform(state, model, extra, ds)
    table = ExplainTable.build(K, extra["y_train"], idx)
    if fmt == "csv":
        buf = io.StringIO()
        table.to_csv(buf)
        text = buf.getvalue()
    else:
        text = table.render()
    _emit(text, out)
    return table


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _read_weights(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return read_weights_csv(fh)


def cmd_cluster(weights, linkage="average", k=2, labels_out=None, newick_out=None):
    K = _read_weights(weights)
    S = analysis.symmetrize(K)
    tree, flat = analysis.hac_cluster(analysis.to_dissimilarity(S), linkage, k,
                                      labels=S.labels)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "cluster"])
    writer.writerows(zip(S.labels, flat.tolist()))
    newick = tree.to_newick() + "\n"
    if labels_out is None and newick_out is None:
        sys.stdout.write(buf.getvalue() + newick)
    else:
        if labels_out is not None:
            Path(labels_out).write_text(buf.getvalue(), encoding="utf-8")
        if newick_out is not None:
            Path(newick_out).write_text(newick, encoding="utf-8")
    return tree, flat


def cmd_graph(weights, cutoff, fmt="dot", out=None):
    K = _read_weights(weights)
    g = analysis.to_graph(analysis.symmetrize(K), cutoff)
    text = g.to_dot() if fmt == "dot" else g.to_graphml()
    _emit(text, out)
    return g


def cmd_verify(model_path, data, tolerance=1e-8, new_data=None):
    """Check reconstruction, column sums and oracle agreement.

    Returns a report dict; raises :class:`InvariantViolation` on any breach.
    """
    model = load_model(model_path)
    if not isinstance(model, GbmModel):
        raise DataError("verify needs a gradient boosting model")
    ds = _load_for_model(data, model.metadata, require_target=True)
    state = axil_fit(leaf_assignments(model, ds.features), model.learning_rate)
    scored = {"train": ds.features}
    if new_data is not None:
        scored["new"] = _load_for_model(new_data, model.metadata,
                                        require_target=False).features
    report, failures = {}, []
    for name, Z in scored.items():
        K = axil_transform(state, leaf_assignments(model, Z)).weights
        pred = model.predict(Z)
        recon = np.max(np.abs(reconstruct(K, ds.target) - pred))
        colsum = np.max(np.abs(K.sum(axis=0) - 1.0))
        oracle_error = None
        try:
            oracle = np.max(np.abs(K - oracle_weights(model, ds, Z).weights))
        except ValueError as err:
            oracle, oracle_error = np.inf, str(err)
        bound = tolerance * (1 + np.max(np.abs(pred)))
        checks = {"reconstruction": (recon, bound), "column_sums": (colsum, 1e-10),
                  "oracle": (oracle, 1e-10)}
        report[name] = {k: {"max_abs_diff": float(v), "tolerance": float(t),
                            "ok": bool(v <= t)} for k, (v, t) in checks.items()}
        if oracle_error is not None:
            report[name]["oracle"]["error"] = oracle_error
            del checks["oracle"]
            failures.append(f"{name}/oracle: {oracle_error}")
        failures += [f"{name}/{k}: {v:.3e} > {t:.3e}"
                     for k, (v, t) in checks.items() if not v <= t]
    if failures:
        raise InvariantViolation("; ".join(failures))
    return report


def cmd_bench(sizes=(50, 100, 200, 400), trees=10, out=None):
    rows = run_bench(sizes, num_trees=trees)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _emit(buf.getvalue(), out)
    if len(rows) >= 2:
        print(f"fit time log-log slope: {loglog_slope(rows):.3f}", file=sys.stderr)
    return rows


# -- argument parsing --------------------------------------------------------

def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return sizes


def build_parser():
    p = argparse.ArgumentParser(prog="axil", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a gradient boosting model")
    t.add_argument("--data", required=True)
    t.add_argument("--target", required=True)
    t.add_argument("--label-column")
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--leaves", type=int, default=31)
    t.add_argument("--learning-rate", type=float, default=0.1)
    t.add_argument("--min-leaf", type=int, default=1)
    t.add_argument("--out", required=True)

    f = sub.add_parser("axil-fit", help="build prediction-weight matrices")
    f.add_argument("--model", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)

    tf = sub.add_parser("axil-transform", help="write the AXIL weight matrix as CSV")
    tf.add_argument("--state", required=True)
    tf.add_argument("--data", required=True)
    tf.add_argument("--out", required=True)

    e = sub.add_parser("explain", help="weights table for one instance")
    e.add_argument("--state", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--instance", required=True, help="label or row index")
    e.add_argument("--format", choices=("text", "csv"), default="text")
    e.add_argument("--out")

    c = sub.add_parser("cluster", help="hierarchical clustering of in-sample weights")
    c.add_argument("--weights", required=True)
    c.add_argument("--linkage", choices=analysis.LINKAGES, default="average")
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--labels-out")
    c.add_argument("--newick-out")

    g = sub.add_parser("graph", help="thresholded instance graph")
    g.add_argument("--weights", required=True)
    g.add_argument("--cutoff", type=float, required=True)
    g.add_argument("--format", choices=("dot", "graphml"), default="dot")
    g.add_argument("--out")

    v = sub.add_parser("verify", help="check the weights against the model")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--new-data")
    v.add_argument("--tolerance", type=float, default=1e-8)

    b = sub.add_parser("bench", help="fit time and memory versus N")
    b.add_argument("--sizes", type=_sizes, default=[50, 100, 200, 400])
    b.add_argument("--trees", type=int, default=10)
    b.add_argument("--out")

    s = sub.add_parser("sample-data", help="copy the bundled countries CSV")
    s.add_argument("--out")
    return p


def _dispatch(args):
    if args.command == "train":
        cmd_train(args.data, args.target, args.out, args.trees, args.leaves,
                  args.learning_rate, args.min_leaf, args.label_column)
    elif args.command == "axil-fit":
        cmd_axil_fit(args.model, args.data, args.out)
    elif args.command == "axil-transform":
        cmd_axil_transform(args.state, args.data, args.out)
    elif args.command == "explain":
        cmd_explain(args.state, args.data, args.instance, args.out, args.format)
    elif args.command == "cluster":
        cmd_cluster(args.weights, args.linkage, args.k, args.labels_out,
                    args.newick_out)
    elif args.command == "graph":
        cmd_graph(args.weights, args.cutoff, args.format, args.out)
    elif args.command == "verify":
        report = cmd_verify(args.model, args.data, args.tolerance, args.new_data)
        print(json.dumps(report, indent=2))
    elif args.command == "bench":
        cmd_bench(args.sizes, args.trees, args.out)
    elif args.command == "sample-data":
        _emit(sample_data_path().read_text(encoding="utf-8"), args.out)


def _thread_limit():
    value = os.environ.get("AXIL_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            _dispatch(args)
    except InvariantViolation as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, ValueError, KeyError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
