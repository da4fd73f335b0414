"""Command-line entry point: ``edgeseg <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
4 numeric/domain error. Every output file is written to a temporary name
and renamed on success, so a failed command leaves no partial files.

Case directories hold ``flair.nii``, ``t1ce.nii``, ``t2.nii`` and
``seg.nii`` as written by ``phantom``; the other stages add
``<modality>_norm.nii``, ``edges.nii`` and ``onehot4.nii`` / ``onehot7.nii``
next to them. ``train`` and ``predict`` read those derived files.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .edges import extract_edges, oracle_boundary
from .errors import DomainError, FormatError, UsageError
from .metrics import evaluate_patient
from .nifti import atomic_write_bytes, read_nifti, write_nifti
from .normalize import zscore_normalize
from .phantom import MODALITIES, generate_cohort
from .report import aggregate, append_records_csv, read_records_csv, write_summary_csv
from .targets import argmax_labels, onehot_regions, onehot_regions_edges
from .toytrain import (
    FeatureVolume,
    TrainConfig,
    edges_from_prediction,
    export_activation_slice,
    export_edge_overlay,
    extract_features,
    feature_stats,
    load_model,
    predict,
    raw_features,
    save_model,
    standardize,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DOMAIN = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _need_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _need_dir(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"no such directory: {path}")
    return path


def _need_out(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory does not exist: {parent}")
    return path


def _labels(path):
    return read_nifti(_need_file(path), kind="labels")


def _norm_paths(case_dir):
    return [os.path.join(case_dir, f"{m}_norm.nii") for m in MODALITIES]


def _case_dirs(data_dir):
    dirs = sorted(
        os.path.join(data_dir, d) for d in os.listdir(data_dir)
        if os.path.isdir(os.path.join(data_dir, d))
    )
    if not dirs:
        raise UsageError(f"no case directories under {data_dir}")
    return dirs


def cmd_normalize(args):
    _need_file(args.inp)
    _need_out(args.out)
    write_nifti(zscore_normalize(read_nifti(args.inp, kind="volume")), args.out)


def cmd_edges(args):
    _need_file(args.labels)
    _need_out(args.out)
    labels = _labels(args.labels)
    write_nifti(oracle_boundary(labels) if args.oracle else extract_edges(labels), args.out)


def cmd_onehot(args):
    _need_file(args.labels)
    if args.edges:
        _need_file(args.edges)
    _need_out(args.out)
    labels = _labels(args.labels)
    if args.edges:
        stack = onehot_regions_edges(labels, _labels(args.edges))
    else:
        stack = onehot_regions(labels)
    write_nifti(stack, args.out)


def cmd_evaluate(args):
    _need_file(args.pred)
    _need_file(args.gt)
    _need_out(args.csv)
    records = evaluate_patient(_labels(args.pred), _labels(args.gt), args.subject)
    append_records_csv(records, args.csv)


def cmd_aggregate(args):
    _need_file(args.csv)
    _need_out(args.out)
    write_summary_csv(aggregate(read_records_csv(args.csv), args.stat), args.out)


def cmd_phantom(args):
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    if args.size < 16:
        raise UsageError("--size must be at least 16")
    if args.noise < 0:
        raise UsageError("--noise must be nonnegative")
    _need_out(os.path.normpath(args.out_dir))
    generate_cohort(args.count, args.seed, args.out_dir, size=args.size, noise_sigma=args.noise)


def cmd_train(args):
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    _need_dir(args.data_dir)
    _need_out(args.model_out)
    if args.trace_out:
        _need_out(args.trace_out)
    cases = _case_dirs(args.data_dir)
    target_name = f"onehot{args.classes}.nii"
    for d in cases:
        for p in _norm_paths(d) + [os.path.join(d, target_name)]:
            _need_file(p)

    raws, targets = [], []
    for d in cases:
        raws.append(raw_features([read_nifti(p, kind="volume") for p in _norm_paths(d)]))
        stack = read_nifti(os.path.join(d, target_name))
        if getattr(stack, "channels", None) != args.classes:
            raise FormatError(f"{d}/{target_name} is not a {args.classes}-channel one-hot stack")
        targets.append(stack)
    stats = feature_stats(raws)
    data = [(FeatureVolume(standardize(r, stats), stats), t) for r, t in zip(raws, targets)]
    model, trace = train(data, cfg)
    save_model(model, args.model_out)
    if args.trace_out:
        text = "".join(f"{v:.17g}\n" for v in trace)
        atomic_write_bytes(args.trace_out, text.encode("ascii"))


def cmd_predict(args):
    _need_file(args.model)
    _need_dir(args.case_dir)
    paths = [_need_file(p) for p in _norm_paths(args.case_dir)]
    _need_out(args.pred_out)
    if args.activations_dir:
        _need_dir(args.activations_dir)
    overlay = None
    if args.edge_overlay:
        z_text, overlay_path = args.edge_overlay
        try:
            overlay = (int(z_text), _need_out(overlay_path))
        except ValueError:
            raise UsageError(f"--edge-overlay slice must be an integer, got {z_text!r}") from None

    model = load_model(args.model)
    mods = [read_nifti(p, kind="volume") for p in paths]
    probs = predict(model, extract_features(mods, model.feature_stats))
    classes = argmax_labels(probs)
    labels, edges = edges_from_prediction(classes, model.n_classes, mods[0].spacing)
    if overlay is not None and not 0 <= overlay[0] < labels.dims[2]:
        raise UsageError(f"--edge-overlay slice {overlay[0]} outside 0..{labels.dims[2] - 1}")
    write_nifti(labels, args.pred_out)
    if args.activations_dir:
        z = labels.dims[2] // 2
        for c in range(model.n_classes):
            export_activation_slice(probs, c, z, os.path.join(args.activations_dir, f"activation_c{c}_z{z}.pgm"))
    if overlay is not None:
        export_edge_overlay(labels, edges, overlay[0], overlay[1])


def build_parser():
    p = _Parser(prog="edgeseg", description="Edge-aware tumour segmentation pipeline on phantom volumes.")
    p.add_argument("--version", action="version", version=f"edgeseg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("normalize", help="z-score a modality over its nonzero brain region")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("edges", help="extract ground-truth edges")
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--oracle", action="store_true", help="use the exact boundary oracle instead of the 26/-1 filter")
    s.set_defaults(func=cmd_edges)

    s = sub.add_parser("onehot", help="build a 4-channel (or, with --edges, 7-channel) one-hot stack")
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--edges")
    s.set_defaults(func=cmd_onehot)

    s = sub.add_parser("evaluate", help="append WT/TC/ET dice and HD95 rows for one subject")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("aggregate", help="mean or median summary of a per-subject CSV")
    s.add_argument("--csv", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stat", choices=("mean", "median"), default="mean")
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("phantom", help="generate a synthetic cohort")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("train", help="train the linear SoftMax voxel classifier")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--classes", type=int, choices=(4, 7), default=4)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--batch", type=int, default=4096)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model-out", required=True)
    s.add_argument("--trace-out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict labels (and optional images) for one case")
    s.add_argument("--model", required=True)
    s.add_argument("--case-dir", required=True)
    s.add_argument("--pred-out", required=True)
    s.add_argument("--activations-dir")
    s.add_argument("--edge-overlay", nargs=2, metavar=("Z", "PATH"))
    s.set_defaults(func=cmd_predict)
    return p


def run(argv=None):
    """Parse ``argv`` and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"edgeseg {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"edgeseg {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (FormatError, OSError) as exc:
        print(f"edgeseg {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
