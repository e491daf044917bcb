"""
Command-line entry point.

Every subcommand accepts the global ``--seed``, ``--config`` and ``--out-dir``
flags (before or after the subcommand name). Failures exit with status 1 (bad
input or a pipeline error) or 2 (usage) and print a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .autoencoder import Seq2SeqEncoder
from .cnn import StateCNNClassifier
from .config import PipelineConfig, load_config
from .cycles import CycleStandardizer, stack_cycles
from .dataset import ModelBundle, build_dataset, dumps, read_cycles, write_cycles
from .exceptions import GaitSeqError, PipelineFailure
from .protocol import EvalReport, make_cnn, make_encoder, make_svm, report, run_protocol
from .signal import NORMAL
from .svm import SMOClassifier
from .synth import SynthConfig, generate_synthetic

logger = logging.getLogger("gaitseq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(parser, defaults=True):
    d = None if defaults else argparse.SUPPRESS
    parser.add_argument("--seed", type=int, default=d, help="global random seed")
    parser.add_argument("--config", default=d, help="JSON config overriding defaults")
    parser.add_argument("--out-dir", default=d, help="directory for outputs (default: .)")
    parser.add_argument("-v", "--verbose", action="count", default=0 if defaults else argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaitseq", description="Gait anomaly detection pipeline")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, defaults=False)
        return p

    p = add("synth", "generate synthetic walks")
    p.add_argument("--walks", type=int, default=None, help="number of walks (config synth.n_walks)")
    p.add_argument("--video", choices=("angles", "correspondences"), default=None)

    p = add("build-dataset", "turn walk manifests into cycles")
    p.add_argument("--manifests", nargs="+", required=True, help="manifest files or directories")
    p.add_argument("--out", default=None, help="cycles JSONL (default OUT_DIR/cycles.jsonl)")

    p = add("train-encoder", "train the sequence autoencoder on normal cycles")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = add("train-classifier", "train the CNN on encoder states")
    p.add_argument("--encoder", required=True, help="bundle holding a trained encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = add("train-svm", "train the RBF SVM baseline on flattened cycles")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None, help="existing bundle whose normalization is reused and extended")
    p.add_argument("--out", default=None)

    p = add("evaluate", "confusion matrices of a bundle's classifiers on a cycles file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="report JSON (default OUT_DIR/report.json)")

    p = add("run-all", "synthesize, build, split, train and evaluate")
    p.add_argument("--walks", type=int, default=None)
    return parser


def _out(args, name) -> Path:
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _target(args, default_name) -> Path:
    if getattr(args, "out", None):
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    return _out(args, default_name)


def _load_xy(path):
    X, y = stack_cycles(read_cycles(path))
    return X, y


def _synth(args, config: PipelineConfig, out_dir: Path):
    s = config.synth
    n = args.walks if getattr(args, "walks", None) is not None else s.n_walks
    video = getattr(args, "video", None) or s.video
    sc = SynthConfig(n_steps=s.n_steps, normal_fraction=s.normal_fraction)
    return generate_synthetic(out_dir, n, s.anomaly_kinds, config.seed, sc, video)


def cmd_synth(args, config):
    paths = _synth(args, config, _out(args, "walks"))
    return {"walks": len(paths), "dir": str(paths[0].parent)}


def cmd_build_dataset(args, config):
    res = build_dataset(args.manifests, config)
    path = _target(args, "cycles.jsonl")
    write_cycles(path, res.cycles)
    stats_path = path.with_name(path.stem + "_stats.json")
    stats_path.write_text(dumps(res.stats.to_dict()))
    return {"cycles": len(res.cycles), "skipped": len(res.skipped), "out": str(path), "stats": str(stats_path)}


def cmd_train_encoder(args, config):
    X, y = _load_xy(args.data)
    X = X[y == NORMAL]
    if X.shape[0] == 0:
        raise PipelineFailure("no normal cycles to train the encoder on")
    scaler = CycleStandardizer().fit(X)
    enc = make_encoder(config).fit(scaler.transform(X))
    bundle = ModelBundle(config.to_dict(), scaler.stats_, encoder=enc.to_dict())
    path = _target(args, "encoder.json")
    bundle.save(path)
    return {"out": str(path), "cycles": int(X.shape[0]), "final_loss": enc.loss_history_[-1]}


def cmd_train_classifier(args, config):
    bundle = ModelBundle.load(args.encoder)
    if bundle.encoder is None or bundle.norm_stats is None:
        raise PipelineFailure(f"{args.encoder} holds no trained encoder")
    X, y = _load_xy(args.data)
    enc = Seq2SeqEncoder.from_dict(bundle.encoder)
    states = enc.transform(CycleStandardizer.from_stats(bundle.norm_stats).transform(X))
    cnn = make_cnn(config).fit(states, y)
    bundle.cnn = cnn.to_dict()
    path = _target(args, "model.json")
    bundle.save(path)
    return {"out": str(path), "cycles": int(X.shape[0])}


def cmd_train_svm(args, config):
    X, y = _load_xy(args.data)
    if args.model:
        bundle = ModelBundle.load(args.model)
    else:
        bundle = ModelBundle(config.to_dict())
    if bundle.norm_stats is None:
        bundle.norm_stats = CycleStandardizer().fit(X).stats_
    Z = CycleStandardizer.from_stats(bundle.norm_stats).transform(X)
    svm = make_svm(config).fit(Z.reshape(len(Z), -1), y)
    bundle.svm = svm.to_dict()
    path = _target(args, "model.json")
    bundle.save(path)
    lo, hi, s = svm.dual_feasibility()
    return {"out": str(path), "support_vectors": int(svm.support_.size), "alpha_min": lo,
            "alpha_max": hi, "dual_sum": s}


def evaluate_bundle(bundle: ModelBundle, X, y) -> dict:
    if bundle.norm_stats is None:
        raise PipelineFailure("bundle has no normalization statistics")
    Z = CycleStandardizer.from_stats(bundle.norm_stats).transform(X)
    reports = {}
    if bundle.encoder is not None and bundle.cnn is not None:
        states = Seq2SeqEncoder.from_dict(bundle.encoder).transform(Z)
        pred = StateCNNClassifier.from_dict(bundle.cnn).predict(states)
        reports["rnn_cnn"] = EvalReport.from_predictions("rnn_cnn", y, pred)
    if bundle.svm is not None:
        pred = SMOClassifier.from_dict(bundle.svm).predict(Z.reshape(len(Z), -1))
        reports["svm"] = EvalReport.from_predictions("svm", y, pred)
    if not reports:
        raise PipelineFailure("bundle holds no classifier")
    return reports


def cmd_evaluate(args, config):
    X, y = _load_xy(args.data)
    reports = evaluate_bundle(ModelBundle.load(args.model), X, y)
    path = _target(args, "report.json")
    path.write_text(dumps({"models": {k: v.to_dict() for k, v in reports.items()}}))
    for r in reports.values():
        print(report(r))
    return {"out": str(path), **{k: v.accuracy for k, v in reports.items()}}


def cmd_run_all(args, config):
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir or ".")
    manifests = _synth(args, config, out_dir / "walks")
    built = build_dataset(manifests, config)
    write_cycles(out_dir / "cycles.jsonl", built.cycles)
    (out_dir / "cycles_stats.json").write_text(dumps(built.stats.to_dict()))
    X, y = stack_cycles(built.cycles)
    result = run_protocol(X, y, config)
    result.bundle.save(out_dir / "bundle.json")
    (out_dir / "report.json").write_text(dumps(result.report_dict()))
    text = "\n\n".join(report(r) for r in result.reports.values())
    (out_dir / "report.txt").write_text(text + "\n")
    print(text)
    elapsed = time.perf_counter() - t0
    # wall-clock data lives apart from the reproducible outputs
    (out_dir / "timing.json").write_text(json.dumps({"seconds": elapsed}))
    return {"out_dir": str(out_dir), "seconds": round(elapsed, 1),
            **{k: v.accuracy for k, v in result.reports.items()}}


COMMANDS = {
    "synth": cmd_synth,
    "build-dataset": cmd_build_dataset,
    "train-encoder": cmd_train_encoder,
    "train-classifier": cmd_train_classifier,
    "train-svm": cmd_train_svm,
    "evaluate": cmd_evaluate,
    "run-all": cmd_run_all,
}


def _error(exc: BaseException, status: int) -> int:
    if isinstance(exc, GaitSeqError):
        payload = exc.to_dict()
    elif isinstance(exc, UsageError):
        payload = {"error": "usage", "type": "UsageError", "message": str(exc)}
    else:
        payload = {"error": "invalid_input", "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error(exc, 2)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.seed)
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args, config)
    except (GaitSeqError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        return _error(exc, 1)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
