"""
Train/test protocol, end-to-end training and confusion-matrix reports.

Normal cycles are divided between the autoencoder (which never sees anomalous
data) and a classifier pool that also holds every anomalous cycle. The CNN on
encoder states and the SVM on raw cycles share the classifier train/test split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .autoencoder import Seq2SeqEncoder
from .cnn import StateCNNClassifier
from .config import PipelineConfig, SplitSection
from .cycles import CycleStandardizer
from .dataset import ModelBundle
from .exceptions import DegenerateDataset
from .signal import ANOMALOUS, NORMAL
from .svm import SMOClassifier

logger = logging.getLogger(__name__)


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class SplitSpec:
    encoder_fraction: float = 4966 / 7941
    encoder_test_fraction: float = 0.1
    classifier_test_fraction: float = 0.1
    max_class_ratio: float = 1.1
    seed: int = 0

    def __post_init__(self):
        for name in ("encoder_fraction", "encoder_test_fraction", "classifier_test_fraction"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_class_ratio < 1:
            raise ValueError("max_class_ratio must be >= 1")

    @classmethod
    def from_section(cls, section: SplitSection, seed: int) -> "SplitSpec":
        return cls(section.encoder_fraction, section.encoder_test_fraction,
                   section.classifier_test_fraction, section.max_class_ratio, seed)


@dataclass(frozen=True)
class Split:
    """Index arrays into the cycle list; every array is sorted."""

    encoder_train: np.ndarray
    encoder_test: np.ndarray
    classifier_train: np.ndarray
    classifier_test: np.ndarray
    dropped: np.ndarray

    def counts(self) -> dict:
        return {k: int(getattr(self, k).size) for k in
                ("encoder_train", "encoder_test", "classifier_train", "classifier_test", "dropped")}


def split(labels, spec: SplitSpec) -> Split:
    """Partition cycle indices according to ``spec``.

    Normal and anomalous indices are each shuffled once with the seed. The
    first ``round(encoder_fraction * n_normal)`` normals go to the encoder and
    are cut 90/10; the remaining normals join all anomalous cycles in the
    classifier pool. If one class outnumbers the other by more than
    ``max_class_ratio``, the majority is down-sampled to parity. The pool is
    then shuffled and cut into train and test.

    Raises
    ------
    DegenerateDataset
        Any partition would be empty or the pool lacks a class.
    """
    y = np.asarray(labels).astype(int)
    rng = np.random.default_rng(spec.seed)
    normal = rng.permutation(np.flatnonzero(y == NORMAL))
    anomalous = rng.permutation(np.flatnonzero(y == ANOMALOUS))

    n_enc = round_half_up(spec.encoder_fraction * normal.size)
    enc = normal[:n_enc]
    rest = normal[n_enc:]
    n_enc_test = round_half_up(spec.encoder_test_fraction * enc.size)
    enc_test, enc_train = enc[:n_enc_test], enc[n_enc_test:]

    dropped = np.empty(0, dtype=int)
    big, small = (rest, anomalous) if rest.size >= anomalous.size else (anomalous, rest)
    if small.size and big.size > spec.max_class_ratio * small.size:
        dropped = big[small.size:]
        big = big[:small.size]
    pool = rng.permutation(np.concatenate([big, small]))
    n_test = round_half_up(spec.classifier_test_fraction * pool.size)
    clf_test, clf_train = pool[:n_test], pool[n_test:]

    out = Split(*(np.sort(a).astype(int) for a in (enc_train, enc_test, clf_train, clf_test, dropped)))
    for name, size in out.counts().items():
        if size == 0 and name != "dropped":
            raise DegenerateDataset(f"{name} split is empty ({y.size} cycles)")
    for name in ("classifier_train", "classifier_test"):
        if np.unique(y[getattr(out, name)]).size < 2:
            raise DegenerateDataset(f"{name} split lacks one class")
    return out


@dataclass
class EvalReport:
    """Confusion matrix with rows = true class and columns = predicted class."""

    model: str
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int).reshape(2, 2)

    @classmethod
    def from_predictions(cls, model: str, y_true, y_pred) -> "EvalReport":
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        counts = np.zeros((2, 2), dtype=int)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(model, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def percentages(self) -> np.ndarray:
        return 100.0 * self.counts / max(self.total, 1)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / max(self.total, 1)

    def precision(self, cls_: int) -> float:
        col = self.counts[:, cls_].sum()
        return float(self.counts[cls_, cls_] / col) if col else 0.0

    def recall(self, cls_: int) -> float:
        row = self.counts[cls_].sum()
        return float(self.counts[cls_, cls_] / row) if row else 0.0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n_test": self.total,
            "confusion_counts": self.counts.tolist(),
            "confusion_percent": [[round(float(v), 4) for v in row] for row in self.percentages],
            "accuracy": round(self.accuracy, 10),
            "precision": {"normal": round(self.precision(NORMAL), 10), "anomalous": round(self.precision(ANOMALOUS), 10)},
            "recall": {"normal": round(self.recall(NORMAL), 10), "anomalous": round(self.recall(ANOMALOUS), 10)},
        }


def report(ev: EvalReport) -> str:
    """Plain-text confusion matrix with counts and percentages of the test set."""
    pct = ev.percentages
    lines = [
        f"{ev.model}: {ev.total} test cycles, accuracy {100 * ev.accuracy:.3f}%",
        f"{'':>20}{'predicted normal':>22}{'predicted anomalous':>24}",
    ]
    for r, name in ((NORMAL, "normal"), (ANOMALOUS, "anomalous")):
        cells = [f"{ev.counts[r, c]:d} ({pct[r, c]:.2f}%)" for c in (NORMAL, ANOMALOUS)]
        lines.append(f"{'actual ' + name:>20}{cells[0]:>22}{cells[1]:>24}")
    return "\n".join(lines)


@dataclass
class ProtocolResult:
    bundle: ModelBundle
    reports: Dict[str, EvalReport]
    split: Split

    def report_dict(self) -> dict:
        return {
            "split": self.split.counts(),
            "models": {k: v.to_dict() for k, v in self.reports.items()},
            "encoder_test_loss": self.bundle.meta.get("encoder_test_loss"),
        }


def make_encoder(config: PipelineConfig) -> Seq2SeqEncoder:
    e = config.encoder
    return Seq2SeqEncoder(e.hidden_size, e.n_layers, e.bidirectional, e.keep_prob, e.learning_rate,
                          e.decay_steps, e.decay_rate, e.epochs, e.batch_size, e.clip_norm,
                          e.init_scale, random_state=config.seed)


def make_cnn(config: PipelineConfig) -> StateCNNClassifier:
    c = config.cnn
    return StateCNNClassifier(tuple(c.dims), tuple(c.kernel), c.filters, c.learning_rate,
                              c.decay_steps, c.decay_rate, c.epochs, c.batch_size,
                              random_state=config.seed)


def make_svm(config: PipelineConfig) -> SMOClassifier:
    s = config.svm
    return SMOClassifier(s.C, s.gamma, s.tol, s.max_iter)


def run_protocol(X, y, config: PipelineConfig | None = None) -> ProtocolResult:
    """Split, train the encoder, the state CNN and the SVM, and evaluate both classifiers.

    ``X`` holds detrended, length-normalized cycles (n, 9, 200); channel
    statistics are fitted on the encoder training cycles only.
    """
    config = config or PipelineConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    sp = split(y, SplitSpec.from_section(config.split, config.seed))
    logger.info("split %s", sp.counts())

    scaler = CycleStandardizer().fit(X[sp.encoder_train])
    Z = scaler.transform(X)

    encoder = make_encoder(config).fit(Z[sp.encoder_train], y[sp.encoder_train])
    enc_test_loss = float(np.mean(encoder.score_samples(Z[sp.encoder_test])))
    logger.info("encoder test reconstruction loss %.4f", enc_test_loss)

    pool = np.concatenate([sp.classifier_train, sp.classifier_test])
    states = dict(zip(pool.tolist(), encoder.transform(Z[pool])))
    S_train = np.stack([states[i] for i in sp.classifier_train])
    S_test = np.stack([states[i] for i in sp.classifier_test])
    y_train, y_test = y[sp.classifier_train], y[sp.classifier_test]

    cnn = make_cnn(config).fit(S_train, y_train)
    svm = make_svm(config).fit(Z[sp.classifier_train].reshape(len(sp.classifier_train), -1), y_train)

    reports = {
        "rnn_cnn": EvalReport.from_predictions("rnn_cnn", y_test, cnn.predict(S_test)),
        "svm": EvalReport.from_predictions(
            "svm", y_test, svm.predict(Z[sp.classifier_test].reshape(len(sp.classifier_test), -1))),
    }
    bundle = ModelBundle(
        config=config.to_dict(),
        norm_stats=scaler.stats_,
        encoder=encoder.to_dict(),
        cnn=cnn.to_dict(),
        svm=svm.to_dict(),
        meta={"split": sp.counts(), "encoder_test_loss": enc_test_loss,
              "svm_dual": list(svm.dual_feasibility()), "svm_kkt_violation": svm.kkt_violation_},
    )
    return ProtocolResult(bundle, reports, sp)
