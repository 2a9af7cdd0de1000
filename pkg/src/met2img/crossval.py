"""Stratified k-fold evaluation of (representation x architecture) cells.

Everything fitted from data (quantile bins, the t-SNE map) is fitted inside
the fold on training rows only. Test rows are read after the fold's network
has finished training.
"""

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from met2img import binning, embedding, fillup
from met2img.ingest import ABD, PRE, FeatureMatrix
from met2img.nn import ConvDim, TrainingConfig, build, train

log = logging.getLogger(__name__)


class CellError(ValueError):
    pass


class Representation(str, Enum):
    RAW_1D = "raw-1d"
    FILLUP_ABD = "fillup-abd"
    FILLUP_PRE = "fillup-pre"
    TSNE_ABD = "tsne-abd"
    TSNE_PRE = "tsne-pre"

    @property
    def kind(self):
        return PRE if self.value.endswith("-pre") else ABD

    @property
    def is_image(self):
        return self is not Representation.RAW_1D

    @property
    def is_tsne(self):
        return self.value.startswith("tsne")


@dataclass(frozen=True)
class RenderConfig:
    scheme: binning.BinningScheme = field(default_factory=binning.default_log_scheme)
    quantile: bool = False
    fillup_target: int = 32
    fillup_mode: str = fillup.PAD
    background: str = fillup.WHITE_BG
    tsne: embedding.TsneConfig = embedding.TsneConfig()
    tsne_target: int = 64
    point_size: int = 1

    def input_shape(self, rep, d):
        rep = Representation(rep)
        if rep is Representation.RAW_1D:
            return (1, d)
        t = self.tsne_target if rep.is_tsne else self.fillup_target
        return (3, t, t)


@dataclass
class FittedRepresentation:
    rep: Representation
    scheme: binning.BinningScheme
    gmap: embedding.GlobalMap | None
    config: RenderConfig

    def render(self, values):
        """Images for each row of ``values``: ``(n, 1, d)`` or ``(n, 3, T, T)``."""
        rep, cfg = self.rep, self.config
        if rep is Representation.RAW_1D:
            out = [fillup.render_raw_1d(v) for v in values]
        elif rep.is_tsne:
            out = []
            for v in values:
                img = embedding.render_tsne(v, self.gmap, self.scheme, rep.kind, cfg.tsne_target, cfg.point_size)
                out.append(1.0 - img if cfg.background == fillup.ZERO_BG else img)
        else:
            out = [fillup.render_fillup(v, self.scheme, rep.kind, cfg.fillup_target, cfg.fillup_mode, cfg.background)
                   for v in values]
        return np.asarray(out, dtype=np.float32)


def fit_representation(rep, train_values, taxa, config, tsne_seed=None):
    """Fit the data-dependent parts of a representation on training rows only."""
    rep = Representation(rep)
    scheme = config.scheme
    if config.quantile and rep.kind == ABD:
        scheme = binning.quantile_scheme(train_values, scheme.k, scheme.scale)
    gmap = None
    if rep.is_tsne:
        tcfg = config.tsne if tsne_seed is None else replace(config.tsne, seed=tsne_seed)
        fm = FeatureMatrix(ABD, None, np.asarray(train_values, dtype=np.float64), tuple(taxa))
        gmap = embedding.build_global_map(fm, tcfg, config.tsne_target)
    return FittedRepresentation(rep, scheme, gmap, config)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def splits(self):
        for f in range(self.k):
            yield np.flatnonzero(self.assignments != f), np.flatnonzero(self.assignments == f)


def make_folds(labels, k=10, seed=0):
    """Seeded shuffle within each class, then round-robin over folds.

    The second class continues the round-robin where the first stopped so
    fold sizes stay within one of each other.
    """
    y = np.asarray(labels).astype(np.int64)
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(y), dtype=np.int64)
    start = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise CellError(f"class {cls} has {len(idx)} samples, fewer than {k} folds")
        idx = rng.permutation(idx)
        assignments[idx] = (start + np.arange(len(idx))) % k
        start = (start + len(idx)) % k
    return FoldPlan(k, assignments, seed)


def accuracy(predictions, labels):
    p = np.asarray(predictions).ravel()
    y = np.asarray(labels).ravel()
    if len(y) == 0:
        raise ValueError("accuracy of an empty prediction set")
    if len(p) != len(y):
        raise ValueError("predictions and labels differ in length")
    return float(np.mean(p == y))


@dataclass(frozen=True)
class CvReport:
    dataset: str
    representation: str
    arch: str
    fold_acc: tuple
    mean_acc: float
    std_acc: float
    seed: int

    @classmethod
    def from_folds(cls, dataset, representation, arch, fold_acc, seed):
        acc = tuple(float(a) for a in fold_acc)
        return cls(dataset, Representation(representation).value, arch, acc,
                   float(np.mean(acc)), float(np.std(acc)), int(seed))

    @property
    def key(self):
        return (self.dataset, self.representation, self.arch, self.seed)

    def to_row(self):
        return [self.dataset, self.representation, self.arch, *map(repr, self.fold_acc),
                repr(self.mean_acc), repr(self.std_acc), str(self.seed)]

    @classmethod
    def from_row(cls, row):
        dataset, rep, arch, *rest = row
        *folds, mean, std, seed = rest
        return cls(dataset, rep, arch, tuple(float(f) for f in folds), float(mean), float(std), int(seed))

    def to_dict(self):
        return {"dataset": self.dataset, "representation": self.representation, "arch": self.arch,
                "fold_acc": list(self.fold_acc), "mean": self.mean_acc, "std": self.std_acc, "seed": self.seed}


def check_compatible(rep, spec):
    rep = Representation(rep)
    if spec.conv_dim is ConvDim.NONE:
        return
    if rep is Representation.RAW_1D and spec.conv_dim is not ConvDim.CONV1D:
        raise CellError(f"{rep.value} needs a conv1d or fc network, got {spec.arch}")
    if rep.is_image and spec.conv_dim is not ConvDim.CONV2D:
        raise CellError(f"{rep.value} needs a conv2d or fc network, got {spec.arch}")


def fold_seed(seed, fold):
    return int(np.random.SeedSequence([int(seed), int(fold)]).generate_state(1)[0])


def run_fold(table, rep, spec, tconfig, rconfig, train_idx, test_idx, seed):
    """Fit, render, train and score one fold; returns test accuracy."""
    train_values = table.values[train_idx]
    train_labels = table.labels[train_idx]
    fitted = fit_representation(rep, train_values, table.taxa, rconfig, tsne_seed=seed)
    X_train = fitted.render(train_values)
    net = build(spec.with_input(X_train.shape[1:]), seed=seed)
    train(net, X_train, train_labels, replace(tconfig, seed=seed))
    test_values = table.values[test_idx]
    return accuracy(net.predict(fitted.render(test_values)), table.labels[test_idx])


def _run_fold_task(args):
    return run_fold(*args)


def run_cell(table, representation, spec, tconfig=TrainingConfig(), rconfig=RenderConfig(),
             plans=None, seed=0, k=10, dataset="dataset", jobs=1):
    """Cross-validate one (representation, architecture) cell.

    ``plans`` is a list of FoldPlans (one per repeat); by default a single
    stratified plan is drawn from ``seed``. Fold accuracies of all repeats
    are concatenated in the report.
    """
    rep = Representation(representation)
    check_compatible(rep, spec)
    if plans is None:
        plans = [make_folds(table.labels, k, seed)]
    tasks = []
    for r, plan in enumerate(plans):
        for f, (train_idx, test_idx) in enumerate(plan.splits()):
            tasks.append((table, rep, spec, tconfig, rconfig, train_idx, test_idx,
                          fold_seed(plan.seed, f)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accs = list(pool.map(_run_fold_task, tasks))
    else:
        accs = []
        for i, task in enumerate(tasks):
            try:
                accs.append(run_fold(*task))
            except Exception as exc:
                raise CellError(f"{rep.value} {spec.arch}: fold {i} failed: {exc}") from exc
            log.info("%s %s fold %d: acc %.3f", rep.value, spec.arch, i, accs[-1])
    return CvReport.from_folds(dataset, rep, spec.arch, accs, plans[0].seed)


def run_table(table, cells, tconfig=TrainingConfig(), rconfig=RenderConfig(), seed=0, k=10,
              repeats=1, dataset="dataset", jobs=1, skip=(), on_report=None):
    """Run every ``(representation, spec)`` cell on one shared set of folds.

    Cells whose report key is in ``skip`` are not rerun (checkpoint resume);
    ``on_report`` is called after each completed cell.
    """
    cells = list(cells)
    if not cells:
        raise CellError("no cells to run")
    plans = [make_folds(table.labels, k, seed + r) for r in range(repeats)]
    reports = []
    for rep, spec in cells:
        key = (dataset, Representation(rep).value, spec.arch, int(seed))
        if key in skip:
            continue
        report = run_cell(table, rep, spec, tconfig, rconfig, plans=plans, dataset=dataset, jobs=jobs)
        reports.append(report)
        if on_report is not None:
            on_report(report)
    return reports


def results_header(n_folds=10):
    return ["dataset", "representation", "arch", *(f"fold{i}" for i in range(n_folds)), "mean", "std", "seed"]


def write_results_csv(reports, path):
    n = len(reports[0].fold_acc) if reports else 10
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(results_header(n))
        for r in reports:
            w.writerow(r.to_row())


def append_result_csv(report, path):
    """Append one row, writing the header first if the file is new or empty."""
    try:
        with open(path, encoding="utf-8") as fh:
            fresh = not fh.read(1)
    except FileNotFoundError:
        fresh = True
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(results_header(len(report.fold_acc)))
        w.writerow(report.to_row())


def read_results_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [CvReport.from_row(r) for r in rows[1:] if r]


def write_results_json(reports, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
        fh.write("\n")
