"""Abundance/label parsing, phylogenetic ordering and presence features.

The abundance file is the merged MetaPhlAn2 layout: tab-separated, header
``taxonomy<TAB>sample1<TAB>...``, one taxon per row. Labels live in a
separate headerless two-column file ``sample-id<TAB>{0|1}``.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 0.02
ABD = "ABD"
PRE = "PRE"
PLG = "PLG"


class ParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AbundanceTable:
    """N samples x d taxa of relative abundances with binary labels."""

    samples: tuple
    taxa: tuple
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "taxa", tuple(self.taxa))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        if values.shape != (len(self.samples), len(self.taxa)):
            raise ValueError(f"values shape {values.shape} does not match "
                             f"{len(self.samples)} samples x {len(self.taxa)} taxa")
        if labels.shape != (len(self.samples),):
            raise ValueError("one label per sample required")
        if len(set(self.taxa)) != len(self.taxa):
            raise ValueError("taxa must be unique")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise ValueError("abundances must lie in [0, 1]")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")

    @property
    def n_samples(self):
        return len(self.samples)

    @property
    def n_taxa(self):
        return len(self.taxa)

    def subset(self, rows):
        rows = np.asarray(rows)
        return AbundanceTable(tuple(self.samples[i] for i in rows), self.taxa,
                              self.values[rows], self.labels[rows])

    def __eq__(self, other):
        if not isinstance(other, AbundanceTable):
            return NotImplemented
        return (self.samples == other.samples and self.taxa == other.taxa
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    kind: str
    order: str | None
    values: np.ndarray
    taxa: tuple

    def __post_init__(self):
        if self.kind not in (ABD, PRE):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == PRE and not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("presence features must be 0/1")
        if self.order == PLG and not is_sorted(self.taxa):
            raise ValueError("PLG order requires lexicographically sorted taxa")

    @property
    def shape(self):
        return self.values.shape


def taxon_key(taxon):
    return taxon.encode("utf-8")


def is_sorted(taxa):
    keys = [taxon_key(t) for t in taxa]
    return all(a <= b for a, b in zip(keys, keys[1:]))


def is_species_row(taxon):
    """True for species-level rows: a final ``s__`` rank and no ``t__`` strain rank."""
    ranks = taxon.split("|")
    return ranks[-1].startswith("s__") and not any(r.startswith("t__") for r in ranks)


def _read_labels(labels_path):
    labels = {}
    with open(labels_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{labels_path}:{lineno}: expected 2 tab-separated columns, got {len(parts)}")
            sample, lab = parts[0].strip(), parts[1].strip()
            if lab not in ("0", "1"):
                raise ParseError(f"{labels_path}:{lineno}: label must be 0 or 1, got {lab!r}")
            labels[sample] = int(lab)
    return labels


def parse_abundance_table(path, labels_path, species_only=True):
    """Read an abundance table plus labels into an AbundanceTable (samples as rows).

    Per-sample columns that sum well above 1 are taken as percentages and
    divided by 100. A remaining row-sum deviation beyond ROW_SUM_TOLERANCE is
    logged, not raised.
    """
    taxa, rows = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if not header:
            raise ParseError(f"{path}:1: empty header")
        samples = [s.strip() for s in header.split("\t")[1:]]
        if not samples:
            raise ParseError(f"{path}:1: header lists no samples")
        if len(set(samples)) != len(samples):
            raise ParseError(f"{path}:1: duplicate sample ids in header")
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != len(samples) + 1:
                raise ParseError(f"{path}:{lineno}: expected {len(samples) + 1} columns, got {len(parts)}")
            taxon = parts[0].strip()
            if not taxon:
                raise ParseError(f"{path}:{lineno}: empty taxonomy string")
            try:
                row = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            if not np.all(np.isfinite(row)) or min(row) < 0:
                raise ParseError(f"{path}:{lineno}: abundances must be finite and non-negative")
            if species_only and not is_species_row(taxon):
                continue
            if taxon in taxa:
                raise ParseError(f"{path}:{lineno}: duplicate taxon {taxon!r}")
            taxa.append(taxon)
            rows.append(row)
    if not taxa:
        raise ParseError(f"{path}: no taxa rows" + (" at species level" if species_only else ""))

    values = np.array(rows, dtype=np.float64).T
    sums = values.sum(axis=1)
    percent = sums > 1.5
    values[percent] /= 100.0
    if np.any(values > 1.0):
        bad = samples[int(np.argmax(values.max(axis=1)))]
        raise ParseError(f"{path}: sample {bad!r} has an abundance above 1 after rescaling")
    sums = values.sum(axis=1)
    for sample, total in zip(samples, sums):
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            log.warning("sample %s: abundances sum to %.4f", sample, total)

    label_map = _read_labels(labels_path)
    missing = [s for s in samples if s not in label_map]
    if missing:
        raise ParseError(f"{labels_path}: no label for sample {missing[0]!r}"
                         + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    labels = np.array([label_map[s] for s in samples], dtype=np.int64)
    return AbundanceTable(tuple(samples), tuple(taxa), values, labels)


def write_abundance_table(table, path, labels_path):
    """Inverse of parse_abundance_table (values written with full float precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("taxonomy\t" + "\t".join(table.samples) + "\n")
        for j, taxon in enumerate(table.taxa):
            fh.write(taxon + "\t" + "\t".join(repr(float(v)) for v in table.values[:, j]) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for sample, lab in zip(table.samples, table.labels):
            fh.write(f"{sample}\t{int(lab)}\n")


def sort_phylogenetically(table):
    """Permute columns so taxa ascend in byte-wise lexicographic order (stable)."""
    order = sorted(range(table.n_taxa), key=lambda j: taxon_key(table.taxa[j]))
    return AbundanceTable(table.samples, tuple(table.taxa[j] for j in order),
                          table.values[:, order], table.labels)


def to_abundance(table):
    return FeatureMatrix(ABD, PLG if is_sorted(table.taxa) else None, table.values.copy(), table.taxa)


def to_presence(table):
    values = (table.values > 0).astype(np.float64)
    return FeatureMatrix(PRE, PLG if is_sorted(table.taxa) else None, values, table.taxa)


def features(table, kind):
    return to_presence(table) if kind == PRE else to_abundance(table)
