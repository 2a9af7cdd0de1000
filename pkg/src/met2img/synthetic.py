"""Synthetic abundance tables with a known class signal.

``python -m met2img.synthetic OUTDIR`` writes ``abundance.tsv`` and
``labels.tsv`` in the CLI input format.
"""

import argparse
import os

import numpy as np

from met2img.ingest import AbundanceTable, write_abundance_table

PHYLA = ("Actinobacteria", "Bacteroidetes", "Firmicutes", "Proteobacteria", "Verrucomicrobia")


def taxonomy(i, d):
    phylum = PHYLA[i * len(PHYLA) // d]
    genus = f"G{i // 4:03d}"
    return (f"k__Bacteria|p__{phylum}|c__C_{phylum}|o__O_{phylum}|f__F{i // 8:03d}"
            f"|g__{genus}|s__{genus}_sp{i:03d}")


def make_table(n=200, d=100, n_informative=10, seed=0, positive_fraction=0.5,
               high=5e-2, low=1e-5, background_presence=0.6):
    """Two-class table where ``n_informative`` species carry the label.

    Background species are present with probability ``background_presence``
    at log-normal abundances. Informative species are present in every
    sample, around ``high`` for label 1 and around ``low`` for label 0, so
    the two classes differ in abundance bins but not in presence. Rows are
    normalised to sum to 1.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[: int(round(n * positive_fraction))]] = 1
    values = np.where(rng.random((n, d)) < background_presence,
                      np.exp(rng.normal(np.log(5e-3), 1.5, (n, d))), 0.0)
    informative = rng.choice(d, n_informative, replace=False)
    level = np.where(labels[:, None] == 1, high, low)
    values[:, informative] = level * np.exp(rng.normal(0.0, 0.3, (n, n_informative)))
    values /= values.sum(axis=1, keepdims=True)
    samples = tuple(f"S{i:04d}" for i in range(n))
    taxa = tuple(taxonomy(i, d) for i in range(d))
    return AbundanceTable(samples, taxa, values, labels), np.sort(informative)


def main(argv=None):
    ap = argparse.ArgumentParser(description="write a synthetic abundance/labels pair")
    ap.add_argument("outdir")
    ap.add_argument("-n", type=int, default=200)
    ap.add_argument("-d", type=int, default=100)
    ap.add_argument("--informative", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    os.makedirs(args.outdir, exist_ok=True)
    table, _ = make_table(args.n, args.d, args.informative, args.seed)
    write_abundance_table(table, os.path.join(args.outdir, "abundance.tsv"), os.path.join(args.outdir, "labels.tsv"))


if __name__ == "__main__":
    main()
