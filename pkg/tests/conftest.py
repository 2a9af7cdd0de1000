import numpy as np
import pytest

from met2img.ingest import AbundanceTable


def write_tsv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")
    return path


@pytest.fixture
def toy_files(tmp_path):
    abd = write_tsv(tmp_path / "abd.tsv", ["taxonomy", "s1", "s2"], [
        ["k__B|p__Z|s__x", 0.5, 0.2],
        ["k__A|p__Y|s__y", 0.25, 0.0],
        ["k__A|p__X|s__z", 0.25, 0.8],
    ])
    lab = tmp_path / "labels.tsv"
    lab.write_text("s1\t1\ns2\t0\n")
    return abd, lab


@pytest.fixture
def small_table():
    rng = np.random.default_rng(3)
    n, d = 24, 12
    values = np.where(rng.random((n, d)) < 0.6, rng.random((n, d)), 0.0)
    values[:, 0] += 1e-3
    values /= values.sum(axis=1, keepdims=True)
    labels = np.array([0, 1] * (n // 2))
    taxa = tuple(f"k__B|p__P{j % 3}|s__sp{j:02d}" for j in range(d))
    return AbundanceTable(tuple(f"S{i}" for i in range(n)), taxa, values, labels)


class TrackedArray(np.ndarray):
    """Records the rows requested by every fancy-index read."""

    events = None

    def __getitem__(self, idx):
        if TrackedArray.events is not None and isinstance(idx, np.ndarray):
            TrackedArray.events.append(("read", frozenset(idx.tolist())))
        return np.asarray(super().__getitem__(idx))


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance criterion outcome (``ok=None`` for skipped); printed in the terminal summary."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"{status}  criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
