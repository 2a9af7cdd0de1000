import numpy as np
import pytest

from met2img import cli, crossval
from met2img.config import RunConfig, grid_specs, load_config, network_spec, write_config
from met2img.crossval import Representation, read_results_csv
from met2img.ingest import write_abundance_table
from met2img.nn import ConvDim
from met2img.ppm import read_pnm
from met2img.synthetic import make_table

FAST = ["--training.epochs", "1", "--eval.folds", "2", "--fillup.target", "10"]


@pytest.fixture
def data(tmp_path):
    table, _ = make_table(n=12, d=30, seed=1)
    abd, lab = tmp_path / "abd.tsv", tmp_path / "lab.tsv"
    write_abundance_table(table, abd, lab)
    return ["--abundance", str(abd), "--labels", str(lab)]


@pytest.fixture
def three(tmp_path):
    table, _ = make_table(n=3, d=20, seed=2)
    abd, lab = tmp_path / "abd3.tsv", tmp_path / "lab3.tsv"
    write_abundance_table(table, abd, lab)
    return ["--abundance", str(abd), "--labels", str(lab)]


def test_render_three_samples(three, tmp_path):
    out = tmp_path / "r"
    assert cli.main(["render", *three, "--out", str(out)]) == 0
    images = sorted(p.name for p in out.glob("*.ppm"))
    assert images == ["S0000_fillup-abd.ppm", "S0001_fillup-abd.ppm", "S0002_fillup-abd.ppm"]
    assert (out / "palette.tsv").exists() and (out / "run_config.ini").exists()
    assert read_pnm(out / images[0]).shape == (3, 32, 32)


def test_render_tsne_writes_map_and_overview(data, tmp_path):
    out = tmp_path / "t"
    rc = cli.main(["render", *data, "--out", str(out), "--representation", "tsne-pre",
                   "--tsne.perplexity", "5", "--tsne.epochs", "150"])
    assert rc == 0
    assert len(list(out.glob("*_tsne-pre.ppm"))) == 12
    assert read_pnm(out / "tsne_overview.ppm").shape == (3, 64, 64)
    rows = (out / "tsne_map.tsv").read_text().splitlines()
    assert len(rows) == 30 and all(0 <= int(r.split("\t")[3]) < 64 for r in rows)


def test_invalid_arch_is_usage_error(data, tmp_path, capsys):
    assert cli.main(["eval", *data, "--out", str(tmp_path / "e"), "--arch", "conv3d:1:1"]) == 1
    assert "architecture" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--no-such-flag"])
    assert exc.value.code == 1


def test_bad_value_is_usage_error(data, tmp_path):
    assert cli.main(["eval", *data, "--out", str(tmp_path / "e"), "--training.epochs", "many"]) == 1
    assert cli.main(["eval", *data, "--out", str(tmp_path / "e"), "--representation", "pixels"]) == 1


def test_unwritable_output_is_io_error(three, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["render", *three, "--out", str(blocker / "sub")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert cli.main(["render", "--abundance", str(tmp_path / "x"), "--labels", str(tmp_path / "y"),
                     "--out", str(tmp_path / "o")]) == 2


def test_malformed_table_is_data_error(tmp_path):
    (tmp_path / "a.tsv").write_text("taxonomy\ts1\nk__A|s__a\tnot-a-number\n")
    (tmp_path / "l.tsv").write_text("s1\t1\n")
    rc = cli.main(["render", "--abundance", str(tmp_path / "a.tsv"), "--labels", str(tmp_path / "l.tsv"),
                   "--out", str(tmp_path / "o")])
    assert rc == 3


def test_eval_writes_results_and_config(data, tmp_path, capsys):
    out = tmp_path / "e"
    rc = cli.main(["eval", *data, "--out", str(out), *FAST, "--arch", "conv2d:1:2",
                   "--representation", "fillup-abd,fillup-pre"])
    assert rc == 0
    reports = read_results_csv(out / "results.csv")
    assert [r.representation for r in reports] == ["fillup-abd", "fillup-pre"]
    assert (out / "results.json").exists()
    printed = capsys.readouterr().out
    assert "fillup-pre" in printed and "+/-" in printed
    again = load_config(out / "run_config.ini")
    assert again.training.epochs == 1 and again.network.arch == "conv2d:1:2"


def test_eval_rerun_is_byte_identical(data, tmp_path):
    args = [*data, *FAST, "--arch", "conv2d:1:2", "--representation", "fillup-abd"]
    assert cli.main(["eval", *args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["eval", *args, "--out", str(tmp_path / "b")]) == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_then_flags(data, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[training]\nepochs = 3\nbatch_size = 4\n[network]\narch = fc\n")
    out = tmp_path / "c"
    assert cli.main(["eval", *data, "--config", str(ini), "--out", str(out), "--eval.folds", "2",
                     "--training.epochs", "1"]) == 0
    used = load_config(out / "run_config.ini")
    assert (used.training.epochs, used.training.batch_size, used.network.arch) == (1, 4, "fc")


def test_grid_has_101_rows_and_resumes(data, tmp_path, monkeypatch):
    full = tmp_path / "full"
    assert cli.main(["grid", *data, "--out", str(full), *FAST]) == 0
    rows = read_results_csv(full / "results.csv")
    assert len(rows) == 101
    assert rows[0].arch == "conv2d:1:1" and rows[99].arch == "conv2d:5:20" and rows[100].arch == "fc"

    # interrupt after 37 cells, then resume without the fault
    part = tmp_path / "part"
    real = crossval.run_cell
    calls = []

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) > 37:
            raise crossval.CellError("simulated crash")
        return real(*a, **kw)

    monkeypatch.setattr(crossval, "run_cell", flaky)
    assert cli.main(["grid", *data, "--out", str(part), *FAST]) == 3
    assert len(read_results_csv(part / "results.csv")) == 37
    monkeypatch.setattr(crossval, "run_cell", real)
    assert cli.main(["grid", *data, "--out", str(part), *FAST]) == 0
    assert (part / "results.csv").read_bytes() == (full / "results.csv").read_bytes()


def test_export_feature_maps_and_checkpoint(data, tmp_path):
    out = tmp_path / "f"
    args = [*data, "--arch", "conv2d:2:3", "--training.epochs", "2"]
    assert cli.main(["export-feature-maps", *args, "--out", str(out), "--sample", "S0004"]) == 0
    maps = sorted(out.glob("S0004_*.pgm"))
    assert len(maps) == 3
    assert read_pnm(maps[0]).shape == (15, 15)
    ckpt = str(out / "network.ckpt")
    assert cli.main(["export-feature-maps", *args, "--out", str(tmp_path / "g"), "--checkpoint", ckpt]) == 0
    assert sorted(p.name for p in (tmp_path / "g").glob("*.pgm")) == [p.name.replace("S0004", "S0000")
                                                                      for p in maps]
    assert cli.main(["export-feature-maps", *data, "--arch", "conv2d:2:4", "--out", str(tmp_path / "h"),
                     "--checkpoint", ckpt]) == 3
    assert cli.main(["export-feature-maps", *args, "--out", str(tmp_path / "i"), "--sample", "nobody"]) == 1


def test_export_maps(data, tmp_path):
    out = tmp_path / "m"
    assert cli.main(["export-maps", *data, "--out", str(out), "--tsne.perplexity", "5",
                     "--tsne.target", "16"]) == 0
    assert read_pnm(out / "tsne_overview.ppm").shape == (3, 16, 16)


def test_palette(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["palette", "--out", str(out), "--binning.k", "5"]) == 0
    assert len((out / "palette.tsv").read_text().splitlines()) == 5
    assert read_pnm(out / "palette.ppm").shape == (3, 16, 80)


def test_defaults_are_reference_values():
    c = RunConfig()
    assert (c.tsne.perplexity, c.tsne.epochs, c.tsne.target) == (10.0, 500, 64)
    t = c.training
    assert (t.batch_size, t.momentum, t.weight_decay, t.learning_rate, t.epochs) == (16, 0.1, 1e-5, 5e-4, 200)
    assert (c.fillup.target, c.eval.folds, c.binning.k) == (32, 10, 10)
    assert network_spec(c, Representation.FILLUP_ABD).arch == "conv2d:5:20"
    assert network_spec(c, Representation.RAW_1D).conv_dim is ConvDim.CONV1D


def test_config_round_trip(tmp_path):
    c = RunConfig()
    c.binning.quantile = True
    c.tsne.perplexity = 7.5
    c.data.name = "cirrhosis"
    write_config(c, tmp_path / "c.ini")
    assert load_config(tmp_path / "c.ini") == c


def test_grid_specs_enumerate_all():
    specs = grid_specs(RunConfig(), Representation.TSNE_PRE)
    assert len(specs) == 101
    assert len({s.arch for s in specs}) == 101
    assert {s.conv_dim for s in specs[:100]} == {ConvDim.CONV2D}
    assert grid_specs(RunConfig(), Representation.RAW_1D)[0].conv_dim is ConvDim.CONV1D


def test_entry_point_runs_as_module():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "met2img.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "export-feature-maps" in res.stdout
    assert np.all([cmd in res.stdout for cmd in cli.COMMANDS])
