"""``met2img`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 file I/O error,
3 data or runtime error (bad table, failed cell, impossible architecture).
"""

import argparse
import logging
import os
import sys

import numpy as np

from met2img import binning, crossval, embedding, fillup, ppm
from met2img import config as cfg
from met2img.ingest import ABD, ParseError, parse_abundance_table, sort_phylogenetically
from met2img.nn import BuildError, ConvDim, build, feature_maps, train
from met2img.nn.checkpoint import CheckpointError, load, save

EXIT_USAGE, EXIT_IO, EXIT_DATA = 1, 2, 3
ALIASES = {
    "--abundance": "data.abundance",
    "--labels": "data.labels",
    "--representation": "representation.name",
    "--arch": "network.arch",
    "--seed": "eval.seed",
    "--jobs": "eval.jobs",
    "--out": "output.dir",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI file; flags override its values")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress per fold")
    for flag, key in ALIASES.items():
        p.add_argument(flag, dest=key, metavar=key.split(".")[1].upper(), help=f"alias for --{key}")
    for key in cfg.option_types():
        p.add_argument(f"--{key}", dest=key, metavar="V")
    return p


def make_parser():
    common = _common()
    ap = _Parser(prog="met2img", description="Render abundance tables as images and cross-validate CNNs on them.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("render", parents=[common], help="write one image per sample")
    sub.add_parser("eval", parents=[common], help="cross-validate the configured cells")
    sub.add_parser("grid", parents=[common], help="cross-validate 100 conv architectures plus FC, resumable")
    sub.add_parser("export-maps", parents=[common], help="write the t-SNE global map and its overview image")
    fm = sub.add_parser("export-feature-maps", parents=[common], help="write per-filter activation images")
    fm.add_argument("--sample", help="sample name (default: first sample)")
    fm.add_argument("--checkpoint", help="load this network instead of training one")
    sub.add_parser("palette", parents=[common], help="write the binning palette")
    return ap


def resolve(args):
    overrides = [(k, v) for k, v in vars(args).items() if "." in k and v is not None]
    try:
        run = cfg.load_config(args.config, overrides)
        reps = cfg.validate(run)
        rconfig = cfg.render_config(run)
    except (cfg.ConfigFileError, binning.ConfigError, embedding.EmbeddingError) as exc:
        raise UsageError(str(exc)) from None
    return run, reps, rconfig


def prepare_output(run):
    os.makedirs(run.output.dir, exist_ok=True)
    cfg.write_config(run, os.path.join(run.output.dir, "run_config.ini"))


def load_table(run):
    d = run.data
    if not d.abundance or not d.labels:
        raise UsageError("both --abundance and --labels (data.abundance, data.labels) are required")
    table = parse_abundance_table(d.abundance, d.labels, d.species_only)
    return sort_phylogenetically(table)


def dataset_name(run):
    return run.data.name or os.path.splitext(os.path.basename(run.data.abundance))[0]


def _out(run, name):
    return os.path.join(run.output.dir, name)


def _write_image(path, img):
    if img.shape[0] == 1:
        ppm.write_pgm(path, img)
    else:
        ppm.write_ppm(path, img)


def _write_map_files(run, fitted, table):
    embedding.write_map(fitted.gmap, _out(run, "tsne_map.tsv"))
    overview = embedding.render_tsne(table.values.mean(axis=0), fitted.gmap, fitted.scheme, ABD,
                                     fitted.config.tsne_target, fitted.config.point_size)
    ppm.write_ppm(_out(run, "tsne_overview.ppm"), overview)


def cmd_render(run, reps, rconfig):
    table = load_table(run)
    prepare_output(run)
    written = 0
    for rep in reps:
        # whole-table fit: rendering is for inspection, not evaluation
        fitted = crossval.fit_representation(rep, table.values, table.taxa, rconfig, run.eval.seed)
        images = fitted.render(table.values)
        ext = "pgm" if rep is crossval.Representation.RAW_1D else "ppm"
        for name, img in zip(table.samples, images):
            _write_image(_out(run, f"{name}_{rep.value}.{ext}"), img)
            written += 1
        if rep.is_tsne:
            _write_map_files(run, fitted, table)
    binning.write_palette(rconfig.scheme, _out(run, "palette.tsv"))
    print(f"wrote {written} images to {run.output.dir}")


def _summary(report):
    print(f"{report.representation:<11} {report.arch:<18} ACC {report.mean_acc:.3f} +/- {report.std_acc:.3f}")


def cmd_eval(run, reps, rconfig):
    table = load_table(run)
    prepare_output(run)
    cells = [(rep, cfg.network_spec(run, rep)) for rep in reps]
    reports = crossval.run_table(table, cells, cfg.training_config(run), rconfig, run.eval.seed,
                                 run.eval.folds, run.eval.repeats, dataset_name(run), run.eval.jobs,
                                 on_report=_summary)
    crossval.write_results_csv(reports, _out(run, "results.csv"))
    crossval.write_results_json(reports, _out(run, "results.json"))


def cmd_grid(run, reps, rconfig):
    table = load_table(run)
    prepare_output(run)
    path = _out(run, "results.csv")
    done = crossval.read_results_csv(path) if os.path.exists(path) else []
    if done:
        print(f"resuming: {len(done)} cells already in {path}")

    def record(report):
        crossval.append_result_csv(report, path)
        _summary(report)

    cells = [(rep, spec) for rep in reps for spec in cfg.grid_specs(run, rep)]
    crossval.run_table(table, cells, cfg.training_config(run), rconfig, run.eval.seed, run.eval.folds,
                       run.eval.repeats, dataset_name(run), run.eval.jobs,
                       skip={r.key for r in done}, on_report=record)
    crossval.write_results_json(crossval.read_results_csv(path), _out(run, "results.json"))


def cmd_export_maps(run, reps, rconfig):
    table = load_table(run)
    prepare_output(run)
    fitted = crossval.fit_representation(crossval.Representation.TSNE_ABD, table.values, table.taxa,
                                         rconfig, run.eval.seed)
    _write_map_files(run, fitted, table)
    print(f"wrote tsne_map.tsv and tsne_overview.ppm to {run.output.dir}")


def cmd_export_feature_maps(run, reps, rconfig, sample=None, checkpoint=None):
    table = load_table(run)
    rep = reps[0]
    spec = cfg.network_spec(run, rep)
    if spec.conv_dim is ConvDim.NONE:
        raise UsageError("feature maps need a convolutional architecture")
    crossval.check_compatible(rep, spec)
    name = sample or table.samples[0]
    if name not in table.samples:
        raise UsageError(f"unknown sample {name!r}")
    prepare_output(run)
    fitted = crossval.fit_representation(rep, table.values, table.taxa, rconfig, run.eval.seed)
    X = fitted.render(table.values)
    spec = spec.with_input(X.shape[1:])
    if checkpoint:
        net = load(checkpoint, expected_spec=spec)
    else:
        net = build(spec, seed=run.eval.seed)
        train(net, X, table.labels, cfg.training_config(run))
        save(net, _out(run, "network.ckpt"))
    maps = feature_maps(net, X[table.samples.index(name)])
    for i, fmap in enumerate(maps):
        ppm.write_pgm(_out(run, f"{name}_{rep.value}_filter{i:02d}.pgm"), fmap)
    print(f"wrote {len(maps)} feature maps for {name} to {run.output.dir}")


def cmd_palette(run, reps, rconfig):
    prepare_output(run)
    binning.write_palette(rconfig.scheme, _out(run, "palette.tsv"))
    strip = np.repeat(np.repeat(rconfig.scheme.palette.T[:, None, :], 16, axis=1), 16, axis=2)
    ppm.write_ppm(_out(run, "palette.ppm"), strip)
    print(f"wrote palette.tsv and palette.ppm to {run.output.dir}")


COMMANDS = {
    "render": cmd_render,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "export-maps": cmd_export_maps,
    "export-feature-maps": cmd_export_feature_maps,
    "palette": cmd_palette,
}


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    extra = {}
    if args.command == "export-feature-maps":
        extra = {"sample": args.sample, "checkpoint": args.checkpoint}
    try:
        run, reps, rconfig = resolve(args)
        COMMANDS[args.command](run, reps, rconfig, **extra)
    except UsageError as exc:
        print(f"met2img: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"met2img: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ParseError, CheckpointError, BuildError, crossval.CellError, fillup.LayoutError) as exc:
        print(f"met2img: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
