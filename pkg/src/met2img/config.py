"""Run configuration: INI sections with ``--section.key`` command-line overrides.

Every field has a default, so an empty file (or none at all) gives the
reference setup: log binning with 10 colors, 32x32 fill-up, 64x64 t-SNE
maps at perplexity 10, CONV2D(5,20) and 200 epochs of SGD over 10 folds.
"""

import configparser
from dataclasses import dataclass, field, fields

from met2img import binning, embedding, fillup
from met2img.crossval import RenderConfig, Representation
from met2img.nn import BuildError, ConvDim, Head, NetworkSpec, TrainingConfig, parse_arch

AUTO = "auto"
IMAGE_ARCH = "conv2d:5:20"
RAW_ARCH = "conv1d:2:20"


@dataclass
class DataSection:
    abundance: str = ""
    labels: str = ""
    name: str = ""
    species_only: bool = True


@dataclass
class RepresentationSection:
    name: str = Representation.FILLUP_ABD.value


@dataclass
class BinningSection:
    scale: str = binning.LOG
    k: int = 10
    lo: float = 1e-7
    hi: float = 1.0
    quantile: bool = False


@dataclass
class FillupSection:
    target: int = 32
    mode: str = fillup.PAD
    background: str = fillup.WHITE_BG


@dataclass
class TsneSection:
    perplexity: float = 10.0
    epochs: int = 500
    learning_rate: float = 200.0
    early_exaggeration: float = 4.0
    exaggeration_epochs: int = 100
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_epoch: int = 250
    min_gain: float = 0.01
    init_scale: float = 1e-4
    target: int = 64
    point_size: int = 1


@dataclass
class NetworkSection:
    arch: str = AUTO
    head: str = Head.TWO_NODE.value
    fc_hidden: int = 0


@dataclass
class TrainingSection:
    batch_size: int = 16
    momentum: float = 0.1
    weight_decay: float = 1e-5
    learning_rate: float = 5e-4
    epochs: int = 200
    optimizer: str = AUTO
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class EvalSection:
    folds: int = 10
    repeats: int = 1
    seed: int = 0
    jobs: int = 1


@dataclass
class OutputSection:
    dir: str = "met2img_out"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    representation: RepresentationSection = field(default_factory=RepresentationSection)
    binning: BinningSection = field(default_factory=BinningSection)
    fillup: FillupSection = field(default_factory=FillupSection)
    tsne: TsneSection = field(default_factory=TsneSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)


class ConfigFileError(ValueError):
    pass


def option_types():
    """``{"section.key": type}`` for every configurable field."""
    out = {}
    for sec in fields(RunConfig):
        for f in fields(sec.default_factory):
            out[f"{sec.name}.{f.name}"] = type(f.default)
    return out


def _convert(key, text, typ):
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError:
        raise ConfigFileError(f"{key}: cannot read {text!r} as {typ.__name__}") from None


def set_option(config, key, value):
    types = option_types()
    if key not in types:
        raise ConfigFileError(f"unknown option {key!r}")
    section, name = key.split(".", 1)
    if isinstance(value, str):
        value = _convert(key, value, types[key])
    setattr(getattr(config, section), name, value)


def load_config(path=None, overrides=()):
    """Defaults, then the INI file at ``path``, then ``(key, text)`` overrides."""
    config = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for name, text in parser.items(section):
                set_option(config, f"{section}.{name}", text)
    for key, text in overrides:
        set_option(config, key, text)
    return config


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def write_config(config, path):
    parser = configparser.ConfigParser(interpolation=None)
    for sec in fields(RunConfig):
        obj = getattr(config, sec.name)
        parser[sec.name] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def representations(config):
    """Representations named in ``representation.name`` (comma list or ``all``)."""
    text = config.representation.name.strip()
    if text == "all":
        return list(Representation)
    try:
        return [Representation(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        choices = ", ".join(r.value for r in Representation)
        raise ConfigFileError(f"representation.name: {exc}; choose from {choices} or all") from None


def network_spec(config, rep):
    """The NetworkSpec for ``rep``, resolving ``auto`` by representation."""
    net = config.network
    arch = net.arch
    if arch == AUTO:
        arch = RAW_ARCH if rep is Representation.RAW_1D else IMAGE_ARCH
    return parse_arch(arch, Head(net.head), net.fc_hidden or None)


def grid_specs(config, rep):
    """Depths 1..5 x widths 1..20 of the matching convolution, then the FC baseline."""
    conv = ConvDim.CONV1D if rep is Representation.RAW_1D else ConvDim.CONV2D
    head, hidden = Head(config.network.head), config.network.fc_hidden or None
    specs = [NetworkSpec(conv, d, w, head, None, hidden) for d in range(1, 6) for w in range(1, 21)]
    specs.append(NetworkSpec(ConvDim.NONE, 0, 0, head, None, hidden))
    return specs


def scheme(config):
    b = config.binning
    if b.scale == binning.LOG:
        return binning.default_log_scheme(b.k, b.lo, b.hi)
    if b.scale == binning.LINEAR:
        return binning.default_linear_scheme(b.k, b.lo, b.hi)
    raise binning.ConfigError(f"binning.scale must be log or linear, got {b.scale!r}")


def tsne_config(config):
    t = config.tsne
    return embedding.TsneConfig(
        perplexity=t.perplexity, epochs=t.epochs, learning_rate=t.learning_rate,
        early_exaggeration=t.early_exaggeration, exaggeration_epochs=t.exaggeration_epochs,
        momentum_initial=t.momentum_initial, momentum_final=t.momentum_final,
        momentum_switch_epoch=t.momentum_switch_epoch, seed=config.eval.seed,
        min_gain=t.min_gain, init_scale=t.init_scale)


def render_config(config):
    f, t = config.fillup, config.tsne
    if f.mode not in (fillup.PAD, fillup.SCALE):
        raise binning.ConfigError(f"fillup.mode must be pad or scale, got {f.mode!r}")
    if f.background not in (fillup.WHITE_BG, fillup.ZERO_BG):
        raise binning.ConfigError(f"fillup.background must be white or zero, got {f.background!r}")
    return RenderConfig(scheme(config), config.binning.quantile, f.target, f.mode, f.background,
                        tsne_config(config), t.target, t.point_size)


def training_config(config):
    t = config.training
    return TrainingConfig(
        batch_size=t.batch_size, momentum=t.momentum, weight_decay=t.weight_decay,
        learning_rate=t.learning_rate, epochs=t.epochs,
        optimizer=None if t.optimizer == AUTO else t.optimizer,
        seed=config.eval.seed, beta1=t.beta1, beta2=t.beta2, eps=t.eps)


def validate(config):
    """Raise ConfigFileError for option values that cannot describe any run."""
    reps = representations(config)
    try:
        for rep in reps:
            network_spec(config, rep)
        Head(config.network.head)
    except (BuildError, ValueError) as exc:
        raise ConfigFileError(f"network: {exc}") from None
    if config.training.optimizer not in (AUTO, "sgd", "adam"):
        raise ConfigFileError("training.optimizer must be auto, sgd or adam")
    if config.eval.folds < 2 or config.eval.repeats < 1 or config.eval.jobs < 1:
        raise ConfigFileError("eval.folds must be >= 2; eval.repeats and eval.jobs >= 1")
    return reps

