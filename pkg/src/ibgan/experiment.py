"""Seeded replicate grids over methods, p_miss levels and training-set sizes.

Configuration is an INI file (see :func:`load_config`). Results are written as
one JSON object per line, in grid order, as each replicate finishes; per-epoch
loss histories go to a sibling ``*.history.jsonl`` file.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import time
import traceback
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import BASELINE_KINDS, run_baseline
from .dataio import (
    SyntheticSpec,
    generate_synthetic,
    inject_imbalance,
    load_dataset,
    split,
    standardize,
    subsample,
)
from .metrics import METRIC_NAMES, MetricsReport, aggregate
from .nets import LayerSpec, NetSpec
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "METHODS",
    "RESULT_FIELDS",
    "SUMMARY_HEADER",
    "ExperimentConfig",
    "RunRecord",
    "ConfigError",
    "load_config",
    "parse_config",
    "replicate_seed",
    "run_experiment",
    "read_records",
    "summarize",
    "format_summary",
    "write_summary_csv",
]

log = logging.getLogger(__name__)

METHODS = ("ibgan", "naive_gan") + BASELINE_KINDS
RESULT_FIELDS = ("method", "p_miss", "alpha", "train_size", "replicate", "seed",
                 "balanced_accuracy", "macro_f1", "pr_auc", "duration_s")
SUMMARY_HEADER = ("method", "sweep_key", "sweep_value", "metric", "mean", "stddev", "n")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    methods: tuple[str, ...] = ("ibgan", "plain")
    replicates: int = 5
    root_seed: int = 0
    output: str = "results.jsonl"
    p_miss: tuple[float, ...] = (0.1,)
    train_sizes: tuple[int | None, ...] = (None,)
    record_duration: bool = False
    workers: int = 1
    # data
    source: str = "synthetic"
    path: str | None = None
    test_path: str | None = None
    test_fraction: float = 0.3
    imbalance: bool = False
    drop_fraction: float = 0.75
    synthetic: SyntheticSpec | None = None
    synthetic_test_sizes: tuple[int, ...] | None = None
    k_neighbors: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected from {METHODS}")
        if not self.methods:
            raise ConfigError("no methods given")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.source not in ("synthetic", "file"):
            raise ConfigError(f"data source must be 'synthetic' or 'file', got {self.source!r}")
        if self.source == "file" and not self.path:
            raise ConfigError("data.path is required for source = file")
        if self.source == "synthetic" and self.synthetic is None:
            raise ConfigError("a [synthetic] section is required for source = synthetic")
        if not 0 < self.drop_fraction < 1:
            raise ConfigError("drop_fraction must lie in (0, 1)")
        for p in self.p_miss:
            if not 0 <= p <= 1:
                raise ConfigError(f"p_miss value {p} outside [0, 1]")
        try:
            self.train.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None


@dataclass
class RunRecord:
    method: str
    p_miss: float | None
    alpha: float | None
    train_size: int | None
    replicate: int
    seed: int
    report: MetricsReport | None
    history: list[dict]
    duration_s: float
    config: dict
    error: str | None = None

    def result_line(self, record_duration: bool) -> dict:
        r = self.report
        row = {
            "method": self.method,
            "p_miss": self.p_miss,
            "alpha": self.alpha,
            "train_size": self.train_size,
            "replicate": self.replicate,
            "seed": self.seed,
            "balanced_accuracy": r.balanced_accuracy if r else None,
            "macro_f1": r.macro_f1 if r else None,
            "pr_auc": r.pr_auc if r else None,
            "duration_s": round(self.duration_s, 3) if record_duration else None,
        }
        if self.error:
            row["error"] = self.error
        return row


# ---------------------------------------------------------------------------
# config parsing

_SCHEMA = {
    "experiment": {"methods", "replicates", "root_seed", "output", "p_miss", "train_size",
                   "record_duration", "workers"},
    "data": {"source", "path", "test_path", "test_fraction", "inject_imbalance", "drop_fraction"},
    "synthetic": {"k", "m", "sizes", "test_sizes", "phi", "mu", "sigma"},
    "train": {"alpha", "n_mb", "epochs", "lr", "beta1", "beta2", "epsilon", "w_cap",
              "mask_rule"},
    "classifier": {"conv", "dense", "activation", "init_scale"},
    "generator": {"hidden", "activation", "init_scale"},
    "discriminator": {"hidden", "activation", "init_scale"},
    "baselines": {"k_neighbors"},
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _conv_layers(text: str) -> tuple[LayerSpec, ...]:
    layers = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        width, _, kernel = item.partition(":")
        k = None if kernel in ("", "auto") else int(kernel)
        layers.append(LayerSpec("conv1d", int(width), k))
    return tuple(layers)


def _net(sec, conv: bool, default: NetSpec | None) -> NetSpec | None:
    if sec is None:
        return default
    layers: tuple[LayerSpec, ...] = ()
    if conv:
        layers += _conv_layers(sec.get("conv", "32:auto, 32:3"))
        layers += tuple(LayerSpec("dense", w) for w in _ints(sec.get("dense", "64")))
    else:
        layers += tuple(LayerSpec("dense", w) for w in _ints(sec.get("hidden", "256, 256")))
    scale = sec.get("init_scale", "").strip()
    return NetSpec(layers, sec.get("activation", "leaky_relu"),
                   float(scale) if scale and scale != "none" else None)


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text; unknown sections or keys raise :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    for name in cp.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - _SCHEMA[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    get = lambda s: cp[s] if cp.has_section(s) else {}  # noqa: E731

    try:
        e, d, t = get("experiment"), get("data"), get("train")
        tc = TrainConfig()
        tc = replace(
            tc,
            alpha=float(t.get("alpha", tc.alpha)),
            n_mb=int(t.get("n_mb", tc.n_mb)),
            epochs=int(t.get("epochs", tc.epochs)),
            lr=float(t.get("lr", tc.lr)),
            beta1=float(t.get("beta1", tc.beta1)),
            beta2=float(t.get("beta2", tc.beta2)),
            epsilon=float(t.get("epsilon", tc.epsilon)),
            w_cap=float(t.get("w_cap", tc.w_cap)),
            mask_rule=t.get("mask_rule", tc.mask_rule),
            classifier=_net(cp["classifier"] if cp.has_section("classifier") else None, True,
                            None),
            generator=_net(cp["generator"] if cp.has_section("generator") else None, False,
                           None),
            discriminator=_net(cp["discriminator"] if cp.has_section("discriminator") else None,
                               False, None),
        )
        synth = test_sizes = None
        if cp.has_section("synthetic"):
            s = cp["synthetic"]
            k = int(s.get("k", "3"))
            sizes = _ints(s["sizes"])
            mu_rows = [_floats(row) for row in s["mu"].split(";")]
            synth = SyntheticSpec(sizes=sizes, k=k, m=int(s.get("m", "40")),
                                  phi=_floats(s["phi"]), mu=mu_rows,
                                  sigma=float(s.get("sigma", "1.0")))
            test_sizes = _ints(s["test_sizes"]) if "test_sizes" in s else None
        sizes_txt = e.get("train_size", "").strip()
        cfg = ExperimentConfig(
            methods=tuple(m.strip() for m in e.get("methods", "ibgan, plain").split(",")
                          if m.strip()),
            replicates=int(e.get("replicates", "5")),
            root_seed=int(e.get("root_seed", "0")),
            output=e.get("output", "results.jsonl"),
            p_miss=_floats(e.get("p_miss", "0.1")),
            train_sizes=_ints(sizes_txt) if sizes_txt else (None,),
            record_duration=cp.getboolean("experiment", "record_duration", fallback=False),
            workers=int(e.get("workers", "1")),
            source=d.get("source", "synthetic" if synth else "file"),
            path=d.get("path"),
            test_path=d.get("test_path"),
            test_fraction=float(d.get("test_fraction", "0.3")),
            imbalance=cp.getboolean("data", "inject_imbalance", fallback=False),
            drop_fraction=float(d.get("drop_fraction", "0.75")),
            synthetic=synth,
            synthetic_test_sizes=test_sizes,
            k_neighbors=int(get("baselines").get("k_neighbors", "5")),
            train=tc,
        )
    except (KeyError, ValueError) as err:
        raise ConfigError(f"bad config value: {err}") from None
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    out = Path(cfg.output)
    if not out.is_absolute():
        cfg.output = str(Path(path).resolve().parent / out)
    for attr in ("path", "test_path"):
        p = getattr(cfg, attr)
        if p and not Path(p).is_absolute():
            setattr(cfg, attr, str(Path(path).resolve().parent / p))
    return cfg


# ---------------------------------------------------------------------------
# running


def replicate_seed(root_seed: int, replicate: int) -> int:
    """Seed of replicate ``i``: a pure function of (root seed, i)."""
    return int(np.random.SeedSequence(root_seed, spawn_key=(replicate,)).generate_state(1)[0])


def _load_replicate_data(cfg: ExperimentConfig, seed: int):
    rng = np.random.default_rng([seed, 0])
    if cfg.source == "synthetic":
        train_ds = generate_synthetic(cfg.synthetic, rng)
        test_sizes = cfg.synthetic_test_sizes
        if test_sizes is None:
            train_ds, test_ds = split(train_ds, cfg.test_fraction, rng)
        else:
            test_ds = generate_synthetic(replace(cfg.synthetic, sizes=test_sizes), rng)
    else:
        full = load_dataset(cfg.path)
        if cfg.test_path:
            train_ds, test_ds = full, load_dataset(cfg.test_path)
            if test_ds.label_names != train_ds.label_names:
                # align test labels with training label order
                names = train_ds.label_names
                unknown = set(test_ds.label_names) - set(names)
                if unknown:
                    raise ValueError(f"test labels {sorted(unknown)} absent from training data")
                y = np.array([names.index(test_ds.label_names[v]) for v in test_ds.y])
                test_ds = replace(test_ds, y=y, n_classes=len(names), label_names=names)
        else:
            train_ds, test_ds = split(full, cfg.test_fraction, rng)
    train_ds = standardize(train_ds)
    test_ds = standardize(test_ds, train_ds.channel_stats)
    if cfg.imbalance:
        train_ds = inject_imbalance(train_ds, np.random.default_rng([seed, 1]), cfg.drop_fraction)
    return train_ds, test_ds


def _grid(cfg: ExperimentConfig):
    for size in cfg.train_sizes:
        for method in cfg.methods:
            if method == "ibgan":
                levels = cfg.p_miss
            elif method == "naive_gan":
                levels = (1.0,)
            else:
                levels = (None,)
            for p in levels:
                for rep in range(cfg.replicates):
                    yield method, p, size, rep


def _config_snapshot(cfg: ExperimentConfig) -> dict:
    snap = asdict(cfg)
    return json.loads(json.dumps(snap, default=str))


def _run_one(cfg: ExperimentConfig, method: str, p_miss, size, rep: int) -> RunRecord:
    seed = replicate_seed(cfg.root_seed, rep)
    alpha = cfg.train.alpha if method in ("ibgan", "naive_gan") else None
    start = time.perf_counter()
    try:
        train_ds, test_ds = _load_replicate_data(cfg, seed)
        if size is not None:
            train_ds = subsample(train_ds, size, np.random.default_rng([seed, 2]))
        tc = replace(cfg.train, seed=seed)
        if method in ("ibgan", "naive_gan"):
            state = train(train_ds, replace(tc, p_miss=p_miss))
            clf, history = state.C, state.history
        else:
            clf, history = run_baseline(method, train_ds, tc, cfg.k_neighbors)
        rep_report = evaluate(clf, test_ds)
        error = None
    except Exception as exc:  # recorded, grid continues
        log.error("replicate %s/%s/%s/%s failed: %s", method, p_miss, size, rep, exc)
        rep_report, history = None, []
        error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    return RunRecord(method, p_miss, alpha, size, rep, seed, rep_report, history,
                     time.perf_counter() - start, {}, error)


def _history_path(output: Path) -> Path:
    return output.with_name(output.stem + ".history.jsonl")


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Run the whole grid; each finished replicate is appended to ``cfg.output``."""
    cfg.validate()
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    hist_path = _history_path(out)
    snapshot = _config_snapshot(cfg)
    jobs = list(_grid(cfg))
    out.write_text("", encoding="utf-8")
    hist_path.write_text("", encoding="utf-8")

    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=cfg.workers)
        results = pool.map(_run_one, *zip(*[(cfg, *job) for job in jobs]))
    else:
        pool = None
        results = (_run_one(cfg, *job) for job in jobs)

    records = []
    try:
        for rec in results:
            rec.config = snapshot
            with out.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec.result_line(cfg.record_duration)) + "\n")
            with hist_path.open("a", encoding="utf-8") as fh:
                for h in rec.history:
                    key = {"method": rec.method, "p_miss": rec.p_miss,
                           "train_size": rec.train_size, "replicate": rec.replicate}
                    fh.write(json.dumps({**key, **h}) + "\n")
            records.append(rec)
            log.info("%s p_miss=%s size=%s rep=%d: %s", rec.method, rec.p_miss, rec.train_size,
                     rec.replicate, rec.error or f"BA={rec.report.balanced_accuracy:.3f}")
    finally:
        if pool is not None:
            pool.shutdown()
    return records


# ---------------------------------------------------------------------------
# summaries


def read_records(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _as_row(rec) -> dict:
    return rec.result_line(False) if isinstance(rec, RunRecord) else rec


def summarize(records) -> list[dict]:
    """Mean and sample sd of each metric per (method, sweep point).

    The sweep key names whichever of ``p_miss`` / ``train_size`` varies across
    the records (both joined by ``;`` if both do, ``none`` if neither). Methods
    keep their order of first appearance; sweep points are sorted.
    """
    rows = [_as_row(r) for r in records if _as_row(r).get("balanced_accuracy") is not None]
    if not rows:
        raise ValueError("no successful records to summarize")
    axes = [a for a in ("p_miss", "train_size")
            if len({r[a] for r in rows if r[a] is not None}) > 1]
    sweep_key = ";".join(axes) if axes else "none"
    methods = list(dict.fromkeys(r["method"] for r in rows))
    out = []
    for method in methods:
        mine = [r for r in rows if r["method"] == method]
        points = sorted({tuple(r[a] for a in axes) for r in mine},
                        key=lambda t: tuple(float("-inf") if v is None else v for v in t))
        for point in points:
            group = [r for r in mine if tuple(r[a] for a in axes) == point]
            stats = aggregate(group)
            value = ";".join("" if v is None else str(v) for v in point)
            for metric in METRIC_NAMES:
                mean, sd = stats[metric]
                out.append({"method": method, "sweep_key": sweep_key, "sweep_value": value,
                            "metric": metric, "mean": mean, "stddev": sd, "n": len(group)})
    return out


def _fmt(mean: float, sd: float | None) -> str:
    return f"{mean:.3f}" if sd is None else f"{mean:.3f} ± {sd:.3f}"


def format_summary(rows: list[dict]) -> str:
    """Aligned text table, one line per (method, sweep point)."""
    table: dict[tuple, dict] = {}
    for r in rows:
        table.setdefault((r["method"], r["sweep_value"]), {})[r["metric"]] = _fmt(r["mean"],
                                                                                 r["stddev"])
    key = rows[0]["sweep_key"] if rows else "none"
    header = ["method"] + ([key] if key != "none" else []) + list(METRIC_NAMES)
    lines = [header]
    for (method, value), cells in table.items():
        lines.append([method] + ([value] if key != "none" else [])
                     + [cells.get(m, "") for m in METRIC_NAMES])
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in lines)


def write_summary_csv(rows: list[dict], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in rows:
        w.writerow([r["method"], r["sweep_key"], r["sweep_value"], r["metric"],
                    repr(r["mean"]), "" if r["stddev"] is None else repr(r["stddev"]), r["n"]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
