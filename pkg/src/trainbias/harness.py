"""Training-set-size sweeps over the five model variants, with CSV/JSON/SVG output.

Variants:
    base        trained on a representative subset, unweighted
    weighted    same subset, balancing weights 1/P(i)
    deweighted  weighted predictions moved from the weighted prior to the subset prior
    biased      trained on an equal-composition subset
    debiased    biased predictions moved from the biased prior to the representative prior
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import core, metrics, mlp, priors, simgen
from .classify import stochastic_classify
from .core import Dataset, DataError

log = logging.getLogger(__name__)

VARIANTS = ("base", "weighted", "deweighted", "biased", "debiased")
TRAINED_FROM = {"base": "base", "weighted": "weighted", "deweighted": "weighted",
                "biased": "biased", "debiased": "biased"}
DESK_TRAIN = mlp.TrainConfig(max_iters=1000, restarts=1, precision="float32")


class SweepError(RuntimeError):
    def __init__(self, variant, size, repeat, cause):
        super().__init__(f"[variant={variant} size={size} repeat={repeat}] {cause}")
        self.variant, self.size, self.repeat = variant, size, repeat


@dataclass(frozen=True)
class SweepConfig:
    sizes: tuple[int, ...] = (100, 1_000, 10_000, 100_000)
    repeats: int = 3
    variants: tuple[str, ...] = VARIANTS
    test_size: int = 20_000
    seed: int = 0
    train: mlp.TrainConfig = DESK_TRAIN
    data: dict = field(default_factory=lambda: {"source": "sim"})
    jobs: int = 1

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes) or list(sizes) != sorted(set(sizes)):
            raise ValueError(f"sizes must be positive and strictly ascending: {self.sizes}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.variants:
            raise ValueError("no variants requested")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants {sorted(unknown)}")
        if self.data.get("source", "sim") not in ("sim", "csv"):
            raise ValueError(f"unknown data source {self.data.get('source')!r}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "variants", tuple(v for v in VARIANTS if v in self.variants))

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        train = dict(data.pop("train", {}))
        if "hidden_sizes" in train:
            train["hidden_sizes"] = tuple(train["hidden_sizes"])
        train_cfg = replace(DESK_TRAIN, **train)
        for key in ("sizes", "variants"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(train=train_cfg, **data)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sizes"] = list(self.sizes)
        out["variants"] = list(self.variants)
        out["train"]["hidden_sizes"] = list(self.train.hidden_sizes)
        return out


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass
class SweepData:
    test: Dataset
    oracle: np.ndarray | None
    representative: list[Dataset]
    biased: list[Dataset]
    discarded: list[int]


def _balanced_order(ds: Dataset, seed: int) -> tuple[np.ndarray, int]:
    """Round-robin over classes until the rarest class runs out, so every
    prefix is as close to equal composition as the data allows."""
    rng = simgen.make_rng(seed)
    per_class = [rng.permutation(np.flatnonzero(ds.labels == i)) for i in range(ds.class_count)]
    present = [p for p in per_class if p.size]
    depth = min(p.size for p in present)
    order = np.stack([p[:depth] for p in present], axis=1).ravel()
    return order, ds.n - order.size


def prepare_data(cfg: SweepConfig) -> SweepData:
    n_max = cfg.sizes[-1]
    if cfg.data.get("source", "sim") == "sim":
        rep_cfg = simgen.default_spec("representative")
        test = simgen.sample_dataset(rep_cfg.replace(n_points=cfg.test_size,
                                                     seed=_seed(cfg.seed, 0)))
        oracle = simgen.oracle_matrix(rep_cfg, test)
        reps, biased = [], []
        for r in range(cfg.repeats):
            reps.append(simgen.sample_dataset(
                rep_cfg.replace(n_points=n_max, seed=_seed(cfg.seed, 1, r))))
            biased.append(simgen.sample_dataset(
                simgen.default_spec("biased", n_max, _seed(cfg.seed, 2, r))))
        return SweepData(test, oracle, reps, biased, [0] * cfg.repeats)

    schema = core.Schema(class_count=cfg.data.get("class_count"))
    pool = core.load_dataset(cfg.data["train"], schema)
    test = core.load_dataset(cfg.data["test"], replace(schema, class_count=pool.class_count))
    if pool.labels is None or test.labels is None:
        raise DataError("sweep datasets need label columns")
    if pool.n < n_max:
        raise DataError(f"training pool has {pool.n} rows, largest size is {n_max}")
    reps, biased, discarded = [], [], []
    for r in range(cfg.repeats):
        order = simgen.make_rng(_seed(cfg.seed, 1, r)).permutation(pool.n)
        reps.append(pool.subset(order))
        bal, dropped = _balanced_order(pool, _seed(cfg.seed, 2, r))
        biased.append(pool.subset(bal))
        discarded.append(dropped)
    return SweepData(test, None, reps, biased, discarded)


def _fit_and_predict(job):
    train_ds, weights, train_cfg, test = job
    start = time.perf_counter()
    model = mlp.train(train_ds, train_cfg, weights=weights)
    probs = mlp.predict(model, test)
    return probs, model.info["final_loss"], time.perf_counter() - start


@dataclass
class RunRecord:
    variant: str
    size: int
    repeat: int
    report: metrics.MetricReport
    kl: metrics.KlReport | None
    kl_variance: np.ndarray | None
    train_loss: float
    seconds: float = math.nan  # wall time of the shared fit; kept out of every output file


@dataclass
class SweepResult:
    config: SweepConfig
    records: list[RunRecord]
    skipped: list[dict]
    discarded: list[int]
    predictions: dict = field(default_factory=dict)

    def record(self, variant, size, repeat) -> RunRecord:
        for rec in self.records:
            if (rec.variant, rec.size, rec.repeat) == (variant, size, repeat):
                return rec
        raise KeyError((variant, size, repeat))


def _kl_variance(oracle, probs, truth, k) -> np.ndarray:
    d, _ = metrics.kl_rows(oracle, probs)
    out = np.full(k, np.nan)
    for i in range(k):
        di = d[truth == i]
        if di.size > 1:
            out[i] = di.var(ddof=1) / di.size
    return out


def run_sweep(cfg: SweepConfig, keep_predictions: bool = False) -> SweepResult:
    data = prepare_data(cfg)
    test = data.test
    k = test.class_count
    needed = sorted({TRAINED_FROM[v] for v in cfg.variants}, key=VARIANTS.index)

    jobs, keys, skipped, context = [], [], [], {}
    for size in cfg.sizes:
        for r in range(cfg.repeats):
            rep = data.representative[r].subset(slice(0, size))
            rep_prior = core.prior_from_labels(rep)
            for kind in needed:
                train_ds, weights = rep, None
                if kind == "biased":
                    train_ds = data.biased[r].subset(slice(0, size))
                if kind == "weighted":
                    try:
                        weights = core.example_weights(rep, core.balancing_weights(rep_prior))
                    except DataError as exc:
                        skipped.append({"trained": kind, "size": size, "repeat": r,
                                        "reason": str(exc)})
                        continue
                if train_ds.n < k:
                    skipped.append({"trained": kind, "size": size, "repeat": r,
                                    "reason": f"only {train_ds.n} training rows"})
                    continue
                model_prior = priors.weighted_prior(train_ds, weights)
                context[(kind, size, r)] = (model_prior, rep_prior)
                jobs.append((train_ds, weights, cfg.train, test))
                keys.append((kind, size, r))

    trained = {}
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_fit_and_predict, job) for job in jobs]
            for key, fut in zip(keys, futures):
                try:
                    trained[key] = fut.result()
                except Exception as exc:
                    raise SweepError(*key, exc) from exc
    else:
        for key, job in zip(keys, jobs):
            log.info("training %s size=%d repeat=%d", *key)
            try:
                trained[key] = _fit_and_predict(job)
            except Exception as exc:
                raise SweepError(*key, exc) from exc

    records, kept = [], {}
    for size in cfg.sizes:
        for r in range(cfg.repeats):
            assigned_seed = _seed(cfg.seed, 3, size, r)
            for variant in cfg.variants:
                key = (TRAINED_FROM[variant], size, r)
                if key not in trained:
                    continue
                probs, train_loss, seconds = trained[key]
                model_prior, rep_prior = context[key]
                try:
                    if variant in ("deweighted", "debiased"):
                        probs = priors.deweight(probs, model_prior, rep_prior)
                    assigned = stochastic_classify(probs, assigned_seed)
                    report = metrics.overshoot(probs, assigned, test.labels)
                    kl = kl_var = None
                    if data.oracle is not None:
                        kl = metrics.mean_kl_by_class(data.oracle, probs, test.labels)
                        kl_var = _kl_variance(data.oracle, probs, test.labels, k)
                except Exception as exc:
                    raise SweepError(variant, size, r, exc) from exc
                records.append(RunRecord(variant, size, r, report, kl, kl_var, train_loss, seconds))
                if keep_predictions:
                    kept[(variant, size, r)] = probs
    return SweepResult(cfg, records, skipped, data.discarded, kept)


# -- tables ------------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    variant: str
    cls: int
    size: int
    metric: str
    value: float
    variance: float


def _nanmean(values) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else math.nan


def _mean_variance(variances) -> float:
    arr = np.asarray(variances, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.sum() / arr.size**2) if arr.size else math.nan


@dataclass
class SweepTables:
    """Repeat-averaged long-format tables.

    ``overshoot`` has one row per (variant, class, size, metric) with metric
    in completeness/reliability/f1; ``kl`` one row per (variant, class, size)
    and is empty when no oracle exists.
    """
    overshoot: list[Row]
    kl: list[Row]

    def __bool__(self) -> bool:
        return bool(self.overshoot or self.kl)


def summarize(result: SweepResult) -> SweepTables:
    cfg = result.config
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in result.records:
        groups.setdefault((rec.variant, rec.size), []).append(rec)
    over, kl = [], []
    k = result.records[0].report.class_count if result.records else 0
    for variant in cfg.variants:
        for cls in range(k):
            for size in cfg.sizes:
                recs = groups.get((variant, size), [])
                if not recs:
                    continue
                for m in metrics.METRICS:
                    over.append(Row(variant, cls, size, m,
                                    _nanmean([r.report.overshoot[m][cls] for r in recs]),
                                    _mean_variance([r.report.variance[m][cls] for r in recs])))
                if recs[0].kl is not None:
                    kl.append(Row(variant, cls, size, "kl",
                                  _nanmean([r.kl.per_class[cls] for r in recs]),
                                  _mean_variance([r.kl_variance[cls] for r in recs])))
    return SweepTables(over, kl)


def _cell(value: float) -> str:
    return "" if not math.isfinite(value) else repr(float(value))


def write_table_csv(rows: list[Row], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "class", "size", "metric", "value", "variance"])
        for row in rows:
            writer.writerow([row.variant, row.cls, row.size, row.metric,
                             _cell(row.value), _cell(row.variance)])


def read_table_csv(path) -> list[Row]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [Row(r["variant"], int(r["class"]), int(r["size"]), r["metric"],
                    float(r["value"]) if r["value"] else math.nan,
                    float(r["variance"]) if r["variance"] else math.nan)
                for r in reader]


def write_runs_csv(result: SweepResult, path) -> None:
    """Per-repeat detail: one line per (variant, size, repeat, class, metric)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "size", "repeat", "class", "metric",
                         "observed", "predicted", "variance", "overshoot", "z"])
        for rec in result.records:
            rep = rec.report
            for cls in range(rep.class_count):
                for m in metrics.METRICS:
                    writer.writerow([rec.variant, rec.size, rec.repeat, cls, m,
                                     _cell(rep.observed[m][cls]), _cell(rep.predicted[m][cls]),
                                     _cell(rep.variance[m][cls]), _cell(rep.overshoot[m][cls]),
                                     _cell(rep.z[m][cls])])
                if rec.kl is not None:
                    writer.writerow([rec.variant, rec.size, rec.repeat, cls, "kl",
                                     "", _cell(rec.kl.per_class[cls]),
                                     _cell(rec.kl_variance[cls]), "", ""])


def _row_dict(row: Row) -> dict:
    out = asdict(row)
    for key in ("value", "variance"):
        if not math.isfinite(out[key]):
            out[key] = None
    return out


def summary_dict(result: SweepResult | None, tables: SweepTables) -> dict:
    out = {"overshoot": [_row_dict(r) for r in tables.overshoot],
           "kl": [_row_dict(r) for r in tables.kl]}
    if result is None:
        return out
    return {
        "config": result.config.to_dict(),
        "skipped": result.skipped,
        "discarded_for_biased_subsets": result.discarded,
        "runs": [{"variant": r.variant, "size": r.size, "repeat": r.repeat,
                  "train_loss": r.train_loss, "max_abs_z": r.report.max_abs_z(),
                  "kl": None if r.kl is None else r.kl.to_dict()} for r in result.records],
        **out,
    }


# -- SVG ---------------------------------------------------------------------

COLORS = {"base": "#222222", "weighted": "#d62728", "deweighted": "#ff9896",
          "biased": "#1f77b4", "debiased": "#aec7e8"}


def _panel(rows, x0, y0, w, h, title, sizes):
    parts = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#999"/>',
             f'<text x="{x0 + w / 2:.1f}" y="{y0 - 6}" font-size="11" '
             f'text-anchor="middle">{escape(title)}</text>']
    pts = [(r.size, r.value, r.variance) for r in rows if math.isfinite(r.value)]
    if not pts:
        return parts
    lx = [math.log10(s) for s in sizes]
    xmin, xmax = min(lx), max(lx)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    lo = [v - math.sqrt(s) if math.isfinite(s) else v for _, v, s in pts]
    hi = [v + math.sqrt(s) if math.isfinite(s) else v for _, v, s in pts]
    ymin, ymax = min(lo), max(hi)
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5

    def sx(size):
        return x0 + (math.log10(size) - xmin) / (xmax - xmin) * w

    def sy(v):
        return y0 + h - (v - ymin) / (ymax - ymin) * h

    by_variant: dict[str, list] = {}
    for r in rows:
        if math.isfinite(r.value):
            by_variant.setdefault(r.variant, []).append(r)
    for variant, vr in by_variant.items():
        color = COLORS.get(variant, "#555")
        upper = [(sx(r.size), sy(r.value + math.sqrt(r.variance) if math.isfinite(r.variance)
                                 else r.value)) for r in vr]
        lower = [(sx(r.size), sy(r.value - math.sqrt(r.variance) if math.isfinite(r.variance)
                                 else r.value)) for r in vr]
        band = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(r.size):.2f},{sy(r.value):.2f}" for r in vr)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"><title>{escape(variant)}</title></polyline>')
    if ymin < 0 < ymax:
        parts.append(f'<line x1="{x0}" x2="{x0 + w}" y1="{sy(0):.2f}" y2="{sy(0):.2f}" '
                     f'stroke="#bbb" stroke-dasharray="3,3"/>')
    parts.append(f'<text x="{x0}" y="{y0 + h + 12}" font-size="9">{ymin:.3g}..{ymax:.3g}, '
                 f'N={min(sizes)}..{max(sizes)} (log)</text>')
    return parts


def render_svg(rows: list[Row], metric_rows: list[str], title: str) -> str:
    classes = sorted({r.cls for r in rows})
    variants = [v for v in VARIANTS if any(r.variant == v for r in rows)]
    sizes = sorted({r.size for r in rows})
    pw, ph, margin = 220, 150, 40
    width = margin + len(classes) * (pw + margin)
    height = 60 + len(metric_rows) * (ph + margin) + 20
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif">',
             f'<text x="{margin}" y="18" font-size="13">{escape(title)}</text>']
    for i, v in enumerate(variants):
        parts.append(f'<text x="{margin + i * 90}" y="36" font-size="11" '
                     f'fill="{COLORS.get(v, "#555")}">{escape(v)}</text>')
    for ri, metric in enumerate(metric_rows):
        for ci, cls in enumerate(classes):
            panel_rows = [r for r in rows if r.metric == metric and r.cls == cls]
            parts += _panel(panel_rows, margin + ci * (pw + margin), 60 + ri * (ph + margin),
                            pw, ph, f"class {cls}: {metric}", sizes)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(tables: SweepTables, out_dir, formats=("csv", "json", "svg"),
                result: SweepResult | None = None) -> list[Path]:
    if not tables:
        raise ValueError("nothing to emit: the result tables are empty")
    unknown = set(formats) - {"csv", "json", "svg"}
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        (out / name).write_text(text, encoding="utf-8")
        written.append(out / name)

    if "csv" in formats:
        write_table_csv(tables.overshoot, out / "overshoot.csv")
        written.append(out / "overshoot.csv")
        if tables.kl:
            write_table_csv(tables.kl, out / "kl.csv")
            written.append(out / "kl.csv")
        if result is not None:
            write_runs_csv(result, out / "runs.csv")
            written.append(out / "runs.csv")
    if "json" in formats:
        put("summary.json", json.dumps(summary_dict(result, tables), indent=1) + "\n")
    if "svg" in formats:
        if tables.overshoot:
            put("overshoot.svg", render_svg(tables.overshoot, list(metrics.METRICS),
                                            "Overshoot (observed - predicted) vs N"))
        if tables.kl:
            put("kl.svg", render_svg(tables.kl, ["kl"], "Mean KL(true || model) vs N"))
    return written
