"""Benchmark orchestration: denoising, 4x upsampling, completion and memorization runs."""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import baselines
from .dataio import load_cifar10_test, read_image, write_image
from .errors import CocoNetError, DatasetError, InvalidInputError, TrainingDivergedError
from .metrics import MetricsReport, masked_psnr, psnr, ssim
from .model import TrainConfig, reconstruct, square_mask, train
from .nn_core import NetworkArch

log = logging.getLogger(__name__)

SET5_NAMES = ("baby", "bird", "butterfly", "head", "woman")
# Published kernel-ridge-regression super-resolution PSNRs, quoted for reference only.
TANG_PSNR = {"baby": 29.70, "bird": 27.84, "butterfly": 20.61, "head": 29.83, "woman": 24.46}
MAX_DIVERGENCE_RATE = 0.05
CSV_HEADER = ("image_id", "method", "sigma", "psnr_db", "ssim")


class DivergenceRateExceeded(CocoNetError):
    pass


def denoise_config(**overrides) -> TrainConfig:
    return TrainConfig(arch=NetworkArch.uniform(15, 200), epochs=3000, batch_size="auto").with_(**overrides)


def set5_config(**overrides) -> TrainConfig:
    return TrainConfig(
        arch=NetworkArch.uniform(10, 200), epochs=1500, batch_size="auto", plateau_window=100, plateau_tol=1e-6
    ).with_(**overrides)


def image_seed(master_seed: int, index: int) -> int:
    """Per-image seed that depends only on (master seed, image index)."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def noise_seed(seed: int, sigma_index: int, sigma: float) -> int:
    return int(np.random.SeedSequence([seed, sigma_index, int(round(sigma * 1000))]).generate_state(1)[0])


@dataclass
class BenchmarkRun:
    experiment: str
    out_dir: Path
    cifar_path: Optional[Path] = None
    set5_dir: Optional[Path] = None
    subset_size: int = 50
    sigmas: tuple[float, ...] = (10.0, 20.0)
    methods: Optional[tuple[str, ...]] = None
    config: Optional[TrainConfig] = None
    master_seed: int = 0
    workers: int = 1
    save_images: int = 3
    set5_names: tuple[str, ...] = SET5_NAMES
    gaussian_sigmas: Optional[dict[int, float]] = None
    bilateral_spatial: Optional[float] = None
    bilateral_range: Optional[float] = None

    def __post_init__(self):
        if self.experiment not in ("denoise", "upsample", "complete", "memorize"):
            raise InvalidInputError(f"unknown experiment {self.experiment!r}")
        if self.subset_size < 1:
            raise InvalidInputError("subset_size must be >= 1")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if any(s < 0 for s in self.sigmas):
            raise InvalidInputError("noise sigmas must be >= 0")
        self.out_dir = Path(self.out_dir)


# --- output helpers -------------------------------------------------------------


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name).lstrip(".") or "_"


def _out_path(out_dir: Path, name: str) -> Path:
    out_dir = out_dir.resolve()
    p = (out_dir / _safe_name(name)).resolve()
    if p.parent != out_dir:
        raise InvalidInputError(f"refusing to write outside {out_dir}: {name}")
    return p


def records_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.records:
        w.writerow((r.image_id, r.method, f"{r.sigma:g}", repr(r.psnr_db), repr(r.ssim)))
    return buf.getvalue()


def read_records_csv(text: str) -> MetricsReport:
    report = MetricsReport()
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected header {rows.fieldnames}")
    for row in rows:
        report.add(row["image_id"], row["method"], float(row["sigma"]), float(row["psnr_db"]), float(row["ssim"]))
    return report


def _method_label(method: str, depth: int) -> str:
    if method == "noisy":
        return "Noisy image"
    if method == "coconet":
        return f"CocoNet ({depth} layers)"
    m = re.fullmatch(r"([a-z]+)(\d)x\d", method)
    if m:
        kind, k = m.groups()
        return f"{k}x{k} {kind} filter"
    return method


def denoise_table(report: MetricsReport, depth: int = 15) -> str:
    agg = report.aggregate()
    sigmas = report.sigmas()
    head = f"{'Method':<24}" + "".join(f"| sigma={s:g} PSNR  SSIM   " for s in sigmas)
    lines = [head, "-" * len(head)]
    for m in report.methods():
        cells = []
        for s in sigmas:
            if (m, s) in agg:
                p, q, _ = agg[(m, s)]
                cells.append(f"| {p:>12.2f} {q:.4f} ")
            else:
                cells.append(f"| {'-':>12} {'-':>6} ")
        lines.append(f"{_method_label(m, depth):<24}" + "".join(cells))
    return "\n".join(lines) + "\n"


def upsample_table(report: MetricsReport, depth: int = 10) -> str:
    agg = {(r.image_id, r.method): r for r in report.records}
    ids = list(dict.fromkeys(r.image_id for r in report.records))
    head = f"{'Image':<12}| Bicubic PSNR  SSIM  | Tang et al.* PSNR | CocoNet ({depth} layers) PSNR  SSIM"
    lines = [head, "-" * len(head)]
    for i in ids:
        b, c = agg.get((i, "bicubic")), agg.get((i, "coconet"))
        tang = TANG_PSNR.get(i)
        lines.append(
            f"{i:<12}| {b.psnr_db if b else float('nan'):>12.2f} {b.ssim if b else float('nan'):.4f} "
            f"| {tang if tang is not None else float('nan'):>17.2f} "
            f"| {c.psnr_db if c else float('nan'):>23.2f} {c.ssim if c else float('nan'):.4f}"
        )
    lines.append("* external method; published values quoted, not computed")
    return "\n".join(lines) + "\n"


def _write_outputs(run: BenchmarkRun, stem: str, report: MetricsReport, table: str) -> None:
    run.out_dir.mkdir(parents=True, exist_ok=True)
    _out_path(run.out_dir, f"{stem}_records.csv").write_text(records_csv(report))
    _out_path(run.out_dir, f"{stem}_table.txt").write_text(table)


def _pmap(fn: Callable, jobs: Sequence, workers: int) -> list:
    """Map in job order; results are merged by index regardless of completion order."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _check_divergence(n_diverged: int, n_total: int) -> None:
    if n_total and n_diverged / n_total > MAX_DIVERGENCE_RATE:
        raise DivergenceRateExceeded(f"{n_diverged} of {n_total} trainings diverged (limit {MAX_DIVERGENCE_RATE:.0%})")


# --- denoising ------------------------------------------------------------------


DENOISE_METHODS = ("noisy",) + tuple(f.label for f in baselines.table1_filters()) + ("coconet",)


@dataclass
class _DenoiseJob:
    index: int
    clean: np.ndarray
    sigmas: tuple[float, ...]
    methods: tuple[str, ...]
    filters: list
    config: TrainConfig
    seed: int


def _denoise_one(job: _DenoiseJob) -> tuple[list[tuple], dict[str, np.ndarray], list[float]]:
    rows, images, diverged = [], {}, []
    filters = {f.label: f for f in job.filters}
    for k, sigma in enumerate(job.sigmas):
        noisy = baselines.add_gaussian_noise(job.clean, baselines.NoiseSpec(sigma, noise_seed(job.seed, k, sigma)))
        images[f"s{sigma:g}_noisy"] = noisy
        for m in job.methods:
            if m == "noisy":
                out = noisy
            elif m == "coconet":
                try:
                    res = train(noisy, None, job.config.with_(seed=job.seed))
                except TrainingDivergedError as e:
                    log.warning("image %d sigma %g: %s", job.index, sigma, e)
                    diverged.append(sigma)
                    continue
                out = reconstruct(res.model, *noisy.shape[:2])
            else:
                out = filters[m].apply(noisy)
            images[f"s{sigma:g}_{m}"] = out
            rows.append((job.index, m, sigma, psnr(job.clean, out), ssim(job.clean, out)))
    return rows, images, diverged


def run_denoise_benchmark(run: BenchmarkRun, images: Optional[Sequence[np.ndarray]] = None) -> MetricsReport:
    """Noise every image at each sigma, denoise with every method, score against the clean image.

    ``images`` overrides loading the CIFAR-10 test batch (used for synthetic runs).
    """
    if images is None:
        if run.cifar_path is None:
            raise DatasetError("denoise benchmark needs a CIFAR-10 test batch path")
        images = [img for img, _ in load_cifar10_test(run.cifar_path)[: run.subset_size]]
    else:
        images = list(images)[: run.subset_size]
    methods = tuple(run.methods or DENOISE_METHODS)
    filters = baselines.table1_filters(run.gaussian_sigmas, run.bilateral_spatial, run.bilateral_range)
    unknown = set(methods) - set(DENOISE_METHODS)
    if unknown:
        raise InvalidInputError(f"unknown denoising methods {sorted(unknown)}")
    config = run.config or denoise_config()
    jobs = [
        _DenoiseJob(i, img, tuple(run.sigmas), methods, filters, config, image_seed(run.master_seed, i))
        for i, img in enumerate(images)
    ]
    results = _pmap(_denoise_one, jobs, run.workers)

    report = MetricsReport()
    n_div = 0
    for job, (rows, imgs, diverged) in zip(jobs, results):
        n_div += len(diverged)
        for r in rows:
            report.add(*r)
        if job.index < run.save_images:
            run.out_dir.mkdir(parents=True, exist_ok=True)
            write_image(_out_path(run.out_dir, f"img{job.index:05d}_clean.ppm"), job.clean)
            for name, im in imgs.items():
                write_image(_out_path(run.out_dir, f"img{job.index:05d}_{name}.ppm"), im)
    _write_outputs(run, "denoise", report, denoise_table(report, len(config.arch.hidden_widths)))
    if "coconet" in methods:
        _check_divergence(n_div, len(jobs) * len(run.sigmas))
    return report


# --- Set5 -------------------------------------------------------------------------


def find_set5_images(set5_dir, names: Iterable[str] = SET5_NAMES) -> dict[str, Path]:
    """Locate each Set5 image by name (e.g. ``butterfly.png``, ``butterfly_GT.ppm``)."""
    set5_dir = Path(set5_dir)
    if not set5_dir.is_dir():
        raise DatasetError(f"Set5 directory not found: {set5_dir}")
    files = sorted(p for p in set5_dir.rglob("*") if p.suffix.lower() in (".ppm", ".png", ".bmp"))
    found = {}
    for name in names:
        hits = [p for p in files if p.stem.lower() == name or p.stem.lower().startswith(name + "_")]
        if not hits:
            raise DatasetError(f"Set5 image {name!r} not found under {set5_dir}")
        found[name] = hits[0]
    return found


def _load_set5(run: BenchmarkRun, images: Optional[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    if images is not None:
        return dict(images)
    if run.set5_dir is None:
        raise DatasetError(f"{run.experiment} benchmark needs a Set5 directory")
    return {n: read_image(p) for n, p in find_set5_images(run.set5_dir, run.set5_names).items()}


@dataclass
class _UpsampleJob:
    index: int
    name: str
    image: np.ndarray
    factor: int
    config: TrainConfig
    seed: int


def _upsample_one(job: _UpsampleJob):
    h, w = job.image.shape[:2]
    low = baselines.benchmark_downsample(job.image, job.factor)
    bic = baselines.bicubic_resize(low, h, w)
    out = {"lowres": low, "bicubic": bic}
    rows = [(job.name, "bicubic", 0.0, psnr(job.image, bic), ssim(job.image, bic))]
    try:
        res = train(low, None, job.config.with_(seed=job.seed))
    except TrainingDivergedError as e:
        log.warning("%s: %s", job.name, e)
        return rows, out, True
    up = reconstruct(res.model, h, w)
    out["coconet"] = up
    rows.append((job.name, "coconet", 0.0, psnr(job.image, up), ssim(job.image, up)))
    return rows, out, False


def run_upsample_benchmark(
    run: BenchmarkRun, images: Optional[dict[str, np.ndarray]] = None, factor: int = 4
) -> MetricsReport:
    """Downsample by ``factor``, upsample back with bicubic and CocoNet, score against the original."""
    imgs = _load_set5(run, images)
    config = run.config or set5_config()
    jobs = [
        _UpsampleJob(i, n, im, factor, config, image_seed(run.master_seed, i)) for i, (n, im) in enumerate(imgs.items())
    ]
    results = _pmap(_upsample_one, jobs, run.workers)
    report = MetricsReport()
    run.out_dir.mkdir(parents=True, exist_ok=True)
    n_div = 0
    for job, (rows, outs, div) in zip(jobs, results):
        n_div += div
        for r in rows:
            report.add(*r)
        for k, im in outs.items():
            write_image(_out_path(run.out_dir, f"{job.name}_{k}.ppm"), im)
    _write_outputs(run, "upsample", report, upsample_table(report, len(config.arch.hidden_widths)))
    _check_divergence(n_div, len(jobs))
    return report


# --- completion -----------------------------------------------------------------


@dataclass
class CompletionRecord:
    image_id: str
    top: int
    left: int
    side: int
    observed_psnr_db: float
    masked_min: float
    masked_max: float


def _complete_one(job: _UpsampleJob):
    h, w = job.image.shape[:2]
    mask, rect = square_mask(h, w, np.random.default_rng(job.seed))
    try:
        res = train(job.image, mask, job.config.with_(seed=job.seed))
    except TrainingDivergedError as e:
        log.warning("%s: %s", job.name, e)
        return None, mask, rect
    return reconstruct(res.model, h, w), mask, rect


def run_completion_demo(
    run: BenchmarkRun, images: Optional[dict[str, np.ndarray]] = None
) -> list[CompletionRecord]:
    """Remove a random square, train on the rest, write original/masked/completed triplets."""
    imgs = _load_set5(run, images)
    config = run.config or set5_config()
    jobs = [_UpsampleJob(i, n, im, 1, config, image_seed(run.master_seed, i)) for i, (n, im) in enumerate(imgs.items())]
    results = _pmap(_complete_one, jobs, run.workers)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    records, n_div = [], 0
    for job, (out, mask, (top, left, side)) in zip(jobs, results):
        masked = job.image.copy()
        masked[~mask] = 0.0
        write_image(_out_path(run.out_dir, f"{job.name}_original.ppm"), job.image)
        write_image(_out_path(run.out_dir, f"{job.name}_masked.ppm"), masked)
        if out is None:
            n_div += 1
            continue
        write_image(_out_path(run.out_dir, f"{job.name}_completed.ppm"), out)
        hole = out[~mask]
        records.append(
            CompletionRecord(
                job.name, top, left, side, masked_psnr(job.image, out, mask), float(hole.min()), float(hole.max())
            )
        )
    lines = ["image_id,top,left,side,observed_psnr_db,masked_min,masked_max"]
    lines += [
        f"{r.image_id},{r.top},{r.left},{r.side},{r.observed_psnr_db!r},{r.masked_min!r},{r.masked_max!r}"
        for r in records
    ]
    _out_path(run.out_dir, "completion_records.csv").write_text("\n".join(lines) + "\n")
    _check_divergence(n_div, len(jobs))
    return records


# --- memorization -----------------------------------------------------------------


DEFAULT_SNAPSHOTS = (0, 10, 100, 1000, 3000)


@dataclass
class MemorizeResult:
    snapshots: dict[int, np.ndarray]
    psnr_curve: dict[int, float]
    loss_history: list[float] = field(default_factory=list)


def run_memorize_demo(
    image, config: Optional[TrainConfig] = None, out_dir=None, snapshot_epochs: Sequence[int] = DEFAULT_SNAPSHOTS
) -> MemorizeResult:
    """Train on one image and record reconstructions at the requested epochs.

    ``image`` is an array or a path to an image file.
    """
    img = read_image(image) if isinstance(image, (str, Path)) else np.asarray(image, dtype=np.float64)
    config = config or denoise_config()
    epochs = max(config.epochs, max(snapshot_epochs))
    snaps = tuple(e for e in snapshot_epochs if e <= epochs)
    res = train(img, None, config.with_(epochs=epochs, snapshot_epochs=snaps))
    curve = {e: psnr(img, s) for e, s in sorted(res.snapshots.items())}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_image(_out_path(out, "input.ppm"), img)
        for e, s in res.snapshots.items():
            write_image(_out_path(out, f"epoch{e:06d}.ppm"), s)
        text = "epoch,psnr_db\n" + "".join(f"{e},{p!r}\n" for e, p in curve.items())
        _out_path(out, "psnr_curve.csv").write_text(text)
    return MemorizeResult(res.snapshots, curve, res.loss_history)


def non_decreasing(values: Sequence[float]) -> bool:
    return all(b >= a for a, b in zip(values, values[1:])) and not any(math.isnan(v) for v in values)
