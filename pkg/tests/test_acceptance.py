"""End-to-end acceptance checks, one test per criterion C1..C9.

Dataset-backed criteria read their inputs from the environment:

    COCONET_CIFAR10   CIFAR-10 test_batch.bin (or the directory holding it)
    COCONET_SET5      directory with baby, bird, butterfly, head and woman images

and skip with a clear reason when the variable is unset. The 50-image denoising
headline run (tens of minutes) also needs COCONET_ACCEPTANCE_FULL=1; without it
the 10-image smoke variant runs instead.
"""

import os
import tempfile
import time

import numpy as np
import pytest

from acceptance_log import criterion
from conftest import CIFAR_ENV, SET5_ENV, dataset_path
from oracles import fd_gradients, naive_psnr, naive_ssim, relative_error
from coconet import harness as H
from coconet.dataio import load_cifar10_test, load_model, read_image, save_model
from coconet.metrics import psnr, ssim
from coconet.model import TrainConfig, reconstruct, square_mask, train
from coconet.nn_core import NetworkArch, NetworkParams, backward, init_params

pytestmark = pytest.mark.acceptance

FULL_ENV = "COCONET_ACCEPTANCE_FULL"
WORKERS = os.cpu_count() or 1


def need(env):
    path = dataset_path(env)
    if path is None or not path.exists():
        pytest.skip(f"dataset missing: set {env}")
    return path


def test_c1_noise_calibration():
    with criterion("C1") as notes:
        report = _cifar_report()
        p10, s10 = report.mean("noisy", 10.0)
        p20, _ = report.mean("noisy", 20.0)
        notes.append(f"noisy PSNR s10={p10:.2f} s20={p20:.2f} SSIM s10={s10:.4f}")
        assert abs(p10 - 28.26) <= 0.4
        assert abs(p20 - 22.36) <= 0.4
        assert abs(s10 - 0.8928) <= 0.02


def test_c2_filter_ordering():
    with criterion("C2") as notes:
        report = _cifar_report()
        published = {"bilateral3x3": 0.9475, "gaussian3x3": 0.9057, "median3x3": 0.8732, "mean3x3": 0.8598}
        got = {m: report.mean(m, 10.0)[1] for m in published}
        notes.append(" > ".join(f"{m}={v:.4f}" for m, v in got.items()))
        order = list(published)
        assert all(got[a] > got[b] for a, b in zip(order, order[1:]))
        for m, v in published.items():
            assert abs(got[m] - v) <= 0.03, m


_CIFAR_CACHE = {}


def _cifar_report():
    # shared by C1 and C2 without making either depend on the other's pass/fail
    if "report" not in _CIFAR_CACHE:
        path = need(CIFAR_ENV)
        run = H.BenchmarkRun(
            "denoise", tempfile.mkdtemp(prefix="coconet_c12_"), cifar_path=path, subset_size=50, sigmas=(10.0, 20.0),
            methods=tuple(m for m in H.DENOISE_METHODS if m != "coconet"), save_images=0,
        )
        _CIFAR_CACHE["report"] = H.run_denoise_benchmark(run)
    return _CIFAR_CACHE["report"]


def test_c3_denoising_headline(tmp_path):
    with criterion("C3") as notes:
        path = need(CIFAR_ENV)
        full = os.environ.get(FULL_ENV) == "1"
        n, floor = (50, 0.93) if full else (10, 0.92)
        notes.append(f"{'full' if full else 'smoke'} n={n} workers={WORKERS}")
        run = H.BenchmarkRun(
            "denoise", tmp_path, cifar_path=path, subset_size=n, sigmas=(10.0,), config=H.denoise_config(),
            workers=WORKERS, save_images=0,
        )
        t0 = time.perf_counter()
        report = H.run_denoise_benchmark(run)
        elapsed = time.perf_counter() - t0
        coco = report.mean("coconet", 10.0)[1]
        rivals = {m: report.mean(m, 10.0)[1] for m in H.DENOISE_METHODS if m.startswith(("mean", "gaussian", "median"))}
        best = max(rivals, key=rivals.get)
        notes.append(f"CocoNet SSIM={coco:.4f} best rival {best}={rivals[best]:.4f} in {elapsed:.0f}s")
        assert coco >= floor
        assert all(coco > v for v in rivals.values())
        if not full:
            assert elapsed < 600


def _memorization_curve(img):
    res = H.run_memorize_demo(img, H.denoise_config(), None, snapshot_epochs=(10, 100, 3000))
    return [res.psnr_curve[e] for e in (10, 100, 3000)]


def test_c4_memorization():
    with criterion("C4") as notes:
        img = load_cifar10_test(need(CIFAR_ENV))[0][0]
        curve = _memorization_curve(img)
        notes.append("CIFAR-10 test image 0, PSNR@10/100/3000=" + "/".join(f"{p:.2f}" for p in curve))
        assert curve[-1] >= 30
        assert H.non_decreasing(curve)


def test_memorization_timeline_on_proxy(natural32):
    """Same schedule as C4 on a natural proxy image; 28 dB is a regression floor measured here, not the criterion."""
    if dataset_path(CIFAR_ENV) is not None:
        pytest.skip("CIFAR-10 available; C4 covers this")
    curve = _memorization_curve(natural32)
    print("proxy memorization PSNR@10/100/3000=" + "/".join(f"{p:.2f}" for p in curve))
    assert H.non_decreasing(curve)
    assert curve[-1] >= 28


def test_c5_upsampling():
    with criterion("C5") as notes:
        path = need(SET5_ENV)
        run = H.BenchmarkRun("upsample", tempfile.mkdtemp(prefix="coconet_c5_"), set5_dir=path, workers=WORKERS)
        report = H.run_upsample_benchmark(run)
        score = {(r.image_id, r.method): (r.psnr_db, r.ssim) for r in report.records}
        notes.append(
            " ".join(
                f"{n}:bic={score[(n, 'bicubic')][0]:.2f}/{score[(n, 'bicubic')][1]:.4f}"
                f",coco={score.get((n, 'coconet'), (float('nan'),) * 2)[0]:.2f}"
                f"/{score.get((n, 'coconet'), (float('nan'),) * 2)[1]:.4f}"
                for n in H.SET5_NAMES
            )
        )
        assert abs(score[("butterfly", "bicubic")][0] - 19.93) <= 0.6
        for n in ("butterfly", "woman"):
            assert score[(n, "coconet")][0] > score[(n, "bicubic")][0], n
        for n in ("butterfly", "head", "woman"):
            assert score[(n, "coconet")][1] > score[(n, "bicubic")][1], n


def test_c6_gradient_oracle():
    with criterion("C6") as notes:
        rng = np.random.default_rng(20240)
        worst = 0.0
        for k in range(25):
            widths = tuple(int(w) for w in rng.integers(1, 7, size=rng.integers(0, 4)))
            arch = NetworkArch(widths)
            params = init_params(arch, seed=k)
            # move away from the zero-bias init so every bias gradient is exercised
            params = NetworkParams(arch, params.weights, [rng.normal(0, 0.5, b.shape) for b in params.biases])
            n = int(rng.integers(1, 6))
            x, t = rng.random((n, 6)), rng.random((n, 3))
            _, g = backward(params, x, t)
            fw, fb = fd_gradients(params.weights, params.biases, x, t, h=1e-5)
            for a, b in zip(g.weights + g.biases, fw + fb):
                worst = max(worst, relative_error(a, b))
        notes.append(f"max relative error {worst:.2e} over 25 networks")
        assert worst < 1e-4


def test_c7_metric_oracles():
    with criterion("C7") as notes:
        rng = np.random.default_rng(7)
        dp = ds = 0.0
        for _ in range(100):
            a = rng.random((16, 16, 3))
            b = np.clip(a + rng.normal(0, rng.uniform(0.01, 0.3), a.shape), 0, 1)
            dp = max(dp, abs(psnr(a, b) - naive_psnr(a, b)))
            ds = max(ds, abs(ssim(a, b) - naive_ssim(a, b)))
        notes.append(f"max |dPSNR|={dp:.1e} max |dSSIM|={ds:.1e}")
        assert dp <= 1e-9
        assert ds <= 1e-6


def test_c8_codec_round_trip(tmp_path):
    with criterion("C8") as notes:
        rng = np.random.default_rng(8)
        for k in range(10):
            h, w = (int(v) for v in rng.integers(3, 12, 2))
            widths = tuple(int(v) for v in rng.integers(2, 16, size=rng.integers(1, 4)))
            dtype = ("float64", "float32")[k % 2]
            cfg = TrainConfig(arch=NetworkArch(widths), lr=1e-2, epochs=int(rng.integers(1, 20)), seed=k, dtype=dtype)
            model = train(rng.random((h, w, 3)), None, cfg).model
            p = tmp_path / f"m{k}.ccn"
            save_model(p, model)
            back = load_model(p)
            oh, ow = (int(v) for v in rng.integers(1, 40, 2))
            for size in ((h, w), (oh, ow)):
                np.testing.assert_array_equal(reconstruct(back, *size), reconstruct(model, *size))
        notes.append("10 models bit-identical at source and random sizes")


def _completion(tmp_root):
    path = need(SET5_ENV)
    run = H.BenchmarkRun("complete", tmp_root, set5_dir=path, workers=WORKERS)
    return run, H.run_completion_demo(run)


_SET5_COMPLETION = {}


def _completion_cached():
    if "res" not in _SET5_COMPLETION:
        _SET5_COMPLETION["res"] = _completion(tempfile.mkdtemp(prefix="coconet_c9_"))
    return _SET5_COMPLETION["res"]


def test_c9_completion():
    with criterion("C9") as notes:
        _, recs = _completion_cached()
        notes.append(" ".join(f"{r.image_id}={r.observed_psnr_db:.2f}dB" for r in recs))
        assert [r.image_id for r in recs] == list(H.SET5_NAMES)
        for r in recs:
            assert r.observed_psnr_db >= 28, r.image_id
            assert 0 < r.masked_min and r.masked_max < 1, r.image_id


def test_completion_patch_is_smooth_on_set5():
    """The filled patch has no gradient larger than the observed region's 99th percentile."""
    run, recs = _completion_cached()
    for i, r in enumerate(recs):
        out = read_image(run.out_dir / f"{r.image_id}_completed.ppm")
        mask, _ = square_mask(*out.shape[:2], np.random.default_rng(H.image_seed(run.master_seed, i)))
        gy, gx = np.gradient(out, axis=(0, 1))
        mag = np.sqrt(gy**2 + gx**2).max(axis=-1)
        assert mag[~mask].max() < np.percentile(mag[mask], 99), r.image_id
