"""Command line entry point: ``coconet <denoise|upsample|complete|memorize|encode|decode>``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import harness
from .dataio import load_model, read_image, save_model, write_image
from .errors import DatasetError, FormatError, InvalidInputError, TrainingDivergedError
from .model import TrainConfig, reconstruct, train
from .nn_core import NetworkArch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_DIVERGED = 4

log = logging.getLogger("coconet")


def _training_flags(p: argparse.ArgumentParser, depth: int, epochs: int) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--depth", type=int, default=depth, help=f"hidden layers (default {depth})")
    g.add_argument("--width", type=int, default=200, help="neurons per hidden layer (default 200)")
    g.add_argument("--lr", type=float, default=1e-4)
    g.add_argument("--epochs", type=int, default=epochs)
    g.add_argument("--batch-size", default="auto", help="'auto', 'full' or an integer")
    g.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--workers", type=int, default=1, help="images trained in parallel")


def _config(args, **extra) -> TrainConfig:
    bs = args.batch_size
    if bs == "full":
        bs = None
    elif bs != "auto":
        try:
            bs = int(bs)
        except ValueError:
            raise InvalidInputError(f"--batch-size must be 'auto', 'full' or an integer, got {bs!r}") from None
    if args.depth < 0 or args.width < 1:
        raise InvalidInputError("--depth must be >= 0 and --width >= 1")
    return TrainConfig(
        arch=NetworkArch.uniform(args.depth, args.width),
        lr=args.lr,
        epochs=args.epochs,
        batch_size=bs,
        seed=args.seed,
        dtype=args.dtype,
        **extra,
    )


def _sigmas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sigma list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coconet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoising benchmark on CIFAR-10, or denoise one image")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cifar", type=Path, help="CIFAR-10 test_batch.bin (or its directory)")
    src.add_argument("--image", type=Path, help="denoise a single noisy image instead")
    p.add_argument("--subset", type=int, default=50, help="number of test images (10000 = full set, hours)")
    p.add_argument("--sigmas", type=_sigmas, default=(10.0, 20.0), help="noise std on the 0-255 scale, comma list")
    p.add_argument("--methods", default=None, help="comma list from: " + ",".join(harness.DENOISE_METHODS))
    p.add_argument("--save-images", type=int, default=3, help="write result images for the first N test images")
    p.add_argument("--out", type=Path, required=True)
    _training_flags(p, depth=15, epochs=3000)

    for name, helptext in (("upsample", "4x upsampling benchmark on Set5"), ("complete", "completion demo on Set5")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--set5", type=Path, required=True, help="directory holding the five Set5 images")
        p.add_argument("--images", default=None, help="comma list of Set5 names (default all five)")
        p.add_argument("--out", type=Path, required=True)
        _training_flags(p, depth=10, epochs=1500)
        p.add_argument("--plateau-window", type=int, default=100, help="early-stop window in epochs, 0 disables")

    p = sub.add_parser("memorize", help="snapshot the reconstruction of one image during training")
    p.add_argument("image", type=Path)
    p.add_argument("--snapshots", default="0,10,100,1000,3000")
    p.add_argument("--out", type=Path, required=True)
    _training_flags(p, depth=15, epochs=3000)

    p = sub.add_parser("encode", help="train on an image and save the network as an encoded image")
    p.add_argument("image", type=Path)
    p.add_argument("model", type=Path)
    _training_flags(p, depth=15, epochs=3000)

    p = sub.add_parser("decode", help="render an encoded image at any resolution")
    p.add_argument("model", type=Path)
    p.add_argument("image", type=Path)
    size = p.add_mutually_exclusive_group()
    size.add_argument("--scale", type=float, default=None)
    size.add_argument("--size", default=None, help="HEIGHTxWIDTH")
    return parser


def _run(args) -> int:
    cmd = args.command
    if cmd == "denoise":
        config = _config(args)
        if args.image is not None:
            noisy = read_image(args.image)
            res = train(noisy, None, config)
            args.out.mkdir(parents=True, exist_ok=True)
            write_image(args.out / "denoised.ppm", reconstruct(res.model, *noisy.shape[:2]))
            return EXIT_OK
        methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else None
        run = harness.BenchmarkRun(
            "denoise",
            args.out,
            cifar_path=args.cifar,
            subset_size=args.subset,
            sigmas=args.sigmas,
            methods=methods,
            config=config,
            master_seed=args.seed,
            workers=args.workers,
            save_images=args.save_images,
        )
        report = harness.run_denoise_benchmark(run)
        print(harness.denoise_table(report, args.depth), end="")
        return EXIT_OK

    if cmd in ("upsample", "complete"):
        config = _config(args, plateau_window=args.plateau_window or None)
        names = tuple(n.strip() for n in args.images.split(",")) if args.images else harness.SET5_NAMES
        run = harness.BenchmarkRun(
            cmd, args.out, set5_dir=args.set5, config=config, master_seed=args.seed, workers=args.workers,
            set5_names=names,
        )
        if cmd == "upsample":
            report = harness.run_upsample_benchmark(run)
            print(harness.upsample_table(report, args.depth), end="")
        else:
            for r in harness.run_completion_demo(run):
                print(f"{r.image_id:<10} patch top={r.top} left={r.left} side={r.side}  observed PSNR {r.observed_psnr_db:.2f} dB")
        return EXIT_OK

    if cmd == "memorize":
        snaps = tuple(int(s) for s in args.snapshots.split(",") if s.strip())
        res = harness.run_memorize_demo(args.image, _config(args), args.out, snaps)
        for e, p in res.psnr_curve.items():
            print(f"epoch {e:>6}  PSNR {p:6.2f} dB")
        return EXIT_OK

    if cmd == "encode":
        img = read_image(args.image)
        res = train(img, None, _config(args))
        save_model(args.model, res.model)
        print(f"encoded {img.shape[0]}x{img.shape[1]} image, final loss {res.model.final_loss:.3g}")
        return EXIT_OK

    if cmd == "decode":
        model = load_model(args.model)
        h, w = model.source_height, model.source_width
        if args.size:
            try:
                h, w = (int(v) for v in args.size.lower().split("x"))
            except ValueError:
                raise InvalidInputError(f"--size must look like 128x128, got {args.size!r}") from None
        elif args.scale:
            h, w = max(1, math.ceil(h * args.scale)), max(1, math.ceil(w * args.scale))
        if h < 1 or w < 1:
            raise InvalidInputError("output size must be positive")
        write_image(args.image, reconstruct(model, h, w))
        return EXIT_OK
    raise AssertionError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (harness.DivergenceRateExceeded, TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DatasetError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATASET
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
