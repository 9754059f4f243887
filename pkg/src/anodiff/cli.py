"""Operator surface: data generation, training, detection, sweeps, evaluation.

Every command exits 0 on success and nonzero with a one-line error on
stderr otherwise, and writes a resolved-config snapshot next to its outputs
so any run can be reproduced from the snapshot alone. The per-image wall
times of `detect` go to a separate timings.txt, keeping every CSV
byte-reproducible.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import backend as kernel_backend
from .analytic import (AnalyticClassGrad, AnalyticEpsilon, GaussianDataModel,
                       TwoClassModel)
from .config import RunConfig, apply_overrides, read_config, write_config
from .data import (GenConfig, generate_toy_dataset, load_dataset, load_image,
                   save_image, save_pgm)
from .metrics import evaluate_set
from .nets import (ClassifierGrad, TrainConfig, load_checkpoint,
                   save_checkpoint, train_classifier, train_denoiser)
from .pipeline import DetectionResult, detect
from .schedule import linear_beta_schedule

SWEEP_HEADER = "s,L,mean_dice,pixel_auroc,image_auroc,n_images"
DETECTIONS_HEADER = "index,file,score,s,L,h"


def build_schedule(cfg):
    return linear_beta_schedule(cfg.T, cfg.beta_start, cfg.beta_end)


def build_analytic_models(cfg, schedule):
    healthy = GaussianDataModel(mu=cfg.analytic_mu_healthy,
                                var=cfg.analytic_var_healthy)
    diseased = GaussianDataModel(mu=cfg.analytic_mu_diseased,
                                 var=cfg.analytic_var_diseased)
    two_class = TwoClassModel(class_h=healthy, class_d=diseased,
                              prior_h=cfg.analytic_prior_healthy)
    return AnalyticEpsilon(healthy, schedule), AnalyticClassGrad(two_class, schedule)


def load_models(cfg, schedule):
    if cfg.model_backend == "analytic":
        return build_analytic_models(cfg, schedule)
    denoiser = load_checkpoint(os.path.join(cfg.output_dir, "denoiser.ckpt"))
    classifier = load_checkpoint(os.path.join(cfg.output_dir, "classifier.ckpt"))
    if denoiser.T != cfg.T or classifier.T != cfg.T:
        raise ValueError("checkpoint T does not match the configured schedule")
    return denoiser, ClassifierGrad(classifier)


def _snapshot(cfg, command):
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_config(os.path.join(cfg.output_dir, f"resolved_config_{command}.txt"), cfg)


def _gen_config(cfg):
    return GenConfig(
        seed=cfg.seed, channels=cfg.channels, height=cfg.height, width=cfg.width,
        train_healthy=cfg.train_healthy, train_diseased=cfg.train_diseased,
        test_healthy=cfg.test_healthy, test_diseased=cfg.test_diseased,
        lesion_offset=cfg.lesion_offset,
        lesion_radius_min=cfg.lesion_radius_min,
        lesion_radius_max=cfg.lesion_radius_max)


def cmd_gen_data(cfg):
    generate_toy_dataset(cfg.dataset_dir, _gen_config(cfg))
    os.makedirs(cfg.dataset_dir, exist_ok=True)
    write_config(os.path.join(cfg.dataset_dir, "resolved_config_gen-data.txt"), cfg)
    print(f"dataset written to {cfg.dataset_dir}")
    return 0


def _write_loss_csv(path, losses):
    with open(path, "w") as f:
        f.write("iteration,loss\n")
        for i, loss in enumerate(losses):
            f.write(f"{i},{loss!r}\n")


def cmd_train(cfg):
    data = load_dataset(cfg.dataset_dir, "train")
    schedule = build_schedule(cfg)
    _snapshot(cfg, "train")

    den_cfg = TrainConfig(learning_rate=cfg.learning_rate,
                          batch_size=cfg.batch_size,
                          iterations=cfg.denoiser_iterations, seed=cfg.seed)
    denoiser, den_losses = train_denoiser(
        data, schedule, den_cfg, hidden=cfg.denoiser_hidden,
        embed_dim=cfg.embed_dim)
    save_checkpoint(os.path.join(cfg.output_dir, "denoiser.ckpt"), denoiser)
    _write_loss_csv(os.path.join(cfg.output_dir, "loss_denoiser.csv"), den_losses)

    cls_cfg = TrainConfig(learning_rate=cfg.learning_rate,
                          batch_size=cfg.batch_size,
                          iterations=cfg.classifier_iterations, seed=cfg.seed + 1)
    classifier, cls_losses = train_classifier(
        data, schedule, cls_cfg, hidden=cfg.classifier_hidden,
        embed_dim=cfg.embed_dim, healthy_class=cfg.healthy_class)
    save_checkpoint(os.path.join(cfg.output_dir, "classifier.ckpt"), classifier)
    _write_loss_csv(os.path.join(cfg.output_dir, "loss_classifier.csv"), cls_losses)

    print(f"checkpoints written to {cfg.output_dir} "
          f"(denoiser loss {den_losses[-1]:.4f}, classifier loss {cls_losses[-1]:.4f})"
          if den_losses and cls_losses else
          f"checkpoints written to {cfg.output_dir}")
    return 0


def cmd_detect(cfg, input_path=None, split="test", dump_every=0):
    schedule = build_schedule(cfg)
    eps_model, grad_model = load_models(cfg, schedule)
    _snapshot(cfg, "detect")
    det_dir = os.path.join(cfg.output_dir, "detections")
    os.makedirs(det_dir, exist_ok=True)

    if input_path is not None:
        images = [load_image(input_path)]
        names = [os.path.basename(input_path)]
    else:
        data = load_dataset(cfg.dataset_dir, split)
        images = list(data.images)
        names = [f"{split}[{i}]" for i in range(len(images))]

    s, level, h = cfg.s, cfg.noise_level, cfg.healthy_class
    rows = []
    timings = []
    for i, img in enumerate(images):
        t0 = time.monotonic()
        res = detect(img, h, s, level, eps_model, grad_model, schedule)
        timings.append(time.monotonic() - t0)
        stem = os.path.join(det_dir, f"det_{i:04d}")
        save_image(stem + "_input.img", res.input)
        save_image(stem + "_synth.img", res.synthetic)
        save_image(stem + "_amap.img", res.anomaly_map)
        save_pgm(stem + "_amap.pgm", res.anomaly_map[0])
        if dump_every > 0:
            _dump_trajectory(img, res, cfg, schedule, eps_model, grad_model,
                             stem, dump_every)
        rows.append(f"{i},{names[i]},{res.score!r},{s!r},{level},{h}")

    with open(os.path.join(det_dir, "detections.csv"), "w") as f:
        f.write(DETECTIONS_HEADER + "\n")
        f.write("\n".join(rows) + "\n")
    with open(os.path.join(det_dir, "timings.txt"), "w") as f:
        for i, dt in enumerate(timings):
            f.write(f"{i} {dt:.3f}\n")
    print(f"{len(images)} detections written to {det_dir}")
    return 0


def _dump_trajectory(img, res, cfg, schedule, eps_model, grad_model, stem, every):
    """Re-run the decode with a step hook dumping every k-th state."""
    from .sampler import Guidance, GuidanceConfig, decode, encode

    level = cfg.noise_level
    x_noisy = encode(img, level, eps_model, schedule)
    guide = Guidance(model=grad_model,
                     config=GuidanceConfig(s=cfg.s, h=cfg.healthy_class))

    def hook(t, x):
        if t % every == 0:
            save_image(f"{stem}_traj_{t:04d}.img", x)

    decode(x_noisy, level, eps_model, schedule, guide=guide, hook=hook)


def _fmt(x):
    return "nan" if x != x else f"{x:.6g}"


def _grid_row(args):
    cfg, s, level = args
    schedule = build_schedule(cfg)
    eps_model, grad_model = load_models(cfg, schedule)
    data = load_dataset(cfg.dataset_dir, "test")
    results = [detect(img, cfg.healthy_class, s, level, eps_model, grad_model,
                      schedule) for img in data.images]
    summary = evaluate_set(results, list(data.masks))
    return (f"{s:.6g},{level},{_fmt(summary.mean_dice)},"
            f"{_fmt(summary.pixel_auroc)},{_fmt(summary.image_auroc)},"
            f"{summary.n_images}")


def cmd_sweep(cfg, s_grid, l_grid, workers=1):
    _snapshot(cfg, "sweep")
    points = [(cfg, s, level) for s in s_grid for level in l_grid]
    if workers > 1:
        import multiprocessing as mp
        with mp.Pool(workers) as pool:
            rows = pool.map(_grid_row, points)
    else:
        rows = [_grid_row(p) for p in points]
    path = os.path.join(cfg.output_dir, "sweep.csv")
    with open(path, "w") as f:
        f.write(SWEEP_HEADER + "\n")
        f.write("\n".join(rows) + "\n")
    print(f"sweep grid ({len(s_grid)}x{len(l_grid)}) written to {path}")
    return 0


def cmd_eval(cfg, results_dir=None):
    det_dir = results_dir or os.path.join(cfg.output_dir, "detections")
    csv_path = os.path.join(det_dir, "detections.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"{csv_path} not found; run detect first")
    data = load_dataset(cfg.dataset_dir, "test")

    results = []
    indices = []
    with open(csv_path) as f:
        header = f.readline().strip()
        if header != DETECTIONS_HEADER:
            raise ValueError(f"{csv_path}: unexpected header {header!r}")
        for line in f:
            parts = line.strip().split(",")
            i = int(parts[0])
            amap = load_image(os.path.join(det_dir, f"det_{i:04d}_amap.img"))
            res = DetectionResult(input=None, synthetic=None, anomaly_map=amap,
                                  score=float(parts[2]), params=None)
            results.append(res)
            indices.append(i)
    masks = [data.masks[i] for i in indices]
    summary = evaluate_set(results, masks)

    _snapshot(cfg, "eval")
    with open(os.path.join(cfg.output_dir, "eval_summary.csv"), "w") as f:
        f.write("n_images,n_diseased,mean_dice,pixel_auroc,image_auroc\n")
        f.write(f"{summary.n_images},{summary.n_diseased},"
                f"{_fmt(summary.mean_dice)},{_fmt(summary.pixel_auroc)},"
                f"{_fmt(summary.image_auroc)}\n")
    with open(os.path.join(cfg.output_dir, "eval_per_image.csv"), "w") as f:
        f.write("index,diseased,score,threshold,dice\n")
        for rec in summary.per_image:
            f.write(f"{rec.index},{int(rec.diseased)},{_fmt(rec.score)},"
                    f"{_fmt(rec.threshold)},{_fmt(rec.dice)}\n")
    print(f"mean_dice={_fmt(summary.mean_dice)} "
          f"pixel_auroc={_fmt(summary.pixel_auroc)} "
          f"image_auroc={_fmt(summary.image_auroc)} "
          f"n={summary.n_images}")
    return 0


def cmd_bench(size=1024, repeats=2000, steps=200):
    """Time each kernel on both backends plus one analytic decode loop."""
    from .sampler import decode, encode

    rng = np.random.default_rng(0)
    x = rng.standard_normal(size)
    y = rng.standard_normal(size)

    cases = {
        "scale_mix": lambda: kernel_backend.scale_mix(0.9, x, 0.1, y),
        "guided_eps": lambda: kernel_backend.guided_eps(x, y, 0.5),
        "reverse_step": lambda: kernel_backend.reverse_step(x, y, 0.9, 0.4, 0.8, 0.3),
        "encode_step": lambda: kernel_backend.encode_step(x, y, 0.9, 0.05, 0.04),
    }

    backends = ["python"]
    if kernel_backend.COMPILED_AVAILABLE:
        backends.append("compiled")
    else:
        print("compiled kernels not available; timing python backend only")

    print(f"{'kernel':<14}" + "".join(f"{b:>14}" for b in backends) +
          ("" if len(backends) < 2 else f"{'speedup':>10}"))
    for name, fn in cases.items():
        per = {}
        for b in backends:
            kernel_backend.set_backend(b)
            fn()  # warm up
            t0 = time.perf_counter()
            for _ in range(repeats):
                fn()
            per[b] = (time.perf_counter() - t0) / repeats * 1e6
        line = f"{name:<14}" + "".join(f"{per[b]:>12.2f}us" for b in backends)
        if len(backends) == 2:
            line += f"{per['python'] / per['compiled']:>9.2f}x"
        print(line)

    sched = linear_beta_schedule(max(steps, 2))
    model = AnalyticEpsilon(GaussianDataModel(mu=0.0, var=1.0), sched)
    img = rng.standard_normal((1, 32, 32))
    per = {}
    for b in backends:
        kernel_backend.set_backend(b)
        t0 = time.perf_counter()
        decode(encode(img, steps, model, sched), steps, model, sched)
        per[b] = time.perf_counter() - t0
    line = (f"{'roundtrip':<14}" +
            "".join(f"{per[b] * 1e3:>12.2f}ms" for b in backends))
    if len(backends) == 2:
        line += f"{per['python'] / per['compiled']:>9.2f}x"
    print(line)
    kernel_backend.set_backend(kernel_backend._default_backend())
    return 0


def _parse_grid(raw, typ):
    return [typ(v) for v in raw.split(",") if v.strip()]


def _load_config(args):
    cfg = read_config(args.config) if args.config else RunConfig()
    apply_overrides(cfg, args.set or [])
    return cfg.validate()


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="anodiff",
        description="Diffusion-based anomaly detection on toy phantom data")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    common(sub.add_parser("gen-data", help="generate the toy dataset"))
    common(sub.add_parser("train", help="train denoiser and classifier"))

    p_detect = sub.add_parser("detect", help="run anomaly detection")
    common(p_detect)
    p_detect.add_argument("--input", help="single image file instead of a split")
    p_detect.add_argument("--split", default="test", choices=["train", "test"])
    p_detect.add_argument("--dump-every", type=int, default=0,
                          help="dump every k-th decode state (0 = off)")

    p_sweep = sub.add_parser("sweep", help="grid evaluation over s and L")
    common(p_sweep)
    p_sweep.add_argument("--s-grid", default="5,10,20,50,100,250,500,750")
    p_sweep.add_argument("--l-grid", default="",
                         help="comma list; default T/4,T/2,3T/4")

    p_eval = sub.add_parser("eval", help="evaluate stored detections")
    common(p_eval)
    p_eval.add_argument("--results", help="detections directory")

    p_bench = sub.add_parser("bench", help="compare kernel backends")
    p_bench.add_argument("--size", type=int, default=1024)
    p_bench.add_argument("--repeats", type=int, default=2000)
    p_bench.add_argument("--steps", type=int, default=200)

    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            return cmd_bench(args.size, args.repeats, args.steps)
        cfg = _load_config(args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "detect":
            return cmd_detect(cfg, input_path=args.input, split=args.split,
                              dump_every=args.dump_every)
        if args.command == "sweep":
            s_grid = _parse_grid(args.s_grid, float)
            l_grid = (_parse_grid(args.l_grid, int) if args.l_grid else
                      [cfg.T // 4, cfg.T // 2, 3 * cfg.T // 4])
            workers = int(os.environ.get("ANODIFF_WORKERS", "1"))
            return cmd_sweep(cfg, s_grid, l_grid, workers=workers)
        if args.command == "eval":
            return cmd_eval(cfg, results_dir=args.results)
        raise ValueError(f"unknown command {args.command}")
    except Exception as exc:  # one-line machine-parsable error contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
