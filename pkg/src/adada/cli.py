"""Command-line front end: gen / train / diagnose / sweep.

Exit codes: 0 success, 2 usage or missing input, 3 numerical failure
during training, 4 data contract violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import datasets, diagnostics, models, trainer
from .errors import ConfigError, ContractError, NumericsError, ParseError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICS = 3
EXIT_CONTRACT = 4

GEN_PRESETS = ("two-moons-rot30", "blobs-shift")
TRAIN_PRESETS = ("source-only", "fgsm-only", "full-ada",
                 "ada-no-consistency", "ada-no-domain")


def load_preset(name: str) -> trainer.TrainingConfig:
    if name not in TRAIN_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {TRAIN_PRESETS}")
    text = resources.files("adada.presets").joinpath(f"{name}.toml").read_text()
    return trainer.config_from_toml(text, where=f"preset {name}")


def _generate(preset: str, seed: int, n: int = 400):
    if preset == "two-moons-rot30":
        source = datasets.two_moons(n, noise_sigma=0.15, seed=seed)
        base = datasets.two_moons(n, noise_sigma=0.15, seed=seed + 1000)
        target = datasets.apply_shift(
            base, datasets.ShiftSpec(rotation_degrees=30.0, noise_sigma=0.05),
            seed=seed + 2000)
    elif preset == "blobs-shift":
        centers = [[-1.5, 0.0], [1.5, 0.0]]
        source = datasets.gaussian_blobs(centers, n // 2, sigma=0.5, seed=seed)
        base = datasets.gaussian_blobs(centers, n // 2, sigma=0.5, seed=seed + 1000)
        target = datasets.apply_shift(
            base, datasets.ShiftSpec(rotation_degrees=0.0, translation=(0.7, 0.7),
                                     noise_sigma=0.1), seed=seed + 2000)
    else:
        raise ConfigError(f"unknown preset {preset!r}; choose from {GEN_PRESETS}")
    return source, target


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source, target = _generate(args.preset, args.seed, args.n)
    src_path, tgt_path = out / "source.csv", out / "target.csv"
    datasets.save_csv(source, src_path)
    datasets.save_csv(target, tgt_path)
    print(f"{src_path} ({len(source)} rows)")
    print(f"{tgt_path} ({len(target)} rows)")
    return EXIT_OK


def _resolve_config(args) -> trainer.TrainingConfig:
    if args.config:
        cfg = trainer.load_config(args.config)
    else:
        cfg = load_preset(args.preset)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = dataclasses.replace(cfg, epochs=args.epochs)
    if args.epsilon is not None:
        cfg = dataclasses.replace(
            cfg,
            source_perturb=dataclasses.replace(cfg.source_perturb, epsilon=args.epsilon),
            target_perturb=dataclasses.replace(cfg.target_perturb, epsilon=args.epsilon))
    if args.lambda_adv is not None or args.lambda_cons is not None:
        w = cfg.weights
        cfg = dataclasses.replace(cfg, weights=dataclasses.replace(
            w,
            lambda_adv=w.lambda_adv if args.lambda_adv is None else args.lambda_adv,
            lambda_cons=w.lambda_cons if args.lambda_cons is None else args.lambda_cons))
    return cfg


def _run_training(cfg, source_path, target_path, out_dir: Path):
    source = datasets.load_csv(source_path)
    target = datasets.load_csv(target_path)
    bundle, rows = trainer.fit(cfg, source, target)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer.write_metrics_csv(rows, out_dir / "metrics.csv")
    models.save_checkpoint(bundle, out_dir / "model.ckpt")
    with open(out_dir / "config.toml", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trainer.config_to_toml(cfg))
    return bundle, rows


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _, rows = _run_training(cfg, args.source, args.target, Path(args.out))
    last = rows[-1]
    print(f"epochs={last.epoch} total={last.total:.6g} "
          f"source_acc={last.source_accuracy:.4f} target_acc={last.target_accuracy:.4f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    bundle = models.load_checkpoint(args.checkpoint)
    source = datasets.load_csv(args.source)
    target = datasets.load_csv(args.target)
    from .perturb import PerturbationConfig

    report = diagnostics.compute_report(
        bundle, source, target,
        perturb_cfg=PerturbationConfig(epsilon=args.epsilon, norm="linf"))
    text = report.to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


def _parse_seeds(spec: str):
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        seeds = list(range(int(lo), int(hi) + 1))
    else:
        seeds = [int(s) for s in spec.split(",") if s]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {spec!r}")
    if not seeds:
        raise ConfigError(f"no seeds in {spec!r}")
    return seeds


SWEEP_COLUMNS = ("preset", "seed", "src_cls", "adv_dom", "cons", "total",
                 "source_accuracy", "target_accuracy", "mi_z_d",
                 "input_grad_norm", "class_kl_mean", "status")


def cmd_sweep(args) -> int:
    seeds = _parse_seeds(args.seeds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    presets = args.preset or ["full-ada"]
    lines = [",".join(SWEEP_COLUMNS)]
    failures = 0
    for preset in presets:
        cfg0 = load_preset(preset)
        results = []
        for seed in seeds:
            cfg = dataclasses.replace(cfg0, seed=seed)
            try:
                bundle, rows = _run_training(cfg, args.source, args.target,
                                             out_dir / f"{preset}-seed{seed}")
            except NumericsError as exc:
                failures += 1
                lines.append(f"{preset},{seed}" + ",nan" * 9 + ",failed")
                print(f"seed {seed} ({preset}) failed: {exc}", file=sys.stderr)
                continue
            last = rows[-1]
            vals = [last.src_cls, last.adv_dom, last.cons, last.total,
                    last.source_accuracy, last.target_accuracy]
            if args.diagnose:
                report = diagnostics.compute_report(
                    bundle, datasets.load_csv(args.source),
                    datasets.load_csv(args.target))
                vals += [report.mi_z_d, report.input_grad_norm, report.class_kl_mean]
            else:
                vals += [float("nan")] * 3
            results.append(vals)
            lines.append(f"{preset},{seed}," +
                         ",".join(f"{v:.9g}" for v in vals) + ",ok")
        if results:
            arr = np.asarray(results)
            for stat, row in (("mean", arr.mean(axis=0)), ("stddev", arr.std(axis=0))):
                lines.append(f"{preset},{stat}," +
                             ",".join(f"{v:.9g}" for v in row) + ",summary")
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(out_dir / "sweep.csv")
    return EXIT_NUMERICS if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adada",
                                description="Adversarial data augmentation for "
                                            "domain adaptation, desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic source/target benchmark")
    g.add_argument("--preset", required=True, choices=GEN_PRESETS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=400)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model and write metrics + checkpoint")
    cfg_src = t.add_mutually_exclusive_group(required=True)
    cfg_src.add_argument("--config", help="TOML config file")
    cfg_src.add_argument("--preset", choices=TRAIN_PRESETS)
    t.add_argument("--source", required=True, help="labeled source CSV")
    t.add_argument("--target", required=True, help="target CSV")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--lambda-adv", type=float, dest="lambda_adv")
    t.add_argument("--lambda-cons", type=float, dest="lambda_cons")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("diagnose", help="information diagnostics on a checkpoint")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--source", required=True)
    d.add_argument("--target", required=True)
    d.add_argument("--epsilon", type=float, default=0.1)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("sweep", help="seed sweep, aggregated CSV with summary rows")
    s.add_argument("--preset", action="append", choices=TRAIN_PRESETS)
    s.add_argument("--seeds", required=True, help="e.g. 0..9 or 0,3,7")
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--diagnose", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
