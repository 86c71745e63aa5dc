"""Command-line surface: data generation, training, attacks, purification,
evaluation, and spectral analysis.

All commands share one JSON config (``--config``; ``--print-config`` shows
the defaults) and write into subdirectories of the output dir, each with a
copy of the resolved config for provenance. Outputs are byte-identical
across reruns with the same config and seed.

Exit codes: 0 success, 2 config/input error, 3 missing prerequisite,
4 numerical failure.
"""
import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import attacks as atk
from . import classifier as clf_mod
from . import config as cfg_mod
from . import diffusion as diff
from . import mani as mani_mod
from . import metrics
from . import spectral
from .errors import (ConfigError, DecodeError, FormatError, ManipureError,
                     MissingPrerequisiteError, NumericalError, UnsupportedError)
from .tensor_store import load_png, load_raw, save_png, save_raw

DATASET_DIR = "dataset"
CLASSIFIER_DIR = "classifier"

DEFENSES = ("no-defense", "diffpure", "mani-only", "freqpure-only", "mani-pure")
CONDITIONS = ("clean", "pgd", "pgd-eot-bpda")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_dir(cfg, name):
    out = os.path.join(cfg.output_dir, name)
    os.makedirs(out, exist_ok=True)
    cfg_mod.dump_config(cfg, os.path.join(out, "config.json"))
    return out


def _load_input(path):
    if path.endswith(".png"):
        return load_png(path).astype(np.float64)
    return load_raw(path).astype(np.float64)


def _require(path, producer):
    if not os.path.exists(path):
        raise MissingPrerequisiteError(
            f"missing {path}; run the {producer} command first")
    return path


def _load_dataset(cfg):
    base = os.path.join(cfg.output_dir, DATASET_DIR)
    images = load_raw(_require(os.path.join(base, "images.mptf"), "gen-data"))
    labels = load_raw(os.path.join(base, "labels.mptf")).astype(np.int64)
    idx = np.arange(labels.size)
    test = idx % 5 == 4
    return clf_mod.SyntheticDataset(images=images, labels=labels,
                                    train_idx=idx[~test], test_idx=idx[test],
                                    k=cfg.dataset.k)


def _load_classifier(cfg):
    return clf_mod.load_classifier(os.path.join(cfg.output_dir, CLASSIFIER_DIR))


def _defense_configs(cfg):
    gamma0 = replace(cfg.mani, gamma=0.0)
    fp_off = replace(cfg.freqpure, enabled=False)
    fp_on = replace(cfg.freqpure, enabled=True)
    return {
        "no-defense": None,
        "diffpure": (gamma0, fp_off),
        "mani-only": (cfg.mani, fp_off),
        "freqpure-only": (gamma0, fp_on),
        "mani-pure": (cfg.mani, fp_on),
    }


def _make_denoiser(cfg, schedule, clean_image):
    """Resolve the configured denoiser; a bare oracle spec binds the
    per-sample reference image as its mean."""
    spec = cfg.denoiser
    if spec.startswith("oracle:") and "mu=" not in spec:
        args = diff._parse_kv(spec[len("oracle:"):], "denoiser")
        if not set(args) <= {"var"}:
            raise ConfigError(f"oracle takes mu=<path>,var=<f>, got {spec!r}",
                              path="denoiser")
        return diff.OracleGaussianDenoiser(clean_image, float(args["var"]),
                                           schedule)
    return diff.parse_denoiser_spec(spec, schedule)


def _purifier(cfg, schedule, mani_cfg, freq_cfg, clean_image):
    denoiser = _make_denoiser(cfg, schedule, clean_image)

    def run(x, seed):
        return diff.purify(x, mani_cfg, freq_cfg, cfg.reverse, schedule,
                           denoiser, seed)

    return run


# ------------------------------------------------------------------- commands

def cmd_gen_data(cfg, args):
    out = _prepare_dir(cfg, DATASET_DIR)
    ds = clf_mod.generate_dataset(cfg.seed, cfg.dataset.n_per_class,
                                  cfg.dataset.k, cfg.dataset.h, cfg.dataset.w)
    save_raw(os.path.join(out, "images.mptf"), ds.images)
    save_raw(os.path.join(out, "labels.mptf"), ds.labels.astype(np.float32))
    manifest = {
        "config": cfg_mod.to_dict(cfg),
        "files": {name: _sha256(os.path.join(out, name))
                  for name in ("images.mptf", "labels.mptf")},
        "n_images": int(ds.images.shape[0]),
        "n_train": int(ds.train_idx.size),
        "n_test": int(ds.test_idx.size),
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    print(f"gen-data: wrote {ds.images.shape[0]} images to {out}")
    return 0


def cmd_train_clf(cfg, args):
    ds = _load_dataset(cfg)
    out = _prepare_dir(cfg, CLASSIFIER_DIR)
    init = clf_mod.init_classifier(cfg.dataset.h, cfg.dataset.w, 3,
                                   cfg.dataset.k, cfg.seed)
    trained, final_loss = clf_mod.train(init, ds, cfg.classifier.epochs,
                                        cfg.classifier.lr)
    clf_mod.save_classifier(out, trained)
    # measure with the saved (float32-quantized) parameters so eval's
    # reloaded classifier reproduces these numbers exactly
    reloaded = clf_mod.load_classifier(out)
    test_acc = clf_mod.accuracy(reloaded, ds.images[ds.test_idx],
                                ds.labels[ds.test_idx])
    train_acc = clf_mod.accuracy(reloaded, ds.images[ds.train_idx],
                                 ds.labels[ds.train_idx])
    _write_json(os.path.join(out, "metrics.json"),
                {"final_loss": final_loss, "train_acc": train_acc,
                 "test_acc": test_acc})
    print(f"train-clf: loss {final_loss:.4f} train_acc {train_acc:.4f} "
          f"test_acc {test_acc:.4f}")
    return 0


def cmd_attack(cfg, args):
    ds = _load_dataset(cfg)
    clf = _load_classifier(cfg)
    out = _prepare_dir(cfg, "attack")
    idx = ds.test_idx if args.n == 0 else ds.test_idx[:args.n]
    adv = np.empty((idx.size, cfg.dataset.h, cfg.dataset.w, 3), dtype=np.float32)
    success = []
    for row, i in enumerate(idx):
        x, y = ds.images[i].astype(np.float64), int(ds.labels[i])
        if args.method == "fgsm":
            x_adv = atk.fgsm(x, y, clf, cfg.attack.epsilon)
        else:
            x_adv = atk.pgd(x, y, clf, cfg.attack,
                            seed=atk.derive_seed(cfg.seed, 3, int(i)))
        adv[row] = x_adv.astype(np.float32)
        pred, _ = clf_mod.predict(clf, x_adv)
        success.append(bool(pred != y))
    save_raw(os.path.join(out, "x_adv.mptf"), adv)
    save_raw(os.path.join(out, "indices.mptf"), idx.astype(np.float32))
    _write_json(os.path.join(out, "manifest.json"), {
        "config": cfg_mod.to_dict(cfg),
        "method": args.method,
        "seed": cfg.seed,
        "files": {"x_adv.mptf": _sha256(os.path.join(out, "x_adv.mptf"))},
        "success": success,
        "success_rate": float(np.mean(success)),
    })
    print(f"attack: {args.method} fooled {sum(success)}/{len(success)} samples")
    return 0


def cmd_purify(cfg, args):
    x_adv = _load_input(args.input)
    if x_adv.ndim != 3:
        raise UnsupportedError(f"purify expects one (H, W, C) image, got "
                               f"{x_adv.shape}")
    out = _prepare_dir(cfg, "purify")
    schedule = cfg.schedule.build()
    clean = _load_input(args.clean) if args.clean else None
    denoiser = _make_denoiser(cfg, schedule,
                              clean if clean is not None else x_adv)
    result = diff.purify_with_trace(x_adv, cfg.mani, cfg.freqpure, cfg.reverse,
                                    schedule, denoiser, cfg.seed,
                                    compute_deviation=True)
    save_raw(os.path.join(out, "x_hat.mptf"), result.image.astype(np.float32))
    save_png(os.path.join(out, "x_hat.png"), np.clip(result.image, 0.0, 1.0))
    if result.weight_map is not None:
        save_raw(os.path.join(out, "weight_map.mptf"),
                 result.weight_map.astype(np.float32))
    with open(os.path.join(out, "step_log.csv"), "w") as fh:
        fh.write("step,t,masked_magnitude_dev\n")
        for i, (t, dev) in enumerate(zip(result.step_ts, result.step_deviation)):
            fh.write(f"{i},{t},{'' if np.isnan(dev) else f'{dev:.10g}'}\n")
    if clean is not None and result.eps_t is not None:
        scale = float(np.sqrt(1.0 - schedule.alpha_bar[cfg.reverse.t_start]))
        d = scale * result.eps_t - (x_adv - clean)
        save_raw(os.path.join(out, "heatmap.mptf"), d.astype(np.float32))
        save_png(os.path.join(out, "heatmap.png"), mani_mod.heatmap_to_image(d))
    print(f"purify: wrote artifacts to {out}")
    return 0


def _eval_kl(cfg, adv_batch, clean_batch):
    """Mean spectral-KL report over a batch; the adaptive variant shapes
    the noise spectrum directly so the band comparison is meaningful."""
    kl_cfg = replace(cfg.mani, map_mode=mani_mod.FREQUENCY_SHAPING)
    kl_a, kl_u = [], []
    for i, (x_adv, x_clean) in enumerate(zip(adv_batch, clean_batch)):
        if not np.any(x_adv - x_clean):
            continue
        rep = mani_mod.noise_kl_report(x_adv, x_clean, kl_cfg,
                                       atk.derive_seed(cfg.seed, 5, i),
                                       t_star=min(cfg.reverse.t_start, 100) or 100)
        kl_a.append(rep.kl_adaptive)
        kl_u.append(rep.kl_uniform)
    if not kl_a:
        return None, None
    return float(np.mean(kl_a)), float(np.mean(kl_u))


def cmd_eval(cfg, args):
    ds = _load_dataset(cfg)
    clf = _load_classifier(cfg)
    out = _prepare_dir(cfg, "eval")
    schedule = cfg.schedule.build()
    full_test = ds.test_idx
    attacked_idx = full_test if args.n_eval == 0 else full_test[:args.n_eval]
    defenses = _defense_configs(cfg)
    run_id = f"s{cfg.seed}"

    # Attacked inputs per condition (computed once, shared across defenses
    # except the adaptive attack, which targets each defense separately).
    pgd_inputs = {}
    for i in attacked_idx:
        x, y = ds.images[i].astype(np.float64), int(ds.labels[i])
        pgd_inputs[i] = atk.pgd(x, y, clf, cfg.attack,
                                seed=atk.derive_seed(cfg.seed, 3, int(i)))

    rows = []
    for defense in DEFENSES:
        pair = defenses[defense]
        for condition in CONDITIONS:
            if condition == "clean":
                idx = full_test
            else:
                idx = attacked_idx
            preds = []
            ssims = []
            adv_batch = []
            clean_batch = []
            for i in idx:
                x_clean = ds.images[i].astype(np.float64)
                y = int(ds.labels[i])
                if condition == "clean":
                    x_in = x_clean
                elif condition == "pgd":
                    x_in = pgd_inputs[i]
                else:
                    if pair is None:
                        x_in = pgd_inputs[i]
                    else:
                        purifier = _purifier(cfg, schedule, pair[0], pair[1],
                                             x_clean)
                        x_in = atk.pgd_eot_bpda(
                            x_clean, y, clf, purifier, cfg.attack,
                            seed=atk.derive_seed(cfg.seed, 4, int(i)))
                if pair is None:
                    x_def = x_in
                else:
                    purifier = _purifier(cfg, schedule, pair[0], pair[1], x_clean)
                    x_def = purifier(x_in, atk.derive_seed(cfg.seed, 9, int(i)))
                pred, _ = clf_mod.predict(clf, x_def)
                preds.append(pred)
                ssims.append(metrics.ssim(x_def, x_clean))
                if condition != "clean":
                    adv_batch.append(x_in)
                    clean_batch.append(x_clean)
            acc = metrics.accuracy_report(np.asarray(preds), ds.labels[idx])
            kl_a, kl_u = (None, None)
            if condition != "clean":
                kl_a, kl_u = _eval_kl(cfg, adv_batch, clean_batch)
            rows.append({
                "run_id": run_id, "defense": defense, "attack": condition,
                "norm": cfg.attack.norm, "epsilon": cfg.attack.epsilon,
                "standard_acc": acc if condition == "clean" else None,
                "robust_acc": None if condition == "clean" else acc,
                "mean_ssim": float(np.mean(ssims)),
                "kl_adaptive": kl_a, "kl_uniform": kl_u,
            })
            print(f"eval: {defense:13s} {condition:12s} acc {acc:.4f}")
    metrics.write_results_csv(os.path.join(out, "results.csv"), rows)
    print(f"eval: wrote {len(rows)} rows to {out}/results.csv")
    return 0


def cmd_analyze_spectrum(cfg, args):
    clean = _load_input(args.clean)
    adv = _load_input(args.adv)
    if clean.shape != adv.shape:
        raise UnsupportedError("clean/adversarial inputs differ in shape")
    if clean.ndim == 3:
        clean, adv = clean[None], adv[None]
    out = _prepare_dir(cfg, "analyze")
    partition = spectral.make_band_partition(clean.shape[1], clean.shape[2],
                                             cfg.mani.n_bands)
    prof_clean = np.zeros(partition.n)
    prof_adv = np.zeros(partition.n)
    prof_diff = np.zeros(partition.n)
    for xc, xa in zip(clean, adv):
        prof_clean += spectral.radial_profile(
            spectral.decompose(spectral.dft(xc)).a, partition)
        prof_adv += spectral.radial_profile(
            spectral.decompose(spectral.dft(xa)).a, partition)
        diff_noise = xa.astype(np.float64) - xc.astype(np.float64)
        if np.any(diff_noise):
            prof_diff += spectral.radial_profile(
                spectral.decompose(spectral.dft(diff_noise)).a, partition)
    n = clean.shape[0]
    with open(os.path.join(out, "radial_profile.csv"), "w") as fh:
        fh.write("band,clean,adversarial,difference\n")
        for b in range(partition.n):
            fh.write(f"{b},{prof_clean[b] / n:.10g},{prof_adv[b] / n:.10g},"
                     f"{prof_diff[b] / n:.10g}\n")

    kl_cfg = replace(cfg.mani, map_mode=mani_mod.FREQUENCY_SHAPING)
    kl_a, kl_u, used = [], [], 0
    for i, (xc, xa) in enumerate(zip(clean, adv)):
        if not np.any(xa.astype(np.float64) - xc.astype(np.float64)):
            continue
        rep = mani_mod.noise_kl_report(xa, xc, kl_cfg,
                                       atk.derive_seed(cfg.seed, 5, i),
                                       t_star=min(cfg.reverse.t_start, 100) or 100)
        kl_a.append(rep.kl_adaptive)
        kl_u.append(rep.kl_uniform)
        used += 1
    payload = {"n_samples": used}
    if used:
        payload["kl_adaptive"] = float(np.mean(kl_a))
        payload["kl_uniform"] = float(np.mean(kl_u))
    _write_json(os.path.join(out, "kl.json"), payload)
    print(f"analyze-spectrum: wrote profiles for {n} sample(s) to {out}")
    return 0


def cmd_compare_noise(cfg, args):
    clean = _load_input(args.clean)
    adv = _load_input(args.adv)
    if clean.ndim != 3 or adv.shape != clean.shape:
        raise UnsupportedError("compare-noise expects matching (H, W, C) inputs")
    out = _prepare_dir(cfg, "compare-noise")
    kl_cfg = replace(cfg.mani, map_mode=mani_mod.FREQUENCY_SHAPING)
    rep = mani_mod.noise_kl_report(adv, clean, kl_cfg,
                                   atk.derive_seed(cfg.seed, 5, 0),
                                   t_star=min(cfg.reverse.t_start, 100) or 100)
    _write_json(os.path.join(out, "kl.json"),
                {"kl_adaptive": rep.kl_adaptive, "kl_uniform": rep.kl_uniform})
    for name, field in (("heatmap_adaptive", rep.heatmap_adaptive),
                        ("heatmap_uniform", rep.heatmap_uniform)):
        save_raw(os.path.join(out, f"{name}.mptf"), field.astype(np.float32))
        save_png(os.path.join(out, f"{name}.png"),
                 mani_mod.heatmap_to_image(field))
    print(f"compare-noise: kl_adaptive {rep.kl_adaptive:.4f} "
          f"kl_uniform {rep.kl_uniform:.4f}")
    return 0


# ----------------------------------------------------------------- entrypoint

def build_parser():
    parser = argparse.ArgumentParser(
        prog="manipure",
        description="Frequency-adaptive diffusion purification pipeline")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="override config output_dir")
    parser.add_argument("--print-config", action="store_true",
                        help="print the default config and exit")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("gen-data", help="generate the synthetic dataset")
    sub.add_parser("train-clf", help="train the toy classifier")

    p_attack = sub.add_parser("attack", help="attack the trained classifier")
    p_attack.add_argument("--method", choices=("fgsm", "pgd"), default="pgd")
    p_attack.add_argument("--n", type=int, default=0,
                          help="number of test samples (0 = all)")

    p_purify = sub.add_parser("purify", help="purify one image")
    p_purify.add_argument("--input", required=True, help="MPTF or PNG image")
    p_purify.add_argument("--clean", help="clean reference (enables heatmap)")

    p_eval = sub.add_parser("eval", help="defense/attack evaluation grid")
    p_eval.add_argument("--n-eval", type=int, default=50,
                        help="attacked samples per condition (0 = all)")

    p_an = sub.add_parser("analyze-spectrum", help="radial profiles + KL")
    p_an.add_argument("--clean", required=True)
    p_an.add_argument("--adv", required=True)

    p_cn = sub.add_parser("compare-noise", help="noise difference heatmaps")
    p_cn.add_argument("--clean", required=True)
    p_cn.add_argument("--adv", required=True)
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-clf": cmd_train_clf,
    "attack": cmd_attack,
    "purify": cmd_purify,
    "eval": cmd_eval,
    "analyze-spectrum": cmd_analyze_spectrum,
    "compare-noise": cmd_compare_noise,
}


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print(cfg_mod.defaults_json())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    cfg = cfg_mod.load_config(args.config) if args.config else cfg_mod.RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return _COMMANDS[args.command](cfg, args)


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, FormatError, DecodeError, UnsupportedError)):
        return 2
    if isinstance(exc, MissingPrerequisiteError):
        return 3
    if isinstance(exc, (NumericalError, ManipureError)):
        return 4
    return 1


def main(argv=None):
    try:
        return run(argv)
    except ManipureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
