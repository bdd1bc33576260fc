"""Command-line interface.

Subcommands cover the whole pipeline: train a model, generate attacks,
dump CSMs, fit the detector, score datasets, produce evaluation reports,
and run landscape probes. Every run writes a manifest recording resolved
options, seeds, package versions, and SHA-256 hashes of the files it read
and wrote, so any artifact can be reproduced from its manifest alone.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numerical
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, attacks, container, data, landscape, loda, metrics
from .errors import ContainerFormatError, IdxFormatError, NumericalError, UsageError
from .features import extract, save_features_csv
from .nn import Model, TrainConfig, accuracy, load_model, save_model, train
from .nn.layers import Conv2d, Dense, Flatten, Rectifier
from .saliency import csm, save_csm_csv, save_saliency_pgm

_SUPPRESS = argparse.SUPPRESS


def _hash_file(path):
    with open(path, "rb") as fh:
        return container.sha256_hex(fh.read())


def write_manifest(out_path, command, opts, inputs=(), outputs=()):
    manifest = {
        "command": command,
        "options": {k: v for k, v in sorted(opts.items())},
        "package_version": __version__,
        "numpy_version": np.__version__,
        "inputs": {p: _hash_file(p) for p in inputs if os.path.exists(p)},
        "outputs": {p: _hash_file(p) for p in outputs if os.path.exists(p)},
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_config(path):
    """Flat key=value config file; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(value, like):
    if isinstance(like, bool):
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise UsageError(f"cannot read {value!r} as a boolean")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def resolve_options(args, defaults):
    """defaults < config file < explicit flags."""
    explicit = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    opts = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in load_config(config_path).items():
            if key not in defaults:
                raise UsageError(f"unknown config key {key!r}")
            opts[key] = _coerce(raw, defaults[key])
    opts.update(explicit)
    return opts


def build_arch(arch, input_shape, num_classes, seed):
    """Layer stack from an arch spec: "auto", "cnn", or "mlp:64,32"."""
    if arch == "auto":
        arch = "cnn" if len(input_shape) == 3 else "mlp:64,32"
    if arch == "cnn":
        if len(input_shape) != 3:
            raise UsageError("cnn arch needs (channels, h, w) inputs")
        ch = input_shape[0]
        layers = [
            Conv2d(ch, 16, kernel=5, stride=2, pad=2), Rectifier(),
            Conv2d(16, 32, kernel=3, stride=2, pad=1), Rectifier(),
            Flatten(),
        ]
        probe = Model(layers, input_shape, params=None, state=None)
        flat = probe.shapes[-1][0]
        layers += [Dense(flat, 64), Rectifier(), Dense(64, num_classes)]
        return Model.build(layers, input_shape, seed=seed)
    if arch.startswith("mlp"):
        _, _, spec = arch.partition(":")
        hidden = [int(tok) for tok in spec.split(",") if tok] or [64, 32]
        layers = [Flatten()] if len(input_shape) > 1 else []
        width = int(np.prod(input_shape))
        for h in hidden:
            layers += [Dense(width, h), Rectifier()]
            width = h
        layers.append(Dense(width, num_classes))
        return Model.build(layers, input_shape, seed=seed)
    raise UsageError(f"unknown arch {arch!r}; use auto, cnn, or mlp:SIZES")


def load_inputs(spec):
    """Input batch from a dataset spec, attack container, or noise spec.

    Attack containers contribute only their successful adversarials.
    """
    if spec.startswith("noise:"):
        kv = data._parse_kv(spec.split(":", 1)[1].split(","))
        return data.gen_noise(**kv)
    if os.path.exists(spec) and not spec.endswith(".csv"):
        kind, meta, arrays = container.read(spec)
        if kind == "attack":
            return arrays["x_adv"][arrays["success"].astype(bool)]
        if kind == "dataset":
            return arrays["x"]
        raise UsageError(f"cannot use a {kind!r} container as an input batch")
    return data.parse_dataset_spec(spec).x


def _load_labeled(spec):
    ds = data.parse_dataset_spec(spec)
    return ds


def cmd_train(opts):
    ds = _load_labeled(opts["data"])
    train_ds, val_ds = data.split(ds, opts["val_fraction"], seed=opts["seed"])
    model = build_arch(opts["arch"], train_ds.x.shape[1:], ds.num_classes, opts["seed"])
    cfg = TrainConfig(
        epochs=opts["epochs"], batch_size=opts["batch_size"], lr=opts["lr"],
        momentum=opts["momentum"], loss=opts["loss"], seed=opts["seed"],
        log_every=opts["log_every"],
    )
    history = train(model, train_ds.x, train_ds.y, cfg,
                    val=(val_ds.x, val_ds.y) if len(val_ds) else None)
    val_acc = history[-1].get("val_accuracy") if history else None
    save_model(opts["out"], model, extra_meta={
        "arch": opts["arch"], "data": opts["data"], "num_classes": ds.num_classes,
        "domain": list(ds.domain), "val_accuracy": val_acc,
    })
    write_manifest(opts["out"], "train", opts, outputs=[opts["out"]])
    acc_text = f" val_acc={val_acc:.4f}" if val_acc is not None else ""
    print(f"trained {opts['arch']} on {len(train_ds)} samples{acc_text} -> {opts['out']}")
    return 0


def cmd_attack(opts):
    model = load_model(opts["model"])
    ds = _load_labeled(opts["data"])
    x, y = ds.x, ds.y
    if opts["only_correct"]:
        keep = model.predict(x) == y
        x, y = x[keep], y[keep]
    if opts["n"] and opts["n"] < len(y):
        x, y = x[: opts["n"]], y[: opts["n"]]
    name, cfg = attacks.parse_attack_spec(opts["attack"])
    cfg = attacks.replace(cfg, seed=opts["seed"], clip_range=tuple(ds.domain))
    results = attacks.attack_batch(model, x, y, name, cfg)
    arrays = [
        ("x", x),
        ("x_adv", np.stack([r.x_adv for r in results])),
        ("y", y.astype(np.int64)),
        ("success", np.array([r.success for r in results], dtype=bool)),
        ("confidence", np.array([r.final_confidence for r in results])),
        ("iterations", np.array([r.iterations for r in results], dtype=np.int64)),
    ]
    meta = {"attack": opts["attack"], "name": name, "seed": opts["seed"],
            "data": opts["data"], "model": opts["model"],
            "epsilon": cfg.epsilon, "norm": cfg.norm}
    container.write(opts["out"], "attack", meta, arrays)
    write_manifest(opts["out"], "attack", opts, inputs=[opts["model"]],
                   outputs=[opts["out"]])
    n_ok = int(sum(r.success for r in results))
    print(f"{name}: {n_ok}/{len(results)} successful -> {opts['out']}")
    return 0


def cmd_csm(opts):
    model = load_model(opts["model"])
    x = load_inputs(opts["data"])[: opts["n"] or None]
    os.makedirs(opts["out"], exist_ok=True)
    top_n = opts["top_n"] or None
    want_pgm = opts["pgm"]
    if want_pgm and np.squeeze(x[0]).ndim != 2:
        print(f"note: inputs of shape {x.shape[1:]} are not images, skipping PGM dumps")
        want_pgm = False
    written = []
    for i, sample in enumerate(x):
        matrix = csm(model, sample, top_n=top_n, loss=opts["loss"])
        path = os.path.join(opts["out"], f"csm_{i:04d}.csv")
        save_csm_csv(path, matrix)
        written.append(path)
        if want_pgm:
            from .saliency import saliency

            smap = saliency(model, sample, matrix.predicted_class, loss=opts["loss"])
            save_saliency_pgm(os.path.join(opts["out"], f"saliency_{i:04d}.pgm"),
                              smap.values)
    write_manifest(os.path.join(opts["out"], "csm"), "csm", opts,
                   inputs=[opts["model"]], outputs=written)
    print(f"wrote {len(written)} matrices to {opts['out']}")
    return 0


def cmd_fit_detector(opts):
    model = load_model(opts["model"])
    ds = _load_labeled(opts["data"])
    keep = model.predict(ds.x) == ds.y
    if not keep.any():
        raise NumericalError("no correctly classified samples to fit on")
    batch = extract(model, ds.x[keep], top_n=opts["top_n"] or None, loss=opts["loss"])
    det = loda.fit(batch.values, k=opts["k"], bins=opts["bins"], seed=opts["seed"],
                   standardize=opts["standardize"], margin=opts["margin"])
    loda.calibrate(det, loda.score(det, batch.values), tpr=opts["tpr"])
    loda.save_detector(opts["out"], det)
    if opts["features_out"]:
        save_features_csv(opts["features_out"], batch, labels=ds.y[keep])
    write_manifest(opts["out"], "fit-detector", opts, inputs=[opts["model"]],
                   outputs=[opts["out"]])
    print(f"fitted detector on {len(batch)} vectors, threshold {det.threshold:.4f} "
          f"-> {opts['out']}")
    return 0


def cmd_detect(opts):
    model = load_model(opts["model"])
    det = loda.load_detector(opts["detector"])
    x = load_inputs(opts["data"])[: opts["n"] or None]
    batch = extract(model, x, top_n=opts["top_n"] or None, loss=opts["loss"])
    scores = loda.score(det, batch.values)
    flags = det.is_anomalous(batch.values)
    with open(opts["out"], "w") as fh:
        fh.write("index,score,anomalous,predicted_class\n")
        for i, (s, f, p) in enumerate(zip(scores, flags, batch.predicted)):
            fh.write(f"{i},{float(s)!r},{int(f)},{p}\n")
    write_manifest(opts["out"], "detect", opts,
                   inputs=[opts["model"], opts["detector"]], outputs=[opts["out"]])
    print(f"{int(flags.sum())}/{len(flags)} flagged anomalous -> {opts['out']}")
    return 0


def cmd_eval(opts):
    model = load_model(opts["model"])
    det = loda.load_detector(opts["detector"]) if opts["detector"] else None
    if det is None and opts["method"] == "gga":
        raise UsageError("gga evaluation needs --detector")
    clean = _load_labeled(opts["clean"])
    untrusted = {}
    for entry in opts["adv"]:
        tag, _, spec = entry.partition("=")
        if not spec:
            raise UsageError(f"--adv entries look like tag=SPEC, got {entry!r}")
        untrusted[tag] = load_inputs(spec)
    report = metrics.evaluate(
        model, det, clean, untrusted, tpr=opts["tpr"],
        top_n=opts["top_n"] or None, loss=opts["loss"], method=opts["method"],
        meta={"model": opts["model"], "detector": opts["detector"],
              "clean": opts["clean"], "adv": list(opts["adv"])},
    )
    report.save_json(opts["out"])
    if opts["csv"]:
        report.save_csv(opts["csv"])
    write_manifest(opts["out"], "eval", opts,
                   inputs=[p for p in (opts["model"], opts["detector"]) if p],
                   outputs=[opts["out"]] + ([opts["csv"]] if opts["csv"] else []))
    print(report)
    return 0


def cmd_landscape(opts):
    model = load_model(opts["model"])
    if opts["mode"] == "zeta":
        ds = _load_labeled(opts["data"])
        n = opts["n"] or len(ds)
        sigmas = [float(tok) for tok in str(opts["sigmas"]).split(",") if tok]
        rows = landscape.zeta_sweep(model, ds.x[:n], ds.y[:n], sigmas=sigmas,
                                    n_injections=opts["injections"],
                                    seed=opts["seed"], loss=opts["loss"])
        landscape.save_zeta_csv(opts["out"], rows)
        write_manifest(opts["out"], "landscape", opts, inputs=[opts["model"]],
                       outputs=[opts["out"]])
        print(f"wrote {len(rows)} zeta rows -> {opts['out']}")
        return 0
    if opts["mode"] == "surface":
        ds = _load_labeled(opts["data"])
        index = opts["index"]
        x, y = ds.x[index], int(ds.y[index])
        name, cfg = attacks.parse_attack_spec(opts["attack"])
        cfg = attacks.replace(cfg, seed=opts["seed"], clip_range=tuple(ds.domain))
        result = attacks.run_attack(name, model, x, y, cfg)
        if not result.success:
            raise NumericalError(f"attack on sample {index} failed; no direction")
        axis = landscape.default_axes(cfg.epsilon, points=opts["grid"])
        grid = landscape.csm_surface(model, x, result.x_adv - x, axis, axis,
                                     seed=opts["seed"], loss=opts["loss"],
                                     clip_range=tuple(ds.domain))
        landscape.save_surface_csv(opts["out"], grid)
        write_manifest(opts["out"], "landscape", opts, inputs=[opts["model"]],
                       outputs=[opts["out"]])
        print(f"wrote {axis.size}x{axis.size} surface -> {opts['out']}")
        return 0
    raise UsageError(f"unknown landscape mode {opts['mode']!r}")


_DEFAULTS = {
    "train": {
        "data": "digits:n=4000,seed=0", "arch": "auto", "epochs": 10,
        "batch_size": 128, "lr": 0.05, "momentum": 0.9, "loss": "sce",
        "val_fraction": 0.15, "seed": 0, "log_every": 0, "out": "model.gga",
    },
    "attack": {
        "model": "model.gga", "data": "digits:n=400,seed=1", "attack": "pgd",
        "n": 0, "only_correct": True, "seed": 0, "out": "attack.gga",
    },
    "csm": {
        "model": "model.gga", "data": "digits:n=16,seed=2", "n": 16,
        "top_n": 0, "loss": "sce", "pgm": False, "out": "csm-out",
    },
    "fit-detector": {
        "model": "model.gga", "data": "digits:n=2000,seed=3", "k": 100,
        "bins": 100, "standardize": True, "margin": 0.05, "tpr": 0.95,
        "top_n": 0, "loss": "sce", "seed": 0, "features_out": "",
        "out": "detector.gga",
    },
    "detect": {
        "model": "model.gga", "detector": "detector.gga",
        "data": "digits:n=100,seed=4", "n": 0, "top_n": 0, "loss": "sce",
        "out": "scores.csv",
    },
    "eval": {
        "model": "model.gga", "detector": "detector.gga",
        "clean": "digits:n=400,seed=5", "adv": [], "tpr": 0.95, "top_n": 0,
        "loss": "sce", "method": "gga", "csv": "", "out": "report.json",
    },
    "landscape": {
        "mode": "zeta", "model": "model.gga", "data": "digits:n=20,seed=6",
        "n": 0, "injections": 1000, "sigmas": "0.01,0.05,0.1,0.5,1.0",
        "index": 0, "attack": "pgd", "grid": 41, "loss": "sce", "seed": 0,
        "out": "landscape.csv",
    },
}

_COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "csm": cmd_csm,
    "fit-detector": cmd_fit_detector,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "landscape": cmd_landscape,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="gga", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"gga {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(sp, flag, **kw):
        sp.add_argument(flag, default=_SUPPRESS, **kw)

    p = sub.add_parser("train", help="train a classifier")
    add(p, "--data", help="dataset spec (blobs:..., digits:..., idx:..., path)")
    add(p, "--arch", help="auto | cnn | mlp:SIZES")
    add(p, "--epochs", type=int)
    add(p, "--batch-size", type=int, dest="batch_size")
    add(p, "--lr", type=float)
    add(p, "--momentum", type=float)
    add(p, "--loss", choices=("sce", "mse"))
    add(p, "--val-fraction", type=float, dest="val_fraction")
    add(p, "--log-every", type=int, dest="log_every")

    p = sub.add_parser("attack", help="generate an adversarial batch")
    add(p, "--model")
    add(p, "--data")
    add(p, "--attack", help="e.g. pgd:linf:eps=0.3:iters=70")
    add(p, "--n", type=int, help="limit the number of samples (0 = all)")
    add(p, "--include-misclassified", dest="only_correct", action="store_false")

    p = sub.add_parser("csm", help="dump per-sample cosine-similarity matrices")
    add(p, "--model")
    add(p, "--data")
    add(p, "--n", type=int)
    add(p, "--top-n", type=int, dest="top_n")
    add(p, "--loss", choices=("sce", "mse"))
    add(p, "--pgm", action="store_true")

    p = sub.add_parser("fit-detector", help="fit the anomaly detector")
    add(p, "--model")
    add(p, "--data")
    add(p, "--k", type=int, help="number of random projections")
    add(p, "--bins", type=int)
    add(p, "--no-standardize", dest="standardize", action="store_false")
    add(p, "--margin", type=float)
    add(p, "--tpr", type=float)
    add(p, "--top-n", type=int, dest="top_n")
    add(p, "--loss", choices=("sce", "mse"))
    add(p, "--features-out", dest="features_out")

    p = sub.add_parser("detect", help="score a dataset with a fitted detector")
    add(p, "--model")
    add(p, "--detector")
    add(p, "--data")
    add(p, "--n", type=int)
    add(p, "--top-n", type=int, dest="top_n")
    add(p, "--loss", choices=("sce", "mse"))

    p = sub.add_parser("eval", help="full detection report")
    add(p, "--model")
    add(p, "--detector")
    add(p, "--clean", help="clean dataset spec")
    add(p, "--adv", action="append", help="tag=SPEC, repeatable")
    add(p, "--tpr", type=float)
    add(p, "--top-n", type=int, dest="top_n")
    add(p, "--loss", choices=("sce", "mse"))
    add(p, "--method", choices=("gga", "msp"))
    add(p, "--csv", help="also write a single-row CSV report")

    p = sub.add_parser("landscape", help="zeta statistics or CSM surface")
    p.add_argument("mode", choices=("zeta", "surface"))
    add(p, "--model")
    add(p, "--data")
    add(p, "--n", type=int)
    add(p, "--injections", type=int)
    add(p, "--sigmas", help="comma-separated noise levels")
    add(p, "--index", type=int, help="sample index for the surface")
    add(p, "--attack", help="attack spec providing the surface direction")
    add(p, "--grid", type=int, help="points per surface axis")
    add(p, "--loss", choices=("sce", "mse"))

    for name, sp in sub.choices.items():
        sp.add_argument("--config", default=None, help="key=value config file")
        sp.add_argument("--seed", type=int, default=_SUPPRESS)
        sp.add_argument("--out", default=_SUPPRESS, help="output path")
        sp.set_defaults(func=_COMMANDS[name], command=name)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "command", None):
        parser.print_help()
        return 1
    try:
        opts = resolve_options(args, _DEFAULTS[args.command])
        return args.func(opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ContainerFormatError, IdxFormatError, FileNotFoundError, IsADirectoryError,
            PermissionError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
