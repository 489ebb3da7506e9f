"""Command-line entry point wiring generation, encoding, training, evaluation,
search, repeats, and reporting.

Every subcommand resolves its configuration (an optional ``key = value`` text
config file, overridden by flags), writes a reproducibility manifest before
doing any work, and exits 0 on success, 1 on runtime failure, 2 on usage
errors.
"""

import argparse
import json
import os
import sys

from . import __version__
from . import data as datamod
from . import hpo, tensorio
from .ann import ann_evaluate, ann_train
from .encoding import METHODS, Encoder, EncodingConfig, raster_image, write_pgm
from .errors import SpikeflagError
from .metrics import eval_csv_header, format_eval_csv_row
from .network import NetworkConfig
from .training import TrainingConfig, evaluate, load_checkpoint, train_and_checkpoint

WORKERS_ENV = "SPIKEFLAG_WORKERS"


def _default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def write_run_manifest(out_dir, subcommand, resolved, artifacts):
    """Record everything needed to reproduce the run, before work begins."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "tool": "spikeflag",
        "version": __version__,
        "subcommand": subcommand,
        "config": resolved,
        "artifacts": artifacts,
    }
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _expand_config(argv):
    """Turn a ``--config file`` into injected flags right after the subcommand,
    so explicitly passed flags still win (argparse keeps the last value)."""
    path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            break
        if arg.startswith("--config="):
            path = arg.split("=", 1)[1]
            break
    if path is None:
        return argv
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}")
    injected = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                injected.append(flag)
        else:
            injected.extend([flag, value])
    for i, arg in enumerate(argv):
        if not arg.startswith("-"):
            return argv[:i + 1] + injected + argv[i + 1:]
    return argv + injected


class _UsageError(Exception):
    pass


def _resolved(args, skip=("func", "config")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args):
    cfg = datamod.GeneratorConfig(
        n_train=args.n_train,
        n_test=args.n_test,
        freq_channels=args.freq_channels,
        time_steps=args.time_steps,
        background_gradient_range=(args.gradient_lo, args.gradient_hi),
        noise_sigma=args.noise_sigma,
        rfi_rates={
            "narrowband_persistent": args.rate_narrowband_persistent,
            "broadband_transient": args.rate_broadband_transient,
            "narrowband_transient": args.rate_narrowband_transient,
            "blip": args.rate_blip,
        },
        target_contamination=args.target_contamination,
        seed=args.seed,
    )
    cfg.validate()
    write_run_manifest(args.out, "generate", _resolved(args),
                       {"dataset": datamod.MANIFEST_NAME})
    dataset = datamod.generate_synthetic(cfg, args.out)
    frac = dataset.manifest.contamination_fraction
    print(f"generated {len(dataset.train)} train / {len(dataset.test)} test "
          f"spectrograms at {args.out}")
    print(f"contamination = {frac:.4f} (target {cfg.target_contamination:.4f})")
    return 0


def cmd_encode(args):
    if not args.out and not args.raster:
        raise SpikeflagError("nothing to do: pass --out and/or --raster")
    dataset = datamod.load_dataset(args.data)
    enc_cfg = EncodingConfig(method=args.method, exposure=args.exposure,
                             rng_seed=args.seed).validate()
    encoder = Encoder(enc_cfg)
    pairs = dataset.train if args.split == "train" else dataset.test
    if not pairs:
        raise SpikeflagError(f"dataset has no items in split {args.split!r}")
    if args.out:
        write_run_manifest(args.out, "encode", _resolved(args),
                           {"spikes": f"{args.split}_<item>.hdr"})
        for k, (spec, _) in enumerate(pairs):
            train_arr = encoder.encode(datamod.normalize(spec).values)
            tensorio.write_tensor(
                os.path.join(args.out, f"{args.split}_{k:03d}"),
                train_arr,
                {"method": args.method, "exposure": enc_cfg.exposure},
            )
        print(f"wrote {len(pairs)} spike tensors to {args.out}")
    if args.raster:
        if not (0 <= args.item < len(pairs)):
            raise SpikeflagError(f"item index {args.item} out of range")
        spec, mask = pairs[args.item]
        patches = datamod.patch(datamod.normalize(spec), mask)
        if not (0 <= args.patch < len(patches)):
            raise SpikeflagError(
                f"patch index {args.patch} out of range ({len(patches)} patches)")
        train_arr = encoder.encode(patches[args.patch].values)
        write_pgm(args.raster, raster_image(train_arr))
        ch, nt, ne = train_arr.shape
        print(f"raster {args.raster}: {ch} channels x {nt * ne} columns")
    return 0


def _net_config_for(method, beta, patch_size=datamod.DEFAULT_PATCH_SIZE):
    doubled_in = method in ("delta", "sf-first", "sf-direct", "sf-latency")
    return NetworkConfig(
        input_width=2 * patch_size if doubled_in else patch_size,
        output_width=2 * patch_size if method == "delta" else patch_size,
        beta=beta,
    )


def cmd_train(args):
    dataset = datamod.load_dataset(args.data)
    exposure = 1 if args.method == "delta" else args.exposure
    enc_cfg = EncodingConfig(method=args.method, exposure=exposure,
                             rng_seed=args.seed).validate()
    net_cfg = _net_config_for(args.method, args.beta).validate()
    train_cfg = TrainingConfig(
        batch_size=args.batch_size, max_epochs=args.epochs,
        initial_lr=args.lr, lr_patience=args.lr_patience,
        stop_patience=args.stop_patience, seed=args.seed,
    ).validate()
    write_run_manifest(args.out, "train", _resolved(args),
                       {"checkpoint": "model.ckpt", "history": "history.csv"})
    log = print if args.verbose else None
    _, history, ckpt = train_and_checkpoint(net_cfg, dataset, train_cfg,
                                            enc_cfg, args.out, log=log)
    print(f"trained {len(history)} epochs; checkpoint at {ckpt}")
    return 0


def cmd_eval(args):
    dataset = datamod.load_dataset(args.data)
    params, net_cfg, enc_cfg, meta = load_checkpoint(args.checkpoint)
    pairs = dataset.train if args.split == "train" else dataset.test
    if not pairs:
        raise SpikeflagError(f"dataset has no items in split {args.split!r}")
    record = evaluate(params, net_cfg, pairs, enc_cfg)
    print(f"method={enc_cfg.method} seed={meta['seed']} "
          f"accuracy={record.accuracy:.4f} auroc={record.auroc:.4f} "
          f"auprc={record.auprc:.4f} f1={record.f1:.4f} n_pixels={record.n_pixels}")
    if args.csv:
        out_dir = os.path.dirname(os.path.abspath(args.csv)) or "."
        write_run_manifest(out_dir, "eval", _resolved(args),
                           {"csv": os.path.basename(args.csv)})
        new = not os.path.exists(args.csv)
        with open(args.csv, "a") as fh:
            if new:
                fh.write(eval_csv_header() + "\n")
            fh.write(format_eval_csv_row(enc_cfg.method, meta["seed"], record) + "\n")
    return 0


def cmd_search(args):
    cfg = hpo.SearchConfig(
        n_trials=args.trials, method=args.method, master_seed=args.seed,
        max_epochs_cap=args.max_epochs_cap, max_exposure_cap=args.max_exposure_cap,
    ).validate()
    write_run_manifest(args.out, "search", _resolved(args),
                       {"records": "trials.jsonl", "summary": "champions.json"})
    records_path = os.path.join(args.out, "trials.jsonl")
    records = hpo.run_search(cfg, args.data, records_path,
                             workers=args.workers, log=print)
    best = hpo.select_best(records)
    summary = {
        "champions": {m: {"trial_index": r.trial_index, "params": r.params,
                          "metrics": r.metrics}
                      for m, r in best["champions"].items()},
        "pareto_front": [r.trial_index for r in best["pareto_front"]],
    }
    with open(os.path.join(args.out, "champions.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = sum(1 for r in records if r.status == "ok")
    print(f"{len(records)} trials ({ok} ok); champions + Pareto front "
          f"written to {args.out}/champions.json")
    return 0


def cmd_repeat(args):
    dataset = datamod.load_dataset(args.data)
    if args.from_champions:
        with open(args.from_champions) as fh:
            champs = json.load(fh)["champions"]
        if args.metric not in champs:
            raise SpikeflagError(f"no champion for metric {args.metric!r}")
        params = champs[args.metric]["params"]
    else:
        params = {"batch_size": args.batch_size, "epochs": args.epochs,
                  "beta": args.beta}
        if args.method != "delta":
            params["exposure"] = args.exposure
    write_run_manifest(args.out, "repeat", _resolved(args),
                       {"runs": "runs.jsonl", "summary": "summary.csv"})
    summary, runs = hpo.repeat_eval(args.method, params, dataset, args.n,
                                    master_seed=args.seed, log=print)
    with open(os.path.join(args.out, "runs.jsonl"), "a") as fh:
        for row in runs:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(os.path.join(args.out, "summary.csv"), "w") as fh:
        fh.write("method,metric,mean,std,n\n")
        for metric, (mean, std) in summary.items():
            fh.write(f"{args.method},{metric},{mean:.6f},{std:.6f},{len(runs)}\n")
    for metric, (mean, std) in summary.items():
        print(f"{args.method} {metric}: {mean:.4f} +- {std:.4f} (n={len(runs)})")
    return 0


def cmd_report(args):
    rows = []
    for path in args.records:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
    if not rows:
        raise SpikeflagError("no records found in the given files")
    table = hpo.summarize_by_method(rows)
    header = "method,n," + ",".join(f"{m}_mean,{m}_std" for m in hpo.METRIC_NAMES)
    lines = [header]
    for entry in table:
        cells = [entry["method"], str(entry["n"])]
        for m in hpo.METRIC_NAMES:
            cells.append(f"{entry[f'{m}_mean']:.6f}")
            cells.append(f"{entry[f'{m}_std']:.6f}")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
        write_run_manifest(out_dir, "report", _resolved(args),
                           {"csv": os.path.basename(args.out)})
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def cmd_baseline(args):
    dataset = datamod.load_dataset(args.data)
    train_cfg = TrainingConfig(batch_size=args.batch_size, max_epochs=args.epochs,
                               initial_lr=args.lr, seed=args.seed).validate()
    write_run_manifest(args.out, "baseline", _resolved(args),
                       {"runs": "runs.jsonl"})
    params, history = ann_train(dataset.train, train_cfg)
    record = ann_evaluate(params, dataset.test)
    row = {"method": "ann", "seed": args.seed,
           **{k: getattr(record, k) for k in hpo.METRIC_NAMES}}
    with open(os.path.join(args.out, "runs.jsonl"), "a") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"ann seed={args.seed} accuracy={record.accuracy:.4f} "
          f"auroc={record.auroc:.4f} auprc={record.auprc:.4f} f1={record.f1:.4f} "
          f"({len(history)} epochs)")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="spikeflag",
        description="Spiking-network RFI flagging: synthesize spectrogram data, "
                    "encode it into spikes, train, evaluate, and search.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file; flags win")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", help="synthesize a dataset on disk")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--freq-channels", type=int, default=128)
    p.add_argument("--time-steps", type=int, default=128)
    p.add_argument("--gradient-lo", type=float, default=0.9)
    p.add_argument("--gradient-hi", type=float, default=1.1)
    p.add_argument("--noise-sigma", type=float, default=0.04)
    p.add_argument("--rate-narrowband-persistent", type=int, default=1)
    p.add_argument("--rate-broadband-transient", type=int, default=1)
    p.add_argument("--rate-narrowband-transient", type=int, default=2)
    p.add_argument("--rate-blip", type=int, default=3)
    p.add_argument("--target-contamination", type=float, default=0.0276)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("encode", help="dump spike tensors and/or a raster image")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="latency")
    p.add_argument("--exposure", type=int, default=6)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", help="directory for spike tensor files")
    p.add_argument("--raster", help="write a PGM raster of one patch")
    p.add_argument("--item", type=int, default=0)
    p.add_argument("--patch", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train the spiking network")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=METHODS, default="latency")
    p.add_argument("--exposure", type=int, default=6)
    p.add_argument("--beta", type=float, default=0.727)
    p.add_argument("--batch-size", type=int, default=36)
    p.add_argument("--epochs", type=int, default=44)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-patience", type=int, default=4)
    p.add_argument("--stop-patience", type=int, default=10)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--csv", help="append a metric row to this CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="seeded random hyperparameter search")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=METHODS, default="latency")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-epochs-cap", type=int, default=None)
    p.add_argument("--max-exposure-cap", type=int, default=None)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("repeat", help="repeat-train one setting over seeds")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=METHODS, default="latency")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=36)
    p.add_argument("--epochs", type=int, default=44)
    p.add_argument("--beta", type=float, default=0.727)
    p.add_argument("--exposure", type=int, default=6)
    p.add_argument("--from-champions", help="champions.json from a search run")
    p.add_argument("--metric", default="f1", choices=hpo.METRIC_NAMES)
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("report", help="aggregate run records per method")
    add_common(p)
    p.add_argument("records", nargs="+", help="runs.jsonl files")
    p.add_argument("--out", help="write the summary CSV here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("baseline", help="train/score the non-spiking reference")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=44)
    p.add_argument("--epochs", type=int, default=29)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _expand_config(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpikeflagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
