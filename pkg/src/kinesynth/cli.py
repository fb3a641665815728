"""Command-line entry point.

Every command writes into an output directory, echoes the resolved config
there and exits 0 on success, 1 on invalid input and 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cgan, classifier, data, embed, evaluation, plotting, signal, toy
from .config import load_config
from .errors import (
    DegenerateInputError,
    DimensionError,
    MalformedRowError,
    ParameterError,
    SchemaError,
    StratificationError,
)

SCHEMA_VERSION = 1
log = logging.getLogger("kinesynth")

DATASET_FILE = "dataset.csv"
GAN_STEM = "gan"
FCN_STEM = "fcn"
SYNTHETIC_FILE = "synthetic.csv"
REPORT_FILE = "cv_report.json"
VALIDATION_ERRORS = (ParameterError, SchemaError, MalformedRowError, StratificationError,
                     DimensionError, DegenerateInputError, ValueError, IndexError, FileNotFoundError)


class MissingArtifact(ParameterError):
    def __init__(self, path: Path, command: str):
        super().__init__(f"{path} not found; run `kinesynth {command}` first")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(path: Path, command: str) -> Path:
    if not path.exists():
        raise MissingArtifact(path, command)
    return path


def _out_dir(args, cfg) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.echo(out)
    return out


def _load_dataset(directory) -> data.Dataset:
    return data.ingest(_require(Path(directory) / DATASET_FILE, "ingest"))


def _load_gan(directory) -> cgan.GanModel:
    _require(Path(directory) / f"{GAN_STEM}.ksn", "train-gan")
    return cgan.GanModel.load(Path(directory) / GAN_STEM)


def _class_counts(dataset: data.Dataset) -> dict:
    return {f"{t}/{i}": n for (t, i), n in sorted(dataset.counts().items())}


# commands


def cmd_make_toy_fixture(args, cfg) -> None:
    out = _out_dir(args, cfg)
    d = cfg.data
    trials = toy.make_toy_trials(d.toy_tasks, d.toy_impairments, d.toy_per_class, cfg.seed)
    path = out / "toy.csv"
    data.export(data.Dataset(trials), path)
    print(f"wrote {len(trials)} raw toy trials to {path}")


def cmd_ingest(args, cfg) -> None:
    src = Path(args.input)
    if not src.exists():
        raise FileNotFoundError(f"{src} not found; create it with `kinesynth make-toy-fixture` or convert your data")
    dataset = data.ingest(src)
    expected = args.expect if args.expect is not None else cfg.data.expected_trials
    if expected and len(dataset) != expected:
        raise ParameterError(f"ingest produced {len(dataset)} trials, expected {expected}")
    out = _out_dir(args, cfg)
    data.export(dataset, out / DATASET_FILE)
    summary = {"schema_version": SCHEMA_VERSION, "source": src.name, "n_trials": len(dataset),
               "skipped_rows": dataset.skipped, "class_counts": _class_counts(dataset)}
    _write_json(out / "summary.json", summary)
    print(f"ingested {len(dataset)} trials ({dataset.skipped} rows skipped)")
    for name, n in summary["class_counts"].items():
        print(f"  {name}: {n}")


def cmd_train_gan(args, cfg) -> None:
    dataset = _load_dataset(args.data)
    out = _out_dir(args, cfg)
    every = max(1, cfg.gan.epochs // 20)

    def progress(epoch, row):
        if epoch % every == 0 or epoch == cfg.gan.epochs:
            log.info("epoch %d  d_loss %.4f  g_loss %.4f  hf %.4f", epoch, row["d_loss"], row["g_loss"], row["hf_ratio"])

    model, train_log = cgan.train(dataset, cfg.gan, progress)
    model.save(out / GAN_STEM)
    train_log.to_csv(out / "train_log.csv")
    print(f"trained cGAN for {cfg.gan.epochs} epochs on {len(dataset)} trials -> {out / GAN_STEM}.ksn")


def cmd_generate(args, cfg) -> None:
    model = _load_gan(args.model)
    try:
        cls = data.parse_condition(args.cls)
    except ValueError as exc:
        raise ParameterError(f"--class must look like T16/ModerateSevere: {exc}") from exc
    if args.n < 0:
        raise ParameterError("--n must be >= 0")
    out = _out_dir(args, cfg)
    trials = cgan.generate(model, cls, args.n, cfg.seed, apply_filter=not args.no_filter)
    data.export(data.Dataset(trials), out / SYNTHETIC_FILE)
    ratios = [signal.high_frequency_power_ratio(t.signal) for t in trials]
    report = {"schema_version": SCHEMA_VERSION, "class": args.cls, "n": args.n, "seed": cfg.seed,
              "filtered": not args.no_filter, "cutoff_hz": 2.0, "hf_power_ratio": ratios,
              "hf_power_ratio_max": max(ratios) if ratios else None}
    _write_json(out / "hf_report.json", report)
    print(f"wrote {args.n} synthetic {args.cls} trials to {out / SYNTHETIC_FILE}")


def cmd_train_clf(args, cfg) -> None:
    dataset = _load_dataset(args.data)
    if args.synthetic:
        dataset = dataset + data.ingest(_require(Path(args.synthetic) / SYNTHETIC_FILE, "generate"))
    out = _out_dir(args, cfg)
    model, train_log = classifier.train_classifier(dataset, cfg.fcn)
    model.save(out / FCN_STEM)
    train_log.to_csv(out / "train_log.csv")
    final = train_log.rows[-1] if train_log.rows else {"loss": float("nan"), "accuracy": float("nan")}
    print(f"trained FCN on {len(dataset)} trials: loss {final['loss']:.4f}, training accuracy {final['accuracy']:.3f}")


def cmd_evaluate(args, cfg) -> None:
    dataset = _load_dataset(args.data)
    if cfg.data.subsample_per_class:
        dataset = data.subsample_per_class(dataset, cfg.data.subsample_per_class, cfg.seed)
    plan = data.make_folds(dataset, cfg.data.n_folds, cfg.data.split_strategy, cfg.seed)
    out = _out_dir(args, cfg)

    def progress(condition, fold):
        log.info("%s fold %d: accuracy %.3f (train %d, test %d)", condition, fold.fold,
                 fold.metrics["accuracy"], fold.n_train, fold.n_test)

    report = evaluation.run_experiment(dataset, plan, cfg.gan, cfg.fcn, cfg.eval.conditions, progress)
    report.to_json(out / REPORT_FILE)
    report.write_confusions(out)
    labels = evaluation.class_labels(cfg.fcn.target)
    for name, res in report.conditions.items():
        plotting.plot_confusion(res.pooled_confusion().counts, labels, out / f"confusion_{name}.svg",
                                plotting.CONDITION_TITLES[name])
    for name, res in report.conditions.items():
        m = res.mean()
        print(f"{name}: " + ", ".join(f"{k} {m[k]:.3f}" for k in evaluation.METRICS))
    for metric, tt in report.t_tests().items():
        if tt["p"] is not None:
            print(f"paired t ({metric}): t={tt['t']:.3f} p={tt['p']:.4g}")


def cmd_tsne(args, cfg) -> None:
    dataset = _load_dataset(args.data)
    trials = list(dataset)
    if args.synthetic:
        trials += list(data.ingest(_require(Path(args.synthetic) / SYNTHETIC_FILE, "generate")))
    elif args.model:
        model = _load_gan(args.model)
        trials += list(cgan.generate_like(model, dataset.condition_labels(), len(dataset), cfg.seed))
    out = _out_dir(args, cfg)
    X = np.stack([t.signal.reshape(-1) for t in trials])
    emb = embed.tsne(X, cfg.tsne)
    embed.write_embedding_csv(out / "embedding.csv", emb.coords, trials)
    with open(out / "kl_log.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,kl\n")
        fh.writelines(f"{i + 1},{v!r}\n" for i, v in enumerate(emb.kl))
    plotting.plot_embedding(embed.read_embedding_csv(out / "embedding.csv"), out / "tsne.svg")
    print(f"embedded {len(trials)} trials; final KL {emb.kl[-1] if emb.kl else float('nan'):.4f}")


def cmd_report(args, cfg) -> None:
    if not (args.eval or (args.data and args.model)):
        raise ParameterError("report needs --eval DIR and/or both --data DIR and --model DIR")
    written = []
    if args.eval:
        doc = json.loads(_require(Path(args.eval) / REPORT_FILE, "evaluate").read_text(encoding="utf-8"))
        out = _out_dir(args, cfg)
        written += plotting.write_metric_table(doc, out)
        for row in plotting.metric_table(doc):
            print("  ".join(f"{c:<20}" for c in row).rstrip())
    if args.data and args.model:
        dataset = _load_dataset(args.data)
        model = _load_gan(args.model)
        out = _out_dir(args, cfg)
        rc = cfg.report
        bad = [c for c in rc.channels if not 0 <= c < data.N_CHANNELS]
        if bad:
            raise ParameterError(f"report.channels out of range: {bad}")
        panels = {}
        labels = dataset.condition_labels()
        for cls in sorted(set(labels.tolist()))[: rc.max_classes]:
            real = dataset.signals()[labels == cls][: rc.per_class]
            syn = cgan.generate_signals(model, cls, rc.per_class, cfg.seed)
            panels["/".join(data.CONDITIONS[cls])] = (real, syn)
        written.append(plotting.plot_trajectories(panels, rc.channels, out / "trajectories.svg"))
    for p in written:
        print(f"wrote {p}")


def cmd_show_config(args, cfg) -> None:
    sys.stdout.write(cfg.to_ini())


COMMANDS = {
    "make-toy-fixture": cmd_make_toy_fixture,
    "ingest": cmd_ingest,
    "train-gan": cmd_train_gan,
    "generate": cmd_generate,
    "train-clf": cmd_train_clf,
    "evaluate": cmd_evaluate,
    "tsne": cmd_tsne,
    "report": cmd_report,
    "show-config": cmd_show_config,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")

    p = argparse.ArgumentParser(prog="kinesynth", description="Synthetic reaching kinematics and task classification.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-toy-fixture", parents=[common], help="write the deterministic toy dataset")
    s.add_argument("--out", required=True)

    s = sub.add_parser("ingest", parents=[common], help="validate and preprocess an interchange CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--expect", type=int, help="fail unless exactly this many trials are ingested")

    s = sub.add_parser("train-gan", parents=[common], help="train the conditional GAN")
    s.add_argument("--data", required=True, help="ingest output directory")
    s.add_argument("--out", required=True)

    s = sub.add_parser("generate", parents=[common], help="generate synthetic trials for one class")
    s.add_argument("--model", required=True, help="train-gan output directory")
    s.add_argument("--class", dest="cls", required=True, help="task/impairment, e.g. T16/ModerateSevere")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--no-filter", action="store_true", help="skip the 2 Hz lowpass")
    s.add_argument("--out", required=True)

    s = sub.add_parser("train-clf", parents=[common], help="train the task classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--synthetic", help="generate output directory to add to the training set")
    s.add_argument("--out", required=True)

    s = sub.add_parser("evaluate", parents=[common], help="cross-validated real-only vs augmented comparison")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("tsne", parents=[common], help="t-SNE of real (and synthetic) trials")
    s.add_argument("--data", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--synthetic", help="generate output directory")
    g.add_argument("--model", help="train-gan output directory; generates a dataset-sized synthetic set")
    s.add_argument("--out", required=True)

    s = sub.add_parser("report", parents=[common], help="metric table and trajectory overlays")
    s.add_argument("--eval", help="evaluate output directory")
    s.add_argument("--data", help="ingest output directory")
    s.add_argument("--model", help="train-gan output directory")
    s.add_argument("--out", required=True)

    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](args, cfg)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
