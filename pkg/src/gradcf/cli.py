"""Command-line surface.

Subcommands: train, explain, evaluate, generate, ablate. Every run writes a
manifest.json (command, resolved configuration, seeds, artifact hashes) next
to its outputs; primary artifacts are byte-identical when a command repeats
with the same seed.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 an explanation
ran out of budget before reaching tau.

Data sources for --data:
  synth            Gaussian blobs (see --dim/--classes/--separation)
  mnist | digits   IDX image corpus under --data-dir; when the standard MNIST
                   files are absent, a deterministic rendered-digit corpus is
                   written there once in the same IDX format and used instead
  <path>.csv       numeric CSV with --label-column
Raw values are mapped through the normalization stored in the model file
whenever one is present.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, baselines, construction as gc, data, metrics, net

MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
}
DIGIT_CORPUS_SEED = 713  # fixed: the fallback corpus plays the role of external data
DIGIT_CORPUS_SIZE = (4000, 1500)

SUB_STREAMS = {"data": 0, "init": 1, "sampling": 2}


class UsageError(Exception):
    pass


def sub_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, SUB_STREAMS[name]]).generate_state(1)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    """Reproducibility record written as manifest.json beside the artifacts.

    Reruns with the same flags and seed produce byte-identical artifacts;
    only the timestamp field here may differ between such runs.
    """

    command: str
    options: dict
    config: dict
    seeds: dict
    inputs: dict
    outputs: dict
    versions: dict
    timestamp: str

    def write(self, out_dir: Path) -> None:
        doc = dataclasses.asdict(self)
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)


def finish_run(command, args, config, seeds, inputs, artifacts, out_dir: Path) -> None:
    options = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    outputs = {name: {"path": str(p), "sha256": sha256_file(p)} for name, p in artifacts.items()}
    RunManifest(
        command=command,
        options=options,
        config=config,
        seeds=seeds,
        inputs=inputs,
        outputs=outputs,
        versions={
            "package": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
    ).write(out_dir)


# ---------------------------------------------------------------- data plumbing

def _find_mnist(data_dir: Path) -> dict | None:
    found = {}
    for key, names in MNIST_FILES.items():
        hit = None
        for name in names:
            for suffix in ("", ".gz"):
                p = data_dir / (name + suffix)
                if p.exists():
                    hit = p
                    break
            if hit:
                break
        if hit is None:
            return None
        found[key] = hit
    return found


def _ensure_digit_corpus(data_dir: Path) -> dict:
    """Deterministic rendered-digit IDX files standing in for MNIST."""
    paths = {
        "train_images": data_dir / "digits-train-images-idx3-ubyte",
        "train_labels": data_dir / "digits-train-labels-idx1-ubyte",
        "test_images": data_dir / "digits-test-images-idx3-ubyte",
        "test_labels": data_dir / "digits-test-labels-idx1-ubyte",
    }
    if not all(p.exists() for p in paths.values()):
        data_dir.mkdir(parents=True, exist_ok=True)
        n_train, n_test = DIGIT_CORPUS_SIZE
        train, test = data.synth_digits(n_train, n_test, seed=DIGIT_CORPUS_SEED)
        data.save_idx(train, paths["train_images"], paths["train_labels"])
        data.save_idx(test, paths["test_images"], paths["test_labels"])
        print(f"wrote rendered-digit corpus to {data_dir}", file=sys.stderr)
    return paths


def resolve_data(args, seed: int, holdout: bool = False) -> tuple[data.Dataset, data.Dataset, str]:
    """Resolve --data into (train, test, name).

    A lone CSV is returned as both splits so row indices match the file;
    holdout=True (training) carves out a seeded 20% test share instead.
    """
    source = args.data or "synth"
    if source == "synth":
        train, test = data.synth_gaussian(
            args.dim,
            args.classes,
            args.n_per_class,
            args.separation,
            seed=sub_seed(seed, "data"),
            test_per_class=args.test_per_class,
        )
        return train, test, "synth"

    if source in ("mnist", "digits"):
        data_dir = Path(args.data_dir)
        files = _find_mnist(data_dir) if source == "mnist" else None
        name = "mnist"
        if files is None:
            files = _ensure_digit_corpus(data_dir)
            name = "digits"
        train = data.load_idx(files["train_images"], files["train_labels"], limit=args.train_limit)
        test = data.load_idx(files["test_images"], files["test_labels"], limit=args.test_limit)
        train.split, test.split = "train", "test"
        return train, test, name

    path = Path(source)
    if path.suffix.lower() == ".csv":
        if not args.label_column:
            raise UsageError("CSV data needs --label-column")
        full = data.load_csv(path, label_column=args.label_column)
        if args.test_csv:
            test = data.load_csv(Path(args.test_csv), label_column=args.label_column, split="test")
            return full, test, path.stem
        if not holdout:
            return full, full, path.stem
        rng = np.random.default_rng(sub_seed(seed, "data"))
        order = rng.permutation(len(full))
        cut = max(1, int(0.8 * len(full)))
        tr_idx, te_idx = order[:cut], order[cut:]
        def take(idx, tag):
            return data.Dataset(
                instances=[full.instances[i] for i in idx],
                labels=full.labels[idx],
                split=tag,
                label_names=full.label_names,
            )
        return take(tr_idx, "train"), take(te_idx, "test"), path.stem

    raise UsageError(f"unrecognized --data source {source!r}")


def normalized_for_model(model: net.NetworkModel, ds: data.Dataset) -> data.Dataset:
    # ds.norm set means the values are already in normalized space
    if model.norm is None or ds.norm is not None:
        return ds
    return data.apply_normalizer(ds, model.norm)


def default_data_source(args, model: net.NetworkModel) -> None:
    if args.data is None:
        args.data = "digits" if model.image_shape is not None else "synth"


def _parse_block(text: str | None) -> tuple[int, int] | None:
    if not text or text.lower() == "none":
        return None
    sep = "x" if "x" in text else ","
    parts = text.split(sep)
    if len(parts) != 2:
        raise UsageError(f"--block expects HxW or H,W, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_hidden(text: str | None, fallback: list[int]) -> list[int]:
    if not text:
        return fallback
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_config(args, model: net.NetworkModel) -> gc.ExplainConfig:
    is_image = model.image_shape is not None
    tau = args.tau if args.tau is not None else (0.9 if is_image else 0.5)
    sigma = args.sigma if args.sigma is not None else (1000 if is_image else 500)
    block = _parse_block(args.block) if args.block is not None else ((4, 4) if is_image else None)
    return gc.ExplainConfig(
        tau=tau,
        sigma=sigma,
        lam=args.lam,
        eta=args.eta,
        beta=args.beta,
        n_ref=args.n_ref,
        lr=args.lr,
        block=block,
        objective=args.objective if hasattr(args, "objective") else "gradual",
        scope=getattr(args, "scope", "masked"),
        rank_mode=args.rank_mode,
        logit_term=args.logit_term,
        clamp=args.clamp,
        max_outer=args.max_outer,
        seed=args.seed,
    )


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    out = Path(args.out)
    train, test, name = resolve_data(args, args.seed, holdout=True)
    is_image = train.image_shape is not None
    if not is_image and train.norm is None:
        # raw tabular input: fit min-max on the training split
        norm = data.fit_normalizer(train)
        train = data.apply_normalizer(train, norm)
        if len(test):
            test = data.apply_normalizer(test, norm)

    hidden = _parse_hidden(args.hidden, [64, 32] if is_image else [16])
    d = train.instances[0].d
    k = int(train.labels.max()) + 1
    model = net.init_mlp([d, *hidden, k], seed=sub_seed(args.seed, "init"))
    if is_image:
        model.image_shape = train.image_shape
    if train.norm is not None:
        model.norm = train.norm

    epochs = args.epochs if args.epochs is not None else (15 if is_image else 40)
    report = net.train(
        model,
        train.matrix,
        train.labels,
        epochs=epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        lr=args.lr,
        test=(test.matrix, test.labels) if len(test) else None,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save_model(model, out)
    test_txt = f"{report.test_accuracy:.4f}" if report.test_accuracy is not None else "n/a"
    print(f"train accuracy {report.train_accuracy:.4f}  test accuracy {test_txt}")
    print(f"model written to {out}")

    out_dir = out.parent if out.parent != Path("") else Path(".")
    finish_run(
        "train",
        args,
        config={
            "data": name,
            "layers": [d, *hidden, k],
            "epochs": epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "train_size": len(train),
            "test_size": len(test),
            "train_accuracy": report.train_accuracy,
            "test_accuracy": report.test_accuracy,
        },
        seeds={"master": args.seed, "data": sub_seed(args.seed, "data"), "init": sub_seed(args.seed, "init")},
        inputs={"data": args.data},
        artifacts={"model": out},
        out_dir=out_dir,
    )
    return 0


def _load_instance(args, model, train, test) -> net.FeatureVector:
    if args.vector is not None:
        values = np.array([float(tok) for tok in args.vector.split(",")])
        if model.norm is not None:
            lo, hi = model.norm
            span = np.where(hi - lo == 0.0, 1.0, hi - lo)
            values = np.where(hi - lo == 0.0, 0.0, (values - lo) / span)
        if values.size != model.input_dim:
            raise UsageError(f"--vector has {values.size} values, model expects {model.input_dim}")
        return net.FeatureVector(values=values, image_shape=model.image_shape)
    ds = test if len(test) else train
    if args.row is None:
        raise UsageError("need --row or --vector to pick an instance")
    if not 0 <= args.row < len(ds):
        raise UsageError(f"--row {args.row} outside [0, {len(ds)})")
    return ds.instances[args.row]


def cmd_explain(args) -> int:
    model = net.load_model(args.model)
    if not 0 <= args.target < model.class_count:
        raise UsageError(f"--target {args.target} outside [0, {model.class_count})")
    default_data_source(args, model)
    train, test, name = resolve_data(args, args.seed)
    train = normalized_for_model(model, train)
    test = normalized_for_model(model, test)

    config = build_config(args, model)
    x = _load_instance(args, model, train, test)

    if len(train) == 0:
        raise UsageError("no training data available for reference sampling")
    if args.test_csv is None and args.data.endswith(".csv") and not args.quiet:
        print("note: reference logits sampled from the provided CSV itself", file=sys.stderr)
    ref = data.sample_reference_set(
        train, model, args.target, n=config.n_ref, seed=sub_seed(args.seed, "sampling")
    )

    runner = gc.run if config.objective == "gradual" else baselines.run_baseline
    session = runner(model, x, args.target, ref, config)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    session_path = out_dir / "session.json"
    gc.save_session(session, session_path)
    artifacts = {"session": session_path}
    if session.image_shape is not None:
        orig_path = out_dir / "original.pgm"
        cf_path = out_dir / "counterfactual.pgm"
        gc.write_pgm(session.original.reshape(session.image_shape), orig_path)
        gc.write_pgm(session.x_prime.reshape(session.image_shape), cf_path)
        artifacts |= {"original": orig_path, "counterfactual": cf_path}

    print(
        f"outcome {session.outcome}  prob({args.target}) {session.prob_trace[-1]:.4f}  "
        f"masked units {session.mask.masked_unit_count()}"
    )
    finish_run(
        "explain",
        args,
        config={**dataclasses.asdict(config), "target": args.target, "data": name},
        seeds={"master": args.seed, "sampling": sub_seed(args.seed, "sampling")},
        inputs={"model": str(args.model), "data": args.data},
        artifacts=artifacts,
        out_dir=out_dir,
    )
    return 0 if session.outcome == "success" else 3


OBJECTIVE_TOKENS = {
    "gradual": ("gradual", "masked"),
    "wachter": ("wachter", "masked"),
    "wachter-full": ("wachter", "full"),
    "ablation": ("ablation", "masked"),
}


def cmd_evaluate(args) -> int:
    model = net.load_model(args.model)
    default_data_source(args, model)
    train, test, name = resolve_data(args, args.seed)
    train = normalized_for_model(model, train)
    test = normalized_for_model(model, test)
    if args.n is not None and args.n <= 0:
        raise UsageError("--n must be positive")

    tokens = [tok.strip() for tok in args.objectives.split(",") if tok.strip()]
    for tok in tokens:
        if tok not in OBJECTIVE_TOKENS:
            raise UsageError(f"unknown objective {tok!r}; choose from {sorted(OBJECTIVE_TOKENS)}")

    base = build_config(args, model)
    reports = []
    for tok in tokens:
        objective, scope = OBJECTIVE_TOKENS[tok]
        cfg = dataclasses.replace(base, objective=objective, scope=scope)
        report, _ = metrics.evaluate_batch(
            model,
            test,
            train,
            cfg,
            n=args.n,
            target_policy=args.target_policy,
            eps=args.epsilon,
            seed=args.seed,
            method=tok,
            dataset_name=name,
        )
        reports.append(report)
        r = report.row()
        print(
            f"{tok:12s} phi1 {r['phi1_mean']:.3f}±{r['phi1_std']:.3f}  "
            f"phi2 {r['phi2_mean']:.3f}±{r['phi2_std']:.3f}  "
            f"logit_dist {r['logit_dist_mean']:.3f}  success {r['success_rate']:.2f}"
        )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "report.json"
    metrics.write_report_csv(reports, csv_path)
    metrics.write_report_json(reports, json_path)
    finish_run(
        "evaluate",
        args,
        config={**dataclasses.asdict(base), "objectives": tokens, "n": args.n, "epsilon": args.epsilon, "data": name},
        seeds={"master": args.seed},
        inputs={"model": str(args.model), "data": args.data},
        artifacts={"report_csv": csv_path, "report_json": json_path},
        out_dir=out_dir,
    )
    return 0


def cmd_generate(args) -> int:
    model = net.load_model(args.model)
    if model.image_shape is None:
        raise UsageError("generation needs an image-shaped model")
    if not 0 <= args.target < model.class_count:
        raise UsageError(f"--target {args.target} outside [0, {model.class_count})")
    default_data_source(args, model)
    train, _, name = resolve_data(args, args.seed)
    train = normalized_for_model(model, train)
    ref = data.sample_reference_set(
        train, model, args.target, n=args.n_ref, seed=sub_seed(args.seed, "sampling")
    )
    config = build_config(args, model)
    seed_image = net.FeatureVector(
        values=np.zeros(model.input_dim), image_shape=model.image_shape
    )
    session = gc.generate_from_seed(model, seed_image, args.target, ref, config)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path = out_dir / "generated.pgm"
    session_path = out_dir / "session.json"
    gc.write_pgm(session.x_prime.reshape(model.image_shape), img_path)
    gc.save_session(session, session_path)
    pred = int(net.forward(model, session.x_prime).argmax())
    print(f"outcome {session.outcome}  predicted class {pred}  prob {session.prob_trace[-1]:.4f}")
    finish_run(
        "generate",
        args,
        config={**dataclasses.asdict(session.config), "target": args.target, "data": name},
        seeds={"master": args.seed, "sampling": sub_seed(args.seed, "sampling")},
        inputs={"model": str(args.model)},
        artifacts={"image": img_path, "session": session_path},
        out_dir=out_dir,
    )
    return 0 if session.outcome == "success" else 3


def cmd_ablate(args) -> int:
    model = net.load_model(args.model)
    default_data_source(args, model)
    train, test, name = resolve_data(args, args.seed)
    train = normalized_for_model(model, train)
    test = normalized_for_model(model, test)
    if args.n is not None and args.n <= 0:
        raise UsageError("--n must be positive")

    base = build_config(args, model)
    reports = {}
    for objective in ("gradual", "ablation"):
        cfg = dataclasses.replace(base, objective=objective)
        report, _ = metrics.evaluate_batch(
            model, test, train, cfg,
            n=args.n, target_policy=args.target_policy, eps=args.epsilon,
            seed=args.seed, method=objective, dataset_name=name,
        )
        reports[objective] = report

    by_index = {
        objective: {row["index"]: row for row in rep.instance_rows}
        for objective, rep in reports.items()
    }
    pairs = []
    for idx, grow in sorted(by_index["gradual"].items()):
        arow = by_index["ablation"].get(idx)
        if arow is None or grow["outcome"] != "success" or arow["outcome"] != "success":
            continue
        pairs.append(
            {
                "index": idx,
                "gradual_logit_distance": grow["logit_distance"],
                "ablation_logit_distance": arow["logit_distance"],
                "gradual_lower": grow["logit_distance"] < arow["logit_distance"],
            }
        )
    win_rate = (
        sum(p["gradual_lower"] for p in pairs) / len(pairs) if pairs else float("nan")
    )
    summary = {
        "pairs": pairs,
        "paired_count": len(pairs),
        "gradual_win_rate": win_rate,
        "gradual_mean": float(np.mean([p["gradual_logit_distance"] for p in pairs])) if pairs else None,
        "ablation_mean": float(np.mean([p["ablation_logit_distance"] for p in pairs])) if pairs else None,
        "success_rate": {k: rep.success_rate for k, rep in reports.items()},
    }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "ablate.json"
    metrics.write_report_csv(list(reports.values()), csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(
        f"paired {len(pairs)}  gradual wins {win_rate:.2f}  "
        f"means gradual {summary['gradual_mean']} ablation {summary['ablation_mean']}"
    )
    finish_run(
        "ablate",
        args,
        config={**dataclasses.asdict(base), "n": args.n, "data": name},
        seeds={"master": args.seed},
        inputs={"model": str(args.model), "data": args.data},
        artifacts={"report_csv": csv_path, "ablate_json": json_path},
        out_dir=out_dir,
    )
    return 0


# ---------------------------------------------------------------- parser

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    # default None: train falls back to synth, model-bearing commands infer
    # digits for image models and synth otherwise
    p.add_argument("--data", default=None, help="synth | mnist | digits | path.csv")
    p.add_argument("--data-dir", default="data", help="directory for IDX corpora")
    p.add_argument("--label-column", default=None, help="label column for CSV data")
    p.add_argument("--test-csv", default=None, help="separate CSV test split")
    p.add_argument("--dim", type=int, default=10, help="synth: feature count")
    p.add_argument("--classes", type=int, default=2, help="synth: class count")
    p.add_argument("--n-per-class", type=int, default=100, help="synth: train rows per class")
    p.add_argument("--test-per-class", type=int, default=None, help="synth: test rows per class")
    p.add_argument("--separation", type=float, default=6.0, help="synth: blob mean offset")
    p.add_argument("--train-limit", type=int, default=2000, help="IDX: training rows to read")
    p.add_argument("--test-limit", type=int, default=1000, help="IDX: test rows to read")


def _add_explain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=None, help="target probability (default 0.9 image / 0.5 tabular)")
    p.add_argument("--sigma", type=int, default=None, help="inner steps per composition (default 1000 image / 500 tabular)")
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.3)
    p.add_argument("--eta", type=float, default=0.3, help="total-variation weight (images)")
    p.add_argument("--beta", type=float, default=2.0, help="total-variation exponent")
    p.add_argument("--n-ref", type=int, default=100, help="reference sample count")
    p.add_argument("--lr", type=float, default=0.1, help="composite Adam learning rate")
    p.add_argument("--block", default=None, help="image block size HxW (default 4x4 for images, none for tabular)")
    p.add_argument("--rank-mode", choices=("static", "recompute"), default="static")
    p.add_argument("--logit-term", choices=("vector", "scalar"), default="vector")
    p.add_argument("--clamp", action="store_true", help="keep composite values inside [0,1]")
    p.add_argument("--max-outer", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="gradcf",
        description="Counterfactual explanations by gradient-ranked masking and logit-matching composition",
    )
    root.add_argument("--version", action="version", version=f"gradcf {__version__}")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a dense classifier")
    _add_data_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--hidden", default=None, help="hidden layer sizes, e.g. 64,32")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="explain one instance")
    _add_data_flags(p)
    _add_explain_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--row", type=int, default=None, help="test-set row to explain")
    p.add_argument("--vector", default=None, help="inline comma-separated raw feature values")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--objective", choices=("gradual", "wachter", "ablation"), default="gradual")
    p.add_argument("--scope", choices=("masked", "full"), default="masked")
    p.add_argument("--out-dir", default="out/explain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="batch metrics over test instances")
    _add_data_flags(p)
    _add_explain_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=100, help="instances to evaluate")
    p.add_argument("--objectives", default="gradual", help="comma list: gradual,wachter,wachter-full,ablation")
    p.add_argument("--epsilon", type=float, default=3.0, help="coherence neighborhood radius (differing features)")
    p.add_argument("--target-policy", default="second", help="'second', 'opposite', or a class index")
    p.add_argument("--out-dir", default="out/evaluate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="generate an image of a class from a black seed")
    _add_data_flags(p)
    _add_explain_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--out-dir", default="out/generate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ablate", help="paired gradual vs no-logit-matching comparison")
    _add_data_flags(p)
    _add_explain_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=3.0)
    p.add_argument("--target-policy", default="second")
    p.add_argument("--out-dir", default="out/ablate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    return root


def _coerce_target_policy(args) -> None:
    policy = getattr(args, "target_policy", None)
    if policy is None or policy in ("second", "opposite"):
        return
    try:
        args.target_policy = int(policy)
    except ValueError:
        raise UsageError(f"--target-policy must be 'second', 'opposite', or a class index, got {policy!r}")


def entry(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _coerce_target_policy(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (data.DataFormatError, net.ModelFormatError, OSError, ValueError, gc.MaskBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(entry())
