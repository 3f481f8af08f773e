"""Command-line experiment runner.

Subcommands: synth, pretrain, finetune, eval, compare, retrieve, replay.
Every run writes its outputs plus a JSON run manifest holding the fully
resolved configuration; `tempcoh replay MANIFEST` re-executes a run from
that manifest and reproduces its outputs byte for byte.

Exit codes: 0 success, 1 usage error, 2 data or contract error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, resolve_config, resolve_delta_seconds
from .data_io import (atomic_write_text, load_checkpoint, load_dataset,
                      load_encoder, load_phase_model, save_dataset,
                      save_encoder, save_phase_model)
from .errors import CheckpointError, DataFormatError, TempcohError, UsageError
from .experiments import (BASELINE, build_encoder, build_phase_model,
                          make_finetune_config, make_pretrain_config,
                          run_comparison)
from .metrics import MetricSummary
from .retrieval import phase_agreement, retrieval_report
from .synthetic import SynthConfig, generate_dataset
from .training import PRETRAIN_METHODS, evaluate, finetune, pretrain

MANIFEST_FORMAT = "tempcoh-run"
LABELED_SET_CHOICES = ("A", "AB", "ABC")
SPLIT_CHOICES = ("A", "B", "C", "D")


class _Parser(argparse.ArgumentParser):
    """argparse reports usage problems via exceptions, not sys.exit(2)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fnum(x) -> str:
    """Full-precision, round-trippable float formatting for machine output."""
    return repr(float(x))


def _cell(summary: MetricSummary) -> str:
    if summary.mean is None:
        return "n/a"
    return f"{summary.mean:.1f} ± {summary.std:.1f}"


def _text_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"


def _mkparent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------- runners
# Each runner executes one command from (resolved config, run parameters,
# paths) alone, so a replayed manifest takes exactly the same code path. A
# runner may write runtime-resolved values back into `resolved`/`run`; the
# manifest is written afterwards and records them.

def _run_synth(resolved, run, paths) -> list[Path]:
    cfg = SynthConfig(**resolved["synth"])
    dataset = generate_dataset(cfg, run["videos"], run["seed"])
    out = Path(paths["out"])
    save_dataset(out, dataset)
    outputs = [out / "dataset.json", out / "splits.txt"]
    for video in dataset.videos:
        outputs.append(out / f"{video.video_id}.feat")
        outputs.append(out / f"{video.video_id}.feat.labels.csv")
    return outputs


def _run_pretrain(resolved, run, paths) -> list[Path]:
    dataset = load_dataset(paths["data"])
    method = run["method"]
    resolved["sampler"]["delta_seconds"] = resolve_delta_seconds(resolved, method)
    run["fps"] = dataset.fps
    cfg = make_pretrain_config(resolved, method, dataset.fps)
    encoder = build_encoder(resolved, dataset.feature_dim)
    rng = np.random.default_rng(run["seed"])
    encoder.init_uniform_fan(rng)
    result = pretrain(encoder, dataset.split("A", "B", "C"), cfg, rng)
    out = Path(paths["out"])
    _mkparent(out)
    save_encoder(out, encoder, {"method": method, "seed": run["seed"],
                                "epochs": cfg.epochs})
    losses_csv = Path(str(out) + ".losses.csv")
    lines = ["epoch,mean_loss"]
    lines += [f"{i},{_fnum(x)}" for i, x in enumerate(result.epoch_losses)]
    atomic_write_text(losses_csv, "\n".join(lines) + "\n")
    return [out, losses_csv]


def _run_finetune(resolved, run, paths) -> list[Path]:
    dataset = load_dataset(paths["data"])
    labeled = dataset.split(*tuple(run["labeled_sets"]))
    if not labeled:
        raise DataFormatError(f"labeled sets {run['labeled_sets']} contain "
                              f"no videos")
    rng = np.random.default_rng(run["seed"])
    init_path = paths.get("init")
    if init_path:
        encoder, _ = load_encoder(init_path)
        if encoder.input_dim != dataset.feature_dim:
            raise CheckpointError(
                f"{init_path}: encoder expects {encoder.input_dim} input "
                f"features but the dataset has {dataset.feature_dim}")
        model = build_phase_model(resolved, encoder, dataset.num_phases)
        model.init_head_uniform_fan(rng)
    else:
        encoder = build_encoder(resolved, dataset.feature_dim)
        model = build_phase_model(resolved, encoder, dataset.num_phases)
        model.init_uniform_fan(rng)
    result = finetune(model, labeled, make_finetune_config(resolved), rng)
    run["epochs_run"] = result.epochs_run
    run["stopped_early"] = result.stopped_early
    out = Path(paths["out"])
    _mkparent(out)
    save_phase_model(out, model, {
        "seed": run["seed"],
        "labeled_sets": run["labeled_sets"],
        "init": init_path,
        "epochs_run": result.epochs_run,
        "stopped_early": result.stopped_early,
    })
    log_csv = Path(str(out) + ".log.csv")
    lines = ["epoch,train_accuracy"]
    lines += [f"{i},{_fnum(a)}" for i, a in enumerate(result.epoch_accuracies)]
    atomic_write_text(log_csv, "\n".join(lines) + "\n")
    return [out, log_csv]


def _eval_report_csv(videos, result, num_phases: int) -> str:
    phase_cols = [f"P{k + 1}" for k in range(num_phases)]
    lines = ["video_id,accuracy,macro_recall,macro_precision,f1," + ",".join(phase_cols)]

    def fmt(value) -> str:
        return "" if value is None else _fnum(value)

    for seq in videos:
        m = result.per_video[seq.video_id]
        cells = [seq.video_id, _fnum(m.accuracy), _fnum(m.macro_recall),
                 _fnum(m.macro_precision), _fnum(m.f1)]
        cells += [fmt(m.per_phase_f1.get(k)) for k in range(num_phases)]
        lines.append(",".join(cells))
    report = result.report
    headline = [report.accuracy, report.macro_recall, report.macro_precision,
                report.f1]
    phases = [report.per_phase_f1.get(k, MetricSummary(None, None, 0))
              for k in range(num_phases)]
    for row_name, field in (("mean", "mean"), ("std", "std"), ("count", "count")):
        cells = [row_name]
        for s in headline + phases:
            value = getattr(s, field)
            cells.append(str(value) if field == "count" else fmt(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _eval_report_text(result, num_phases: int) -> str:
    report = result.report
    rows = [["metric", "mean ± std", "n"]]
    named = [("accuracy", report.accuracy), ("macro_recall", report.macro_recall),
             ("macro_precision", report.macro_precision), ("f1", report.f1)]
    named += [(f"P{k + 1}", report.per_phase_f1.get(k, MetricSummary(None, None, 0)))
              for k in range(num_phases)]
    for name, summary in named:
        rows.append([name, _cell(summary), str(summary.count)])
    return (f"evaluation over {report.num_videos} video(s)\n"
            + _text_table(rows))


def _load_model_for_eval(path, dataset):
    model, _ = load_phase_model(path)
    if model.encoder.input_dim != dataset.feature_dim:
        raise CheckpointError(f"{path}: model expects {model.encoder.input_dim} "
                              f"input features but the dataset has "
                              f"{dataset.feature_dim}")
    if model.num_phases != dataset.num_phases:
        raise CheckpointError(f"{path}: model has {model.num_phases} phases "
                              f"but the dataset has {dataset.num_phases}")
    return model


def _run_eval(resolved, run, paths) -> list[Path]:
    dataset = load_dataset(paths["data"])
    model = _load_model_for_eval(paths["model"], dataset)
    videos = dataset.split(run["split"])
    if not videos:
        raise DataFormatError(f"split {run['split']} is empty")
    result = evaluate(model, videos)
    out = Path(paths["out"])
    _mkparent(out)
    txt = Path(str(out) + ".txt")
    atomic_write_text(out, _eval_report_csv(videos, result, model.num_phases))
    atomic_write_text(txt, _eval_report_text(result, model.num_phases))
    return [out, txt]


def _run_compare(resolved, run, paths) -> list[Path]:
    dataset = load_dataset(paths["data"])
    methods = list(run["methods"])
    run["delta_seconds_by_method"] = {
        m: resolve_delta_seconds(resolved, m) for m in methods}
    seeds = [run["seed"] + i for i in range(run["seeds"])]
    arms = run_comparison(dataset, resolved, tuple(run["labeled_sets"]),
                          methods, seeds)
    out_dir = Path(paths["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    per_seed_lines = ["seed,method,accuracy,macro_recall,macro_precision,f1"]
    values: dict[tuple[str, int], dict[str, float]] = {}
    for arm in arms:
        row = {
            "accuracy": arm.report.accuracy.mean,
            "macro_recall": arm.report.macro_recall.mean,
            "macro_precision": arm.report.macro_precision.mean,
            "f1": arm.report.f1.mean,
        }
        values[(arm.method, arm.seed)] = row
        per_seed_lines.append(
            f"{arm.seed},{arm.method},{_fnum(row['accuracy'])},"
            f"{_fnum(row['macro_recall'])},{_fnum(row['macro_precision'])},"
            f"{_fnum(row['f1'])}")
    per_seed_csv = out_dir / "per_seed.csv"
    atomic_write_text(per_seed_csv, "\n".join(per_seed_lines) + "\n")

    metric_names = ("accuracy", "macro_recall", "macro_precision", "f1")
    summary_lines = ["method," + ",".join(
        f"{m}_mean,{m}_std" for m in metric_names) + ",f1_improvement"]
    table = [["method", *metric_names, "Δf1"]]
    for method in [BASELINE, *methods]:
        summaries = {m: MetricSummary.of([values[(method, s)][m] for s in seeds])
                     for m in metric_names}
        improvement = float(np.mean(
            [values[(method, s)]["f1"] - values[(BASELINE, s)]["f1"]
             for s in seeds]))
        cells = [method]
        for m in metric_names:
            cells += [_fnum(summaries[m].mean), _fnum(summaries[m].std)]
        cells.append(_fnum(improvement))
        summary_lines.append(",".join(cells))
        table.append([method, *(_cell(summaries[m]) for m in metric_names),
                      f"{improvement:+.1f}"])
    summary_csv = out_dir / "summary.csv"
    atomic_write_text(summary_csv, "\n".join(summary_lines) + "\n")
    summary_txt = out_dir / "summary.txt"
    atomic_write_text(
        summary_txt,
        f"label budget {run['labeled_sets']}, {len(seeds)} seed(s), "
        f"test split D\n" + _text_table(table))
    return [per_seed_csv, summary_csv, summary_txt]


def _load_encoder_any(path):
    """Accept an encoder checkpoint or take the encoder of a phase model."""
    kind, _, _ = load_checkpoint(path)
    if kind == "encoder":
        encoder, _ = load_encoder(path)
        return encoder
    model, _ = load_phase_model(path)
    return model.encoder


def _parse_queries(spec: str, dataset, query_split: str, seed: int):
    if spec.startswith("random:"):
        try:
            count = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"--queries {spec!r}: expected random:N") from exc
        if count < 1:
            raise UsageError("--queries random:N needs N >= 1")
        pool = dataset.split(*tuple(query_split))
        if not pool:
            raise DataFormatError(f"query splits {query_split} contain no videos")
        rng = np.random.default_rng(seed)
        queries = []
        for _ in range(count):
            video = pool[int(rng.integers(len(pool)))]
            queries.append((video, int(rng.integers(video.num_frames))))
        return queries
    queries = []
    for part in spec.split(","):
        if ":" not in part:
            raise UsageError(f"--queries: expected VIDEO_ID:FRAME, got {part!r}")
        vid, frame_text = part.rsplit(":", 1)
        try:
            frame = int(frame_text)
        except ValueError as exc:
            raise UsageError(f"--queries: bad frame index {frame_text!r}") from exc
        try:
            video = dataset.by_id(vid)
        except KeyError as exc:
            raise DataFormatError(f"unknown video id {vid!r}") from exc
        queries.append((video, frame))
    return queries


def _run_retrieve(resolved, run, paths) -> list[Path]:
    dataset = load_dataset(paths["data"])
    encoder = _load_encoder_any(paths["model"])
    if encoder.input_dim != dataset.feature_dim:
        raise CheckpointError(f"{paths['model']}: encoder expects "
                              f"{encoder.input_dim} input features but the "
                              f"dataset has {dataset.feature_dim}")
    corpus = dataset.split(run["split"])
    if not corpus:
        raise DataFormatError(f"split {run['split']} is empty")
    queries = _parse_queries(run["queries"], dataset, run["query_split"],
                             run["seed"])
    results = retrieval_report(encoder, queries, corpus)
    agreement = phase_agreement(results)
    lines = ["query_id,video_id,frame_index,distance,query_phase,retrieved_phase"]
    for res in results:
        qid = f"{res.query_video}:{res.query_frame}"
        qp = "" if res.query_phase is None else str(res.query_phase)
        for m in res.matches:
            rp = "" if m.retrieved_phase is None else str(m.retrieved_phase)
            lines.append(f"{qid},{m.video_id},{m.frame_index},"
                         f"{_fnum(m.distance)},{qp},{rp}")
    out = Path(paths["out"])
    _mkparent(out)
    atomic_write_text(out, "\n".join(lines) + "\n")
    txt = Path(str(out) + ".txt")
    agreement_text = "n/a" if agreement is None else _fnum(agreement)
    atomic_write_text(txt, (
        f"queries: {len(results)}\n"
        f"corpus videos: {len(corpus)}\n"
        f"phase_agreement: {agreement_text}\n"))
    return [out, txt]


_RUNNERS = {
    "synth": _run_synth,
    "pretrain": _run_pretrain,
    "finetune": _run_finetune,
    "eval": _run_eval,
    "compare": _run_compare,
    "retrieve": _run_retrieve,
}


def _artifact_version(outputs: list[Path]) -> str:
    digest = hashlib.sha256()
    for path in outputs:
        digest.update(path.name.encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _execute(command: str, resolved: dict, run: dict, paths: dict,
             manifest_path: Path) -> int:
    started = time.perf_counter()
    outputs = _RUNNERS[command](resolved, run, paths)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "package_version": __version__,
        "command": command,
        "run": run,
        "paths": paths,
        "resolved_config": resolved,
        "outputs": [str(p) for p in outputs],
        "artifact_version": _artifact_version(outputs),
        "duration_seconds": time.perf_counter() - started,
        "replay_argv": ["tempcoh", "replay", str(manifest_path)],
    }
    _mkparent(Path(manifest_path))
    atomic_write_text(manifest_path,
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(outputs)} output file(s); manifest: {manifest_path}")
    return 0


def _common_setup(args) -> dict:
    return resolve_config(args.preset, args.config, args.set)


def cmd_synth(args) -> int:
    if args.videos < 4:
        raise UsageError("--videos must be at least 4 (A/B/C/D split)")
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "videos": args.videos}
    paths = {"out": str(out)}
    return _execute("synth", resolved, run, paths, out / "run_manifest.json")


def cmd_pretrain(args) -> int:
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "method": args.method}
    paths = {"data": str(Path(args.data).resolve()), "out": str(out)}
    return _execute("pretrain", resolved, run, paths,
                    Path(str(out) + ".manifest.json"))


def cmd_finetune(args) -> int:
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "labeled_sets": args.labeled_sets}
    paths = {"data": str(Path(args.data).resolve()),
             "init": str(Path(args.init).resolve()) if args.init else None,
             "out": str(out)}
    return _execute("finetune", resolved, run, paths,
                    Path(str(out) + ".manifest.json"))


def cmd_eval(args) -> int:
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "split": args.split}
    paths = {"data": str(Path(args.data).resolve()),
             "model": str(Path(args.model).resolve()), "out": str(out)}
    return _execute("eval", resolved, run, paths,
                    Path(str(out) + ".manifest.json"))


def cmd_compare(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods must name at least one method")
    for m in methods:
        if m not in PRETRAIN_METHODS:
            raise UsageError(f"unknown method {m!r}; expected a comma list "
                             f"of {sorted(PRETRAIN_METHODS)}")
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "seeds": args.seeds, "methods": methods,
           "labeled_sets": args.labeled_sets}
    paths = {"data": str(Path(args.data).resolve()), "out": str(out)}
    return _execute("compare", resolved, run, paths, out / "run_manifest.json")


def cmd_retrieve(args) -> int:
    for letter in args.query_split:
        if letter not in SPLIT_CHOICES:
            raise UsageError(f"--query-split: unknown split {letter!r}")
    resolved = _common_setup(args)
    out = Path(args.out).resolve()
    run = {"seed": args.seed, "queries": args.queries, "split": args.split,
           "query_split": args.query_split}
    paths = {"data": str(Path(args.data).resolve()),
             "model": str(Path(args.model).resolve()), "out": str(out)}
    return _execute("retrieve", resolved, run, paths,
                    Path(str(out) + ".manifest.json"))


def cmd_replay(args) -> int:
    manifest_path = Path(args.manifest).resolve()
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DataFormatError(f"{manifest_path}: not a run manifest")
    command = manifest.get("command")
    if command not in _RUNNERS:
        raise DataFormatError(f"{manifest_path}: unknown command {command!r}")
    return _execute(command, manifest["resolved_config"], manifest["run"],
                    manifest["paths"], manifest_path)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, metavar="FILE",
                   help="config file ([section] headers over key = value lines)")
    p.add_argument("--preset", default="desk", choices=sorted(PRESETS),
                   help="named scale preset (default: desk)")
    p.add_argument("--set", action="append", default=[],
                   metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempcoh",
                     description="Temporal-coherence pretraining and phase "
                                 "segmentation experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--videos", type=int, required=True,
                   help="number of videos (>= 4)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="self-supervised encoder pretraining")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--method", required=True,
                   choices=sorted(PRETRAIN_METHODS))
    p.add_argument("--out", required=True, help="encoder checkpoint path")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised phase-model training")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--labeled-sets", required=True, choices=LABELED_SET_CHOICES,
                   dest="labeled_sets", help="label budget")
    p.add_argument("--init", default=None,
                   help="encoder checkpoint to start from (omit for the "
                        "no-pretraining baseline)")
    p.add_argument("--out", required=True, help="phase-model checkpoint path")
    _add_common(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a phase model on one split")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="phase-model checkpoint")
    p.add_argument("--split", default="D", choices=SPLIT_CHOICES)
    p.add_argument("--out", required=True,
                   help="report CSV path (text table at PATH.txt)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare",
                       help="baseline vs pretraining methods across seeds")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seeds", type=int, required=True,
                   help="number of seeds (base seed from --seed)")
    p.add_argument("--labeled-sets", default="A", choices=LABELED_SET_CHOICES,
                   dest="labeled_sets", help="label budget (default: A)")
    p.add_argument("--methods", required=True,
                   help="comma list of pretraining methods")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("retrieve", help="nearest-neighbor frame retrieval")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True,
                   help="encoder or phase-model checkpoint")
    p.add_argument("--queries", required=True,
                   help="'VIDEO_ID:FRAME,...' or 'random:N'")
    p.add_argument("--split", default="D", choices=SPLIT_CHOICES,
                   help="corpus split (default: D)")
    p.add_argument("--query-split", default="ABC", dest="query_split",
                   help="splits random queries are drawn from (default: ABC)")
    p.add_argument("--out", required=True,
                   help="report CSV path (summary at PATH.txt)")
    _add_common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("replay", help="re-execute a run from its manifest")
    p.add_argument("manifest", help="run manifest JSON path")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TempcohError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
