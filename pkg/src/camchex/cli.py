"""Command-line entry point.

Three subcommands cover the whole pipeline:

* ``generate`` - synthesize train/val/test/pool manifests with planted signals
* ``train`` - one pipeline stage per invocation (stage1, noisy_student,
  finetune_views, stage2), so intermediate models stay inspectable artifacts
* ``evaluate`` - predictions CSV plus a metrics report for a checkpoint

Exit codes are a stable contract: 0 success, 2 config or input error,
3 missing prerequisite artifact, 4 numerical failure. Every command writes a
run manifest (resolved config, seed, input hashes) next to its outputs and
never writes outside its output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ABLATION_PRESETS, AblationFlags, ModelConfig, RunConfig
from .checkpoint import Checkpoint, load_checkpoint, load_params_into, save_checkpoint
from .data.manifest import ManifestError, parse_manifest, write_manifest
from .data.prevalence import PrevalenceError, compute_prevalence
from .data.synthetic import SynthSpec, generate_synthetic
from .data.types import Dataset, Split
from .data.vocab import Vocabulary, vocabulary_from_datasets
from .metrics import UndefinedMetricError, evaluate, write_predictions_csv
from .nn.model import ImageClassifier, StudyClassifier, build_image_classifier, build_study_classifier
from .train.common import TrainingDiverged, write_training_log
from .train.noisy_student import noisy_student_loop
from .train.stage1 import filter_view, finetune_view_encoder, train_stage1
from .train.stage2 import train_stage2
from .data.types import View

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_DEPENDENCY = 3
EXIT_NUMERICAL = 4

STAGE1_CKPT = "stage1.npz"
NS_CKPT = "noisy_student.npz"
FRONTAL_CKPT = "encoder_frontal.npz"
LATERAL_CKPT = "encoder_lateral.npz"
STAGE2_CKPT = "stage2.npz"
VOCAB_FILE = "vocab.txt"


class MissingDependencyError(FileNotFoundError):
    pass


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run_manifest(out: Path, command: str, config: dict, seed: int, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {p.name: _hash_file(p) for p in inputs if p.exists()},
        "out": out.name,
        "version": __version__,
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec.load(args.spec) if args.spec else SynthSpec()
    splits = generate_synthetic(spec, args.seed)
    for split, dataset in splits.items():
        write_manifest(dataset, out / f"{split.value}.jsonl")
    vocabulary_from_datasets(splits.values()).save(out / VOCAB_FILE)
    inputs = [Path(args.spec)] if args.spec else []
    _write_run_manifest(out, "generate", json.loads(spec.to_json()), args.seed, inputs)
    return EXIT_OK


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig.from_json(json.dumps({"preset": args.preset or "desk"}))
    if args.ablation:
        if args.ablation not in ABLATION_PRESETS:
            raise ValueError(
                f"unknown ablation {args.ablation!r}; choose from {sorted(ABLATION_PRESETS)}"
            )
        cfg = replace(cfg, ablation=ABLATION_PRESETS[args.ablation])
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    return cfg


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingDependencyError(f"{what} not found at {path}")
    return path


def _stage1_header(cfg: RunConfig, dataset: Dataset, role: str) -> dict:
    return {
        "kind": "stage1",
        "role": role,
        "model": asdict(cfg.model),
        "label_names": list(dataset.label_names),
        "seed": cfg.train.seed,
    }


def _load_stage1_model(ckpt: Checkpoint, use_ema: bool = True) -> ImageClassifier:
    model_cfg = _model_config_from_header(ckpt.header)
    model = build_image_classifier(model_cfg, seed=0, role=ckpt.header.get("role", "joint"))
    params = ckpt.params(use_ema and ckpt.ema is not None)
    load_params_into(model, params)
    return model


def _model_config_from_header(header: dict) -> ModelConfig:
    raw = dict(header["model"])
    raw["stage_channels"] = tuple(raw["stage_channels"])
    return ModelConfig(**raw)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [Path(args.config)] if args.config else []

    if args.stage == "stage1":
        train_path = _require(data / "train.jsonl", "training manifest")
        train_set = parse_manifest(train_path)
        val_set = parse_manifest(data / "val.jsonl") if (data / "val.jsonl").exists() else None
        result = train_stage1(train_set, cfg.train, cfg.model, val=val_set)
        save_checkpoint(
            out / STAGE1_CKPT,
            result.model,
            _stage1_header(cfg, train_set, "joint"),
            ema_shadow=result.ema.shadow,
        )
        write_training_log(out / "stage1_log.csv", result.logs)
        inputs.append(train_path)

    elif args.stage == "noisy_student":
        train_path = _require(data / "train.jsonl", "training manifest")
        pool_path = _require(data / "unlabeled_pool.jsonl", "unlabeled pool manifest")
        train_set = parse_manifest(train_path)
        pool = parse_manifest(pool_path)
        val_set = parse_manifest(data / "val.jsonl") if (data / "val.jsonl").exists() else None
        result = noisy_student_loop(train_set, pool, cfg.train, cfg.model, val=val_set)
        save_checkpoint(
            out / NS_CKPT,
            result.final.model,
            _stage1_header(cfg, train_set, "joint"),
            ema_shadow=result.final.ema.shadow,
        )
        write_training_log(out / "noisy_student_log.csv", result.final.logs)
        inputs.extend([train_path, pool_path])

    elif args.stage == "finetune_views":
        init_path = Path(args.init) if args.init else _default_stage1_checkpoint(out)
        _require(init_path, "stage-1 checkpoint")
        base = _load_stage1_model(load_checkpoint(init_path))
        train_path = _require(data / "train.jsonl", "training manifest")
        train_set = parse_manifest(train_path)
        for view, name in ((View.FRONTAL, FRONTAL_CKPT), (View.LATERAL, LATERAL_CKPT)):
            subset = filter_view(train_set, view)
            if not len(subset):
                raise ValueError(f"no {view.value} images available for fine-tuning")
            result = finetune_view_encoder(base, subset, cfg.train, cfg.model)
            save_checkpoint(
                out / name,
                result.model,
                _stage1_header(cfg, train_set, view.value),
                ema_shadow=result.ema.shadow,
            )
            write_training_log(out / f"finetune_{view.value}_log.csv", result.logs)
        inputs.extend([init_path, train_path])

    elif args.stage == "stage2":
        train_path = _require(data / "train.jsonl", "training manifest")
        vocab_path = _require(data / VOCAB_FILE, "vocabulary file")
        train_set = parse_manifest(train_path)
        val_set = parse_manifest(data / "val.jsonl") if (data / "val.jsonl").exists() else None
        vocab = Vocabulary.from_file(vocab_path)

        frontal = lateral = None
        if not args.fresh_encoders:
            enc_dir = Path(args.encoders) if args.encoders else out
            f_path = _require(enc_dir / FRONTAL_CKPT, "frontal encoder checkpoint")
            l_path = _require(enc_dir / LATERAL_CKPT, "lateral encoder checkpoint")
            frontal = _load_stage1_model(load_checkpoint(f_path)).encoder
            lateral = _load_stage1_model(load_checkpoint(l_path)).encoder
            inputs.extend([f_path, l_path])

        datasets = {Split.TRAIN: train_set}
        if val_set is not None:
            datasets[Split.VAL] = val_set
        result = train_stage2(
            datasets,
            cfg.train,
            cfg.model,
            vocab,
            ablation=cfg.ablation,
            frontal_encoder=frontal,
            lateral_encoder=lateral,
        )
        header = {
            "kind": "stage2",
            "model": asdict(cfg.model),
            "ablation": asdict(cfg.ablation),
            "vocab_size": len(vocab),
            "label_names": list(train_set.label_names),
            "seed": cfg.train.seed,
        }
        save_checkpoint(out / STAGE2_CKPT, result.model, header, ema_shadow=result.ema.shadow)
        write_training_log(out / "stage2_log.csv", result.logs)
        inputs.extend([train_path, vocab_path])

    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown stage {args.stage!r}")

    _write_run_manifest(out, f"train:{args.stage}", json.loads(cfg.to_json()), cfg.train.seed, inputs)
    return EXIT_OK


def _default_stage1_checkpoint(out: Path) -> Path:
    ns = out / NS_CKPT
    return ns if ns.exists() else out / STAGE1_CKPT


def _study_level_scores_stage1(model: ImageClassifier, dataset: Dataset) -> np.ndarray:
    scores = []
    for study in dataset.studies:
        pixels = np.stack([img.pixels for img in study.images])
        scores.append(model.predict_probs(pixels).mean(axis=0))
    return np.stack(scores)


def cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt_path = _require(Path(args.checkpoint), "checkpoint")
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ManifestError(f"manifest not found at {manifest_path}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ckpt = load_checkpoint(ckpt_path)
    dataset = parse_manifest(manifest_path)
    header_names = tuple(ckpt.header["label_names"])
    if len(header_names) != dataset.num_classes:
        raise ValueError(
            f"checkpoint has {len(header_names)} classes but manifest has {dataset.num_classes}"
        )
    use_ema = args.weights == "ema"
    if use_ema and ckpt.ema is None:
        raise ValueError("checkpoint carries no EMA parameters; use --use-live")

    if ckpt.header["kind"] == "stage2":
        vocab_path = manifest_path.parent / VOCAB_FILE
        if not vocab_path.exists():
            raise ValueError(f"vocabulary file not found at {vocab_path}")
        vocab = Vocabulary.from_file(vocab_path)
        if len(vocab) != ckpt.header["vocab_size"]:
            raise ValueError(
                f"vocabulary has {len(vocab)} tokens but checkpoint expects"
                f" {ckpt.header['vocab_size']}"
            )
        model = build_study_classifier(
            _model_config_from_header(ckpt.header),
            ckpt.header["vocab_size"],
            seed=0,
            ablation=AblationFlags(**ckpt.header["ablation"]),
        )
        load_params_into(model, ckpt.params(use_ema))
        study_ids, scores = model.predict_dataset(dataset, vocab, seed=args.seed)
    else:
        model = _load_stage1_model(ckpt, use_ema=use_ema)
        study_ids = [s.study_id for s in dataset.studies]
        scores = _study_level_scores_stage1(model, dataset)

    prev_path = Path(args.prevalence_manifest) if args.prevalence_manifest else None
    if prev_path is None:
        sibling = manifest_path.parent / "train.jsonl"
        prev_path = sibling if sibling.exists() else manifest_path
    prevalence = compute_prevalence(parse_manifest(prev_path))

    report = evaluate(scores, [s.labels for s in dataset.studies], prevalence)
    write_predictions_csv(out / "predictions.csv", study_ids, scores, dataset.label_names)
    report.save(out / "metrics.json")
    print(report.render_table())
    _write_run_manifest(
        out,
        "evaluate",
        {"checkpoint": ckpt_path.name, "manifest": manifest_path.name, "weights": args.weights},
        args.seed,
        [ckpt_path, manifest_path],
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="camchex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="synthesize dataset manifests")
    p_gen.add_argument("--spec", help="synthetic dataset spec JSON; defaults are used when omitted")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="run one training stage")
    p_train.add_argument("--config", help="run config JSON")
    p_train.add_argument(
        "--stage",
        required=True,
        choices=["stage1", "noisy_student", "finetune_views", "stage2"],
    )
    p_train.add_argument("--data", required=True, help="directory holding the manifests")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--preset", choices=["desk", "paper"], default=None)
    p_train.add_argument("--ablation", default=None, help=f"one of {sorted(ABLATION_PRESETS)}")
    p_train.add_argument("--init", default=None, help="stage-1 checkpoint for finetune_views")
    p_train.add_argument("--encoders", default=None, help="directory with view encoder checkpoints")
    p_train.add_argument("--fresh-encoders", action="store_true", help="stage2 without stage-1 towers")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="write predictions and a metrics report")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument(
        "--use-ema", dest="weights", action="store_const", const="ema", default="ema"
    )
    p_eval.add_argument("--use-live", dest="weights", action="store_const", const="live")
    p_eval.add_argument(
        "--prevalence-manifest",
        default=None,
        help="manifest for frequency grouping; defaults to the sibling train split",
    )
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("CAMCHEX_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingDependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_DEPENDENCY
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (
        ManifestError,
        PrevalenceError,
        UndefinedMetricError,
        ValueError,
        KeyError,
        TypeError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
