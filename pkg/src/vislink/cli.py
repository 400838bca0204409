"""Batch command-line surface for the linking pipeline.

Every command reads its inputs, writes its artifacts under --out, persists
the fully resolved configuration next to them (run_config.json), and exits
0. Failures exit nonzero with one machine-readable JSON line on stderr:
2 for usage/config errors, 3 for data contract violations, 4 for I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adapter import HeadPair, init_head, load_heads, save_heads
from .container import write_embeddings
from .datatools import (
    Detectors,
    SplitSpec,
    StubFaceDetector,
    StubPersonNER,
    construction_filter,
    load_candidates,
    save_split,
    split,
    write_rejections,
)
from .encoders import (
    Encoder,
    EncoderSpec,
    embed_entities,
    embed_mentions,
    make_encoder,
)
from .errors import (
    ConfigError,
    ContainerFormatError,
    DataContractError,
    DegenerateEmbeddingError,
    MissingModalityError,
    VislinkError,
)
from .index import ann_recall, build_index_from_embeddings, load_index, save_index
from .kb import load_kb, load_mentions
from .linking import (
    CascadeConfig,
    MentionEmbedder,
    link_dataset,
    read_results,
    write_results,
)
from .metrics import (
    dataset_stats,
    evaluate,
    overlap_at_k,
    rerank_sweep,
    write_curve,
)
from .synth import generate_synthetic
from .trainer import TrainConfig, default_lr, train_embeddings

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONTRACT = 3
EXIT_IO = 4

SUBTASKS = ("v2v", "v2t", "v2vt")


def _fail(reason: str, code: int) -> int:
    print(json.dumps({"error": reason, "exit_code": code}), file=sys.stderr)
    return code


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return doc


def _pick(flag_value, cfg: dict, key: str, default):
    """Flag beats config file beats built-in default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _write_run_config(out: Path, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clean = {k: v for k, v in sorted(resolved.items()) if not k.startswith("_")}
    (out / "run_config.json").write_text(
        json.dumps(clean, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


class EncoderSet:
    """Per-sub-task encoder construction from resolved configuration."""

    def __init__(self, cfg: dict, encoder_arg: str | None):
        self.kind = encoder_arg or cfg.get("encoder", "stub")
        self.dim = int(cfg.get("dim", 512))
        self.visual_seed = int(cfg.get("visual_seed", 0))
        self.cross_seed = int(cfg.get("cross_seed", 1))
        self.visual_channel = int(cfg.get("visual_channel", 0))
        self.cross_channel = int(cfg.get("cross_channel", 1))
        self.text_max_tokens = int(cfg.get("text_max_tokens", 77))

    def _spec(self, seed: int, channel: int) -> EncoderSpec:
        return EncoderSpec(
            kind=self.kind,
            output_dim=self.dim,
            seed=seed,
            channel=channel,
            text_max_tokens=self.text_max_tokens,
        )

    def visual(self) -> Encoder:
        return make_encoder(self._spec(self.visual_seed, self.visual_channel))

    def cross(self) -> Encoder:
        return make_encoder(self._spec(self.cross_seed, self.cross_channel))

    def for_subtask(self, subtask: str) -> Encoder:
        if subtask == "v2v":
            return self.visual()
        if subtask == "v2t":
            return self.cross()
        raise ConfigError(f"sub-task {subtask!r} has no single encoder")


def _modality(subtask: str) -> str:
    return "visual" if subtask == "v2v" else "textual"


def _resolved(args: argparse.Namespace, extra: dict) -> dict:
    base = {"command": args.command, "config_file": args.config}
    base.update(extra)
    return base


# ----------------------------------------------------------------- commands


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    sep = _pick(args.separability, cfg, "separability", 1.0)
    kb, ds, info = generate_synthetic(
        out,
        n_entities=_pick(args.entities, cfg, "entities", 64),
        n_images=_pick(args.images, cfg, "images", 128),
        dim=_pick(args.dim, cfg, "dim", 64),
        seed=_pick(args.seed, cfg, "seed", 0),
        separability=sep,
        separability_visual=args.separability_visual,
        separability_textual=args.separability_textual,
        complementary=args.complementary,
        mentions_per_image=_pick(args.mentions_per_image, cfg, "mentions_per_image", 1.0),
    )
    _write_run_config(out, _resolved(args, info.to_dict() | {
        "entities": len(kb), "images": len(ds.by_image()), "mentions": len(ds),
    }))
    print(f"wrote {len(kb)} entities, {len(ds)} mentions to {out}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    ratios = tuple(float(r) for r in _pick(args.ratios, cfg, "ratios", "0.6,0.2,0.2").split(","))
    if len(ratios) != 3:
        raise ConfigError("ratios must be three comma-separated numbers")
    spec = SplitSpec(
        ratios=ratios,
        seed=_pick(args.seed, cfg, "seed", 0),
        test_unique_entities=not args.no_test_unique,
    )
    dataset = load_mentions(args.mentions)
    parts = split(dataset, spec)
    out = Path(args.out)
    save_split(parts, spec, out)
    _write_run_config(out, _resolved(args, {
        "mentions": args.mentions, "ratios": list(ratios), "seed": spec.seed,
        "test_unique": spec.test_unique_entities,
        "sizes": {t: len(p) for t, p in zip(("train", "dev", "test"), parts)},
    }))
    print(f"split {len(dataset)} mentions into " + "/".join(str(len(p)) for p in parts))
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    records = load_candidates(args.records)
    detectors = Detectors(StubFaceDetector(), StubPersonNER())
    kept, rejections = construction_filter(records, detectors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "kept.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for rec in kept:
            fh.write(json.dumps({"image": rec.image, "caption": rec.caption}) + "\n")
    write_rejections(rejections, out / "rejections.jsonl")
    _write_run_config(out, _resolved(args, {
        "records": args.records, "kept": len(kept), "rejected": len(rejections),
    }))
    print(f"kept {len(kept)} of {len(records)} records")
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    if bool(args.kb) == bool(args.mentions):
        raise ConfigError("embed needs exactly one of --kb or --mentions")
    subtask = _pick(args.subtask, cfg, "subtask", "v2v")
    if subtask == "v2vt":
        raise ConfigError("embed one side at a time; v2vt has no single embedding")
    text_mode = _pick(args.text_mode, cfg, "text_mode", "name")
    mode = _pick(args.mode, cfg, "mode", "crop")
    encoders = EncoderSet(cfg, args.encoder)
    encoder = encoders.for_subtask(subtask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta: dict = {"subtask": subtask, "text_mode": text_mode, "dim": encoders.dim}
    if args.kb:
        kb = load_kb(args.kb)
        matrix, excluded = embed_entities(kb, encoder, _modality(subtask), text_mode)
        meta.update({"side": "entity", "excluded": list(excluded)})
    else:
        dataset = load_mentions(args.mentions)
        matrix = embed_mentions(dataset, encoder, mode)
        meta.update({"side": "mention", "mode": mode})
    write_embeddings(matrix, out / "embeddings.vnel")
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    _write_run_config(out, _resolved(args, {
        "kb": args.kb, "mentions": args.mentions, "subtask": subtask,
        "text_mode": text_mode, "mode": mode, "encoder": encoders.kind,
        "rows": matrix.row_count, "dim": matrix.dim,
    }))
    print(f"embedded {matrix.row_count} rows (dim {matrix.dim})")
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    subtask = _pick(args.subtask, cfg, "subtask", "v2v")
    if subtask not in ("v2v", "v2t"):
        raise ConfigError("index builds one modality at a time (v2v or v2t)")
    text_mode = _pick(args.text_mode, cfg, "text_mode", "name")
    backend = _pick(args.backend, cfg, "backend", "exact")
    encoders = EncoderSet(cfg, args.encoder)
    kb = load_kb(args.kb)
    head = None
    if args.heads:
        head = load_heads(args.heads).entity
    raw, excluded = embed_entities(
        kb, encoders.for_subtask(subtask), _modality(subtask), text_mode
    )
    index = build_index_from_embeddings(
        raw,
        backend=backend,
        modality=_modality(subtask),
        text_mode=text_mode,
        excluded=excluded,
        head=head,
        seed=_pick(args.seed, cfg, "seed", 0),
    )
    out = Path(args.out)
    save_index(index, out)
    quality = None
    if backend == "approx":
        sample = index.embeddings.data[: min(50, index.size)]
        quality = ann_recall(index, sample, k=10)
        (out / "ann_quality.json").write_text(
            json.dumps({"k": 10, "queries": int(sample.shape[0]), "recall": quality}) + "\n",
            encoding="utf-8",
        )
    _write_run_config(out, _resolved(args, {
        "kb": args.kb, "subtask": subtask, "text_mode": text_mode,
        "backend": backend, "encoder": encoders.kind, "heads": args.heads,
        "rows": index.size, "excluded": len(index.excluded),
    }))
    msg = f"indexed {index.size} entities ({backend})"
    if quality is not None:
        msg += f", measured recall@10 vs exact: {quality:.3f}"
    print(msg)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    subtask = _pick(args.subtask, cfg, "subtask", "v2v")
    if subtask not in ("v2v", "v2t"):
        raise ConfigError("train one sub-task head pair at a time (v2v or v2t)")
    text_mode = _pick(args.text_mode, cfg, "text_mode", "name")
    mode = _pick(args.mode, cfg, "mode", "crop")
    encoders = EncoderSet(cfg, args.encoder)
    encoder = encoders.for_subtask(subtask)
    modality = _modality(subtask)
    lr_default = default_lr(encoders.kind, modality)
    train_cfg = TrainConfig(
        batch_size=_pick(args.batch_size, cfg, "batch_size", 64),
        max_epochs=_pick(args.epochs, cfg, "epochs", 20),
        lr_mention=_pick(args.lr_mention, cfg, "lr_mention", lr_default),
        lr_entity=_pick(args.lr_entity, cfg, "lr_entity", lr_default),
        temperature=_pick(args.temperature, cfg, "temperature", 0.07),
        seed=_pick(args.seed, cfg, "seed", 0),
    )
    hidden = int(_pick(args.hidden, cfg, "hidden", 2 * encoders.dim))
    kb = load_kb(args.kb)
    dataset = load_mentions(args.mentions, kb=kb)
    mention_embs = embed_mentions(dataset, encoder, mode)
    entity_embs, _ = embed_entities(kb, encoder, modality, text_mode)
    heads = HeadPair(
        init_head(encoders.dim, hidden, seed=train_cfg.seed),
        init_head(encoders.dim, hidden, seed=train_cfg.seed + 1),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    with log_path.open("w", encoding="utf-8", newline="\n") as log:
        def on_epoch(epoch: int, mean_loss: float, wall: float) -> None:
            log.write(json.dumps({
                "epoch": epoch,
                "mean_loss": mean_loss,
                "lr": train_cfg.lr_mention,
                "tau": train_cfg.temperature,
                "wall_seconds": wall,
            }) + "\n")

        trained, history = train_embeddings(
            mention_embs, dataset.gold_map(), entity_embs, heads, train_cfg,
            on_epoch=on_epoch,
        )
    save_heads(trained, out)
    _write_run_config(out, _resolved(args, {
        "kb": args.kb, "mentions": args.mentions, "subtask": subtask,
        "text_mode": text_mode, "mode": mode, "encoder": encoders.kind,
        "batch_size": train_cfg.batch_size, "epochs": train_cfg.max_epochs,
        "lr_mention": train_cfg.lr_mention, "lr_entity": train_cfg.lr_entity,
        "temperature": train_cfg.temperature, "seed": train_cfg.seed,
        "hidden": hidden,
    }))
    first = history[0] if history else float("nan")
    last = history[-1] if history else float("nan")
    print(f"trained {len(history)} epochs, loss {first:.4f} -> {last:.4f}")
    return EXIT_OK


def _mention_embedder(
    encoders: EncoderSet, subtask: str, mode: str, heads_dir: str | None
) -> MentionEmbedder:
    head = load_heads(heads_dir).mention if heads_dir else None
    return MentionEmbedder(encoders.for_subtask(subtask), head=head, mode=mode)


def cmd_link(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    subtask = _pick(args.subtask, cfg, "subtask", "v2v")
    mode = _pick(args.mode, cfg, "mode", "crop")
    k = _pick(args.top_k, cfg, "top_k", 10)
    encoders = EncoderSet(cfg, args.encoder)
    dataset = load_mentions(args.mentions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if subtask in ("v2v", "v2t"):
        if not args.index:
            raise ConfigError(f"{subtask} linking requires --index")
        indices = {subtask: load_index(args.index)}
        embedders = {subtask: _mention_embedder(encoders, subtask, mode, args.heads)}
        results = link_dataset(dataset, subtask, embedders, indices, k)
        cascade = None
    elif subtask == "v2vt":
        if not (args.recall_index and args.rerank_index):
            raise ConfigError("v2vt linking requires --recall-index and --rerank-index")
        recall_model = _pick(args.recall_model, cfg, "recall_model", "v2v")
        rerank_model = _pick(args.rerank_model, cfg, "rerank_model", "v2t")
        if recall_model == rerank_model:
            raise ConfigError("recall and rerank models must differ")
        indices = {
            recall_model: load_index(args.recall_index),
            rerank_model: load_index(args.rerank_index),
        }
        embedders = {
            recall_model: _mention_embedder(encoders, recall_model, mode, args.recall_heads),
            rerank_model: _mention_embedder(encoders, rerank_model, mode, args.rerank_heads),
        }
        cascade = CascadeConfig(
            recall_model,
            rerank_model,
            _pick(args.rerank_k, cfg, "rerank_k", 600),
        )
        results = link_dataset(dataset, "v2vt", embedders, indices, k, cascade)
    else:
        raise ConfigError(f"unknown sub-task {subtask!r}")

    write_results(results, out / "results.jsonl")
    _write_run_config(out, _resolved(args, {
        "mentions": args.mentions, "subtask": subtask, "mode": mode, "top_k": k,
        "encoder": encoders.kind, "index": args.index,
        "recall_index": args.recall_index, "rerank_index": args.rerank_index,
        "rerank_k": cascade.rerank_length if cascade else None,
        "heads": args.heads,
    }))
    print(f"linked {len(results)} mentions (top-{k})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    results = read_results(args.results)
    dataset = load_mentions(args.mentions)
    gold = dataset.gold_map()
    unlabeled = [r.mention_id for r in results if r.mention_id not in gold]
    if unlabeled:
        raise DataContractError(f"missing gold for mention {unlabeled[0]}")
    excluded: tuple[str, ...] = ()
    if args.index:
        excluded = load_index(args.index).excluded
    report = evaluate(results, gold, excluded_entities=excluded)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    _write_run_config(out, _resolved(args, {
        "results": args.results, "mentions": args.mentions, "index": args.index,
        "q": report.query_count,
    }))
    print(report.to_json())
    return EXIT_OK


def _parse_k_values(raw: str, full: int) -> list[int]:
    values = []
    for token in raw.split(","):
        token = token.strip()
        values.append(full if token == "full" else int(token))
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    mode = _pick(args.mode, cfg, "mode", "crop")
    recall_model = _pick(args.recall_model, cfg, "recall_model", "v2v")
    rerank_model = _pick(args.rerank_model, cfg, "rerank_model", "v2t")
    encoders = EncoderSet(cfg, args.encoder)
    dataset = load_mentions(args.mentions)
    indices = {
        recall_model: load_index(args.recall_index),
        rerank_model: load_index(args.rerank_index),
    }
    embedders = {
        recall_model: _mention_embedder(encoders, recall_model, mode, args.recall_heads),
        rerank_model: _mention_embedder(encoders, rerank_model, mode, args.rerank_heads),
    }
    k_values = _parse_k_values(args.k, indices[recall_model].size)
    curve = rerank_sweep(
        dataset, CascadeConfig(recall_model, rerank_model, max(k_values)),
        embedders, indices, k_values,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_curve(curve, out / "sweep.csv")
    _write_run_config(out, _resolved(args, {
        "mentions": args.mentions, "recall_model": recall_model,
        "rerank_model": rerank_model, "k": args.k,
    }))
    for big_k, r1 in curve:
        print(f"K={big_k}: R@1={r1:.4f}")
    return EXIT_OK


def cmd_overlap(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    results_a = read_results(args.results_a)
    results_b = read_results(args.results_b)
    k_values = _parse_k_values(args.k, min(len(r) for r in results_a))
    rows = [(k, overlap_at_k(results_a, results_b, k)) for k in k_values]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_curve(rows, out / "overlap.csv")
    _write_run_config(out, _resolved(args, {
        "results_a": args.results_a, "results_b": args.results_b, "k": args.k,
    }))
    for k, value in rows:
        print(f"k={k}: overlap={value:.4f}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    kb = load_kb(args.kb) if args.kb else None
    dataset = load_mentions(args.mentions, kb=kb)
    stats = dataset_stats(dataset, kb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(stats.to_json() + "\n", encoding="utf-8")
    _write_run_config(out, _resolved(args, {
        "mentions": args.mentions, "kb": args.kb,
    }))
    print(stats.to_json())
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of defaults; flags override")
    p.add_argument("--out", required=True, help="output directory")


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder", help="encoder kind: stub or plugin:<id> (default stub)")
    p.add_argument("--mode", choices=("crop", "whole-image"), help="mention input mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vislink",
        description="Visual named entity linking toolkit",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        _add_common(p)
        return p

    p = command("synth", "generate a synthetic KB, images, and mention manifest")
    p.add_argument("--entities", type=int, default=64)
    p.add_argument("--images", type=int, default=128)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separability", type=float, default=1.0)
    p.add_argument("--separability-visual", type=float, default=None)
    p.add_argument("--separability-textual", type=float, default=None)
    p.add_argument("--complementary", action="store_true",
                   help="make visual/textual corruption sets disjoint")
    p.add_argument("--mentions-per-image", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = command("split", "train/dev/test split with test-set entity uniqueness")
    p.add_argument("--mentions", required=True)
    p.add_argument("--ratios", help="three ratios, e.g. 0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-test-unique", action="store_true")
    p.set_defaults(func=cmd_split)

    p = command("filter", "apply the person/face-count/dedup construction filters")
    p.add_argument("--records", required=True, help="JSONL of {image, caption}")
    p.set_defaults(func=cmd_filter)

    p = command("embed", "embed a KB or a mention set with one encoder")
    p.add_argument("--kb")
    p.add_argument("--mentions")
    p.add_argument("--subtask", choices=SUBTASKS)
    p.add_argument("--text-mode", choices=("name", "name_desc"))
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_embed)

    p = command("index", "build a searchable entity index")
    p.add_argument("--kb", required=True)
    p.add_argument("--subtask", choices=SUBTASKS)
    p.add_argument("--text-mode", choices=("name", "name_desc"))
    p.add_argument("--backend", choices=("exact", "approx"))
    p.add_argument("--heads", help="adapter checkpoint dir (entity side is used)")
    p.add_argument("--seed", type=int, default=None)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_index)

    p = command("train", "contrastively fine-tune adapter heads")
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--subtask", choices=SUBTASKS)
    p.add_argument("--text-mode", choices=("name", "name_desc"))
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr-mention", type=float, default=None)
    p.add_argument("--lr-entity", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_train)

    p = command("link", "rank entities for every mention")
    p.add_argument("--mentions", required=True)
    p.add_argument("--subtask", choices=SUBTASKS)
    p.add_argument("--index", help="index dir for v2v/v2t")
    p.add_argument("--recall-index", help="recall index dir for v2vt")
    p.add_argument("--rerank-index", help="rerank index dir for v2vt")
    p.add_argument("--recall-model", choices=("v2v", "v2t"))
    p.add_argument("--rerank-model", choices=("v2v", "v2t"))
    p.add_argument("--rerank-k", type=int, default=None, help="cascade pool size K")
    p.add_argument("--top-k", type=int, default=None, help="results per mention")
    p.add_argument("--heads", help="adapter checkpoint dir for v2v/v2t")
    p.add_argument("--recall-heads")
    p.add_argument("--rerank-heads")
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_link)

    p = command("eval", "score link results against gold labels")
    p.add_argument("--results", required=True)
    p.add_argument("--mentions", required=True, help="manifest carrying gold labels")
    p.add_argument("--index", help="index dir, to count excluded-gold queries")
    p.set_defaults(func=cmd_eval)

    p = command("sweep", "Recall@1 of the cascade across rerank lengths")
    p.add_argument("--mentions", required=True)
    p.add_argument("--recall-index", required=True)
    p.add_argument("--rerank-index", required=True)
    p.add_argument("--recall-model", choices=("v2v", "v2t"))
    p.add_argument("--rerank-model", choices=("v2v", "v2t"))
    p.add_argument("--recall-heads")
    p.add_argument("--rerank-heads")
    p.add_argument("--k", required=True, help='comma list of K values, "full" allowed')
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = command("overlap", "top-k agreement between two result files")
    p.add_argument("--results-a", required=True)
    p.add_argument("--results-b", required=True)
    p.add_argument("--k", required=True, help='comma list of k values, "full" allowed')
    p.set_defaults(func=cmd_overlap)

    p = command("stats", "dataset statistics and popularity histogram")
    p.add_argument("--mentions", required=True)
    p.add_argument("--kb")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except (DataContractError, MissingModalityError, DegenerateEmbeddingError) as exc:
        return _fail(str(exc), EXIT_CONTRACT)
    except (ContainerFormatError, FileNotFoundError, OSError) as exc:
        return _fail(str(exc), EXIT_IO)
    except VislinkError as exc:
        return _fail(str(exc), EXIT_CONTRACT)


if __name__ == "__main__":
    sys.exit(main())
