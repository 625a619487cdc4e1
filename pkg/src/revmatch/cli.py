"""Command-line entry point: ``revmatch <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig
from .corpus import (DataError, load_corpus, load_judgments, load_reviewers, load_search_log,
                     save_corpus, save_judgments, save_reviewers, save_search_log)
from .encoder import CITATION, SEMANTIC, TOPIC, EncoderWeights
from .evaluation import evaluate_rankings, mean_rank_probe
from .matching import ALL_VARIANTS, AblationVariant, read_rankings, write_rankings
from .model import FactorModel
from .pretraining import generate_synthetic_corpus
from .store import EmbeddingStore, StoreFormatError, save_embeddings
from .tokenizer import Vocabulary

log = logging.getLogger("revmatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
FACTOR_CHOICES = {"semantic": SEMANTIC, "topic": TOPIC, "citation": CITATION, "none": None}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def variant_filename(variant: AblationVariant) -> str:
    return {"s+t+c": "s_plus_t_plus_c", "s->t->c": "s_then_t_then_c"}.get(
        variant.value, variant.value) + ".csv"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_build_corpus(cfg: RunConfig, args) -> int:
    corpus = generate_synthetic_corpus(cfg.synthetic_spec())
    Path(cfg.values["paths.workdir"]).mkdir(parents=True, exist_ok=True)
    save_corpus(cfg.path("corpus"), corpus.papers)
    save_corpus(cfg.path("submissions"), corpus.submissions)
    save_reviewers(cfg.path("reviewers"), corpus.reviewers)
    save_judgments(cfg.path("judgments"), corpus.judgments)
    save_search_log(cfg.path("search_log"), corpus.search_log)
    print(f"wrote {len(corpus.papers)} papers, {len(corpus.submissions)} submissions, "
          f"{len(corpus.reviewers)} reviewers to {cfg.values['paths.workdir']}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    papers = load_corpus(cfg.path("corpus"))
    submissions = _load_optional(cfg.path("submissions"), load_corpus)
    search_log = _load_optional(cfg.path("search_log"), load_search_log)
    data = pipeline.prepare_training(papers, search_log, cfg.seed, extra=submissions)
    vocab_path = cfg.path("vocab")
    if vocab_path.exists():
        vocab = Vocabulary.load(vocab_path)
        if vocab != data.vocab:
            raise DataError(f"{vocab_path}: vocabulary differs from the one built from the corpus; "
                            "delete it to rebuild")
    else:
        data.vocab.save(vocab_path)
    out = Path(args.out) if args.out else cfg.path("plain_weights" if args.plain else "weights")
    result = pipeline.train_model(data, cfg.train_config(), cfg.encoder_config(len(data.vocab)),
                                  instructed=not args.plain)
    result.weights.save(out)
    result.write_history(out.with_suffix(".history.csv"))
    print(f"trained {result.steps} steps; weights -> {out}")
    return EXIT_OK


def cmd_embed(cfg: RunConfig, args) -> int:
    model = _load_model(cfg, plain=args.factor == "none")
    records = load_corpus(Path(args.input) if args.input else cfg.path("corpus"))
    vecs = model.embed([r.text for r in records], FACTOR_CHOICES[args.factor])
    store = EmbeddingStore(model.dim)
    store.extend([r.id for r in records], vecs)
    save_embeddings(store, args.out)
    print(f"embedded {len(store)} records -> {args.out}")
    return EXIT_OK


def _match_inputs(cfg: RunConfig):
    papers = load_corpus(cfg.path("corpus"))
    submissions = load_corpus(cfg.path("submissions"))
    reviewers = load_reviewers(cfg.path("reviewers"))
    return papers, submissions, reviewers, {p.id: p for p in papers}


def cmd_match(cfg: RunConfig, args) -> int:
    variant = AblationVariant(args.variant)
    model = _load_model(cfg, plain=variant is AblationVariant.NO_INSTRUCTION)
    papers, submissions, reviewers, corpus = _match_inputs(cfg)
    rankings = pipeline.rank_submissions(submissions, reviewers, corpus, model,
                                         cfg.chain_config(), variant, cfg.profile_filters(),
                                         cfg.reference_year)
    write_rankings(args.out, rankings, variant.value)
    print(f"ranked {len(reviewers)} reviewers for {len(rankings)} submissions -> {args.out}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    model, plain = _load_model(cfg), _load_model(cfg, plain=True)
    papers, submissions, reviewers, corpus = _match_inputs(cfg)
    results = pipeline.rank_all_variants(submissions, reviewers, corpus, model, plain,
                                         cfg.chain_config(), cfg.profile_filters(),
                                         cfg.reference_year)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for v in ALL_VARIANTS:
        write_rankings(out / variant_filename(v), results[v.value], v.value)
    print(f"wrote {len(ALL_VARIANTS)} variant rankings to {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    rankings = read_rankings(args.rankings)
    judgments = load_judgments(Path(args.judgments) if args.judgments else cfg.path("judgments"))
    report = evaluate_rankings(rankings, judgments)
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_probe(cfg: RunConfig, args) -> int:
    model = _load_model(cfg, plain=args.plain)
    papers = load_corpus(cfg.path("corpus"))
    submissions = load_corpus(cfg.path("submissions"))
    reviewers = _load_optional(cfg.path("reviewers"), load_reviewers)
    tasks = pipeline.probe_tasks(papers, submissions, reviewers, cfg.seed)
    if not tasks:
        raise DataError(f"{cfg.path('submissions')}: no probe tasks could be built")
    ranks = mean_rank_probe(model, tasks)
    counts = {k: sum(t.kind == k for t in tasks) for k in ranks}
    lines = ["probe_kind,mean_rank,n_tasks"]
    lines += [f"{k},{ranks[k]!r},{counts[k]}" for k in sorted(ranks)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _load_optional(path: Path, loader):
    return loader(path) if path.exists() else []


def _load_model(cfg: RunConfig, plain: bool = False) -> FactorModel:
    path = cfg.path("plain_weights" if plain else "weights")
    weights = EncoderWeights.load(path)
    vocab = Vocabulary.load(cfg.path("vocab"))
    m = cfg.model
    try:
        return FactorModel(weights, vocab, instructed=not plain, normalize=m.normalize,
                           batch_size=m.batch_size)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--workdir", help="overrides paths.workdir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="revmatch", description="Factor-aware reviewer matching")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    sub.add_parser("build-corpus", parents=[common], help="generate a synthetic benchmark")

    p = sub.add_parser("train", parents=[common], help="contrastive pre-training")
    p.add_argument("--plain", action="store_true", help="train the instruction-free encoder")
    p.add_argument("--out", help="checkpoint path (default from config)")

    p = sub.add_parser("embed", parents=[common], help="embed a corpus into a vector store")
    p.add_argument("--factor", choices=sorted(FACTOR_CHOICES), required=True)
    p.add_argument("--input", help="corpus JSONL (default paths.corpus)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("match", parents=[common], help="rank reviewers for each submission")
    p.add_argument("--variant", choices=[v.value for v in ALL_VARIANTS], default="cof")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", parents=[common], help="rankings for all seven variants")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", parents=[common], help="precision report for a rankings CSV")
    p.add_argument("--rankings", required=True)
    p.add_argument("--judgments", help="judgment JSONL (default paths.judgments)")
    p.add_argument("--out", help="write the report as CSV")

    p = sub.add_parser("probe", parents=[common], help="mean-rank probes per factor")
    p.add_argument("--plain", action="store_true")
    p.add_argument("--out")
    return parser


COMMANDS = {
    "build-corpus": cmd_build_corpus, "train": cmd_train, "embed": cmd_embed,
    "match": cmd_match, "ablate": cmd_ablate, "eval": cmd_eval, "probe": cmd_probe,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig.load(args.config)
        if args.workdir:
            cfg.set("paths.workdir", args.workdir, "--workdir")
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except (DataError, StoreFormatError, ValueError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


cli_dispatch = main


if __name__ == "__main__":
    sys.exit(main())
