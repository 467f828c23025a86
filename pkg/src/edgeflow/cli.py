"""``edgeflow`` command line: align, build-graph, enhance, ablate, retrieve, stats, train, eval, chat.

Inputs come from ``--config`` paths unless a flag overrides them.  Exit
codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Set EDGEFLOW_LOG=DEBUG|INFO|WARNING|ERROR for verbosity (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .aligner import AlignmentTable, prepare_concept_pairs, train_ibm1
from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusFormatError, DialogPair, PosLexicon, Vocabulary, build_vocab, load_corpus, normalize_token
from .edgeformer import load_embedding_file
from .evalsuite import concept_ppl, evaluate
from .fsutil import atomic_write_text
from .genmodel import EdgeFlowModel, beam_decode, greedy_decode
from .kgraph import (GraphError, KnowledgeGraph, ablate_edges, coverage_stats, enhance, extract_new_edges,
                     extract_new_nodes, load_triples)
from .subgraph import Retriever, retrieve
from .trainer import TrainingError, evaluate_ppl, model_from_checkpoint, save_loss_log, train

log = logging.getLogger("edgeflow")


class UsageError(Exception):
    """Missing or inconsistent inputs (exit code 2)."""


# ---------------------------------------------------------------- helpers


def _setup_logging() -> None:
    level = os.environ.get("EDGEFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_seed(args.seed)


def _input(args, cfg: RunConfig, flag: str, key: str) -> Path:
    value = getattr(args, flag, None)
    path = Path(value) if value else cfg.paths.get(key)
    if path is None:
        raise UsageError(f"missing input: pass --{flag.replace('_', '-')} or set paths.{key} in the config")
    if not path.exists():
        raise UsageError(f"input file not found: {path}")
    return path


def _output(args, cfg: RunConfig, flag: str, key: str) -> Path:
    value = getattr(args, flag, None)
    path = Path(value) if value else cfg.paths.get(key)
    if path is None:
        raise UsageError(f"missing output: pass --{flag.replace('_', '-')} or set paths.{key} in the config")
    return path


def _optional(args, cfg: RunConfig, flag: str, key: str) -> Path | None:
    value = getattr(args, flag, None)
    if value:
        return Path(value)
    p = cfg.paths.get(key)
    return p if p is not None and p.exists() else None


def _model_graph(args, cfg: RunConfig) -> KnowledgeGraph:
    """The graph the model works on: --graph, else paths.enhanced_graph, else paths.graph."""
    if args.graph:
        return load_triples(_input(args, cfg, "graph", "graph"))
    key = "enhanced_graph" if "enhanced_graph" in cfg.paths else "graph"
    return load_triples(_input(args, cfg, "graph", key))


def _alignment(pairs: Sequence[DialogPair], graph: KnowledgeGraph, cfg: RunConfig) -> AlignmentTable:
    cps = prepare_concept_pairs(pairs, graph)
    if not cps:
        log.warning("no pair mentions graph concepts on both sides; alignment table is empty")
        return AlignmentTable({}, [])
    return train_ibm1(cps, cfg.alignment)


def _with_new_nodes(args, cfg: RunConfig, pairs: Sequence[DialogPair], graph: KnowledgeGraph) -> KnowledgeGraph:
    """``graph`` plus the frequent corpus nouns; alignment runs over this node set
    so that new edges may reach new nodes."""
    lex_path = _optional(args, cfg, "lexicon", "lexicon")
    if lex_path is None:
        log.warning("no POS lexicon given; no new nodes will be added")
        return graph
    return enhance(graph, extract_new_nodes(pairs, graph, PosLexicon.load(lex_path), cfg.enhancement), [])


def _emit(out: TextIO, text: str) -> None:
    out.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------- commands


def cmd_align(args, cfg: RunConfig, out: TextIO) -> None:
    pairs = load_corpus(_input(args, cfg, "corpus", "corpus"))
    graph = _with_new_nodes(args, cfg, pairs, load_triples(_input(args, cfg, "graph", "graph")))
    table = _alignment(pairs, graph, cfg)
    dest = _output(args, cfg, "out", "alignment")
    table.save(dest)
    _emit(out, json.dumps({"alignment": str(dest), "sources": len(table.sources()),
                           "log_likelihood": table.log_likelihoods}))


def cmd_build_graph(args, cfg: RunConfig, out: TextIO) -> None:
    graph = load_triples(_input(args, cfg, "graph", "graph"))
    dest = _output(args, cfg, "out", "graph")
    graph.save(dest)
    _emit(out, json.dumps({"graph": str(dest), "nodes": graph.num_nodes, "edges": graph.num_edges,
                           "relations": graph.num_relations}))


def cmd_enhance(args, cfg: RunConfig, out: TextIO) -> None:
    cfg = cfg.with_overrides(enhancement={"node_percentile": args.m, "alignment_top_k": args.k})
    pairs = load_corpus(_input(args, cfg, "corpus", "corpus"))
    graph = load_triples(_input(args, cfg, "graph", "graph"))
    align_path = _optional(args, cfg, "alignment", "alignment")
    widened = _with_new_nodes(args, cfg, pairs, graph)
    new_nodes = widened.node_set() - graph.node_set()
    table = AlignmentTable.load(align_path) if align_path else _alignment(pairs, widened, cfg)
    new_edges = extract_new_edges(table, widened, cfg.enhancement)
    ge = enhance(graph, new_nodes, new_edges)
    dest = _output(args, cfg, "out", "enhanced_graph")
    ge.save(dest)
    _emit(out, json.dumps({"graph": str(dest), "new_nodes": len(new_nodes), "new_edges": len(new_edges),
                           "nodes": ge.num_nodes, "edges": ge.num_edges}))


def cmd_ablate(args, cfg: RunConfig, out: TextIO) -> None:
    if args.n is None:
        raise UsageError("ablate needs --n (fraction of lowest-ranked aligned targets to drop)")
    key = "enhanced_graph" if "enhanced_graph" in cfg.paths else "graph"
    graph = load_triples(_input(args, cfg, "graph", key))
    table = AlignmentTable.load(_input(args, cfg, "alignment", "alignment"))
    ga = ablate_edges(graph, table, args.n)
    dest = _output(args, cfg, "out", "ablated_graph")
    ga.save(dest)
    _emit(out, json.dumps({"graph": str(dest), "n": args.n, "removed_edges": graph.num_edges - ga.num_edges,
                           "edges": ga.num_edges}))


def cmd_retrieve(args, cfg: RunConfig, out: TextIO) -> None:
    cfg = cfg.with_overrides(retrieval={"two_hop_cap": args.cap})
    graph = _model_graph(args, cfg)
    if args.post:
        posts = [[normalize_token(t) for t in args.post.split()]]
    else:
        posts = [list(p.post) for p in load_corpus(_input(args, cfg, "corpus", "corpus"))]
    lines = [retrieve(p, graph, cfg.retrieval).to_json(graph) for p in posts]
    text = "".join(line + "\n" for line in lines)
    if args.out:
        atomic_write_text(args.out, text)
    out.write(text)


def cmd_stats(args, cfg: RunConfig, out: TextIO) -> None:
    cfg = cfg.with_overrides(retrieval={"two_hop_cap": args.cap})
    pairs = load_corpus(_input(args, cfg, "corpus", "corpus"))
    blocks = [("G", load_triples(_input(args, cfg, "graph", "graph")))]
    ge = _optional(args, cfg, "enhanced_graph", "enhanced_graph")
    if ge:
        blocks.append(("G_e", load_triples(ge)))
    ga = _optional(args, cfg, "ablated_graph", "ablated_graph")
    if ga:
        blocks.append(("G_ablated", load_triples(ga)))
    stats = [(name, coverage_stats(g, pairs, Retriever(g, cfg.retrieval))) for name, g in blocks]
    report = {name: s.to_dict() for name, s in stats}
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    figure = args.figure or (cfg.paths["out_dir"] / "coverage.png" if "out_dir" in cfg.paths else None)
    if figure:
        from .plotting import coverage_figure
        coverage_figure(stats, figure)
    out.write(text)


def _training_inputs(args, cfg: RunConfig):
    graph = _model_graph(args, cfg)
    pairs = load_corpus(_input(args, cfg, "corpus", "corpus"))
    if not pairs:
        raise UsageError("training corpus is empty")
    retriever = Retriever(graph, cfg.retrieval)
    return graph, pairs, [retriever(p.post) for p in pairs]


def cmd_train(args, cfg: RunConfig, out: TextIO) -> None:
    cfg = cfg.with_overrides(edgeformer={"num_layers": args.layers}, retrieval={"two_hop_cap": args.cap},
                             train={"max_steps": args.steps, "epochs": args.epochs})
    graph, pairs, subgraphs = _training_inputs(args, cfg)
    vocab = build_vocab(pairs, cfg.vocab.max_size, cfg.vocab.min_freq)
    emb_path = _optional(args, cfg, "embeddings", "embeddings")
    node_init = None
    if emb_path:
        node_init = load_embedding_file(emb_path, graph, cfg.seq2seq.hidden_dim,
                                        np.random.default_rng([cfg.seed, 2]))
    model = EdgeFlowModel(len(vocab), graph.num_nodes, graph.num_relations, cfg.seq2seq, cfg.edgeformer,
                          seed=cfg.seed, node_init=node_init)
    resume = None
    if args.resume:
        resume = Checkpoint.load(args.resume, expected_hash=model.config_hash())
    result = train(model, pairs, subgraphs, vocab, graph, cfg.train, resume=resume)
    ckpt_path = _output(args, cfg, "out", "checkpoint")
    vocab_path = _output(args, cfg, "vocab_out", "vocab")
    log_path = _output(args, cfg, "loss_log", "loss_log")
    result.checkpoint.save(ckpt_path)
    vocab.save(vocab_path)
    save_loss_log(log_path, result.loss_log)
    figure = args.figure or (cfg.paths["out_dir"] / "loss.png" if "out_dir" in cfg.paths else None)
    if figure and result.loss_log:
        from .plotting import loss_figure
        loss_figure(result.loss_log, figure)
    out.write(result.csv_text())


def _load_model(args, cfg: RunConfig):
    ckpt = Checkpoint.load(_input(args, cfg, "checkpoint", "checkpoint"))
    model = model_from_checkpoint(ckpt)
    vocab = Vocabulary.load(_input(args, cfg, "vocab", "vocab"))
    if len(vocab) != model.vocab_size:
        raise UsageError(f"vocabulary has {len(vocab)} entries but the checkpoint expects {model.vocab_size}")
    graph = _model_graph(args, cfg)
    if graph.num_nodes != model.num_nodes or graph.num_relations != model.num_relations:
        raise UsageError("graph does not match the checkpoint (node or relation count differs)")
    return model, vocab, graph


def _decode(model, posts, subgraphs, vocab, graph, width: int) -> list[list[str]]:
    if width == 1:
        return greedy_decode(model, posts, subgraphs, vocab, graph)
    return [beam_decode(model, p, sg, vocab, graph, width) for p, sg in zip(posts, subgraphs)]


def cmd_eval(args, cfg: RunConfig, out: TextIO) -> None:
    cfg = cfg.with_overrides(retrieval={"two_hop_cap": args.cap}, decode={"beam_width": args.beam})
    model, vocab, graph = _load_model(args, cfg)
    key = "test_corpus" if "test_corpus" in cfg.paths or args.corpus else "corpus"
    pairs = load_corpus(_input(args, cfg, "corpus", key))
    if not pairs:
        raise UsageError("evaluation corpus is empty")
    retriever = Retriever(graph, cfg.retrieval)
    subgraphs = [retriever(p.post) for p in pairs]
    hyps = _decode(model, [list(p.post) for p in pairs], subgraphs, vocab, graph, cfg.decode.beam_width)
    refs = [list(p.response) for p in pairs]
    report = evaluate(hyps, refs, ppl=evaluate_ppl(model, pairs, subgraphs, vocab, graph),
                      concept=concept_ppl(model, pairs, subgraphs, vocab, graph))
    if args.out:
        atomic_write_text(args.out, report.to_json() + "\n")
    if args.hyps:
        atomic_write_text(args.hyps, "".join(" ".join(h) + "\n" for h in hyps))
    out.write(report.to_json() + "\n")
    out.write(report.to_table())


def cmd_chat(args, cfg: RunConfig, out: TextIO, stdin: TextIO) -> None:
    cfg = cfg.with_overrides(retrieval={"two_hop_cap": args.cap}, decode={"beam_width": args.beam})
    model, vocab, graph = _load_model(args, cfg)
    for line in stdin:
        try:
            post = [normalize_token(t) for t in line.split()]
        except ValueError:
            post = []
        if not post:
            continue
        sg = retrieve(post, graph, cfg.retrieval)
        reply = _decode(model, [post], [sg], vocab, graph, cfg.decode.beam_width)[0]
        concepts = [graph.concept(n) for n in sorted(sg.v0)]
        out.write(f"> {' '.join(post)}\n")
        out.write(f"bot: {' '.join(reply)}\n")
        out.write(f"concepts: {' '.join(concepts) if concepts else '-'}\n")
        out.flush()


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")

    p = argparse.ArgumentParser(prog="edgeflow", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str, *flags: str):
        sp = sub.add_parser(name, help=help_, parents=[common])
        for f in flags:
            sp.add_argument(f"--{f}")
        return sp

    add("align", "IBM Model 1 concept alignment -> TSV", "corpus", "graph", "lexicon", "out")
    add("build-graph", "normalise a triples file", "graph", "out")
    sp = add("enhance", "add corpus nodes and DialogFlowTo edges", "corpus", "graph", "lexicon", "alignment", "out")
    sp.add_argument("--m", type=float, help="node frequency percentile (default 0.2)")
    sp.add_argument("--k", type=int, help="aligned targets per source (default 5)")
    sp = add("ablate", "drop edges to the lowest-ranked aligned targets", "graph", "alignment", "out")
    sp.add_argument("--n", type=float, help="bottom fraction, e.g. 0.2 or 0.5")
    sp = add("retrieve", "per-post subgraphs as JSON lines", "corpus", "graph", "post", "out")
    sp.add_argument("--cap", type=int, help="2-hop node cap (default 100)")
    sp = add("stats", "coverage statistics per graph", "corpus", "graph", "enhanced-graph", "ablated-graph",
             "out", "figure")
    sp.add_argument("--cap", type=int)
    sp = add("train", "train the generator", "corpus", "graph", "embeddings", "out", "vocab-out",
             "loss-log", "resume", "figure")
    sp.add_argument("--layers", type=int, help="edge-transformer layers (default 3)")
    sp.add_argument("--cap", type=int)
    sp.add_argument("--steps", type=int, help="stop after this many optimizer steps")
    sp.add_argument("--epochs", type=int)
    for name, help_ in (("eval", "decode a test split and score it"), ("chat", "interactive REPL on stdin")):
        sp = add(name, help_, "checkpoint", "vocab", "graph", *(("corpus", "out", "hyps") if name == "eval" else ()))
        sp.add_argument("--cap", type=int)
        sp.add_argument("--beam", type=int, help="beam width (1 = greedy)")
    return p


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None, stdin: TextIO | None = None) -> int:
    _setup_logging()
    out = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    commands = {"align": cmd_align, "build-graph": cmd_build_graph, "enhance": cmd_enhance,
                "ablate": cmd_ablate, "retrieve": cmd_retrieve, "stats": cmd_stats, "train": cmd_train,
                "eval": cmd_eval}
    try:
        cfg = _config(args)
        if args.command == "chat":
            cmd_chat(args, cfg, out, stdin or sys.stdin)
        else:
            commands[args.command](args, cfg, out)
    except (UsageError, ConfigError) as exc:
        print(f"edgeflow {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CorpusFormatError, GraphError, CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"edgeflow {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
