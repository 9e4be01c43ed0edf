"""Command-line entry point: ``bincp <command> [options]``.

Exit codes: 0 success, 1 user error (bad flags, missing or incompatible
files), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import bench_scores
from .cp import DenseFactors, Hyperparams, binarize_factors
from .evaluate import EnsembleScorer, best_threshold, classify, evaluate, scorer_for
from .kg import ParseError, load_dataset, read_triples, read_vocab
from .model_io import ModelFormatError, load_model, save_dense, save_packed, size_report
from .synthetic import block_graph, uniform_negatives, write_dataset
from .train import TrainConfig, TrainingDiverged, train
from .vq import DegenerateMatrix, vq_factors

logger = logging.getLogger("bincp")

USER_ERRORS = (
    FileNotFoundError, IsADirectoryError, PermissionError, ParseError, ModelFormatError,
    DegenerateMatrix, TrainingDiverged, KeyError, ValueError,
)


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sidecar(path, suffix: str) -> Path:
    return Path(str(path) + suffix)


def _write_manifest(out, command: str, params: dict, extra: dict | None = None) -> None:
    manifest = {"command": command, "version": __version__, "params": params}
    if extra:
        manifest.update(extra)
    _sidecar(out, ".manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _copy_vocab(src, dst) -> None:
    for suffix in (".entities.tsv", ".relations.tsv"):
        s = _sidecar(src, suffix)
        if s.exists():
            shutil.copyfile(s, _sidecar(dst, suffix))


def _check_vocab(model_path, graph) -> None:
    ents = _sidecar(model_path, ".entities.tsv")
    if ents.exists() and read_vocab(ents) != graph.entity_vocab.names:
        raise UserError(f"{model_path}: entity vocabulary does not match the dataset")
    rels = _sidecar(model_path, ".relations.tsv")
    if rels.exists():
        expected = [graph.relation_name(k) for k in range(2 * graph.n_relations)]
        if read_vocab(rels) != expected:
            raise UserError(f"{model_path}: relation vocabulary does not match the dataset")


def _load_dense(path) -> DenseFactors:
    model = load_model(path)
    if not isinstance(model, DenseFactors):
        raise UserError(f"{path} is a packed model; this command needs a dense (.cpkg) model")
    return model


def cmd_train(args) -> int:
    mode = {"cp": "dense-cp", "bcp": "b-cp"}[args.mode]
    hyper = Hyperparams(
        dim=args.dim, eta=args.lr, lambda_a=args.l2, lambda_b=args.l2, lambda_c=args.l2,
        delta=args.delta, negatives_per_positive=args.neg, max_epochs=args.epochs,
        seed=args.seed, eval_every=args.eval_every,
    )
    graph = load_dataset(args.data)
    logger.info(
        "loaded %s: N_e=%d N_r=%d train=%d valid=%d test=%d",
        args.data, graph.n_entities, graph.n_relations, len(graph.train), len(graph.valid), len(graph.test),
    )
    out = Path(args.out)
    log_path = _sidecar(out, ".log.tsv")
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def on_epoch(line):
            log_fh.write(line + "\n")
            log_fh.flush()
            if not args.quiet:
                print(line, flush=True)

        start = time.perf_counter()
        dense, packed, log = train(TrainConfig(hyper, mode, threads=args.threads), graph, on_epoch=on_epoch)
    if packed is not None:
        save_packed(packed, out)
        save_dense(dense, _sidecar(out, ".latent.cpkg"))
    else:
        save_dense(dense, out)
    graph.write_vocab(_sidecar(out, ".entities.tsv"), _sidecar(out, ".relations.tsv"))
    _write_manifest(
        out, "train", vars(args),
        {"best_epoch": log.best_epoch, "best_valid_mrr": log.best_mrr, "seconds": time.perf_counter() - start},
    )
    logger.info("best epoch %d, validation MRR %s; wrote %s", log.best_epoch, log.best_mrr, out)
    return 0


def cmd_eval(args) -> int:
    paths = [p for p in args.model.split(",") if p]
    graph = load_dataset(args.data)
    scorers = []
    for p in paths:
        _check_vocab(p, graph)
        scorers.append(scorer_for(load_model(p)))
    scorer = scorers[0] if len(scorers) == 1 else EnsembleScorer(scorers)
    report = evaluate(scorer, graph.split(args.split), graph, threads=args.threads)
    print(report.to_table())
    print(report.to_text())
    if args.report:
        Path(args.report).write_text(report.to_text() + "\n")
        _write_manifest(args.report, "eval", vars(args), {"report": report.as_dict()})
    return 0


def cmd_pack(args) -> int:
    dense = _load_dense(args.model)
    packed = binarize_factors(dense, args.delta)
    save_packed(packed, args.out)
    _copy_vocab(args.model, args.out)
    _write_manifest(args.out, "pack", vars(args))
    return 0


def cmd_quantize_vq(args) -> int:
    dense = _load_dense(args.model)
    packed = vq_factors(dense)
    save_packed(packed, args.out)
    _copy_vocab(args.model, args.out)
    _write_manifest(args.out, "quantize-vq", vars(args), {"alphas": packed.alphas})
    print("alpha_A\talpha_B\talpha_C")
    print("\t".join(f"{a:.9g}" for a in packed.alphas))
    return 0


def _encoder(model_path, data):
    """Map string triples to ids using the dataset or the model's vocab sidecars."""
    if data:
        graph = load_dataset(data)
        _check_vocab(model_path, graph)
        return graph.encode
    ents_path = _sidecar(model_path, ".entities.tsv")
    rels_path = _sidecar(model_path, ".relations.tsv")
    if not ents_path.exists() or not rels_path.exists():
        raise UserError(f"no vocabulary beside {model_path}; pass --data")
    ents = {n: i for i, n in enumerate(read_vocab(ents_path))}
    rels = {n: i for i, n in enumerate(read_vocab(rels_path))}

    def encode(rows):
        try:
            return np.array([(ents[s], ents[o], rels[r]) for s, r, o in rows], dtype=np.int64).reshape(-1, 3)
        except KeyError as exc:
            raise UserError(f"unknown name {exc.args[0]!r}") from None

    return encode


def _labeled(encode, pos_path, neg_path):
    pos = encode(read_triples(pos_path))
    neg = encode(read_triples(neg_path))
    triples = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos), bool), np.zeros(len(neg), bool)])
    return triples, labels


def cmd_classify(args) -> int:
    if (args.threshold is None) == (args.tune is None):
        raise UserError("pass exactly one of --threshold or --tune")
    encode = _encoder(args.model, args.data)
    scorer = scorer_for(load_model(args.model))
    if args.tune is not None:
        vt, vl = _labeled(encode, *args.tune)
        threshold, val_acc = best_threshold(scorer.score_triples(vt), vl)
        print(f"threshold\t{threshold:.9g}\nvalid_accuracy\t{100 * val_acc:.4f}")
    else:
        threshold = args.threshold
    triples, labels = _labeled(encode, args.pos, args.neg)
    acc = classify(scorer, triples, labels, threshold)
    print(f"accuracy\t{acc:.4f}\ntriples\t{len(triples)}")
    return 0


def cmd_bench(args) -> int:
    if args.step < 1 or args.dmin < 1 or args.dmax < args.dmin:
        raise UserError("need 1 <= dmin <= dmax and step >= 1")
    dims = list(range(args.dmin, args.dmax + 1, args.step))
    result = bench_scores(dims, repetitions=args.reps, trials=args.trials, seed=args.seed, pin=not args.no_pin)
    print(result.tsv())
    print(f"# kernels={result.kernels} overhead_ns={result.overhead_ns:.0f} "
          f"overhead_fraction={result.max_overhead_fraction():.5f}", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(result.tsv() + "\n")
        _write_manifest(args.out, "bench", vars(args), {"kernels": result.kernels, "overhead_ns": result.overhead_ns})
    if args.csv:
        Path(args.csv).write_text(result.csv() + "\n")
    return 0


def cmd_size(args) -> int:
    report = size_report(load_model(args.model))
    for key, value in report.items():
        print(f"{key}\t{value}")
    return 0


def cmd_synth(args) -> int:
    splits = block_graph(
        n_entities=args.entities, n_relations=args.relations, n_clusters=args.clusters,
        n_facts=args.facts, n_valid=args.held_out, n_test=args.held_out, seed=args.seed,
    )
    out = write_dataset(splits, args.out)
    known = {t for rows in splits.values() for t in rows}
    ents = sorted({x for s, _, o in known for x in (s, o)})
    rels = sorted({r for _, r, _ in known})
    negs = uniform_negatives(known, ents, rels, 2 * args.held_out, seed=args.seed + 1)
    write_dataset({"valid_neg": negs[: args.held_out], "test_neg": negs[args.held_out :]}, out)
    _write_manifest(out / "dataset", "synth", vars(args))
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bincp", description="Binarized CP decomposition for knowledge graph completion.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser(
        "train", help="train a CP or B-CP model",
        description="Defaults are the best WN18RR B-CP setting (D=400, lr 0.05, L2 1e-4, delta 0.5, "
        "5 negatives, 1000 epochs). Use 10 negatives for FB15k and FB15k-237.",
    )
    t.add_argument("--data", required=True, help="directory with train.txt, valid.txt, test.txt")
    t.add_argument("--mode", choices=["cp", "bcp"], default="bcp")
    t.add_argument("--dim", type=int, default=400, help="embedding dimension D (default 400)")
    t.add_argument("--lr", type=float, default=0.05, help="SGD learning rate (grid: 0.025, 0.05)")
    t.add_argument("--l2", type=float, default=1e-4, help="L2 weight for A, B and C (grid: 0, 1e-4)")
    t.add_argument("--delta", type=float, default=0.5, help="binarization scale (grid: 0.3, 0.5)")
    t.add_argument("--neg", type=int, default=5, help="negatives per positive (5 WN18*, 10 FB15k*)")
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--eval-every", type=int, default=50, help="epochs between validation checks")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=int, default=1, help="threads for validation ranking")
    t.add_argument("--out", required=True, help="model file (.cpkg for cp, .bcpk for bcp)")
    t.add_argument("--quiet", action="store_true", help="do not echo the per-epoch log")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="filtered MRR / Hits@N; several models are ensembled")
    e.add_argument("--model", required=True, help="model file, or comma-separated files for an ensemble")
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["valid", "test"], default="test")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--report", help="also write the key-value report here")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("pack", help="binarize a dense model with the sign quantizer")
    k.add_argument("--model", required=True)
    k.add_argument("--delta", type=float, default=0.5)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_pack)

    q = sub.add_parser("quantize-vq", help="VQ-CP baseline: alpha * sign per factor matrix")
    q.add_argument("--model", required=True)
    q.add_argument("--out", required=True, help="packed file; scales go to <out>.alphas.json")
    q.set_defaults(func=cmd_quantize_vq)

    c = sub.add_parser("classify", help="triple classification accuracy")
    c.add_argument("--model", required=True)
    c.add_argument("--pos", required=True, help="TSV of true triples")
    c.add_argument("--neg", required=True, help="TSV of false triples")
    c.add_argument("--threshold", type=float)
    c.add_argument("--tune", nargs=2, metavar=("VALID_POS", "VALID_NEG"), help="tune the threshold on these")
    c.add_argument("--data", help="dataset directory for the vocabulary (default: model sidecars)")
    c.set_defaults(func=cmd_classify)

    b = sub.add_parser("bench", help="float vs XNOR/popcount scoring throughput")
    b.add_argument("--dmin", type=int, default=10)
    b.add_argument("--dmax", type=int, default=1000)
    b.add_argument("--step", type=int, default=10)
    b.add_argument("--reps", type=int, default=100_000, help="scores per trial")
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="write the TSV table here")
    b.add_argument("--csv", help="write a plot-ready CSV here")
    b.add_argument("--no-pin", action="store_true", help="do not pin to one CPU")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("size", help="model size accounting")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_size)

    y = sub.add_parser("synth", help="write a synthetic block-structured dataset")
    y.add_argument("--out", required=True)
    y.add_argument("--entities", type=int, default=400)
    y.add_argument("--relations", type=int, default=4)
    y.add_argument("--clusters", type=int, default=20)
    y.add_argument("--facts", type=int, default=6000)
    y.add_argument("--held-out", type=int, default=300)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    func = args.func
    try:
        return func(args)
    except (UserError, *USER_ERRORS) as exc:
        print(f"bincp: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"bincp: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
