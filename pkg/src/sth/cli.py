"""Command-line entry point: ``sth prep|train|index|query|eval``.

Exit status is 0 on success, 1 for usage errors and 2 for runtime errors.
Options may also come from a TOML file given with ``--config``; keys are
option names (dashes or underscores), either at top level or under a table
named after the subcommand. Flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import lsh_codes, lsh_train, save_lsh
from .corpus import Corpus, load_sparse, load_text_dir, save_sparse, split, tfidf_weight
from .datasets import STOPWORDS, synthetic_texts
from .eval import EvalReport, ground_truth_knn, ground_truth_topic, sweep
from .hashcodes import MAX_BITS, BitCode, CodeMatrix, build_index, load_index, query_with_distances, save_index
from .hashfn import TrainConfig, load_model, predict_code, predict_codes, save_model
from .knn_graph import save_graph
from .pipeline import StageError, corpus_from_texts, train_sth
from .spectral import save_embedding

log = logging.getLogger("sth")

EXIT_USAGE = 1
EXIT_RUNTIME = 2
DEFAULT_LENGTHS = (4, 8, 16, 32, 64)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def derive_seed(seed: int, stream: str) -> int:
    """Independent, reproducible seed for a named randomness substream."""
    return int(np.random.SeedSequence([seed, zlib.crc32(stream.encode())]).generate_state(1, np.uint32)[0])


def _bits(value: str) -> int:
    b = int(value)
    if not 1 <= b <= MAX_BITS:
        raise argparse.ArgumentTypeError(f"bits must be in [1, {MAX_BITS}]")
    return b


def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def _str_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _sibling(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}{path.suffix or '.sv'}")


# ---------------------------------------------------------------- prep

def cmd_prep(args) -> int:
    stop = STOPWORDS if args.stopwords == "english" else frozenset()
    vocab = None
    if args.synthetic:
        docs = synthetic_texts(args.synthetic, n_topics=args.topics, seed=derive_seed(args.seed, "synthetic"))
        corpus, vocab = corpus_from_texts(docs, stop)
    else:
        src = Path(args.input)
        if not src.exists():
            raise FileNotFoundError(f"input not found: {src}")
        if src.is_dir():
            raw, vocab = load_text_dir(src, stop)
            corpus = tfidf_weight(raw)
        else:
            corpus = load_sparse(src)
            if args.counts:
                corpus = tfidf_weight(corpus)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_sparse(corpus, out)
    if vocab is not None:
        out.with_suffix(".vocab").write_text("\n".join(vocab.terms()) + "\n", encoding="utf-8")
    log.info("wrote %d documents (vocab %d) to %s", len(corpus), corpus.vocab_size, out)
    if args.split is not None:
        train, test = split(corpus, args.split, derive_seed(args.seed, "split"))
        save_sparse(train, _sibling(out, "train"))
        save_sparse(test, _sibling(out, "test"))
        log.info("split %d train / %d test", len(train), len(test))
    return 0


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    train = load_sparse(args.train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(C=args.C, tolerance=args.tol, max_epochs=args.max_epochs, seed=derive_seed(args.seed, "svm"))
    result = train_sth(train, k=args.k, bits=args.bits, svm=cfg, workers=args.threads, eig_method=args.eig)
    try:
        save_model(result.model, out / "model.bin", out / "model.json")
        result.codes.save(out / "codes.tsv")
        save_embedding(result.embedding, result.thresholds, out / "embedding.txt")
        save_index(build_index(result.codes), out / "index.bin")
        if args.save_graph:
            save_graph(result.graph, out / "graph.txt")
    except Exception as exc:
        raise StageError("write", exc) from exc
    diag = result.diagnostics()
    diag["argv"] = vars(args).copy()
    diag["argv"].pop("func", None)
    with open(out / "train_log.json", "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True, default=str)
    log.info("bit agreement on training docs: %.4f", float(np.mean(diag["bit_agreement"])))
    return 0


# ---------------------------------------------------------------- index

def cmd_index(args) -> int:
    if args.codes:
        codes = CodeMatrix.load(args.codes)
    elif args.model and args.corpus:
        model = load_model(Path(args.model) / "model.bin")
        codes = predict_codes(model, load_sparse(args.corpus, vocab_size=None))
    else:
        raise UsageError("index needs --codes, or --model with --corpus")
    if args.bits:
        codes = codes.truncate(args.bits)
    index = build_index(codes)
    save_index(index, args.out)
    log.info("indexed %s", index.stats())
    return 0


# ---------------------------------------------------------------- query

def cmd_query(args) -> int:
    index = load_index(args.index)
    model = load_model(Path(args.model) / "model.bin")
    queries = load_sparse(args.doc, role="test")
    if index.length > model.length:
        raise ValueError(f"index has {index.length}-bit codes but the model only {model.length} bits")
    model = model.truncate(index.length)
    out = sys.stdout
    for q in queries:
        code = predict_code(model, q)
        if len(queries) > 1:
            out.write(f"# query {q.doc_id} code {code}\n")
        for doc_id, dist in query_with_distances(index, code, args.radius):
            out.write(f"{doc_id}\t{dist}\n")
    return 0


# ---------------------------------------------------------------- eval

def _method_codes(method: str, args, train: Corpus, test: Corpus, max_len: int, lsh_seed: int):
    if method == "sth":
        if not args.model:
            raise UsageError("method sth needs --model")
        mdir = Path(args.model)
        model = load_model(mdir / "model.bin")
        train_codes = CodeMatrix.load(mdir / "codes.tsv")
        if not np.array_equal(train_codes.doc_ids, train.doc_ids):
            raise ValueError("codes.tsv does not match the training corpus doc ids")
        return train_codes, predict_codes(model, test)
    if method == "lsh":
        lsh = lsh_train(train.vocab_size, max_len, lsh_seed)
        if args.out:
            save_lsh(lsh, Path(args.out).with_suffix(f".lsh{lsh_seed}.json"))
        return lsh_codes(lsh, train), lsh_codes(lsh, test)
    raise UsageError(f"unknown method {method!r} (expected sth or lsh)")


def cmd_eval(args) -> int:
    train = load_sparse(args.train)
    test = load_sparse(args.test, vocab_size=train.vocab_size, role="test")
    methods = args.compare or [args.method]
    if args.truth == "knn":
        truth = ground_truth_knn(train, test, args.k)
    else:
        truth = ground_truth_topic(train, test)

    report = EvalReport(methodology=f"{truth.methodology}" + (f"(k={args.k})" if args.truth == "knn" else ""))
    for method in methods:
        if method == "sth":
            train_codes, test_codes = _method_codes("sth", args, train, test, 0, 0)
            lengths = args.lengths or [l for l in DEFAULT_LENGTHS if l <= train_codes.length]
            report.extend(sweep(train_codes, test_codes, truth, lengths, args.radii, "sth"))
        else:
            lengths = args.lengths or list(DEFAULT_LENGTHS)
            for s in range(args.lsh_runs):
                lsh_seed = derive_seed(args.seed + s, "lsh")
                train_codes, test_codes = _method_codes(method, args, train, test, max(lengths), lsh_seed)
                name = method if args.lsh_runs == 1 else f"{method}#{s}"
                report.extend(sweep(train_codes, test_codes, truth, lengths, args.radii, name))

    report.write_tsv(args.out if args.out else sys.stdout)
    if args.per_query:
        report.write_per_query_tsv(args.per_query)
    if args.plot_data:
        report.write_plot_data(args.plot_data, args.plot_radius)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="sth", description="Self-taught hashing for fast similarity search.", formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="TOML file with option defaults")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prep", help="build a TF-IDF sparse corpus and optional train/test split", formatter_class=fmt, parents=[common])
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="directory of <label>/<doc> text files, or a sparse-vector file")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic labelled documents")
    s.add_argument("--topics", type=int, default=20, help="topics for --synthetic")
    s.add_argument("--out", required=True, help="output sparse-vector file")
    s.add_argument("--split", type=float, help="training fraction; writes <out>.train/.test alongside")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stopwords", choices=("english", "none"), default="english")
    s.add_argument("--counts", action="store_true", help="sparse input holds raw counts; apply TF-IDF")
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("train", help="learn codes and hash functions for a training corpus", formatter_class=fmt, parents=[common])
    s.add_argument("--train", required=True, help="training corpus (sparse-vector file)")
    s.add_argument("--out", required=True, help="artifact directory")
    s.add_argument("--k", type=int, default=25, help="neighbours per document in the similarity graph")
    s.add_argument("--bits", type=_bits, default=16, help=f"code length (max {MAX_BITS})")
    s.add_argument("--C", type=float, default=1.0, help="SVM cost")
    s.add_argument("--tol", type=float, default=1e-3, help="SVM stopping tolerance on projected gradients")
    s.add_argument("--max-epochs", type=int, default=1000)
    s.add_argument("--eig", choices=("auto", "dense", "lanczos"), default="auto")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--save-graph", action="store_true", help="also write graph.txt")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("index", help="build a code index file", formatter_class=fmt, parents=[common])
    s.add_argument("--codes", help="codes.tsv to index")
    s.add_argument("--model", help="model directory (with --corpus: index predicted codes)")
    s.add_argument("--corpus", help="corpus to encode with --model")
    s.add_argument("--bits", type=_bits, help="truncate codes to this many bits")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("query", help="Hamming-ball search for query documents", formatter_class=fmt, parents=[common])
    s.add_argument("--index", required=True)
    s.add_argument("--model", required=True, help="model directory")
    s.add_argument("--doc", required=True, help="sparse-vector file with query document(s)")
    s.add_argument("--radius", type=int, default=1)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("eval", help="precision/recall/F1 sweep over code lengths and radii", formatter_class=fmt, parents=[common])
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--model", help="model directory (method sth)")
    s.add_argument("--truth", choices=("knn", "topic"), default="knn")
    s.add_argument("--k", type=int, default=25, help="ground-truth neighbours for --truth knn")
    s.add_argument("--radii", type=_int_list, default=[0, 1, 2, 3])
    s.add_argument("--lengths", type=_int_list, default=None,
                   help="code lengths (default 4,8,16,32,64 up to the trained length)")
    s.add_argument("--method", choices=("sth", "lsh"), default="sth")
    s.add_argument("--compare", type=_str_list, help="comma-separated methods, e.g. sth,lsh")
    s.add_argument("--lsh-runs", type=int, default=1, help="LSH seeds seed..seed+N-1")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="report TSV (default: stdout)")
    s.add_argument("--per-query", help="per-query TSV")
    s.add_argument("--plot-data", help="precision-recall points TSV")
    s.add_argument("--plot-radius", type=int, default=1)
    s.set_defaults(func=cmd_eval)
    return p


def _load_config(path: str, command: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib

    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(command, {}))
    return {k.replace("-", "_"): v for k, v in flat.items()}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    early, rest = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in rest if a in subparsers), None)
    if early.config and command:
        try:
            conf = _load_config(early.config, command)
        except (OSError, ValueError) as exc:
            parser.exit(EXIT_USAGE, f"sth: error: cannot read config {early.config}: {exc}\n")
        sub = subparsers[command]
        known = {a.dest for a in sub._actions} - {"help", "func"}
        unknown = sorted(set(conf) - known)
        if unknown:
            parser.exit(EXIT_USAGE, f"sth: error: unknown config key(s): {', '.join(unknown)}\n")
        for action in sub._actions:
            if action.dest in conf:
                action.required = False
        sub.set_defaults(**conf)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        rc = args.func(args)
    except UsageError as exc:
        print(f"sth {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"sth {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose > 1:
            raise
        return EXIT_RUNTIME
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return rc


if __name__ == "__main__":
    sys.exit(main())
