"""Command line entry points.

Every command writes one ``manifest.json`` (or ``<output>.manifest.json``)
recording the command, its configuration, sha256 digests of the inputs, the
outputs written, timestamps and the package version.

Exit status: 0 on success, 1 when some queries failed (unless
``--permit-partial``), 2 on bad input or configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import random
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .bm25 import ENGLISH_STOPWORDS, PRESETS, Tokenizer, build_index, load_index, save_index, search_many
from .core import MetricConfig
from .corpus_io import (
    QueryRecord,
    load_aspect_qrels,
    load_corpus,
    load_queries,
    read_run_file,
    read_trace,
    write_run_file,
    write_trace,
)
from .errors import AspectEvalError, BackendUnavailable, IoError, MissingQrels
from .harness import BM25Retriever, ProtocolConfig, ScriptedAgent, cumulative_ranking, remote_agent, run_episode
from .judge import DEFAULT_GAMMA, aggregate_agentic_report, load_verdicts
from .metrics import evaluate_run

log = logging.getLogger("aspecteval")

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2

_print_lock = threading.Lock()


def say(*parts, file=None) -> None:
    # one print per line under a lock so concurrent workers never interleave
    with _print_lock:
        print(*parts, file=file or sys.stdout, flush=True)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None
    version: str = __version__

    def add_input(self, path) -> None:
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = sha256_file(p)
        elif p.is_dir():
            # digest over the sorted (name, file digest) listing
            h = hashlib.sha256()
            for f in sorted(x for x in p.rglob("*") if x.is_file()):
                h.update(f"{f.relative_to(p)}\0{sha256_file(f)}\n".encode())
            self.inputs[str(p)] = h.hexdigest()

    def write(self, path) -> None:
        self.finished = _now()
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args, *names) -> dict:
    return {n: getattr(args, n) for n in names}


# index

def cmd_index(args) -> int:
    k1, b = PRESETS[args.preset] if args.preset else (args.k1, args.b)
    tokenizer = Tokenizer(ENGLISH_STOPWORDS if args.stopwords else frozenset(), args.stemmer)
    manifest = RunManifest("index", {"k1": k1, "b": b, "preset": args.preset, "tokenizer": tokenizer.to_dict(),
                                     "workers": args.workers})
    manifest.add_input(args.corpus)
    index = build_index(load_corpus(args.corpus), k1=k1, b=b, tokenizer=tokenizer, workers=args.workers)
    digest = save_index(index, args.index)
    manifest.outputs.append(str(args.index))
    manifest.config["index_sha256"] = digest
    manifest.write(f"{args.index}.manifest.json")
    say(f"indexed {index.doc_count} documents, average length {index.avg_doc_length:.2f} tokens")
    say(f"index sha256 {digest}")
    return EXIT_OK


# bm25-run

def cmd_bm25_run(args) -> int:
    manifest = RunManifest("bm25-run", _config(args, "k", "workers", "tag"))
    manifest.add_input(args.index)
    manifest.add_input(args.queries)
    index = load_index(args.index)
    queries = load_queries(args.queries)
    runs = search_many(index, {q.query_id: q.query for q in queries}, k=args.k, workers=args.workers)
    write_run_file(runs, args.output, tag=args.tag)
    manifest.outputs.append(str(args.output))
    manifest.write(f"{args.output}.manifest.json")
    empty = sum(1 for r in runs.values() if len(r) == 0)
    say(f"wrote {len(runs)} rankings to {args.output}" + (f" ({empty} empty)" if empty else ""))
    return EXIT_OK


# eval-static

def cmd_eval_static(args) -> int:
    config = MetricConfig(alpha=args.alpha, cutoffs=tuple(args.cutoffs))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("eval-static", {"alpha": config.alpha, "cutoffs": list(config.cutoffs),
                                           "ideal": config.ideal, "workers": args.workers})
    manifest.add_input(args.run)
    manifest.add_input(args.qrels)
    runs = read_run_file(args.run)
    qrels = load_aspect_qrels(args.qrels)
    report = evaluate_run(runs, qrels, config, workers=args.workers)
    _write_json(out / "report.json", report.to_dict())
    with open(out / "per_query.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for rep in report.per_query:
            f.write(json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    table = report.table()
    (out / "table.txt").write_text(table, encoding="utf-8")
    manifest.outputs += [str(out / n) for n in ("report.json", "per_query.jsonl", "table.txt")]
    manifest.write(out / "manifest.json")
    for w in report.warnings:
        say(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(table)
    return EXIT_OK


# run-agentic

def sample_queries(queries: Sequence[QueryRecord], per_subset: int, seed: int) -> list[QueryRecord]:
    """Draw ``per_subset`` queries from each subset with one seeded generator.

    Subsets are visited in sorted order and queries within a subset in id
    order, so the draw depends only on the query set and the seed. Subsets
    smaller than ``per_subset`` are taken whole. The result keeps file order.
    """
    rng = random.Random(seed)
    groups: dict[str, list[QueryRecord]] = {}
    for q in queries:
        groups.setdefault(q.subset or "all", []).append(q)
    chosen: set[str] = set()
    for name in sorted(groups):
        members = sorted(groups[name], key=lambda q: q.query_id)
        picked = members if len(members) <= per_subset else rng.sample(members, per_subset)
        chosen.update(q.query_id for q in picked)
    return [q for q in queries if q.query_id in chosen]


def _trace_path(out: Path, qid: str) -> Path:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in qid)
    return out / "traces" / f"{safe}.jsonl"


def _load_script(path) -> Callable[[str], ScriptedAgent]:
    """A script file holds either one action list used for every query or a
    ``query_id -> action list`` object."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read script {path}: {exc}") from exc
    if isinstance(data, list):
        return lambda qid: ScriptedAgent(data)
    if isinstance(data, dict):
        return lambda qid: ScriptedAgent(data.get(qid, []))
    raise AspectEvalError(f"script {path} must hold a list or an object")


def _completed(path: Path) -> bool:
    if not path.is_file():
        return False
    try:
        return read_trace(path).complete
    except AspectEvalError:
        return False


def cmd_run_agentic(args) -> int:
    if (args.endpoint is None) == (args.script is None):
        raise AspectEvalError("give exactly one of --endpoint or --script")
    if args.endpoint and not args.model:
        raise AspectEvalError("--endpoint needs --model")
    config = ProtocolConfig(mode=args.mode, fixed_rounds=args.rounds, round_cap=args.round_cap,
                            per_round_k=args.per_round_k, snippet_budget=args.snippet_budget)
    out = Path(args.out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    manifest = RunManifest("run-agentic", {
        **config.to_dict(), "seed": args.seed, "sample_per_subset": args.sample_per_subset,
        "agent": {"endpoint": args.endpoint, "model": args.model, "wire": args.wire} if args.endpoint
        else {"script": str(args.script)},
        "resume": args.resume, "workers": args.workers,
    })
    for p in (args.queries, args.corpus, args.index, args.script):
        if p is not None:
            manifest.add_input(p)

    queries = load_queries(args.queries)
    if args.sample_per_subset:
        queries = sample_queries(queries, args.sample_per_subset, args.seed)
    manifest.config["query_ids"] = [q.query_id for q in queries]
    index = load_index(args.index)
    retriever = BM25Retriever(index, dict(load_corpus(args.corpus)))
    if args.script:
        make_agent = _load_script(args.script)
    else:
        make_agent = lambda qid: remote_agent(args.endpoint, args.model, wire=args.wire)  # noqa: E731

    todo = [q for q in queries if not (args.resume and _completed(_trace_path(out, q.query_id)))]
    skipped = len(queries) - len(todo)
    if skipped:
        say(f"resume: {skipped} queries already complete")

    def one(q: QueryRecord):
        try:
            trace = run_episode(make_agent(q.query_id), retriever, q.query, config, query_id=q.query_id)
        except (AspectEvalError, BackendUnavailable) as exc:
            say(f"{q.query_id}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return {"query_id": q.query_id, "error": type(exc).__name__, "message": str(exc)}
        write_trace(trace, _trace_path(out, q.query_id))
        say(f"{q.query_id}: {trace.num_rounds} rounds, {trace.stop_reason}")
        return None

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(one, todo))
    else:
        results = [one(q) for q in todo]
    errors = [r for r in results if r is not None]
    with open(out / "errors.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for e in errors:
            f.write(json.dumps(e, sort_keys=True) + "\n")

    traces = {}
    for q in queries:
        path = _trace_path(out, q.query_id)
        if path.is_file():
            t = read_trace(path)
            if t.complete:
                traces[q.query_id] = t
    manifest.outputs += [str(_trace_path(out, q)) for q in sorted(traces)] + [str(out / "errors.jsonl")]

    if config.mode == "fixed":
        checkpoints = {f"round{r}": r for r in range(1, config.fixed_rounds + 1)}
    else:
        checkpoints = {"final": None}
    for name, r in checkpoints.items():
        runs = {qid: cumulative_ranking(t, t.num_rounds if r is None else min(r, t.num_rounds))
                for qid, t in traces.items()}
        path = out / "runs" / f"{name}.run"
        write_run_file(runs, path, tag=f"agentic-{name}")
        manifest.outputs.append(str(path))
    manifest.config["errors"] = len(errors)
    manifest.write(out / "manifest.json")
    say(f"{len(traces)} traces complete, {len(errors)} errors")
    return EXIT_PARTIAL if errors and not args.permit_partial else EXIT_OK


# judge-aggregate

def cmd_judge_aggregate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("judge-aggregate", _config(args, "gamma", "rounds", "label"))
    for p in (args.verdicts, args.traces, args.qrels):
        manifest.add_input(p)
    qrels = load_aspect_qrels(args.qrels)
    aspects = {qid: q.aspects for qid, q in qrels.items()}
    records = [json.loads(line) for line in Path(args.verdicts).read_text(encoding="utf-8").splitlines()
               if line.strip()]
    keyed = load_verdicts(records, aspects)
    traces = {}
    for path in sorted(Path(args.traces).glob("*.jsonl")):
        t = read_trace(path)
        traces[t.query_id] = t
    missing = sorted(q for q in traces if q not in aspects)
    if missing:
        raise MissingQrels(missing)

    verdicts, override = {}, {}
    for qid, t in traces.items():
        if args.rounds is not None:
            override[qid] = args.rounds
            key = (qid, args.rounds) if (qid, args.rounds) in keyed else (qid, None)
        else:
            key = (qid, None) if (qid, None) in keyed else (qid, t.num_rounds)
        if key in keyed:
            verdicts[qid] = keyed[key]
    report = aggregate_agentic_report(verdicts, traces, aspects, gamma=args.gamma,
                                      rounds_override=override or None, label=args.label)
    _write_json(out / "agentic_report.json", report.to_dict())
    table = report.table()
    (out / "agentic_table.txt").write_text(table, encoding="utf-8")
    manifest.outputs += [str(out / "agentic_report.json"), str(out / "agentic_table.txt")]
    manifest.write(out / "manifest.json")
    sys.stdout.write(table)
    return EXIT_OK


def _cutoffs(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cutoffs must be comma-separated integers, got {text!r}")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("cutoffs must be positive")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspecteval", description="Aspect-aware retrieval evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 index from a JSONL corpus")
    p.add_argument("corpus")
    p.add_argument("index")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--preset", choices=sorted(PRESETS), help="named (k1, b) pair, overrides --k1/--b")
    p.add_argument("--stopwords", action="store_true", help="drop English stopwords")
    p.add_argument("--stemmer", default=None, help="registered stemmer name")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("bm25-run", help="rank every query with a BM25 index")
    p.add_argument("index")
    p.add_argument("queries")
    p.add_argument("output")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bm25_run)

    p = sub.add_parser("eval-static", help="score a run file against aspect qrels")
    p.add_argument("run")
    p.add_argument("qrels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--cutoffs", type=_cutoffs, default=[5, 10, 15, 25])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval_static)

    p = sub.add_parser("run-agentic", help="run search-agent episodes and write traces")
    p.add_argument("queries")
    p.add_argument("corpus")
    p.add_argument("index")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=("fixed", "adaptive"), default="fixed")
    p.add_argument("--rounds", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--round-cap", type=int, default=100)
    p.add_argument("--per-round-k", type=int, default=5)
    p.add_argument("--snippet-budget", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-per-subset", type=int, default=0, help="draw this many queries per subset")
    p.add_argument("--endpoint", help="OpenAI-compatible base URL")
    p.add_argument("--model")
    p.add_argument("--wire", choices=("chat", "responses"), default="chat")
    p.add_argument("--script", help="JSON file of scripted agent actions")
    p.add_argument("--resume", action="store_true", help="skip queries with a complete trace")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--permit-partial", action="store_true", help="exit 0 even if some queries failed")
    p.set_defaults(func=cmd_run_agentic)

    p = sub.add_parser("judge-aggregate", help="combine judge verdicts and traces into an agentic report")
    p.add_argument("verdicts")
    p.add_argument("traces")
    p.add_argument("qrels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--rounds", type=int, default=None, help="score every query as this many rounds")
    p.add_argument("--label", default="")
    p.set_defaults(func=cmd_judge_aggregate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AspectEvalError, OSError, ValueError, KeyError) as exc:
        say(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
