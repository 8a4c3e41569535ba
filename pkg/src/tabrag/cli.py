"""Command-line entry point wiring every pipeline stage from config."""

from __future__ import annotations

import json
import logging

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import insight_eval, retrieval, stats as stats_mod
from .config import Config, load_config
from .construction import (
    PLACEHOLDER_SEEDS,
    construct_examples,
    load_seed_bank,
)
from .gateway import (
    CachedChatProvider,
    CompletionParams,
    HashEmbeddingProvider,
    MockChatProvider,
    OpenAICompatProvider,
    ResponseCache,
    ScriptRule,
)
from .generation import generate_insight
from .prompts import DEFAULT_REGISTRY, TemplateRegistry
from .sandbox import SandboxExecutor

log = logging.getLogger(__name__)


def _load_mock_script(path: str) -> MockChatProvider:
    if not path:
        return MockChatProvider(default="mock response")
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = [
        ScriptRule(tuple(r["contains"]), r["response"]) for r in rec.get("rules", [])
    ]
    return MockChatProvider(
        sequence=rec.get("sequence"),
        by_hash=rec.get("by_hash"),
        rules=rules,
        default=rec.get("default"),
    )


def make_provider(cfg: Config):
    if cfg.provider.kind == "mock":
        provider = _load_mock_script(cfg.provider.script)
    elif cfg.provider.kind == "openai":
        provider = OpenAICompatProvider(
            model=cfg.provider.model,
            endpoint=cfg.provider.endpoint,
            api_key=cfg.provider.api_key(),
        )
    else:
        raise click.ClickException(f"unknown provider kind {cfg.provider.kind!r}")
    if cfg.cache_dir:
        provider = CachedChatProvider(
            provider, ResponseCache(cfg.cache_dir), clock=make_clock(cfg)
        )
    return provider


def make_embedder(cfg: Config):
    if cfg.embedder.kind == "hash":
        return HashEmbeddingProvider(dimension=cfg.embedder.dimension)
    raise click.ClickException(f"unknown embedder kind {cfg.embedder.kind!r}")


def make_clock(cfg: Config):
    fixed = cfg.generation.clock
    if fixed and fixed != "now":
        return lambda: fixed
    from .gateway import _utc_now

    return _utc_now


def make_params(cfg: Config) -> CompletionParams:
    return CompletionParams(
        temperature=cfg.provider.temperature,
        max_output_tokens=cfg.provider.max_output_tokens,
    )


def make_registry(cfg: Config) -> TemplateRegistry:
    if cfg.templates_dir:
        return TemplateRegistry(overrides_dir=cfg.templates_dir)
    return DEFAULT_REGISTRY


def _workpath(cfg: Config, name: str) -> Path:
    workdir = Path(cfg.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    return workdir / name


def _write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def _read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


pass_config = click.make_pass_decorator(Config)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file")
@click.option("--workdir", default=None, help="output directory override")
@click.option("--concurrency", type=int, default=None, help="provider concurrency bound")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, workdir, concurrency, verbose):
    """Multi-table retrieval, insight generation, and evaluation pipeline."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)
    overrides = {"workdir": workdir, "concurrency": concurrency}
    try:
        ctx.obj = load_config(config_path, overrides)
    except Exception as exc:
        raise click.ClickException(f"[config] {exc}")


def _stage(name):
    """Wrap a subcommand so failures exit nonzero with the stage name."""

    def decorate(fn):
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except click.ClickException:
                raise
            except Exception as exc:
                raise click.ClickException(f"[{name}] {exc}")

        wrapper.__name__ = fn.__name__
        return wrapper

    return decorate


@main.command()
@pass_config
@_stage("ingest")
def ingest(cfg: Config):
    """Load and validate the corpus file, reporting rejects."""
    corpus = corpus_mod.ingest(cfg.corpus)
    summary = {
        "accepted": corpus.report.accepted,
        "rejected": [
            {"line": r.line_no, "reason": r.reason} for r in corpus.report.rejected
        ],
    }
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--kind", type=click.Choice(["joinable", "topic"]), required=True)
@click.option("--out", default=None, help="output sets file")
@pass_config
@_stage("group")
def group(cfg: Config, kind, out):
    """Group corpus tables into multi-table sets."""
    corpus = corpus_mod.ingest(cfg.corpus)
    if kind == "joinable":
        sets = corpus_mod.group_joinable(corpus, cfg.construction.max_set_size)
    else:
        sets = corpus_mod.group_topic_related(corpus, cfg.construction.max_set_size)
    out_path = Path(out) if out else _workpath(cfg, f"sets_{kind}.jsonl")
    corpus_mod.save_sets(sets, out_path)
    click.echo(json.dumps({"sets": len(sets), "out": str(out_path)}, sort_keys=True))


@main.command()
@click.option("--kind", type=click.Choice(["sparse", "dense"]), default=None)
@click.option("--out", default=None, help="output index file")
@pass_config
@_stage("index")
def index(cfg: Config, kind, out):
    """Build a retrieval index over the corpus."""
    kind = kind or cfg.retrieval.kind
    corpus = corpus_mod.ingest(cfg.corpus)
    embedder = make_embedder(cfg) if kind == "dense" else None
    idx = retrieval.build_index(corpus, kind, embedder)
    out_path = Path(out) if out else _workpath(cfg, f"index_{kind}.json")
    retrieval.save_index(idx, out_path)
    click.echo(json.dumps({"kind": kind, "documents": len(idx.ids), "out": str(out_path)},
                          sort_keys=True))


@main.command()
@click.option("--k", type=int, default=None)
@click.option("--index-file", "index_file", default=None)
@click.option("--out", default=None)
@click.option("--report", "report_out", default=None,
              help="also write P/R/F1 against the gold sets to this path")
@pass_config
@_stage("retrieve")
def retrieve_cmd(cfg: Config, k, index_file, out, report_out):
    """Run top-k retrieval for every example's question."""
    k = k or cfg.retrieval.k
    kind = cfg.retrieval.kind
    index_path = Path(index_file) if index_file else _workpath(cfg, f"index_{kind}.json")
    idx = retrieval.load_index(index_path)
    embedder = make_embedder(cfg) if kind == "dense" else None
    examples = corpus_mod.load_examples(cfg.examples)
    results = [
        retrieval.retrieve(idx, ex.question_text, k, query_id=ex.id, embedder=embedder)
        for ex in sorted(examples, key=lambda e: e.id)
    ]
    out_path = Path(out) if out else _workpath(cfg, "retrieval.jsonl")
    retrieval.save_results(results, out_path)
    echo = {"queries": len(results), "k": k, "out": str(out_path)}
    if report_out:
        sets = corpus_mod.load_sets(cfg.sets)
        gold = {
            ex.id: set(sets[ex.gold_table_set_id].table_ids)
            for ex in examples
        }
        report = retrieval.eval_retrieval(results, gold, ks=[1, 2, 5, 10, 20])
        Path(report_out).write_text(report.to_json() + "\n", encoding="utf-8")
        echo["report"] = report_out
    click.echo(json.dumps(echo, sort_keys=True))


@main.command()
@click.option("--results", "results_file", default=None, help="retrieval results file")
@click.option("--out", default=None)
@pass_config
@_stage("generate")
def generate(cfg: Config, results_file, out):
    """Generate an insight per example from its top retrieved tables."""
    corpus = corpus_mod.ingest(cfg.corpus)
    examples = {ex.id: ex for ex in corpus_mod.load_examples(cfg.examples)}
    results_path = Path(results_file) if results_file else _workpath(cfg, "retrieval.jsonl")
    results = retrieval.load_results(results_path)
    provider = make_provider(cfg)
    params = make_params(cfg)
    registry = make_registry(cfg)
    clock = make_clock(cfg)

    def run_one(res):
        ex = examples[res.query_id]
        tables = [corpus.tables[tid] for tid in res.table_ids()[:cfg.retrieval.k]]
        record = generate_insight(
            ex.question_text,
            tables,
            provider,
            char_budget=cfg.generation.char_budget,
            question_id=ex.id,
            params=params,
            registry=registry,
            clock=clock,
        )
        return record.to_dict()

    with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as pool:
        records = list(pool.map(run_one, results))
    records.sort(key=lambda r: r["question_id"])
    out_path = Path(out) if out else _workpath(cfg, "insights.jsonl")
    _write_jsonl(out_path, records)
    click.echo(json.dumps({"insights": len(records), "out": str(out_path)}, sort_keys=True))


@main.command(name="eval")
@click.option("--insights", "insights_file", default=None)
@click.option("--out", default=None)
@pass_config
@_stage("eval")
def eval_cmd(cfg: Config, insights_file, out):
    """Score generated insights for faithfulness and completeness."""
    corpus = corpus_mod.ingest(cfg.corpus)
    examples = {ex.id: ex for ex in corpus_mod.load_examples(cfg.examples)}
    insights_path = Path(insights_file) if insights_file else _workpath(cfg, "insights.jsonl")
    records = _read_jsonl(insights_path)
    provider = make_provider(cfg)
    params = make_params(cfg)
    registry = make_registry(cfg)

    def run_one(rec):
        ex = examples[rec["question_id"]]
        tables = [corpus.tables[tid] for tid in rec["context_table_ids"]]
        base = {"question_id": ex.id, "generator": rec["provider"]}
        try:
            scores = insight_eval.evaluate_example(
                ex.question_text,
                rec["insight_text"],
                tables,
                ex.gold_insight,
                provider,
                params=params,
                registry=registry,
            )
        except insight_eval.StageError as exc:
            return {**base, "status": "failed", "stage": exc.stage}
        return {**base, "status": "ok", **scores.to_dict()}

    with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as pool:
        rows = list(pool.map(run_one, records))
    rows.sort(key=lambda r: r["question_id"])
    out_path = Path(out) if out else _workpath(cfg, "eval.jsonl")
    _write_jsonl(out_path, rows)
    n_failed = sum(1 for r in rows if r["status"] == "failed")
    click.echo(json.dumps({"scored": len(rows) - n_failed, "failed": n_failed,
                           "out": str(out_path)}, sort_keys=True))


@main.command(name="meta-eval")
@click.option("--scores-a", "scores_a", required=True, help="eval output for generator A")
@click.option("--scores-b", "scores_b", required=True, help="eval output for generator B")
@click.option("--human", "human_file", required=True,
              help="line-delimited human preferences {pair_id, dimension, value}")
@click.option("--out", default=None)
@pass_config
@_stage("meta-eval")
def meta_eval(cfg: Config, scores_a, scores_b, human_file, out):
    """Correlate normalized metric preferences with human preferences.

    Pair ids in the human file must equal the question ids in the score
    files; multiple annotator rows per pair are averaged.
    """
    metric_field = {"faithfulness": "faithfulness", "completeness": "completeness_f1"}
    a_rows = {r["question_id"]: r for r in _read_jsonl(scores_a) if r.get("status") == "ok"}
    b_rows = {r["question_id"]: r for r in _read_jsonl(scores_b) if r.get("status") == "ok"}
    human: dict[str, dict[str, list[int]]] = {}
    for rec in _read_jsonl(human_file):
        human.setdefault(rec["dimension"], {}).setdefault(rec["pair_id"], []).append(rec["value"])
    report = {}
    for dimension, field_name in metric_field.items():
        pair_values = human.get(dimension, {})
        shared = sorted(set(pair_values) & set(a_rows) & set(b_rows))
        if len(shared) < 2:
            report[dimension] = {"error": "fewer than 2 comparable pairs"}
            continue
        metric_prefs = [
            stats_mod.normalize_pref(a_rows[p][field_name], b_rows[p][field_name], cfg.tie_band)
            for p in shared
        ]
        human_prefs = [sum(pair_values[p]) / len(pair_values[p]) for p in shared]
        entry = {"n_pairs": len(shared)}
        try:
            entry["pearson"] = stats_mod.pearson(metric_prefs, human_prefs)
            entry["spearman"] = stats_mod.spearman(metric_prefs, human_prefs)
        except stats_mod.StatsError as exc:
            entry["error"] = str(exc)
        report[dimension] = entry
    text = json.dumps(report, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@main.command()
@click.option("--sets", "sets_file", default=None)
@click.option("--out", default=None)
@click.option("--provenance-out", "provenance_out", default=None)
@pass_config
@_stage("construct")
def construct(cfg: Config, sets_file, out, provenance_out):
    """Run the benchmark construction pipeline over table sets."""
    corpus = corpus_mod.ingest(cfg.corpus)
    sets = corpus_mod.load_sets(sets_file or cfg.sets)
    seeds = (
        load_seed_bank(cfg.construction.seeds_file)
        if cfg.construction.seeds_file
        else PLACEHOLDER_SEEDS
    )
    seed_facts = {}
    if cfg.construction.seed_facts_file:
        seed_facts = {
            rec["set_id"]: rec["facts"]
            for rec in _read_jsonl(cfg.construction.seed_facts_file)
        }
    executor = SandboxExecutor(
        python_cmd=cfg.construction.sandbox_python or None,
        timeout_s=cfg.construction.timeout_s,
        memory_mb=cfg.construction.memory_mb,
    )
    result = construct_examples(
        corpus,
        [sets[k] for k in sorted(sets)],
        seeds,
        make_provider(cfg),
        executor,
        seed_facts=seed_facts,
        fallback_enabled=cfg.construction.fallback,
        params=make_params(cfg),
        registry=make_registry(cfg),
    )
    out_path = Path(out) if out else _workpath(cfg, "constructed.jsonl")
    _write_jsonl(out_path, [ex.__dict__ for ex in result.examples])
    prov_path = Path(provenance_out) if provenance_out else _workpath(cfg, "provenance.jsonl")
    _write_jsonl(prov_path, [p.to_dict() for p in result.provenance])
    click.echo(
        json.dumps(
            {
                "kept": len(result.examples),
                "total": result.total,
                "discard_ratios": result.discard_ratios(),
                "out": str(out_path),
            },
            sort_keys=True,
        )
    )


@main.command()
@pass_config
@_stage("stats")
def stats(cfg: Config):
    """Print corpus statistics."""
    corpus = corpus_mod.ingest(cfg.corpus)
    examples = corpus_mod.load_examples(cfg.examples) if cfg.examples else []
    sets = corpus_mod.load_sets(cfg.sets) if cfg.sets else {}
    click.echo(corpus_mod.corpus_stats(corpus, examples, sets).to_json())


@main.command()
@pass_config
@_stage("serve")
def serve(cfg: Config):
    """Run the annotation service (HTTP API plus static UI when built)."""
    import uvicorn

    from .annotation import TaskStore
    from .service import create_app

    store = TaskStore(
        cfg.service.data_path,
        required_annotators=cfg.service.required_annotators,
        lease_s=cfg.service.lease_minutes * 60,
        randomize_seed=cfg.service.randomize_seed,
    )
    app = create_app(
        store,
        tokens=cfg.service.tokens,
        static_dir=cfg.service.static_dir or None,
    )
    uvicorn.run(app, host="127.0.0.1", port=cfg.service.port, log_level="warning")


if __name__ == "__main__":
    main()
