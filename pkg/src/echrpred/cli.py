"""Pipeline orchestration: synthesize/ingest -> parse -> features -> embed ->
split -> search -> eval -> report, driven by a single JSON config file.

Every stage reads its inputs from the shared output directory and writes its
artifacts there, together with a meta record carrying a content hash of the
config subsection (plus upstream hashes) that produced it; a stage whose hash
and outputs are both present is skipped on rerun. `pipeline run` simply
executes the stages in order, so composing the stage subcommands by hand
yields identical artifacts. All randomness flows from the config seeds; at
workers=1 a rerun into a fresh directory reproduces the report byte for byte.

The output directory comes from --out, else the PIPELINE_OUT environment
variable, else the config file. Exit codes: 0 success, 1 invalid config,
2 stage failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import datasets, embeddings, evaluation, models
from .corpus import DocumentCollection, DocType, SyntheticSpec, generate_synthetic, load_corpus, save_corpus
from .datasets import historical_ratio, label_cases, make_split, save_manifest, split_from_manifest
from .evaluation import ExperimentConfig, MetricsReport, render_report
from .features import (
    EMBEDDING_DIMENSIONS,
    NGRAM_DIMENSION,
    PRETRAINED_TYPES,
    SECTION_ORDER,
    TRAINED_TYPES,
    FeatureStore,
    FeatureType,
)
from .models import AlgorithmId, default_hyper_grid
from .sections import ParsedJudgment, SectionKind, is_standard, load_heading_config, try_segment
from .textprep import load_stopwords

STAGES = ("synth", "parse", "features", "embed", "split", "search", "eval", "report")

OUT_ENV_VAR = "PIPELINE_OUT"


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage {stage}: {message}")


@dataclass
class PipelineConfig:
    corpus_path: str | None
    synthetic: SyntheticSpec | None
    articles: tuple[str, ...]
    heading_config_path: str | None
    stopword_path: str | None
    pretrained_paths: dict[FeatureType, dict[int, str]]
    word2vec_overrides: dict
    doc2vec_overrides: dict
    dimensions: tuple[int, ...]
    rho: float
    split_seed: int
    r_target_overrides: dict[str, float]
    space: dict
    out_dir: str
    seed: int
    workers: int
    cv_folds: int = 10
    raw: dict = field(default_factory=dict, repr=False)


_SPACE_KEYS = {"feature_types", "dimensions", "sections", "stopwords", "algorithms"}
_TOP_KEYS = {
    "corpus", "synthetic", "articles", "heading_config", "stopword_file", "pretrained",
    "embedding", "split", "space", "out_dir", "seed", "workers", "cv_folds",
}


def load_config(
    path: str,
    out_override: str | None = None,
    seed_override: int | None = None,
    workers_override: int | None = None,
) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    corpus_path = raw.get("corpus")
    synthetic_raw = raw.get("synthetic")
    if (corpus_path is None) == (synthetic_raw is None):
        raise ConfigError("config must set exactly one of 'corpus' and 'synthetic'")
    synthetic = None
    if synthetic_raw is not None:
        try:
            synthetic = SyntheticSpec(
                articles=tuple(synthetic_raw["articles"]),
                docs_per_article_per_label=synthetic_raw["docs_per_article_per_label"],
                background_vocab_size=synthetic_raw.get("background_vocab_size", 400),
                signal_tokens_per_label=synthetic_raw.get("signal_tokens_per_label", 20),
                signal_rate=synthetic_raw.get("signal_rate", 0.05),
                tokens_per_section=synthetic_raw.get("tokens_per_section", 60),
                seed=synthetic_raw.get("seed", 0),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from exc

    articles = tuple(str(a) for a in raw.get("articles", ()))
    if not articles:
        raise ConfigError("config needs a non-empty 'articles' list")

    pretrained: dict[FeatureType, dict[int, str]] = {}
    for name, by_dim in (raw.get("pretrained") or {}).items():
        try:
            ftype = FeatureType(name)
        except ValueError as exc:
            raise ConfigError(f"unknown pretrained embedding {name!r}") from exc
        if ftype not in PRETRAINED_TYPES:
            raise ConfigError(f"{name!r} is not a pretrained embedding type")
        pretrained[ftype] = {int(dim): str(p) for dim, p in by_dim.items()}

    emb_cfg = raw.get("embedding") or {}
    dimensions = tuple(int(d) for d in emb_cfg.get("dimensions", EMBEDDING_DIMENSIONS))
    bad_dims = [d for d in dimensions if d not in EMBEDDING_DIMENSIONS]
    if bad_dims:
        raise ConfigError(f"embedding dimensions must be in {EMBEDDING_DIMENSIONS}: {bad_dims}")

    split_cfg = raw.get("split") or {}
    rho = float(split_cfg.get("rho", 0.10))
    if not 0.0 < rho < 1.0:
        raise ConfigError("split.rho must be in (0, 1)")
    r_overrides = {str(a): float(r) for a, r in (split_cfg.get("r_target") or {}).items()}

    space = raw.get("space") or {}
    unknown_axes = set(space) - _SPACE_KEYS
    if unknown_axes:
        raise ConfigError(f"unknown space restriction keys: {sorted(unknown_axes)}")

    seed = int(raw.get("seed", 0)) if seed_override is None else int(seed_override)
    out_dir = out_override or os.environ.get(OUT_ENV_VAR) or raw.get("out_dir")
    if not out_dir:
        raise ConfigError("no output directory (set 'out_dir', --out, or $" + OUT_ENV_VAR + ")")
    workers = int(raw.get("workers", 1)) if workers_override is None else int(workers_override)
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    return PipelineConfig(
        corpus_path=corpus_path,
        synthetic=synthetic,
        articles=articles,
        heading_config_path=raw.get("heading_config"),
        stopword_path=raw.get("stopword_file"),
        pretrained_paths=pretrained,
        word2vec_overrides=dict(emb_cfg.get("word2vec", {})),
        doc2vec_overrides=dict(emb_cfg.get("doc2vec", {})),
        dimensions=dimensions,
        rho=rho,
        split_seed=int(split_cfg.get("seed", raw.get("seed", 0))),
        r_target_overrides=r_overrides,
        space=space,
        out_dir=str(out_dir),
        seed=seed,
        workers=workers,
        cv_folds=int(raw.get("cv_folds", 10)),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# Configuration space enumeration
# ---------------------------------------------------------------------------


def effective_feature_types(cfg: PipelineConfig) -> list[FeatureType]:
    available = [FeatureType.NGRAM, *TRAINED_TYPES]
    for ftype in PRETRAINED_TYPES:
        if cfg.pretrained_paths.get(ftype):
            available.append(ftype)
    restriction = cfg.space.get("feature_types")
    if restriction is not None:
        wanted = {FeatureType(v) for v in restriction}
        available = [f for f in available if f in wanted]
    order = {f: i for i, f in enumerate(FeatureType)}
    return sorted(available, key=lambda f: order[f])


def dimensions_for(cfg: PipelineConfig, ftype: FeatureType) -> list[int]:
    if ftype == FeatureType.NGRAM:
        dims = [NGRAM_DIMENSION]
    elif ftype in PRETRAINED_TYPES:
        dims = sorted(cfg.pretrained_paths.get(ftype, {}))
    else:
        dims = sorted(cfg.dimensions)
    restriction = cfg.space.get("dimensions")
    if restriction is not None:
        wanted = {int(v) for v in restriction}
        dims = [d for d in dims if d in wanted]
    return dims


def effective_sections(cfg: PipelineConfig) -> list[SectionKind]:
    sections = list(SECTION_ORDER)
    restriction = cfg.space.get("sections")
    if restriction is not None:
        wanted = {SectionKind(v) for v in restriction}
        sections = [s for s in sections if s in wanted]
    return sections


def effective_stopword_axis(cfg: PipelineConfig) -> list[bool]:
    axis = [False, True]
    restriction = cfg.space.get("stopwords")
    if restriction is not None:
        wanted = set(restriction)
        bad = wanted - {"kept", "removed"}
        if bad:
            raise ConfigError(f"stopwords axis values must be kept/removed: {sorted(bad)}")
        axis = [sw for sw in axis if ("removed" if sw else "kept") in wanted]
    return axis


def effective_hyper_grid(cfg: PipelineConfig) -> list[models.HyperSetting]:
    grid = default_hyper_grid(seed=cfg.seed)
    restriction = cfg.space.get("algorithms")
    if restriction is not None:
        wanted = {AlgorithmId(v) for v in restriction}
        grid = [h for h in grid if h.algorithm in wanted]
    return grid


def enumerate_space(cfg: PipelineConfig, article: str) -> list[ExperimentConfig]:
    """The exhaustive experiment grid for one article."""
    space: list[ExperimentConfig] = []
    grid = effective_hyper_grid(cfg)
    for ftype in effective_feature_types(cfg):
        for dim in dimensions_for(cfg, ftype):
            for section in effective_sections(cfg):
                for removed in effective_stopword_axis(cfg):
                    for hyper in grid:
                        space.append(
                            ExperimentConfig(article, ftype, dim, section, removed, hyper)
                        )
    return space


# ---------------------------------------------------------------------------
# Stage plumbing
# ---------------------------------------------------------------------------


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _file_fingerprint(path: str | None) -> str | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        return f"missing:{path}"
    return _sha({"path": str(path), "bytes": hashlib.sha256(p.read_bytes()).hexdigest()})


def stage_hashes(cfg: PipelineConfig) -> dict[str, str]:
    """Content-address chain: each stage's hash covers its config subsection
    plus the hashes of the stages it consumes."""
    h: dict[str, str] = {}
    h["synth"] = _sha(
        {"corpus": cfg.corpus_path, "synthetic": asdict(cfg.synthetic) if cfg.synthetic else None}
    )
    h["parse"] = _sha({"synth": h["synth"], "headings": _file_fingerprint(cfg.heading_config_path)})
    h["features"] = _sha({"parse": h["parse"], "stopwords": _file_fingerprint(cfg.stopword_path)})
    h["embed"] = _sha(
        {
            "parse": h["parse"],
            "word2vec": cfg.word2vec_overrides,
            "doc2vec": cfg.doc2vec_overrides,
            "dimensions": list(cfg.dimensions),
            "pretrained": {f.value: d for f, d in cfg.pretrained_paths.items()},
            "seed": cfg.seed,
            "space": cfg.space,
        }
    )
    h["split"] = _sha(
        {
            "parse": h["parse"],
            "articles": list(cfg.articles),
            "rho": cfg.rho,
            "seed": cfg.split_seed,
            "r_target": cfg.r_target_overrides,
        }
    )
    h["search"] = _sha(
        {
            "features": h["features"],
            "embed": h["embed"],
            "split": h["split"],
            "space": cfg.space,
            "seed": cfg.seed,
            "k": cfg.cv_folds,
        }
    )
    h["eval"] = _sha({"search": h["search"]})
    h["report"] = _sha({"eval": h["eval"]})
    return h


class Runner:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.hashes = stage_hashes(cfg)

    # -- artifact paths -----------------------------------------------

    def corpus_file(self) -> Path:
        return self.out / "corpus.jsonl"

    def parsed_file(self) -> Path:
        return self.out / "parsed.json"

    def tokens_file(self) -> Path:
        return self.out / "tokens.json"

    def embed_dir(self) -> Path:
        return self.out / "embeddings"

    def split_file(self, article: str) -> Path:
        return self.out / "splits" / f"article_{article}.json"

    def search_file(self, article: str) -> Path:
        return self.out / "search" / f"article_{article}.json"

    def eval_file(self, article: str) -> Path:
        return self.out / "eval" / f"article_{article}.json"

    def model_file(self, article: str) -> Path:
        return self.out / "models" / f"article_{article}.json"

    def _outputs(self, stage: str) -> list[Path]:
        if stage == "synth":
            return [self.corpus_file()]
        if stage == "parse":
            return [self.parsed_file()]
        if stage == "features":
            return [self.tokens_file()]
        if stage == "embed":
            return [self.embed_dir() / "embed_manifest.json"]
        if stage == "split":
            return [self.split_file(a) for a in self.cfg.articles]
        if stage == "search":
            return [self.search_file(a) for a in self.cfg.articles]
        if stage == "eval":
            return [self.eval_file(a) for a in self.cfg.articles]
        if stage == "report":
            return [self.out / "report.json", self.out / "report.csv", self.out / "report.txt"]
        raise ValueError(stage)

    def _meta_path(self, stage: str) -> Path:
        return self.out / "meta" / f"{stage}.json"

    def is_cached(self, stage: str) -> bool:
        meta = self._meta_path(stage)
        if not meta.exists():
            return False
        try:
            recorded = json.loads(meta.read_text("utf-8"))
        except json.JSONDecodeError:
            return False
        if recorded.get("hash") != self.hashes[stage]:
            return False
        return all(p.exists() for p in self._outputs(stage))

    def _write_meta(self, stage: str) -> None:
        meta = self._meta_path(stage)
        meta.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "stage": stage,
            "hash": self.hashes[stage],
            "seed": self.cfg.seed,
            "split_seed": self.cfg.split_seed,
            "workers": self.cfg.workers,
        }
        meta.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")

    def _require(self, stage: str, dependency: str) -> None:
        for p in self._outputs(dependency):
            if not p.exists():
                raise StageError(stage, f"missing {p.name}: run {dependency} first")

    # -- loading helpers -----------------------------------------------

    def _load_collection(self) -> DocumentCollection:
        return load_corpus(str(self.corpus_file()))

    def _load_parsed(self) -> tuple[dict[str, ParsedJudgment], list[tuple[str, str]]]:
        doc = json.loads(self.parsed_file().read_text("utf-8"))
        judgments = {}
        for doc_id, entry in doc["standard"].items():
            judgments[doc_id] = ParsedJudgment(
                doc_id=doc_id,
                sections={SectionKind(k): v for k, v in entry["sections"].items()},
                spans={SectionKind(k): tuple(v) for k, v in entry["spans"].items()},
                metadata=entry["metadata"],
            )
        extras = [(d, b) for d, b in doc["extras"]]
        return judgments, extras

    def _load_pools(self, judgments: dict[str, ParsedJudgment]) -> dict[str, datasets.ArticlePool]:
        collection = self._load_collection()
        standard = DocumentCollection(
            tuple(d for d in collection if d.doc_id in judgments), provenance="standard-filter"
        )
        return {a: label_cases(standard, a) for a in self.cfg.articles}

    def _build_store(self) -> FeatureStore:
        judgments, extras = self._load_parsed()
        store = FeatureStore(
            judgments,
            extra_documents=extras,
            pretrained=self._load_embedding_files(),
            preloaded_doc2vec=self._load_doc2vec_files(),
            word2vec_overrides=self.cfg.word2vec_overrides,
            doc2vec_overrides=self.cfg.doc2vec_overrides,
            stopwords=load_stopwords(self.cfg.stopword_path),
            seed=self.cfg.seed,
        )
        store.preload_tokens(json.loads(self.tokens_file().read_text("utf-8")))
        return store

    def _load_embedding_files(self) -> dict:
        manifest_path = self.embed_dir() / "embed_manifest.json"
        loaded = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text("utf-8"))
            for entry in manifest["word_embeddings"]:
                ftype = FeatureType(entry["feature_type"])
                loaded[(ftype, entry["dim"])] = embeddings.load_pretrained(entry["path"])
        return loaded

    def _load_doc2vec_files(self) -> dict:
        manifest_path = self.embed_dir() / "embed_manifest.json"
        loaded = {}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text("utf-8"))
            for entry in manifest["doc2vec"]:
                loaded[entry["dim"]] = embeddings.load_doc2vec(entry["path"])
        return loaded

    def _heuristic_reference(self, article: str, pool: datasets.ArticlePool) -> tuple[int, int]:
        override = self.cfg.r_target_overrides.get(article)
        if override is None:
            return (pool.v_count, pool.nv_count)
        return (round(override * 1_000_000), round((1.0 - override) * 1_000_000))

    # -- stages ----------------------------------------------------------

    def stage_synth(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        if self.cfg.synthetic is not None:
            collection = generate_synthetic(self.cfg.synthetic)
            source = {"synthetic": asdict(self.cfg.synthetic)}
        else:
            collection = load_corpus(self.cfg.corpus_path)
            source = {"corpus": self.cfg.corpus_path}
        save_corpus(collection, str(self.corpus_file()))
        meta = {"documents": len(collection), "source": source}
        (self.out / "corpus_meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8"
        )

    def stage_parse(self) -> None:
        self._require("parse", "synth")
        headings = (
            load_heading_config(self.cfg.heading_config_path)
            if self.cfg.heading_config_path
            else None
        )
        collection = self._load_collection()
        standard: dict[str, dict] = {}
        rejected: dict[str, list[str]] = {}
        extras: list[tuple[str, str]] = []
        n_judgments = 0
        for doc in collection:
            if doc.doc_type != DocType.JUDGMENT:
                extras.append((doc.doc_id, doc.body))
                continue
            n_judgments += 1
            result = try_segment(doc, headings)
            if is_standard(result):
                standard[doc.doc_id] = {
                    "sections": {k.value: v for k, v in result.sections.items()},
                    "spans": {k.value: list(v) for k, v in result.spans.items()},
                    "metadata": result.metadata,
                }
            else:
                missing = result.missing if hasattr(result, "missing") else []
                rejected[doc.doc_id] = [k.value for k in missing]
        payload = {
            "standard": standard,
            "extras": extras,
            "summary": {
                "judgments": n_judgments,
                "standard": len(standard),
                "rejected": rejected,
            },
        }
        self.parsed_file().write_text(json.dumps(payload, sort_keys=True) + "\n", "utf-8")

    def stage_features(self) -> None:
        self._require("features", "parse")
        judgments, _ = self._load_parsed()
        store = FeatureStore(
            judgments, stopwords=load_stopwords(self.cfg.stopword_path), seed=self.cfg.seed
        )
        table: dict[str, dict] = {}
        for doc_id in sorted(judgments):
            per_doc: dict[str, dict] = {}
            for section in SECTION_ORDER:
                per_doc[section.value] = {
                    "kept": list(store.tokens(doc_id, section, False).tokens),
                    "removed": list(store.tokens(doc_id, section, True).tokens),
                }
            table[doc_id] = per_doc
        self.tokens_file().write_text(json.dumps(table, sort_keys=True) + "\n", "utf-8")

    def stage_embed(self) -> None:
        self._require("embed", "parse")
        judgments, extras = self._load_parsed()
        self.embed_dir().mkdir(parents=True, exist_ok=True)
        store = FeatureStore(
            judgments,
            extra_documents=extras,
            word2vec_overrides=self.cfg.word2vec_overrides,
            doc2vec_overrides=self.cfg.doc2vec_overrides,
            stopwords=load_stopwords(self.cfg.stopword_path),
            seed=self.cfg.seed,
        )
        wanted = effective_feature_types(self.cfg)
        manifest: dict[str, list] = {"word_embeddings": [], "doc2vec": []}
        if FeatureType.ECHR2VEC in wanted:
            for dim in dimensions_for(self.cfg, FeatureType.ECHR2VEC):
                emb = store.word_embedding(FeatureType.ECHR2VEC, dim)
                path = self.embed_dir() / f"echr2vec_{dim}.txt"
                embeddings.write_embedding(emb, str(path))
                manifest["word_embeddings"].append(
                    {"feature_type": "echr2vec", "dim": dim, "path": str(path)}
                )
        for ftype in PRETRAINED_TYPES:
            if ftype not in wanted:
                continue
            for dim, src in sorted(self.cfg.pretrained_paths.get(ftype, {}).items()):
                if not Path(src).exists():
                    raise StageError("embed", f"pretrained file not found: {src}")
                dest = self.embed_dir() / f"{ftype.value}_{dim}.txt"
                shutil.copyfile(src, dest)
                manifest["word_embeddings"].append(
                    {"feature_type": ftype.value, "dim": dim, "path": str(dest)}
                )
        if FeatureType.DOC2VEC in wanted:
            for dim in dimensions_for(self.cfg, FeatureType.DOC2VEC):
                model = store.doc2vec_model(dim)
                path = self.embed_dir() / f"doc2vec_{dim}.json"
                embeddings.save_doc2vec(model, str(path))
                manifest["doc2vec"].append({"dim": dim, "path": str(path)})
        manifest["seed"] = self.cfg.seed
        (self.embed_dir() / "embed_manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
        )

    def stage_split(self) -> None:
        self._require("split", "parse")
        judgments, _ = self._load_parsed()
        pools = self._load_pools(judgments)
        (self.out / "splits").mkdir(parents=True, exist_ok=True)
        for article in self.cfg.articles:
            pool = pools[article]
            r_target = self.cfg.r_target_overrides.get(article)
            if r_target is None:
                r_target = historical_ratio(pool)
            try:
                split = make_split(pool, r_target, self.cfg.rho, self.cfg.split_seed)
            except datasets.SplitError as exc:
                raise StageError("split", str(exc)) from exc
            save_manifest(split, self.cfg.rho, str(self.split_file(article)))

    def _article_split(self, article: str, pools) -> datasets.DatasetSplit:
        manifest = datasets.load_manifest(str(self.split_file(article)))
        return split_from_manifest(pools[article], manifest)

    def stage_search(self) -> None:
        for dep in ("features", "embed", "split"):
            self._require("search", dep)
        (self.out / "search").mkdir(parents=True, exist_ok=True)
        if self.cfg.workers > 1 and len(self.cfg.articles) > 1:
            jobs = [(self.cfg, article) for article in self.cfg.articles]
            with ProcessPoolExecutor(max_workers=self.cfg.workers) as pool:
                list(pool.map(_search_article_job, jobs))
        else:
            # serial path shares one store so per-axes feature matrices are
            # computed once across articles
            judgments, _ = self._load_parsed()
            pools = self._load_pools(judgments)
            store = self._build_store()
            for article in self.cfg.articles:
                _search_article(self, article, pools, store)

    def stage_eval(self) -> None:
        self._require("eval", "search")
        judgments, _ = self._load_parsed()
        pools = self._load_pools(judgments)
        store = self._build_store()
        (self.out / "eval").mkdir(parents=True, exist_ok=True)
        (self.out / "models").mkdir(parents=True, exist_ok=True)
        for article in self.cfg.articles:
            search_doc = json.loads(self.search_file(article).read_text("utf-8"))
            best = ExperimentConfig.from_json(search_doc["best"])
            split = self._article_split(article, pools)
            model, _, x_test = evaluation.final_fit(best, split, store)
            y_test = evaluation.label_array(split.test)
            model_metrics = evaluation.evaluate(model, x_test, y_test)
            reference = self._heuristic_reference(article, pools[article])
            heuristic_metrics = evaluation.evaluate(
                models.fit_heuristic(reference), x_test, y_test
            )
            report = evaluation.ArticleReport(
                article=article,
                best_config=best,
                cv_mean_accuracy=search_doc["best_mean_accuracy"],
                model=model_metrics,
                heuristic=heuristic_metrics,
                test_size=len(split.test),
                heuristic_reference=reference,
                r_target=split.r_target,
            )
            self.eval_file(article).write_text(
                json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", "utf-8"
            )
            models.save_model(model, str(self.model_file(article)))

    def stage_report(self) -> None:
        self._require("report", "eval")
        article_reports = [
            evaluation.ArticleReport.from_json(
                json.loads(self.eval_file(a).read_text("utf-8"))
            )
            for a in self.cfg.articles
        ]
        report = MetricsReport.build(article_reports)
        render_report(report, str(self.out))

    # -- driving ---------------------------------------------------------

    def run_stage(self, stage: str, force: bool = False) -> bool:
        """Returns True if the stage executed, False if cache satisfied it."""
        if not force and self.is_cached(stage):
            return False
        getattr(self, f"stage_{stage}")()
        self._write_meta(stage)
        return True

    def run_all(self) -> None:
        for stage in STAGES:
            executed = self.run_stage(stage)
            state = "done" if executed else "cached"
            print(f"[pipeline] {stage}: {state}")


def _search_article_job(job: tuple[PipelineConfig, str]) -> str:
    """Grid search for one article (module-level so worker processes can run it)."""
    cfg, article = job
    runner = Runner(cfg)
    judgments, _ = runner._load_parsed()
    pools = runner._load_pools(judgments)
    store = runner._build_store()
    return _search_article(runner, article, pools, store)


def _search_article(runner: "Runner", article: str, pools, store: FeatureStore) -> str:
    cfg = runner.cfg
    split = runner._article_split(article, pools)
    space = enumerate_space(cfg, article)
    result = evaluation.grid_search(
        article, space, list(split.train), store, k=cfg.cv_folds, seed=cfg.seed
    )
    best_mean = next(r.mean_accuracy for r in result.results if r.config == result.best)
    payload = {
        "article": article,
        "seed": cfg.seed,
        "k": cfg.cv_folds,
        "best": result.best.to_json(),
        "best_mean_accuracy": best_mean,
        "results": [
            {
                "config": r.config.to_json(),
                "fold_accuracies": list(r.fold_accuracies),
                "mean_accuracy": r.mean_accuracy,
            }
            for r in result.results
        ],
        "failures": result.failures,
    }
    runner.search_file(article).parent.mkdir(parents=True, exist_ok=True)
    runner.search_file(article).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return article


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _dry_run_search(cfg: PipelineConfig) -> None:
    total = 0
    for article in cfg.articles:
        space = enumerate_space(cfg, article)
        for config in space:
            print(config.label())
        total += len(space)
        print(f"# article {article}: {len(space)} configurations")
    print(f"# total: {total} configurations")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pipeline",
        description="Judgment-outcome prediction pipeline (synthesize/ingest, parse, "
        "featurize, embed, split, grid-search, evaluate, report).",
        epilog=f"The output directory may be overridden with ${OUT_ENV_VAR} or --out.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute every stage in order")
    run_p.add_argument("config", help="pipeline config JSON file")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--seed", type=int, default=None, help="global seed override")
    run_p.add_argument("--workers", type=int, default=None, help="worker count override")

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run only the {stage} stage")
        p.add_argument("--config", required=True, help="pipeline config JSON file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--workers", type=int, default=None, help="worker count override")
        if stage == "search":
            p.add_argument(
                "--dry-run",
                action="store_true",
                help="print the enumerated configuration space without fitting",
            )

    args = parser.parse_args(argv)
    try:
        config_path = args.config
        cfg = load_config(
            config_path,
            out_override=args.out,
            seed_override=args.seed,
            workers_override=args.workers,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        runner = Runner(cfg)
        if args.command == "run":
            runner.run_all()
        elif args.command == "search" and getattr(args, "dry_run", False):
            _dry_run_search(cfg)
        else:
            executed = runner.run_stage(args.command)
            print(f"[pipeline] {args.command}: {'done' if executed else 'cached'}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # stage failures surface with their stage name
        stage = args.command if args.command != "run" else "run"
        print(f"error: stage {stage}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
