"""Experiment orchestration with replayable run manifests.

Five operations cover the pipeline: ``convert`` builds the instruction
dataset, ``index`` builds the demonstration index, ``extract`` runs
retrieval, prompting, generation, parsing, and alignment over the test
split, ``evaluate`` scores a predictions file, and ``ablate`` sweeps
selection strategies and demonstration counts. Every extraction run writes
a manifest (config snapshot, input digests, per-sentence demonstration ids
and cache keys) sufficient to replay the run offline byte-identically from
a warm cache.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import (
    BioTag,
    LabeledSentence,
    LabelScheme,
    bio_to_spans,
    map_fine_to_coarse,
    parse_conll,
    write_records,
)
from .demoindex import (
    DemoEntry,
    HnswIndex,
    HnswParams,
    build_index,
    load_embeddings,
    random_select,
)
from .errors import ConfigError, DataError
from .evalkit import ClassCounts, MetricsReport, count_tokens, format_report, macro_metrics, merge_counts
from .extractparse import AlignedPrediction, align_to_bio, parse_extractions
from .instructgen import InstructRecord, sentence_to_record, write_dataset
from .llmgateway import (
    FINISH_ERROR,
    Gateway,
    GenerationRequest,
    HttpChatBackend,
    MockOracleBackend,
    cache_key,
)
from .promptkit import PromptSpec, assemble_prompt

STRATEGIES = ("knn", "random", "zero_shot")

# Demonstration counts that worked best per corpus in our sweeps; used when a
# config names the corpus but leaves k unset.
DEFAULT_K_BY_DATASET = {
    "ebm-nlp": 3,
    "ebm-nlp-h": 4,
    "ebm-nlp-rev": 9,
    "ebm-comet": 9,
}

DEFAULT_TASK_DESCRIPTION = (
    "You are an expert annotator of clinical trial reports. Extract every "
    "participants, interventions, and outcomes mention from the input sentence. "
    'Answer with one line per entity, formatted exactly as "<entity>" is <label>, '
    "where <label> is Participants, Interventions, or Outcomes. If the sentence "
    "mentions no entities, answer with exactly: no entities"
)


@dataclass(frozen=True)
class GatewaySettings:
    backend: str = "mock"
    base_url: str = ""
    model: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 60.0
    api_key_env: str = "OPENAI_API_KEY"
    cache_dir: str = ""
    max_in_flight: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: dict[str, str]
    output_dir: str
    dataset_name: str | None = None
    scheme: str = "coarse"  # label space of the corpus files: coarse | fine
    demonstration_labels: str = "coarse"  # label space serialized into records/demos
    task_description: str = DEFAULT_TASK_DESCRIPTION
    strategy: str = "knn"
    k: int | None = None
    hnsw: HnswParams = field(default_factory=HnswParams)
    embeddings: dict[str, str] = field(default_factory=dict)
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    prompt_max_chars: int = 200_000
    seed: int = 0
    index_path: str | None = None  # defaults to <output_dir>/index.pkl

    @property
    def resolved_k(self) -> int:
        if self.k is not None:
            return self.k
        if self.strategy == "zero_shot":
            return 0
        return DEFAULT_K_BY_DATASET.get((self.dataset_name or "").lower(), 3)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r} (expected one of {STRATEGIES})")
        if self.scheme not in ("coarse", "fine"):
            raise ConfigError(f"scheme must be 'coarse' or 'fine', got {self.scheme!r}")
        if self.demonstration_labels not in ("coarse", "fine"):
            raise ConfigError(
                f"demonstration_labels must be 'coarse' or 'fine', got {self.demonstration_labels!r}"
            )
        if self.scheme == "coarse" and self.demonstration_labels == "fine":
            raise ConfigError("demonstration_labels='fine' requires a fine-grained corpus")
        if self.resolved_k < 0:
            raise ConfigError(f"k must be >= 0, got {self.resolved_k}")
        if self.strategy == "zero_shot" and self.resolved_k != 0:
            raise ConfigError("zero_shot requires k == 0")
        if self.strategy == "knn":
            for split in ("train", "test"):
                if split not in self.embeddings:
                    raise ConfigError(f"strategy 'knn' requires embeddings.{split}")
        if self.gateway.backend not in ("mock", "http"):
            raise ConfigError(f"unknown gateway backend {self.gateway.backend!r}")
        if self.gateway.backend == "http" and not self.base_url_set():
            raise ConfigError("gateway backend 'http' requires gateway.base_url")

    def base_url_set(self) -> bool:
        return bool(self.gateway.base_url)

    def to_dict(self) -> dict:
        data = asdict(self)
        return data

    @classmethod
    def from_dict(cls, data: dict, *, base_dir: Path | None = None) -> "ExperimentConfig":
        data = dict(data)

        def resolve(path: str) -> str:
            if base_dir is None:
                return path
            return str((base_dir / path).resolve()) if not Path(path).is_absolute() else path

        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "corpus" in data:
            data["corpus"] = {split: resolve(p) for split, p in data["corpus"].items()}
        if "embeddings" in data:
            data["embeddings"] = {split: resolve(p) for split, p in data["embeddings"].items()}
        if "output_dir" in data:
            data["output_dir"] = resolve(data["output_dir"])
        if data.get("index_path"):
            data["index_path"] = resolve(data["index_path"])
        if "hnsw" in data and isinstance(data["hnsw"], dict):
            try:
                data["hnsw"] = HnswParams(**data["hnsw"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad hnsw settings: {exc}") from None
        if "gateway" in data and isinstance(data["gateway"], dict):
            gw = dict(data["gateway"])
            if gw.get("cache_dir"):
                gw["cache_dir"] = resolve(gw["cache_dir"])
            try:
                data["gateway"] = GatewaySettings(**gw)
            except TypeError as exc:
                raise ConfigError(f"bad gateway settings: {exc}") from None
        try:
            config = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)


@dataclass(frozen=True)
class RunManifest:
    config: dict
    digests: dict[str, str]
    sentences: list[dict]
    outputs: dict[str, str]

    def save(self, path: str | Path) -> None:
        payload = {
            "config": self.config,
            "digests": self.digests,
            "sentences": self.sentences,
            "outputs": self.outputs,
        }
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            config=data["config"],
            digests=data["digests"],
            sentences=data["sentences"],
            outputs=data["outputs"],
        )


@dataclass(frozen=True)
class ExtractResult:
    predictions_path: Path
    manifest_path: Path
    error_rows: int
    gateway_stats: dict[str, int]


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _sentence_seed(seed: int, sentence_id: str) -> int:
    return int(hashlib.sha256(f"{seed}:{sentence_id}".encode("utf-8")).hexdigest()[:12], 16)


def load_split(config: ExperimentConfig, split: str) -> list[LabeledSentence]:
    path = config.corpus.get(split)
    if not path:
        raise ConfigError(f"config has no corpus path for split {split!r}")
    scheme = LabelScheme.pico()
    try:
        with open(path, encoding="utf-8") as fh:
            result = parse_conll(fh, scheme, split=split)
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from None
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    return list(result.sentences)


def _demo_space(config: ExperimentConfig, sentences: Iterable[LabeledSentence]) -> list[LabeledSentence]:
    """Sentences in the label space used for records and demonstrations."""
    scheme = LabelScheme.pico()
    if config.demonstration_labels == "coarse":
        return [map_fine_to_coarse(s, scheme) for s in sentences]
    return list(sentences)


def _index_path(config: ExperimentConfig) -> Path:
    if config.index_path:
        return Path(config.index_path)
    return Path(config.output_dir) / "index.pkl"


def _cache_dir(config: ExperimentConfig) -> Path:
    if config.gateway.cache_dir:
        return Path(config.gateway.cache_dir)
    return Path(config.output_dir) / "cache"


def build_gateway(
    config: ExperimentConfig,
    *,
    mock_sentences: Sequence[LabeledSentence] = (),
    backend=None,
) -> Gateway:
    if backend is None:
        if config.gateway.backend == "mock":
            backend = MockOracleBackend(mock_sentences)
        else:
            backend = HttpChatBackend(
                config.gateway.base_url,
                api_key_env=config.gateway.api_key_env,
                timeout_s=config.gateway.timeout_s,
                retries=config.gateway.retries,
                backoff_s=config.gateway.backoff_s,
            )
    return Gateway(backend, cache_dir=_cache_dir(config))


def cmd_convert(config: ExperimentConfig, split: str = "train") -> dict:
    """Build the instruction dataset for a split and reconcile its span counts.

    Also writes the canonical sentence record file for the split, which fixes
    the sentence ids downstream consumers (embeddings, predictions) key on.
    """
    scheme = LabelScheme.pico()
    sentences = _demo_space(config, load_split(config, split))
    records = [sentence_to_record(s, config.task_description) for s in sentences]

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / f"records-{split}.jsonl"
    write_records(sentences, records_path)
    dataset_path = out_dir / f"instruct-{split}.jsonl"
    written = write_dataset(records, dataset_path)

    corpus_counts: dict[str, int] = {}
    for s in sentences:
        for span in bio_to_spans(s):
            coarse = scheme.to_coarse(span.label)
            corpus_counts[coarse] = corpus_counts.get(coarse, 0) + 1
    record_counts: dict[str, int] = {}
    for r in records:
        parsed = parse_extractions(r.output, scheme)
        if parsed.warnings:
            raise DataError(f"serialized record for {r.input!r} failed to parse back")
        for e in parsed.extractions:
            record_counts[e.label] = record_counts.get(e.label, 0) + 1
    if corpus_counts != record_counts:
        raise DataError(
            f"span count mismatch between corpus {corpus_counts} and dataset {record_counts}"
        )
    return {
        "dataset_path": str(dataset_path),
        "records_path": str(records_path),
        "records": written,
        "span_counts": dict(sorted(corpus_counts.items())),
    }


def _train_entries(config: ExperimentConfig) -> list[DemoEntry]:
    sentences = _demo_space(config, load_split(config, "train"))
    records = {s.sentence_id: sentence_to_record(s, config.task_description) for s in sentences}
    pairs = load_embeddings(config.embeddings["train"], expected_ids=list(records))
    return [DemoEntry(sid, vec, records[sid]) for sid, vec in pairs]


def cmd_index(config: ExperimentConfig) -> Path:
    """Build and persist the demonstration index over the training split."""
    if "train" not in config.embeddings:
        raise ConfigError("cmd_index requires embeddings.train")
    index = build_index(_train_entries(config), config.hnsw)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = _index_path(config)
    index.save(path)
    meta = {
        "entries": len(index),
        "dim": index.dim,
        "graph_checksum": index.graph_checksum(),
        "params": asdict(config.hnsw),
    }
    (out_dir / "index-meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return path


def _prediction_row(sentence: LabeledSentence, pred: AlignedPrediction, finish_reason: str) -> dict:
    return {
        "sentence_id": sentence.sentence_id,
        "tags": [t.to_string() for t in pred.tags],
        "unmatched": [{"surface": e.surface, "label": e.label} for e in pred.unmatched],
        "parse_warnings": pred.parse_warnings,
        "finish_reason": finish_reason,
    }


def _all_outside(sentence: LabeledSentence) -> AlignedPrediction:
    return AlignedPrediction(
        sentence_id=sentence.sentence_id,
        tags=tuple(BioTag.outside() for _ in sentence.tokens),
        unmatched=(),
        parse_warnings=0,
    )


def cmd_extract(config: ExperimentConfig, *, backend=None) -> ExtractResult:
    """Run demonstration selection, prompting, generation, parsing, and alignment."""
    config.validate()
    scheme = LabelScheme.pico()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    test_sentences = load_split(config, "test")
    mock_gold = _demo_space(config, test_sentences)
    gateway = build_gateway(config, mock_sentences=mock_gold, backend=backend)
    k = config.resolved_k

    digests = {
        "task_description": _sha256_text(config.task_description),
        "corpus:test": _sha256_file(config.corpus["test"]),
    }

    index: HnswIndex | None = None
    test_vectors: dict = {}
    train_pool: list[tuple[str, InstructRecord]] = []
    if config.strategy == "knn":
        path = _index_path(config)
        if not path.exists():
            raise ConfigError(f"strategy 'knn' needs a built index; run the index command first ({path})")
        index = HnswIndex.load(path)
        test_vectors = dict(
            load_embeddings(
                config.embeddings["test"], expected_ids=[s.sentence_id for s in test_sentences]
            )
        )
        digests["corpus:train"] = _sha256_file(config.corpus["train"])
        digests["embeddings:train"] = _sha256_file(config.embeddings["train"])
        digests["embeddings:test"] = _sha256_file(config.embeddings["test"])
        digests["index"] = index.graph_checksum()
    elif config.strategy == "random":
        train = _demo_space(config, load_split(config, "train"))
        train_pool = [
            (s.sentence_id, sentence_to_record(s, config.task_description)) for s in train
        ]
        digests["corpus:train"] = _sha256_file(config.corpus["train"])

    def select_demonstrations(sentence: LabeledSentence) -> list[tuple[str, InstructRecord]]:
        if config.strategy == "knn" and k > 0:
            entries = index.query(
                test_vectors[sentence.sentence_id], k, exclude_id=sentence.sentence_id
            )
            return [(e.sentence_id, e.record) for e in entries]
        if config.strategy == "random" and k > 0:
            picked = random_select(train_pool, k, seed=_sentence_seed(config.seed, sentence.sentence_id))
            return list(picked)
        return []

    def run_sentence(sentence: LabeledSentence) -> tuple[dict, dict]:
        demos = select_demonstrations(sentence)
        prompt = assemble_prompt(
            PromptSpec(
                task_description=config.task_description,
                demonstrations=tuple(record for _, record in demos),
                input_text=sentence.text,
            ),
            max_chars=config.prompt_max_chars,
        )
        req = GenerationRequest(
            prompt=prompt,
            model=config.gateway.model,
            temperature=config.gateway.temperature,
            max_tokens=config.gateway.max_tokens,
            seed=config.gateway.seed,
        )
        resp = gateway.cached_complete(req)
        if resp.ok:
            pred = align_to_bio(parse_extractions(resp.text, scheme), sentence)
        else:
            pred = _all_outside(sentence)
        row = _prediction_row(sentence, pred, resp.finish_reason)
        record = {
            "sentence_id": sentence.sentence_id,
            "demonstrations": [sid for sid, _ in demos],
            "cache_key": cache_key(req),
            "parse_warnings": pred.parse_warnings,
            "finish_reason": resp.finish_reason,
        }
        return row, record

    workers = max(1, config.gateway.max_in_flight)
    if workers == 1:
        outcomes = [run_sentence(s) for s in test_sentences]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_sentence, test_sentences))

    predictions_path = out_dir / "predictions.jsonl"
    with open(predictions_path, "w", encoding="utf-8") as fh:
        for row, _ in outcomes:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")

    manifest = RunManifest(
        config=config.to_dict(),
        digests=digests,
        sentences=[record for _, record in outcomes],
        outputs={"predictions": str(predictions_path)},
    )
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)

    error_rows = sum(1 for row, _ in outcomes if row["finish_reason"] == FINISH_ERROR)
    (out_dir / "stats.json").write_text(
        json.dumps(
            {"gateway": gateway.stats, "error_rows": error_rows}, sort_keys=True, indent=1
        )
        + "\n",
        encoding="utf-8",
    )
    return ExtractResult(
        predictions_path=predictions_path,
        manifest_path=manifest_path,
        error_rows=error_rows,
        gateway_stats=dict(gateway.stats),
    )


def read_predictions(path: str | Path) -> dict[str, dict]:
    rows: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rows[row["sentence_id"]] = row
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return rows


def cmd_eval(
    config: ExperimentConfig,
    predictions_path: str | Path,
    *,
    kind_sensitive: bool = False,
) -> MetricsReport:
    """Score a predictions file against the coarse-mapped gold test split."""
    scheme = LabelScheme.pico()
    gold = [map_fine_to_coarse(s, scheme) for s in load_split(config, "test")]
    rows = read_predictions(predictions_path)

    gold_ids = {s.sentence_id for s in gold}
    unknown = sorted(set(rows) - gold_ids)
    if unknown:
        raise DataError(f"predictions contain ids not in the gold split: {unknown}")

    totals: dict[str, ClassCounts] = {label: ClassCounts(label) for label in scheme.coarse}
    warning_total = 0
    missing = 0
    for sentence in gold:
        row = rows.get(sentence.sentence_id)
        if row is None:
            missing += 1
            pred = _all_outside(sentence)
        else:
            try:
                tags = tuple(BioTag.from_string(t) for t in row["tags"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{sentence.sentence_id}: bad prediction row: {exc}") from None
            pred = AlignedPrediction(
                sentence_id=sentence.sentence_id,
                tags=tags,
                unmatched=(),
                parse_warnings=int(row.get("parse_warnings", 0)),
            )
            warning_total += pred.parse_warnings
        merge_counts(totals, count_tokens(sentence, pred, scheme, kind_sensitive=kind_sensitive))

    report = macro_metrics(totals, sentence_count=len(gold), warning_total=warning_total)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "per_class": report.per_class,
        "macro": report.macro,
        "counts": report.counts,
        "sentence_count": report.sentence_count,
        "warning_total": report.warning_total,
        "missing_predictions": missing,
    }
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    (out_dir / "report.txt").write_text(format_report(report) + "\n", encoding="utf-8")
    return report


def cmd_ablate(
    config: ExperimentConfig,
    k_values: Sequence[int],
    strategies: Sequence[str],
    *,
    backend=None,
) -> list[dict]:
    """One extraction+evaluation per (strategy, k); all runs share one cache."""
    if not k_values:
        raise ConfigError("ablate requires at least one k value")
    bad = [s for s in strategies if s not in ("knn", "random")]
    if bad:
        raise ConfigError(f"ablate strategies must be knn or random, got {bad}")

    parent = Path(config.output_dir)
    cache = _cache_dir(config)
    index_path = _index_path(config)
    rows = []
    for strategy in strategies:
        for k in k_values:
            sub = replace(
                config,
                strategy=strategy,
                k=k,
                output_dir=str(parent / f"ablate-{strategy}-k{k}"),
                index_path=str(index_path),
                gateway=replace(config.gateway, cache_dir=str(cache)),
            )
            sub.validate()
            result = cmd_extract(sub, backend=backend)
            report = cmd_eval(sub, result.predictions_path)
            rows.append(
                {
                    "strategy": strategy,
                    "k": k,
                    "macro_f1": report.macro["f1"],
                    "error_rows": result.error_rows,
                }
            )
    parent.mkdir(parents=True, exist_ok=True)
    table = "strategy\tk\tmacro_f1\n" + "".join(
        f"{r['strategy']}\t{r['k']}\t{r['macro_f1']:.6f}\n" for r in rows
    )
    (parent / "ablation.tsv").write_text(table, encoding="utf-8")
    return rows
