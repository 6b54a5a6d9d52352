"""
The full pipeline, end to end, without a GPU
============================================

Retrieval, prompt assembly, generation, parsing, alignment, and scoring of a
little synthetic corpus, driven through the same commands the CLI exposes.
The generation backend here is the deterministic mock oracle, which answers
every prompt with the gold serialization of its input sentence, so a
lossless pipeline must score a perfect 100 and a warmed cache must replay
the run without touching the backend at all.
"""

import json
import random
import tempfile
from pathlib import Path

import numpy as np

from picoframe import ExperimentConfig, cmd_convert, cmd_eval, cmd_extract, cmd_index
from picoframe.corpus import LabelScheme, parse_conll
from picoframe.demoindex import save_embeddings
from picoframe.evalkit import format_report

scheme = LabelScheme.pico()
COARSE = list(scheme.coarse)


def synthetic_corpus(n, seed):
    # every token distinct, so each gold surface occurs exactly once
    rng = random.Random(seed)
    blocks = []
    for i in range(n):
        words = [f"w{seed}x{i}x{j}" for j in range(rng.randint(3, 9))]
        tags = ["O"] * len(words)
        pos = 0
        while pos < len(words):
            if rng.random() < 0.3:
                end = min(len(words) - 1, pos + rng.randint(0, 2))
                label = rng.choice(COARSE)
                tags[pos] = f"B-{label}"
                for j in range(pos + 1, end + 1):
                    tags[j] = f"I-{label}"
                pos = end + 2
            else:
                pos += 1
        blocks.append("\n".join(f"{w}\t{t}" for w, t in zip(words, tags)))
    return "\n\n".join(blocks) + "\n"


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "train.conll").write_text(synthetic_corpus(40, seed=0))
    (tmp / "test.conll").write_text(synthetic_corpus(25, seed=1))

    # external embeddings, one vector per sentence id
    for split in ("train", "test"):
        sentences = parse_conll((tmp / f"{split}.conll").read_text(), scheme, split=split)
        rng = np.random.default_rng(hash(split) % 2**32)
        save_embeddings(
            tmp / f"{split}.emb",
            [(s.sentence_id, rng.normal(size=16)) for s in sentences],
        )

    config = ExperimentConfig.from_dict(
        {
            "corpus": {"train": str(tmp / "train.conll"), "test": str(tmp / "test.conll")},
            "embeddings": {"train": str(tmp / "train.emb"), "test": str(tmp / "test.emb")},
            "output_dir": str(tmp / "run"),
            "strategy": "knn",
            "k": 3,
            "hnsw": {"m": 8, "ef_construction": 32, "ef_search": 32, "seed": 0},
            "gateway": {"backend": "mock", "model": "mock-oracle"},
        }
    )

    stats = cmd_convert(config)
    print(f"convert: {stats['records']} records, span counts {stats['span_counts']}")

    cmd_index(config)
    result = cmd_extract(config)
    print(f"extract: {result.gateway_stats['backend_calls']} generations, "
          f"{result.error_rows} gateway errors")

    report = cmd_eval(config, result.predictions_path)
    print("\n" + format_report(report))

    # every input to the run is recorded for replay
    manifest = json.loads(result.manifest_path.read_text())
    one = manifest["sentences"][0]
    print(f"\nmanifest example: {one['sentence_id']} used demonstrations "
          f"{one['demonstrations']} (cache key {one['cache_key'][:12]}...)")

    # replay: byte-identical predictions, zero backend calls
    again = cmd_extract(config)
    assert again.predictions_path.read_bytes() == result.predictions_path.read_bytes()
    print(f"replay: byte-identical predictions, backend calls = "
          f"{again.gateway_stats['backend_calls']}")
