"""Shared fixtures: synthetic corpora, embedding files, and test backends."""

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from picoframe.corpus import LabelScheme, parse_conll
from picoframe.demoindex import save_embeddings
from picoframe.llmgateway import FINISH_STOP, GenerationResponse, MockOracleBackend

SCHEME = LabelScheme.pico()
COARSE = list(SCHEME.coarse)


def synthetic_conll(n_sentences: int, seed: int, *, entity_rate: float = 0.6) -> str:
    """Audit-clean corpus text: every token in a sentence is distinct, so every
    gold surface occurs exactly once and alignment is provably lossless."""
    rng = random.Random(seed)
    blocks = []
    for i in range(n_sentences):
        length = rng.randint(3, 10)
        words = [f"w{seed}x{i}x{j}" for j in range(length)]
        tags = ["O"] * length
        pos = 0
        while pos < length:
            if rng.random() < entity_rate * 0.5:
                end = min(length - 1, pos + rng.randint(0, 2))
                label = rng.choice(COARSE)
                tags[pos] = f"B-{label}"
                for j in range(pos + 1, end + 1):
                    tags[j] = f"I-{label}"
                pos = end + 2
            else:
                pos += 1
        blocks.append("\n".join(f"{w}\t{t}" for w, t in zip(words, tags)))
    return "\n\n".join(blocks) + "\n"


def class_clustered_conll(n_sentences: int, seed: int) -> str:
    """One entity per sentence, label fixed by sentence position (i mod 3); the
    entity token carries an ``ent`` prefix so a demonstration-following test
    backend can find it."""
    del seed  # layout is positional by design
    blocks = []
    for i in range(n_sentences):
        label = COARSE[i % len(COARSE)]
        lines = [f"ctx{i}a\tO", f"ctx{i}b\tO", f"ent{i}\tB-{label}"]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def clustered_embeddings(sentences, dim: int = 8, seed: int = 0, *, noise: float = 0.05):
    """One tight cluster per coarse class; class chosen by sentence position."""
    rng = np.random.default_rng(seed)
    centers = {label: np.eye(dim)[i % dim] * 4.0 for i, label in enumerate(COARSE)}
    pairs = []
    for i, s in enumerate(sentences):
        label = COARSE[i % len(COARSE)]
        pairs.append((s.sentence_id, centers[label] + noise * rng.normal(size=dim)))
    return pairs


def random_embeddings(sentences, dim: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [(s.sentence_id, rng.normal(size=dim)) for s in sentences]


def write_experiment_inputs(
    tmp_path,
    *,
    n_train: int = 30,
    n_test: int = 12,
    seed: int = 0,
    dim: int = 8,
    embeddings: str = "random",
    corpus: str = "synthetic",
):
    """Lay out corpus and embedding files plus a base config dict."""
    make_corpus = class_clustered_conll if corpus == "clustered" else synthetic_conll
    train_text = make_corpus(n_train, seed=seed)
    test_text = make_corpus(n_test, seed=seed + 1)
    train_path = tmp_path / "train.conll"
    test_path = tmp_path / "test.conll"
    train_path.write_text(train_text)
    test_path.write_text(test_text)

    train_sentences = list(parse_conll(train_text, SCHEME, split="train").sentences)
    test_sentences = list(parse_conll(test_text, SCHEME, split="test").sentences)

    maker = clustered_embeddings if embeddings == "clustered" else random_embeddings
    train_vecs = maker(train_sentences, dim=dim, seed=seed + 2)
    test_vecs = maker(test_sentences, dim=dim, seed=seed + 3)
    train_emb = tmp_path / "train.emb"
    test_emb = tmp_path / "test.emb"
    save_embeddings(train_emb, train_vecs)
    save_embeddings(test_emb, test_vecs)

    config = {
        "corpus": {"train": str(train_path), "test": str(test_path)},
        "embeddings": {"train": str(train_emb), "test": str(test_emb)},
        "output_dir": str(tmp_path / "run"),
        "strategy": "knn",
        "k": 3,
        "hnsw": {"m": 4, "ef_construction": 16, "ef_search": 32, "seed": 0},
        "gateway": {"backend": "mock", "model": "mock", "max_in_flight": 1},
        "seed": 0,
    }
    return config, train_sentences, test_sentences


class DemoMimicBackend:
    """Labels the sentence's marker token with the majority label seen in the
    prompt's demonstrations; answers the sentinel when no demonstrations help.

    Sensitive to demonstration quality by construction, which makes retrieval
    strategies distinguishable in end-to-end tests (the oracle backend is not).
    """

    def __init__(self, marker_prefix: str = "ent"):
        self.marker_prefix = marker_prefix

    def generate(self, req):
        lines = req.prompt.splitlines()
        input_lines = [ln for ln in lines if ln.startswith("input: ")]
        votes = {}
        for ln in lines:
            if ln.startswith('"') and " is " in ln:
                label = ln.rsplit(" is ", 1)[1].strip()
                votes[label] = votes.get(label, 0) + 1
        if not input_lines or not votes:
            return GenerationResponse(text="no entities", finish_reason=FINISH_STOP)
        text = input_lines[-1][len("input: ") :]
        marked = [w for w in text.split() if w.startswith(self.marker_prefix)]
        if not marked:
            return GenerationResponse(text="no entities", finish_reason=FINISH_STOP)
        winner = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        out = "\n".join(f'"{w}" is {winner}' for w in marked)
        return GenerationResponse(text=out, finish_reason=FINISH_STOP)


class _OracleHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        from picoframe.llmgateway import GenerationRequest

        req = GenerationRequest(
            prompt=body["messages"][0]["content"],
            model=body.get("model", "oracle"),
            temperature=body.get("temperature", 0.0),
            max_tokens=body.get("max_tokens", 512),
        )
        resp = self.server.backend.generate(req)
        payload = {
            "choices": [
                {"message": {"content": resp.text}, "finish_reason": resp.finish_reason}
            ]
        }
        data = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep test output quiet
        pass


class OracleHttpServer:
    """A live localhost chat-completions endpoint backed by the mock oracle."""

    def __init__(self, sentences):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _OracleHandler)
        self._server.backend = MockOracleBackend(sentences)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
