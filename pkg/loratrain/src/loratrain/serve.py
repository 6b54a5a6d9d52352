"""Serve a trained checkpoint behind the chat-completions wire contract.

POST ``/v1/chat/completions`` (or any path ending in ``/chat/completions``)
with ``{"model": ..., "messages": [{"role": "user", "content": ...}]}``
returns ``{"choices": [{"message": {"content": ...}, "finish_reason": ...}]}``,
which is exactly what the extraction toolkit's gateway speaks, so a trained
adapter slots in as a live endpoint without code changes on either side.
"""

from __future__ import annotations

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .data import prompt_ids
from .model import EOS, TinyCausalLM, Vocab
from .train import load_checkpoint


class CheckpointRunner:
    """Greedy decoding over a restored adapter checkpoint."""

    def __init__(self, checkpoint_dir: str | Path):
        model, _, vocab, config, _, _ = load_checkpoint(checkpoint_dir)
        model.eval()
        self.model: TinyCausalLM = model
        self.vocab: Vocab = vocab
        self.max_len = config.max_len

    def generate(self, prompt: str, *, max_new_tokens: int = 64) -> tuple[str, str]:
        # the chat prompt arrives as free text; condition on it verbatim
        ids = prompt_ids("", prompt, self.vocab)
        ids = ids[-(self.max_len - max_new_tokens) :]
        out = self.model.greedy_generate(
            ids, max_new_tokens=max_new_tokens, eos_id=self.vocab.stoi[EOS]
        )
        finished = bool(out) and out[-1] == self.vocab.stoi[EOS]
        return self.vocab.decode(out), "stop" if finished else "length"


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        if not self.path.rstrip("/").endswith("chat/completions"):
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length))
            prompt = body["messages"][-1]["content"]
            max_new = int(body.get("max_tokens", 64))
        except (KeyError, TypeError, ValueError, IndexError):
            self.send_error(400, "malformed chat-completions request")
            return
        text, finish = self.server.runner.generate(prompt, max_new_tokens=max_new)
        payload = json.dumps(
            {
                "model": body.get("model", "loratrain"),
                "choices": [{"message": {"content": text}, "finish_reason": finish}],
            }
        ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class AdapterServer:
    def __init__(self, checkpoint_dir: str | Path, host: str = "127.0.0.1", port: int = 0):
        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._server.runner = CheckpointRunner(checkpoint_dir)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1"

    def start(self) -> "AdapterServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "AdapterServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Serve an adapter checkpoint over chat-completions")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    server = AdapterServer(args.checkpoint, host=args.host, port=args.port)
    print(f"serving {args.checkpoint} at {server.base_url}/chat/completions")
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
