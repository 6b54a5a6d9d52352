"""The trained checkpoint must be reachable through the extraction toolkit's
own gateway: same wire contract, no adapters on either side."""

import pytest

picoframe_llmgateway = pytest.importorskip("picoframe.llmgateway")

from loratrain.serve import AdapterServer
from loratrain.train import TrainConfig, train


def test_gateway_talks_to_served_checkpoint(dataset_path, tmp_path):
    train(
        dataset_path,
        TrainConfig(learning_rate=0.05, alpha=32.0, epochs=5, max_steps=20, seed=0),
        tmp_path / "ckpt",
    )
    with AdapterServer(tmp_path / "ckpt") as server:
        backend = picoframe_llmgateway.HttpChatBackend(
            server.base_url, retries=2, backoff_s=0.0, timeout_s=10
        )
        gateway = picoframe_llmgateway.Gateway(backend, cache_dir=tmp_path / "cache")
        req = picoframe_llmgateway.GenerationRequest(
            prompt="ctx0 ent0 tail", model="adapter", max_tokens=16
        )
        first = gateway.cached_complete(req)
        assert first.ok
        # warm cache: the second call never reaches the server
        second = gateway.cached_complete(req)
        assert second.text == first.text
        assert gateway.stats["backend_calls"] == 1
