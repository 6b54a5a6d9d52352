import json

import pytest

from loratrain.data import build_vocab, collate, encode_record, load_records, Record
from loratrain.model import BOS, EOS, SEP
from loratrain.serve import AdapterServer
from loratrain.train import TrainConfig, load_checkpoint, train

OVERFIT = dict(learning_rate=0.05, alpha=32.0, epochs=5, max_steps=20, seed=0)


class TestData:
    def test_load_skips_malformed_lines(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(
            '{"instruction": "t", "input": "a", "output": "no entities"}\n'
            "{broken json\n"
            '{"instruction": "t", "input": "b"}\n'
            '{"instruction": "t", "input": "c", "output": ""}\n'
        )
        loaded = load_records(path)
        assert len(loaded.records) == 1
        assert loaded.skipped == 3

    def test_empty_dataset_is_error(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="no usable records"):
            load_records(path)

    def test_all_malformed_is_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("nope\nnope\n")
        with pytest.raises(ValueError, match="2 skipped"):
            load_records(path)

    def test_loss_mask_covers_exactly_the_output_span(self):
        record = Record(instruction="do the task", input="alpha beta", output="gamma delta")
        vocab = build_vocab([record])
        ids, sep_index = encode_record(record, vocab, max_len=64)
        assert vocab.itos[ids[0]] == BOS
        assert vocab.itos[ids[sep_index]] == SEP
        assert vocab.itos[ids[-1]] == EOS

        inputs, targets, mask = collate([(ids, sep_index)], pad_id=0)
        # masked target positions decode to exactly the output words plus <eos>
        supervised = [vocab.itos[int(t)] for t, m in zip(targets[0], mask[0]) if m]
        assert supervised == ["gamma", "delta", EOS]
        # nothing before the separator is supervised
        assert not mask[0, : sep_index - 1].any()
        assert inputs.shape == targets.shape == (1, len(ids) - 1)


class TestTraining:
    def test_overfit_halves_loss_in_twenty_steps(self, dataset_path, tmp_path):
        config = TrainConfig(**OVERFIT)
        result = train(dataset_path, config, tmp_path / "ckpt")
        assert len(result.losses) == 20
        assert result.losses[-1] <= 0.5 * result.losses[0]
        assert result.skipped_records == 0

    def test_loss_curve_persisted(self, dataset_path, tmp_path):
        result = train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "ckpt")
        stored = json.loads((tmp_path / "ckpt" / "losses.json").read_text())
        assert stored == result.losses

    def test_deterministic_per_seed(self, dataset_path, tmp_path):
        a = train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "a")
        b = train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "b")
        assert a.losses == b.losses

    def test_only_adapters_trained(self, dataset_path, tmp_path):
        result = train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "ckpt")
        assert 0 < result.trainable_parameters < result.total_parameters
        model, adapters, _, config, _, _ = load_checkpoint(tmp_path / "ckpt")
        expected = sum(
            config.r * sum(ad.base.weight.shape) for ad in adapters.values()
        )
        assert result.trainable_parameters == expected

    def test_resume_matches_uninterrupted_run(self, dataset_path, tmp_path):
        full = train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "full")

        half_config = TrainConfig(**{**OVERFIT, "max_steps": 10})
        train(dataset_path, half_config, tmp_path / "half")
        resumed = train(
            dataset_path,
            TrainConfig(**OVERFIT),
            tmp_path / "resumed",
            resume_from=tmp_path / "half",
        )
        assert len(resumed.losses) == len(full.losses)
        assert resumed.losses[:10] == full.losses[:10]
        for a, b in zip(resumed.losses[10:], full.losses[10:]):
            assert a == pytest.approx(b, abs=1e-5)

    def test_skipped_records_counted_but_training_proceeds(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        rows = [
            '{"instruction": "t", "input": "a b", "output": "\\"a\\" is Outcomes"}',
            "{broken",
        ] * 8
        path.write_text("\n".join(rows) + "\n")
        result = train(path, TrainConfig(**{**OVERFIT, "max_steps": 2}), tmp_path / "ckpt")
        assert result.skipped_records == 8
        assert len(result.losses) == 2


class TestServe:
    def test_checkpoint_serves_chat_completions(self, dataset_path, tmp_path):
        import requests

        train(dataset_path, TrainConfig(**OVERFIT), tmp_path / "ckpt")
        with AdapterServer(tmp_path / "ckpt") as server:
            resp = requests.post(
                f"{server.base_url}/chat/completions",
                json={
                    "model": "adapter",
                    "messages": [{"role": "user", "content": "ctx0 ent0 tail"}],
                    "max_tokens": 16,
                },
                timeout=10,
            )
        assert resp.status_code == 200
        body = resp.json()
        choice = body["choices"][0]
        assert choice["finish_reason"] in ("stop", "length")
        assert isinstance(choice["message"]["content"], str)

    def test_malformed_request_is_400(self, dataset_path, tmp_path):
        import requests

        train(dataset_path, TrainConfig(**{**OVERFIT, "max_steps": 1}), tmp_path / "ckpt")
        with AdapterServer(tmp_path / "ckpt") as server:
            resp = requests.post(
                f"{server.base_url}/chat/completions", json={"oops": True}, timeout=10
            )
        assert resp.status_code == 400
