"""Adapter fine-tuning over the instruction dataset, with resumable checkpoints.

Only the low-rank matrices train; the loss is next-token cross-entropy
restricted to the output span. Checkpoints carry the adapter weights,
optimizer and RNG state, and the loss curve, so an interrupted run resumes
on the same trajectory.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, replace
from pathlib import Path

import torch
from torch.nn import functional as F

from .adapters import AdapterConfig, LoraLinear, attach_adapters, trainable_parameter_counts
from .data import build_vocab, collate, encode_record, load_records
from .model import ModelConfig, TinyCausalLM, Vocab, build_model


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 8
    epochs: int = 1
    max_steps: int | None = None
    r: int = 8
    alpha: float = 16.0
    target_modules: tuple[str, ...] = ("q_proj", "v_proj")
    seed: int = 0
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_len: int = 256

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0 or self.r <= 0:
            raise ValueError("learning_rate, batch_size, epochs, and r must be positive")


@dataclass
class TrainResult:
    checkpoint_dir: Path
    losses: list[float]
    skipped_records: int
    trainable_parameters: int
    total_parameters: int


def _batches(n: int, batch_size: int, epochs: int, seed: int) -> list[list[int]]:
    order: list[list[int]] = []
    generator = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        perm = torch.randperm(n, generator=generator).tolist()
        order.extend(perm[i : i + batch_size] for i in range(0, n, batch_size))
    return order


def _masked_loss(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    flat = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none"
    )
    flat = flat.reshape(targets.shape)
    return (flat * mask).sum() / mask.sum().clamp(min=1)


def save_checkpoint(
    path: str | Path,
    *,
    model: TinyCausalLM,
    adapters: dict[str, LoraLinear],
    vocab: Vocab,
    train_config: TrainConfig,
    optimizer: torch.optim.Optimizer,
    step: int,
    losses: list[float],
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    adapter_state = {
        name: {"lora_a": ad.lora_a.detach().clone(), "lora_b": ad.lora_b.detach().clone()}
        for name, ad in adapters.items()
    }
    torch.save(
        {
            "model_config": model.config.to_dict(),
            "model_seed": train_config.seed,
            "vocab": vocab.to_dict(),
            "train_config": vars(train_config) | {"target_modules": list(train_config.target_modules)},
            "adapter_state": adapter_state,
            "optimizer_state": optimizer.state_dict(),
            "rng_state": torch.get_rng_state(),
            "step": step,
        },
        path / "adapter.pt",
    )
    (path / "losses.json").write_text(json.dumps(losses), encoding="utf-8")


def load_checkpoint(path: str | Path):
    """Rebuild the adapted model, vocab, optimizer state, and loss curve."""
    path = Path(path)
    state = torch.load(path / "adapter.pt", weights_only=False)
    raw = dict(state["train_config"])
    raw["target_modules"] = tuple(raw["target_modules"])
    train_config = TrainConfig(**raw)
    model_config = ModelConfig(**state["model_config"])
    model = build_model(model_config, seed=state["model_seed"])
    adapters = attach_adapters(
        model,
        AdapterConfig(
            r=train_config.r, alpha=train_config.alpha, target_modules=train_config.target_modules
        ),
    )
    with torch.no_grad():
        for name, ad in adapters.items():
            ad.lora_a.copy_(state["adapter_state"][name]["lora_a"])
            ad.lora_b.copy_(state["adapter_state"][name]["lora_b"])
    vocab = Vocab.from_dict(state["vocab"])
    losses = json.loads((path / "losses.json").read_text(encoding="utf-8"))
    return model, adapters, vocab, train_config, state, losses


def train(
    dataset_path: str | Path,
    config: TrainConfig,
    checkpoint_dir: str | Path,
    *,
    resume_from: str | Path | None = None,
) -> TrainResult:
    loaded = load_records(dataset_path)

    if resume_from is not None:
        model, adapters, vocab, saved, state, losses = load_checkpoint(resume_from)
        # training extent may be raised on resume; everything else is pinned
        # by the checkpoint so the trajectory continues unchanged
        config = replace(saved, epochs=config.epochs, max_steps=config.max_steps)
        optimizer = torch.optim.AdamW(
            [p for p in model.parameters() if p.requires_grad], lr=config.learning_rate
        )
        optimizer.load_state_dict(state["optimizer_state"])
        torch.set_rng_state(state["rng_state"])
        start_step = state["step"]
    else:
        torch.manual_seed(config.seed)
        vocab = build_vocab(loaded.records)
        model = build_model(
            ModelConfig(
                vocab_size=len(vocab),
                d_model=config.d_model,
                n_heads=config.n_heads,
                n_layers=config.n_layers,
                max_len=config.max_len,
            ),
            seed=config.seed,
        )
        adapters = attach_adapters(
            model,
            AdapterConfig(r=config.r, alpha=config.alpha, target_modules=config.target_modules),
        )
        optimizer = torch.optim.AdamW(
            [p for p in model.parameters() if p.requires_grad], lr=config.learning_rate
        )
        losses = []
        start_step = 0

    encoded = [encode_record(r, vocab, max_len=config.max_len) for r in loaded.records]
    pad_id = 0
    schedule = _batches(len(encoded), config.batch_size, config.epochs, config.seed)
    if config.max_steps is not None:
        schedule = schedule[: config.max_steps]

    model.train()
    for step in range(start_step, len(schedule)):
        inputs, targets, mask = collate([encoded[i] for i in schedule[step]], pad_id)
        logits = model(inputs)
        loss = _masked_loss(logits, targets, mask)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))

    trainable, total = trainable_parameter_counts(model)
    save_checkpoint(
        checkpoint_dir,
        model=model,
        adapters=adapters,
        vocab=vocab,
        train_config=config,
        optimizer=optimizer,
        step=len(schedule),
        losses=losses,
    )
    return TrainResult(
        checkpoint_dir=Path(checkpoint_dir),
        losses=losses,
        skipped_records=loaded.skipped,
        trainable_parameters=trainable,
        total_parameters=total,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Fine-tune low-rank adapters on an instruction dataset")
    parser.add_argument("--dataset", required=True, help="line-delimited instruction/input/output records")
    parser.add_argument("--out", required=True, help="checkpoint directory")
    parser.add_argument("--resume-from", default=None)
    parser.add_argument("--learning-rate", type=float, default=3e-4)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--rank", type=int, default=8)
    parser.add_argument("--alpha", type=float, default=16.0)
    parser.add_argument("--targets", default="q_proj,v_proj")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    config = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        max_steps=args.max_steps,
        r=args.rank,
        alpha=args.alpha,
        target_modules=tuple(t for t in args.targets.split(",") if t),
        seed=args.seed,
    )
    result = train(args.dataset, config, args.out, resume_from=args.resume_from)
    ratio = result.trainable_parameters / result.total_parameters
    print(f"checkpoint: {result.checkpoint_dir}")
    print(
        f"steps: {len(result.losses)}  first loss: {result.losses[0]:.4f}  "
        f"last loss: {result.losses[-1]:.4f}"
    )
    print(
        f"trainable parameters: {result.trainable_parameters} / {result.total_parameters} "
        f"({100 * ratio:.2f}%)  skipped records: {result.skipped_records}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
