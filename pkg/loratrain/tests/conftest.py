import json
from pathlib import Path

import pytest


def synthetic_records(n: int = 50):
    """Instruction records in the toolkit's dataset format, learnable by rote."""
    labels = ["Outcomes", "Interventions", "Participants"]
    task = "extract the entities"
    rows = []
    for i in range(n):
        entity = f"ent{i % 7}"
        rows.append(
            {
                "instruction": task,
                "input": f"ctx{i % 5} {entity} tail",
                "output": f'"{entity}" is {labels[i % 3]}',
            }
        )
    return rows


@pytest.fixture
def dataset_path(tmp_path) -> Path:
    path = tmp_path / "instruct-train.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in synthetic_records(50)))
    return path
