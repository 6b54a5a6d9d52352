"""Demonstration selection: cosine kNN over a from-scratch HNSW graph.

Embeddings are produced externally and loaded from a plain text format (or
fetched once through :class:`EmbeddingClient` and cached to that format).
The index is a hierarchical navigable-small-world graph built here from
first principles; :func:`brute_force_knn` is the exact oracle it is tested
against and stays independent of the graph code. A seeded random selector
provides the non-semantic baseline.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import os
import pickle
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from .corpus import LabeledSentence, detokenize
from .errors import DataError
from .instructgen import InstructRecord


def as_embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and return a finite 1-D float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains non-finite values")
    return vec


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("zero vector has no direction; cosine similarity undefined")
    return vec / norm


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    va, vb = as_embedding(a), as_embedding(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    sim = float(np.dot(_unit(va), _unit(vb)))
    return max(-1.0, min(1.0, sim))


@dataclass(frozen=True, eq=False)
class DemoEntry:
    sentence_id: str
    embedding: np.ndarray
    record: InstructRecord

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DemoEntry)
            and self.sentence_id == other.sentence_id
            and self.record == other.record
            and np.array_equal(self.embedding, other.embedding)
        )

    def __hash__(self) -> int:
        return hash((self.sentence_id, self.record))


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 64
    level_lambda: float | None = None  # defaults to 1 / ln(m)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.ef_construction < self.m:
            raise ValueError(f"ef_construction must be >= m, got {self.ef_construction}")
        if self.ef_search < 1:
            raise ValueError(f"ef_search must be >= 1, got {self.ef_search}")

    @property
    def effective_level_lambda(self) -> float:
        return self.level_lambda if self.level_lambda is not None else 1.0 / math.log(self.m)


class HnswIndex:
    """Navigable-small-world graph over unit vectors, searched by cosine similarity.

    Layer assignment, insertion order, and all tie-breaks are deterministic,
    so a fixed seed reproduces the identical graph and identical query
    results. Per node the degree is bounded by ``m`` per layer and ``2 m``
    on layer 0.
    """

    def __init__(self, params: HnswParams, dim: int):
        self.params = params
        self.dim = dim
        self.entries: list[DemoEntry] = []
        self._by_id: dict[str, int] = {}
        self._unit_vectors: list[np.ndarray] = []
        self._links: list[list[list[int]]] = []  # node -> layer -> neighbor ids
        self._entry_node: int | None = None
        self._max_level = -1
        self._rng = random.Random(params.seed)

    def __len__(self) -> int:
        return len(self.entries)

    # -- construction ------------------------------------------------------

    def add(self, entry: DemoEntry) -> None:
        if entry.sentence_id in self._by_id:
            raise ValueError(f"duplicate sentence_id {entry.sentence_id!r}")
        vec = as_embedding(entry.embedding)
        if vec.shape[0] != self.dim:
            raise ValueError(
                f"{entry.sentence_id}: dimension {vec.shape[0]} does not match index dim {self.dim}"
            )
        node = len(self.entries)
        self.entries.append(entry)
        self._by_id[entry.sentence_id] = node
        self._unit_vectors.append(_unit(vec))
        self._insert(node)

    def _draw_level(self) -> int:
        u = max(self._rng.random(), 1e-300)
        return int(-math.log(u) * self.params.effective_level_lambda)

    def _cap(self, layer: int) -> int:
        return 2 * self.params.m if layer == 0 else self.params.m

    def _sim(self, node: int, q: np.ndarray) -> float:
        return float(np.dot(self._unit_vectors[node], q))

    def _insert(self, node: int) -> None:
        level = self._draw_level()
        self._links.append([[] for _ in range(level + 1)])
        if self._entry_node is None:
            self._entry_node, self._max_level = node, level
            return
        q = self._unit_vectors[node]
        ep = self._entry_node
        for layer in range(self._max_level, level, -1):
            ep = self._greedy_closest(q, ep, layer)
        eps = [ep]
        for layer in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(q, eps, self.params.ef_construction, layer)
            neighbors = self._select_neighbors(q, candidates, self.params.m)
            self._links[node][layer] = [n for _, n in neighbors]
            for _, nb in neighbors:
                links = self._links[nb][layer]
                links.append(node)
                cap = self._cap(layer)
                if len(links) > cap:
                    base = self._unit_vectors[nb]
                    ranked = sorted(
                        ((self._sim(j, base), j) for j in links),
                        key=lambda t: (-t[0], t[1]),
                    )
                    self._links[nb][layer] = [
                        n for _, n in self._select_neighbors(base, ranked, cap)
                    ]
            eps = [n for _, n in candidates]
        if level > self._max_level:
            self._max_level = level
            self._entry_node = node

    def _greedy_closest(self, q: np.ndarray, start: int, layer: int) -> int:
        cur, cur_sim = start, self._sim(start, q)
        improved = True
        while improved:
            improved = False
            for nb in self._links[cur][layer]:
                s = self._sim(nb, q)
                if s > cur_sim:
                    cur, cur_sim = nb, s
                    improved = True
        return cur

    def _search_layer(
        self, q: np.ndarray, eps: Sequence[int], ef: int, layer: int
    ) -> list[tuple[float, int]]:
        """Best-first beam search; returns up to ef (similarity, node) pairs, best first."""
        visited = set(eps)
        results = [(self._sim(e, q), e) for e in eps]
        heapq.heapify(results)  # min-heap: worst kept result on top
        candidates = [(-s, n) for s, n in results]
        heapq.heapify(candidates)
        while candidates:
            neg_sim, node = heapq.heappop(candidates)
            if len(results) >= ef and -neg_sim < results[0][0]:
                break
            for nb in self._links[node][layer]:
                if nb in visited:
                    continue
                visited.add(nb)
                s = self._sim(nb, q)
                if len(results) < ef or s > results[0][0]:
                    heapq.heappush(results, (s, nb))
                    heapq.heappush(candidates, (-s, nb))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(results, key=lambda t: (-t[0], t[1]))

    def _select_neighbors(
        self, base: np.ndarray, candidates: Sequence[tuple[float, int]], m: int
    ) -> list[tuple[float, int]]:
        """Diversity heuristic: keep a candidate only if it is closer to the base
        than to any neighbor kept so far; pruned candidates backfill free slots."""
        selected: list[tuple[float, int]] = []
        pruned: list[tuple[float, int]] = []
        for s, node in candidates:
            if len(selected) >= m:
                break
            vec = self._unit_vectors[node]
            if all(s > float(np.dot(vec, self._unit_vectors[kept])) for _, kept in selected):
                selected.append((s, node))
            else:
                pruned.append((s, node))
        for item in pruned:
            if len(selected) >= m:
                break
            selected.append(item)
        return selected

    # -- queries -----------------------------------------------------------

    def query(
        self,
        query_vec: Sequence[float] | np.ndarray,
        k: int,
        *,
        ef_search: int | None = None,
        exclude_id: str | None = None,
    ) -> list[DemoEntry]:
        if not self.entries:
            return []
        vec = as_embedding(query_vec)
        if vec.shape[0] != self.dim:
            raise ValueError(f"query dimension {vec.shape[0]} does not match index dim {self.dim}")
        if k <= 0:
            return []
        q = _unit(vec)
        excluded = self._by_id.get(exclude_id) if exclude_id is not None else None
        ef = max(ef_search if ef_search is not None else self.params.ef_search, k + (excluded is not None))
        ep = self._entry_node
        for layer in range(self._max_level, 0, -1):
            ep = self._greedy_closest(q, ep, layer)
        found = self._search_layer(q, [ep], ef, 0)
        ranked = sorted(
            ((s, self.entries[n]) for s, n in found if n != excluded),
            key=lambda t: (-t[0], t[1].sentence_id),
        )
        return [entry for _, entry in ranked[:k]]

    def graph_checksum(self) -> str:
        payload = json.dumps(
            {"entry": self._entry_node, "links": self._links}, sort_keys=True
        ).encode()
        return hashlib.sha256(payload).hexdigest()

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            pickle.dump(self, fh)

    @classmethod
    def load(cls, path: str | Path) -> "HnswIndex":
        with open(path, "rb") as fh:
            index = pickle.load(fh)
        if not isinstance(index, cls):
            raise DataError(f"{path} does not contain a saved index")
        return index


def build_index(entries: Iterable[DemoEntry], params: HnswParams) -> HnswIndex:
    """Build a deterministic HNSW index over the entries (insertion order matters)."""
    entries = list(entries)
    if not entries:
        return HnswIndex(params, dim=0)
    dim = as_embedding(entries[0].embedding).shape[0]
    index = HnswIndex(params, dim=dim)
    for entry in entries:
        index.add(entry)
    return index


def query_knn(
    index: HnswIndex,
    query: Sequence[float] | np.ndarray,
    k: int,
    *,
    exclude_id: str | None = None,
) -> list[DemoEntry]:
    return index.query(query, k, exclude_id=exclude_id)


def brute_force_knn(
    entries: Sequence[DemoEntry],
    query: Sequence[float] | np.ndarray,
    k: int,
    *,
    exclude_id: str | None = None,
) -> list[DemoEntry]:
    """Exact top-k by cosine similarity; the oracle the graph index is held to."""
    if k <= 0 or not entries:
        return []
    q = _unit(as_embedding(query))
    matrix = np.stack([_unit(as_embedding(e.embedding)) for e in entries])
    sims = matrix @ q
    ranked = sorted(
        (
            (float(s), e)
            for s, e in zip(sims, entries)
            if exclude_id is None or e.sentence_id != exclude_id
        ),
        key=lambda t: (-t[0], t[1].sentence_id),
    )
    return [e for _, e in ranked[:k]]


def random_select(
    entries: Sequence[DemoEntry], k: int, seed: int | str
) -> list[DemoEntry]:
    """Uniform sample without replacement, deterministic per seed.

    ``k >= len(entries)`` returns all entries in shuffled order.
    """
    if k <= 0:
        return []
    rng = random.Random(seed)
    return rng.sample(list(entries), min(k, len(entries)))


# -- embedding file format ---------------------------------------------------


def load_embeddings(
    path: str | Path, expected_ids: Sequence[str] | None = None
) -> list[tuple[str, np.ndarray]]:
    """Read the text vector file: header ``dim=<d>``, then ``<id> <f1> <f2> ...``.

    When ``expected_ids`` is given the file must contain exactly those ids;
    discrepancies are listed in the error.
    """
    pairs: list[tuple[str, np.ndarray]] = []
    dim: int | None = None
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if dim is None:
                if not line.startswith("dim="):
                    raise DataError(f"{path}:1: expected header 'dim=<d>', got {line!r}")
                try:
                    dim = int(line[4:])
                except ValueError:
                    raise DataError(f"{path}:1: bad dimension in header {line!r}") from None
                continue
            fields = line.split()
            sid, values = fields[0], fields[1:]
            if len(values) != dim:
                raise DataError(
                    f"{path}:{lineno}: {sid!r} has {len(values)} values, expected {dim}"
                )
            if sid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            try:
                vec = as_embedding([float(v) for v in values])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {sid!r}: {exc}") from None
            pairs.append((sid, vec))
    if expected_ids is not None:
        expected = set(expected_ids)
        missing = sorted(expected - seen)
        extra = sorted(seen - expected)
        if missing or extra:
            raise DataError(
                f"{path}: embeddings do not align with the corpus "
                f"(missing: {missing or 'none'}; extra: {extra or 'none'})"
            )
    return pairs


def save_embeddings(path: str | Path, pairs: Iterable[tuple[str, np.ndarray]]) -> int:
    pairs = list(pairs)
    with open(path, "w", encoding="utf-8") as fh:
        if pairs:
            dim = as_embedding(pairs[0][1]).shape[0]
            fh.write(f"dim={dim}\n")
            for sid, vec in pairs:
                values = " ".join(repr(float(v)) for v in as_embedding(vec))
                fh.write(f"{sid} {values}\n")
    return len(pairs)


class EmbeddingClient:
    """Fetch sentence embeddings from an embeddings HTTP endpoint, caching to file.

    The wire format is the common one: POST ``{base_url}/embeddings`` with
    ``{"model": ..., "input": [texts]}`` and read ``data[i].embedding``.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "OPENAI_API_KEY",
        timeout_s: float = 30.0,
        batch_size: int = 64,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.batch_size = batch_size
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            resp = self._session.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": batch},
                headers=self._headers(),
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            data = sorted(resp.json()["data"], key=lambda row: row["index"])
            if len(data) != len(batch):
                raise DataError(
                    f"embedding endpoint returned {len(data)} vectors for {len(batch)} inputs"
                )
            vectors.extend(as_embedding(row["embedding"]) for row in data)
        return vectors

    def embed_sentences(
        self, sentences: Sequence[LabeledSentence], cache_path: str | Path
    ) -> list[tuple[str, np.ndarray]]:
        """Return (id, vector) pairs, fetching once and replaying from cache after."""
        cache_path = Path(cache_path)
        ids = [s.sentence_id for s in sentences]
        if cache_path.exists():
            return load_embeddings(cache_path, expected_ids=ids)
        vectors = self.embed_texts([detokenize(s.tokens) for s in sentences])
        pairs = list(zip(ids, vectors))
        save_embeddings(cache_path, pairs)
        return pairs
