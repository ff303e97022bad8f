"""Document vectors: native TFIDF + truncated SVD, remote API embeddings,
and a binary vector store for precomputed imports.

Vector store layout (little-endian): magic "EMB1", u16 model_id length +
UTF-8 bytes, u32 dim, u64 count, then per record u16 doi length + UTF-8
bytes + dim float32 values.

Env vars: IMPACT_EMBED_API_KEY, IMPACT_EMBED_ENDPOINT, IMPACT_EMBED_MODEL.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import struct
import time
import warnings
from dataclasses import dataclass

import numpy as np
import requests
import scipy.sparse as sp

# dims the providers advertise; enforced on import and on remote responses
PROVIDER_DIMS = {
    "remote-transformer": 1536,
    "import-sbert": 768,
    "import-use": 512,
    "import-infersent": 4096,
    "tfidf-svd": 4096,
}

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class EmbeddingError(Exception):
    pass


class DimensionMismatchError(EmbeddingError):
    pass


@dataclass
class EmbeddingMatrix:
    model_id: str
    dim: int
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        for doi, v in self.vectors.items():
            if len(v) != self.dim:
                raise DimensionMismatchError(
                    f"{doi}: vector length {len(v)} != dim {self.dim}"
                )
            if not np.all(np.isfinite(v)):
                raise EmbeddingError(f"{doi}: non-finite components")

    def matrix_for(self, dois) -> np.ndarray:
        return np.stack([self.vectors[d] for d in dois])


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    doc_count: int
    doc_freq: dict[str, int]
    idf: dict[str, float]


@dataclass
class SvdFactors:
    k: int
    singular_values: np.ndarray
    right_basis: np.ndarray  # V x k, orthonormal columns
    seed: int


def tokenize(text: str) -> list[str]:
    """Lowercased Unicode word segmentation; punctuation dropped, nothing else."""
    return _WORD_RE.findall(text.lower())


def tfidf_fit(documents) -> TfidfModel:
    """Fit smoothed idf: ln((1+N)/(1+df)) + 1, vocabulary over all tokens seen."""
    if not any(documents):
        raise EmbeddingError("cannot fit TFIDF on an all-empty corpus")
    n = len(documents)
    df: dict[str, int] = {}
    for doc in documents:
        for tok in set(doc):
            df[tok] = df.get(tok, 0) + 1
    vocab = {tok: i for i, tok in enumerate(sorted(df))}
    idf = {tok: np.log((1 + n) / (1 + df[tok])) + 1.0 for tok in vocab}
    return TfidfModel(vocabulary=vocab, doc_count=n, doc_freq=df, idf=idf)


def tfidf_transform(model: TfidfModel, document) -> sp.csr_matrix:
    """tf * idf, L2-normalized; out-of-vocabulary tokens ignored.

    Empty or fully out-of-vocabulary documents map to the zero vector.
    """
    counts: dict[int, float] = {}
    for tok in document:
        col = model.vocabulary.get(tok)
        if col is not None:
            counts[col] = counts.get(col, 0.0) + 1.0
    if not counts:
        return sp.csr_matrix((1, len(model.vocabulary)))
    cols = sorted(counts)
    idf_by_col = {model.vocabulary[t]: v for t, v in model.idf.items()}
    data = np.array([counts[c] * idf_by_col[c] for c in cols])
    data /= np.linalg.norm(data)
    return sp.csr_matrix(
        (data, (np.zeros(len(cols), dtype=int), cols)), shape=(1, len(model.vocabulary))
    )


def tfidf_matrix(model: TfidfModel, documents) -> sp.csr_matrix:
    return sp.vstack([tfidf_transform(model, doc) for doc in documents], format="csr")


def truncated_svd(matrix, k: int, seed: int, oversample: int = 10,
                  power_iterations: int = 2):
    """Seeded randomized truncated SVD.

    Gaussian range finder with the given oversampling, QR-stabilized power
    iterations, then a dense SVD of the projected matrix. Returns
    (SvdFactors, embeddings) with embeddings = U_k * diag(s_k).
    """
    n, v = matrix.shape
    if k > min(n, v):
        raise ValueError(f"k={k} exceeds min(N,V)={min(n, v)}")
    rng = np.random.default_rng(seed)
    p = min(k + oversample, min(n, v))
    omega = rng.standard_normal((v, p))
    y = matrix @ omega
    q, _ = np.linalg.qr(y)
    for _ in range(power_iterations):
        z, _ = np.linalg.qr(matrix.T @ q)
        q, _ = np.linalg.qr(matrix @ z)
    b = np.asarray((matrix.T @ q).T)  # works for sparse and dense alike
    u_small, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ u_small[:, :k]
    factors = SvdFactors(
        k=k, singular_values=s[:k].copy(), right_basis=vt[:k].T.copy(), seed=seed
    )
    return factors, u * s[:k]


def svd_cap_rank(k: int, n: int, v: int) -> int:
    """Cap the target rank for small corpora, warning when the cap bites."""
    cap = max(1, min(n, v) - 1)
    if k > cap:
        warnings.warn(f"SVD rank {k} capped to {cap} for a {n}x{v} matrix")
        return cap
    return k


def average_section_vectors(section_vectors) -> np.ndarray:
    """Unweighted component-wise mean of per-section vectors."""
    if not len(section_vectors):
        raise ValueError("no section vectors to average")
    lengths = {len(v) for v in section_vectors}
    if len(lengths) != 1:
        raise ValueError(f"ragged section vector lengths: {sorted(lengths)}")
    return np.mean(np.stack([np.asarray(v, dtype=float) for v in section_vectors]), axis=0)


class RemoteEmbedder:
    """Batched client for a remote embedding endpoint.

    ``transport`` is a callable (url, json_payload, headers, timeout) ->
    parsed-JSON dict; injectable for tests. Responses must carry
    ``{"data": [{"embedding": [...]}, ...]}`` in input order.
    """

    def __init__(self, model_id: str | None = None, dim: int = 1536,
                 endpoint: str | None = None, api_key: str | None = None,
                 transport=None, max_attempts: int = 3, backoff_base: float = 0.5,
                 sleep=time.sleep, cache_path=None):
        self.model_id = model_id or os.environ.get("IMPACT_EMBED_MODEL", "remote-transformer")
        self.dim = dim
        self.endpoint = endpoint or os.environ.get("IMPACT_EMBED_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("IMPACT_EMBED_API_KEY", "")
        self.transport = transport or self._http_transport
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.cache_path = cache_path
        self._cache = self._load_cache() if cache_path else {}

    @staticmethod
    def _http_transport(url, payload, headers, timeout):
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        if resp.status_code in (401, 403):
            raise EmbeddingError(f"authentication failed: HTTP {resp.status_code}")
        resp.raise_for_status()
        return resp.json()

    def _cache_key(self, text: str) -> str:
        return hashlib.sha256(f"{self.model_id}\x00{text}".encode()).hexdigest()

    def _load_cache(self):
        cache = {}
        if os.path.exists(self.cache_path):
            with open(self.cache_path, encoding="utf-8") as fh:
                for line in fh:
                    obj = json.loads(line)
                    cache[obj["key"]] = np.array(obj["vector"], dtype=np.float32)
        return cache

    def _cache_put(self, key, vector):
        self._cache[key] = vector
        if self.cache_path:
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "vector": [float(x) for x in vector]}) + "\n")

    def _request_batch(self, batch):
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {"model": self.model_id, "input": batch}
        last_exc = None
        for attempt in range(self.max_attempts):
            try:
                return self.transport(self.endpoint, payload, headers, 60.0)
            except EmbeddingError:
                raise  # auth failures do not retry
            except Exception as exc:
                last_exc = exc
                self.sleep(self.backoff_base * 2**attempt)
        raise EmbeddingError(f"remote embedding failed after {self.max_attempts} attempts: {last_exc}")

    def embed_batch(self, texts, batch_size: int = 64) -> list[np.ndarray]:
        """Embed texts in order, in batches of at most batch_size."""
        if any(not t for t in texts):
            raise EmbeddingError("texts must be non-empty")
        out: list[np.ndarray | None] = [None] * len(texts)
        pending = []  # (position, text) pairs needing network
        for i, text in enumerate(texts):
            key = self._cache_key(text)
            if key in self._cache:
                out[i] = self._cache[key]
            else:
                pending.append((i, text))
        for start in range(0, len(pending), batch_size):
            chunk = pending[start : start + batch_size]
            response = self._request_batch([t for _, t in chunk])
            rows = response["data"]
            if len(rows) != len(chunk):
                raise EmbeddingError(
                    f"remote returned {len(rows)} vectors for {len(chunk)} inputs"
                )
            for (i, text), row in zip(chunk, rows):
                vec = np.asarray(row["embedding"], dtype=np.float32)
                if len(vec) != self.dim:
                    raise DimensionMismatchError(
                        f"remote vector length {len(vec)} != declared dim {self.dim}"
                    )
                self._cache_put(self._cache_key(text), vec)
                out[i] = vec
        return out  # type: ignore[return-value]


def write_vectors(matrix: EmbeddingMatrix, path):
    """Serialize to the EMB1 binary vector store."""
    with open(path, "wb") as fh:
        fh.write(b"EMB1")
        mid = matrix.model_id.encode("utf-8")
        fh.write(struct.pack("<H", len(mid)) + mid)
        fh.write(struct.pack("<I", matrix.dim))
        fh.write(struct.pack("<Q", len(matrix.vectors)))
        for doi, vec in matrix.vectors.items():
            d = doi.encode("utf-8")
            fh.write(struct.pack("<H", len(d)) + d)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def import_vectors(path, expected_dim: int | None = None) -> EmbeddingMatrix:
    """Load an EMB1 store, validating dims and DOI uniqueness."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"EMB1":
        raise EmbeddingError(f"not an EMB1 vector store: {path}")
    off = 4

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise EmbeddingError(f"truncated vector store: {path}")
        chunk = data[off : off + n]
        off += n
        return chunk

    (mid_len,) = struct.unpack("<H", take(2))
    model_id = take(mid_len).decode("utf-8")
    (dim,) = struct.unpack("<I", take(4))
    (count,) = struct.unpack("<Q", take(8))
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(
            f"store declares dim {dim}, expected {expected_dim}"
        )
    vectors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (doi_len,) = struct.unpack("<H", take(2))
        doi = take(doi_len).decode("utf-8")
        vec = np.frombuffer(take(4 * dim), dtype="<f4")
        if doi in vectors:
            raise EmbeddingError(f"duplicate DOI in vector store: {doi}")
        vectors[doi] = vec.copy()
    if off != len(data):
        raise EmbeddingError(f"trailing bytes in vector store: {path}")
    return EmbeddingMatrix(model_id=model_id, dim=dim, vectors=vectors)


def build_tfidf_svd_matrix(texts_by_doi: dict[str, str], k: int, seed: int,
                           model_id: str | None = None):
    """Tokenize + TFIDF + truncated SVD over a corpus; rank capped for tiny corpora."""
    dois = list(texts_by_doi)
    docs = [tokenize(texts_by_doi[d]) for d in dois]
    model = tfidf_fit(docs)
    X = tfidf_matrix(model, docs)
    k = svd_cap_rank(k, *X.shape)
    factors, emb = truncated_svd(X, k=k, seed=seed)
    matrix = EmbeddingMatrix(
        model_id=model_id or f"tfidf-svd-{k}",
        dim=k,
        vectors={doi: emb[i] for i, doi in enumerate(dois)},
    )
    return matrix, model, factors
