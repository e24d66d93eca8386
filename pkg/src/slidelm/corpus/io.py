"""Corpus persistence: PEB1 embedding files plus a JSON manifest.

PEB1 layout (little-endian): magic ``PEB1``, u32 dim, u64 tile count,
u32 slide count, per slide (u16 id length, UTF-8 id, u64 n_i), then the
row-major float32 payload of all slides concatenated.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .generate import Corpus, CorpusSpec, Planted
from .types import Finding, SpecimenRecord, SurvivalLabel, TileEmbeddingSet

MAGIC = b"PEB1"
MANIFEST_VERSION = "peb_manifest_v1"
MANIFEST_NAME = "manifest.json"
EMBED_DIR = "embeddings"


class CorpusIOError(ValueError):
    """Base for corpus (de)serialization failures."""


class BadMagicError(CorpusIOError):
    pass


class TruncatedPayloadError(CorpusIOError):
    pass


class DimMismatchError(CorpusIOError):
    pass


def write_embeddings(tiles: TileEmbeddingSet, path: Path) -> None:
    parts = [MAGIC, struct.pack("<IQI", tiles.d, tiles.total_tiles, len(tiles.slides))]
    for slide_id, emb in tiles.slides:
        sid = slide_id.encode("utf-8")
        parts.append(struct.pack("<H", len(sid)))
        parts.append(sid)
        parts.append(struct.pack("<Q", emb.shape[0]))
    for _, emb in tiles.slides:
        parts.append(np.ascontiguousarray(emb, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))


def read_embeddings(path: Path, specimen_id: str,
                    expect_dim: int | None = None) -> TileEmbeddingSet:
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    off = 4
    try:
        dim, n_tiles, n_slides = struct.unpack_from("<IQI", blob, off)
        off += struct.calcsize("<IQI")
        headers = []
        for _ in range(n_slides):
            (id_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            slide_id = blob[off:off + id_len].decode("utf-8")
            if len(blob) < off + id_len:
                raise struct.error("truncated id")
            off += id_len
            (n_i,) = struct.unpack_from("<Q", blob, off)
            off += 8
            headers.append((slide_id, n_i))
    except struct.error as exc:
        raise TruncatedPayloadError(f"{path}: truncated header ({exc})") from exc
    if expect_dim is not None and dim != expect_dim:
        raise DimMismatchError(f"{path}: file dim {dim} != manifest dim {expect_dim}")
    if sum(n for _, n in headers) != n_tiles:
        raise DimMismatchError(f"{path}: per-slide counts do not sum to the tile count")
    need = off + n_tiles * dim * 4
    if len(blob) < need:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(blob) - off} bytes, expected {need - off}")
    flat = np.frombuffer(blob, dtype="<f4", count=n_tiles * dim, offset=off)
    flat = flat.reshape(int(n_tiles), dim).astype(np.float32)
    slides = []
    row = 0
    for slide_id, n_i in headers:
        slides.append((slide_id, flat[row:row + n_i].copy()))
        row += n_i
    return TileEmbeddingSet(specimen_id=specimen_id, slides=slides, d=int(dim))


def _record_to_json(record: SpecimenRecord, embedding_file: str) -> dict:
    return {
        "specimen_id": record.specimen_id,
        "label": record.label,
        "findings": [{"concept": f.concept, "polarity": f.polarity,
                      "attributes": f.attributes} for f in record.findings],
        "report": record.report,
        "paraphrases": record.paraphrases,
        "history": record.history,
        "specimen_desc": record.specimen_desc,
        "survival": None if record.survival is None else
            {"time_months": record.survival.time_months, "event": record.survival.event},
        "embedding_file": embedding_file,
    }


def save_corpus(corpus: Corpus, dir_path: str | Path) -> Path:
    root = Path(dir_path)
    (root / EMBED_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for record in corpus.records:
        rel = f"{EMBED_DIR}/{record.specimen_id}.peb"
        write_embeddings(record.tiles, root / rel)
        entries.append(_record_to_json(record, rel))
    manifest = {
        "schema_version": MANIFEST_VERSION,
        "seed": corpus.seed,
        "spec": corpus.spec.to_dict(),
        "planted": {
            "axes": corpus.planted.axes,
            "class_means": corpus.planted.class_means.tolist(),
            "log_hazard": corpus.planted.log_hazard,
            "risk": corpus.planted.risk,
        },
        "records": entries,
    }
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_corpus(dir_path: str | Path) -> Corpus:
    root = Path(dir_path)
    try:
        manifest = json.loads((root / MANIFEST_NAME).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CorpusIOError(f"no {MANIFEST_NAME} under {root}") from exc
    if manifest.get("schema_version") != MANIFEST_VERSION:
        raise CorpusIOError(f"unsupported manifest version {manifest.get('schema_version')!r}")
    spec = CorpusSpec.from_dict(manifest["spec"])
    records = []
    for entry in manifest["records"]:
        tiles = read_embeddings(root / entry["embedding_file"], entry["specimen_id"],
                                expect_dim=spec.d)
        findings = [Finding(f["concept"], f["polarity"] == "present", dict(f["attributes"]))
                    for f in entry["findings"]]
        survival = None
        if entry["survival"] is not None:
            survival = SurvivalLabel(entry["survival"]["time_months"],
                                     entry["survival"]["event"])
        records.append(SpecimenRecord(
            specimen_id=entry["specimen_id"], tiles=tiles, findings=findings,
            report=entry["report"], label=entry["label"],
            paraphrases=list(entry["paraphrases"]), history=entry["history"],
            specimen_desc=entry["specimen_desc"], survival=survival))
    planted = Planted(
        axes={k: int(v) for k, v in manifest["planted"]["axes"].items()},
        class_means=np.asarray(manifest["planted"]["class_means"], dtype=float).reshape(
            spec.n_classes, spec.d),
        log_hazard={k: float(v) for k, v in manifest["planted"]["log_hazard"].items()},
        risk={k: float(v) for k, v in manifest["planted"]["risk"].items()},
    )
    return Corpus(spec=spec, seed=int(manifest["seed"]), records=records, planted=planted)
