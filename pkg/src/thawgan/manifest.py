"""Named-tensor weight container used for pretrained backbones and run checkpoints.

File layout (all integers little-endian):

    bytes 0..3    magic ``TWMF``
    bytes 4..7    format version (u32)
    bytes 8..15   header length in bytes (u64)
    header        UTF-8 JSON: unit_order, metadata, per-tensor dtype/shape/offset
    blob          raw tensor buffers, little-endian, in header order

The header is fully validated (offsets, sizes, dtype tags) before any buffer
is copied out of the blob.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TWMF"
FORMAT_VERSION = 1

# dtype tag -> numpy dtype with explicit byte order
_DTYPES = {
    "f32": "<f4",
    "f64": "<f8",
    "i32": "<i4",
    "i64": "<i8",
    "u8": "|u1",
}
_TAGS = {np.dtype(v): k for k, v in _DTYPES.items()}


class ManifestError(Exception):
    """Base class for manifest load/save failures."""


class CorruptManifestError(ManifestError):
    """File is truncated, has a bad magic, or an inconsistent header."""


class ManifestVersionError(ManifestError):
    """File was written with an unsupported format version."""


class MissingTensorError(ManifestError):
    """One or more expected tensors are absent from the manifest."""

    def __init__(self, names):
        self.names = sorted(names)
        super().__init__("manifest is missing tensors: " + ", ".join(self.names))


class ShapeMismatchError(ManifestError):
    """A tensor exists but its shape does not match the expectation."""

    def __init__(self, name, expected, actual):
        self.name = name
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(
            f"tensor {name!r} has shape {self.actual}, expected {self.expected}"
        )


@dataclass
class WeightManifest:
    """In-memory view of a manifest: tensor name -> ndarray, plus header fields."""

    tensors: dict[str, np.ndarray]
    unit_order: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _dtype_tag(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    tag = _TAGS.get(np.dtype(dt.str.replace(">", "<")))
    if tag is None:
        raise ManifestError(f"unsupported dtype {arr.dtype} for manifest tensor")
    return tag


def save_manifest(manifest: WeightManifest, path: str | Path) -> None:
    """Write ``manifest`` to ``path`` in the container format described above."""
    entries = {}
    buffers = []
    offset = 0
    for name, arr in manifest.tensors.items():
        arr = np.asarray(arr)  # tobytes() always emits C order, 0-d stays 0-d
        tag = _dtype_tag(arr)
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes()
        entries[name] = {
            "dtype": tag,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps(
        {
            "unit_order": list(manifest.unit_order),
            "metadata": manifest.metadata,
            "tensors": entries,
        }
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint64(len(header)).tobytes())
        fh.write(header)
        for raw in buffers:
            fh.write(raw)


def load_manifest(path: str | Path) -> WeightManifest:
    """Read and validate a manifest file.

    Raises CorruptManifestError on structural damage and ManifestVersionError
    on a version this reader does not understand.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptManifestError(f"{path}: not a weight manifest (bad magic)")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise ManifestVersionError(
            f"{path}: format version {version}, this reader supports {FORMAT_VERSION}"
        )
    header_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    if 16 + header_len > len(raw):
        raise CorruptManifestError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptManifestError(f"{path}: unreadable header: {exc}") from exc

    blob = raw[16 + header_len :]
    entries = header.get("tensors", {})
    # Validate every entry before copying any buffer.
    for name, entry in entries.items():
        tag = entry.get("dtype")
        if tag not in _DTYPES:
            raise CorruptManifestError(f"{path}: tensor {name!r} has bad dtype tag {tag!r}")
        shape = entry.get("shape", [])
        itemsize = np.dtype(_DTYPES[tag]).itemsize
        expected_bytes = int(np.prod(shape, dtype=np.int64)) * itemsize if shape else itemsize
        if entry.get("nbytes") != expected_bytes:
            raise CorruptManifestError(
                f"{path}: tensor {name!r} count/shape mismatch in header"
            )
        if entry["offset"] < 0 or entry["offset"] + entry["nbytes"] > len(blob):
            raise CorruptManifestError(f"{path}: tensor {name!r} overruns the data blob")

    tensors = {}
    for name, entry in entries.items():
        buf = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        tensors[name] = arr.copy()
    return WeightManifest(
        tensors=tensors,
        unit_order=list(header.get("unit_order", [])),
        metadata=header.get("metadata", {}),
        version=version,
    )


def validate_tensors(manifest: WeightManifest, expected: dict[str, tuple]) -> None:
    """Check that every expected name resolves with a matching shape.

    Missing names are reported together; the first shape mismatch is reported
    by tensor name.
    """
    missing = [name for name in expected if name not in manifest.tensors]
    if missing:
        raise MissingTensorError(missing)
    for name, shape in expected.items():
        actual = tuple(manifest.tensors[name].shape)
        if actual != tuple(shape):
            raise ShapeMismatchError(name, shape, actual)
