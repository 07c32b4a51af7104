"""On-disk dataset bundles.

A bundle is a directory holding

* ``vertices.jsonl``: one ``{"id", "t", "position": [x, y, z]}`` per line, sorted by ``t``;
* ``descriptors.bin``: per vertex, ``u64 id, u32 count``, then ``count`` packed
  descriptors of ``descriptor_bits / 8`` bytes, then ``count`` ``i64`` landmark
  ids (-1 for none), all little-endian;
* ``landmarks.jsonl``: one ``{"id", "observers": [...]}`` per line;
* ``meta.json``: ``{"descriptor_bits": D}``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .index import NO_LANDMARK
from .projection import pack_bits, unpack_bits

__all__ = ["BundleError", "DatasetBundle", "read_bundle", "write_bundle"]

_HEAD = struct.Struct("<QI")


class BundleError(ValueError):
    """Malformed bundle; the message names the file and line or offset."""


@dataclass
class DatasetBundle:
    timestamps: np.ndarray
    positions: np.ndarray  # (n, 3) metres
    descriptors: list[np.ndarray]  # per vertex 0/1 uint8, (count, descriptor_bits)
    links: list[np.ndarray]  # per vertex int64 landmark ids, -1 for none
    landmark_observers: dict[int, list[int]]
    descriptor_bits: int

    def __post_init__(self):
        n = len(self.timestamps)
        if len(self.positions) != n or len(self.descriptors) != n or len(self.links) != n:
            raise BundleError("per-vertex arrays differ in length")
        if np.any(np.diff(self.timestamps) < 0):
            raise BundleError("vertices are not sorted by timestamp")
        if self.descriptor_bits <= 0 or self.descriptor_bits % 8:
            raise BundleError("descriptor_bits must be a positive multiple of 8")

    @property
    def n_vertices(self) -> int:
        return len(self.timestamps)

    @property
    def has_landmarks(self) -> bool:
        return any(np.any(lk != NO_LANDMARK) for lk in self.links)

    def all_descriptors(self) -> np.ndarray:
        if not self.descriptors:
            return np.zeros((0, self.descriptor_bits), dtype=np.uint8)
        return np.concatenate(self.descriptors)

    def check_integrity(self) -> None:
        """Landmark observer lists must agree with the per-descriptor links."""
        derived: dict[int, list[int]] = {}
        for v, lk in enumerate(self.links):
            for lid in sorted(set(lk[lk != NO_LANDMARK].tolist())):
                derived.setdefault(lid, []).append(v)
        for lid, obs in derived.items():
            if lid not in self.landmark_observers:
                raise BundleError(f"landmark {lid} is linked but not listed in landmarks.jsonl")
            if sorted(self.landmark_observers[lid]) != obs:
                raise BundleError(f"landmark {lid}: observer list disagrees with descriptor links")
        for lid, obs in self.landmark_observers.items():
            if obs and lid not in derived:
                raise BundleError(f"landmark {lid} lists observers but no descriptor links to it")

    @classmethod
    def from_world(cls, world) -> "DatasetBundle":
        return cls(
            np.asarray(world.timestamps, dtype=np.float64),
            np.asarray(world.positions, dtype=np.float64),
            list(world.descriptors),
            list(world.links),
            {int(k): list(v) for k, v in world.landmark_observers.items()},
            world.descriptor_bits,
        )


def write_bundle(bundle: DatasetBundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "meta.json", "w") as fh:
        json.dump({"descriptor_bits": bundle.descriptor_bits}, fh)
        fh.write("\n")
    with open(d / "vertices.jsonl", "w") as fh:
        for v in range(bundle.n_vertices):
            rec = {"id": v, "t": float(bundle.timestamps[v]), "position": [float(x) for x in bundle.positions[v]]}
            fh.write(json.dumps(rec) + "\n")
    with open(d / "descriptors.bin", "wb") as fh:
        for v, (desc, lk) in enumerate(zip(bundle.descriptors, bundle.links)):
            desc = np.asarray(desc, dtype=np.uint8).reshape(-1, bundle.descriptor_bits)
            fh.write(_HEAD.pack(v, len(desc)))
            fh.write(pack_bits(desc).tobytes())
            fh.write(np.asarray(lk, dtype="<i8").tobytes())
    with open(d / "landmarks.jsonl", "w") as fh:
        for lid in sorted(bundle.landmark_observers):
            fh.write(json.dumps({"id": lid, "observers": sorted(bundle.landmark_observers[lid])}) + "\n")
    return d


def _jsonl(path: Path):
    if not path.exists():
        raise BundleError(f"{path}: missing")
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise BundleError(f"{path}:{lineno}: {exc.msg}") from None


def read_bundle(directory) -> DatasetBundle:
    d = Path(directory)
    if not d.is_dir():
        raise BundleError(f"{d}: not a directory")
    meta_path = d / "meta.json"
    try:
        bits = int(json.loads(meta_path.read_text())["descriptor_bits"])
    except FileNotFoundError:
        raise BundleError(f"{meta_path}: missing") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"{meta_path}:1: bad descriptor_bits ({exc})") from None
    if bits <= 0 or bits % 8:
        raise BundleError(f"{meta_path}:1: descriptor_bits must be a positive multiple of 8")

    ts, pos = [], []
    vpath = d / "vertices.jsonl"
    for lineno, rec in _jsonl(vpath):
        try:
            vid, t, p = int(rec["id"]), float(rec["t"]), [float(x) for x in rec["position"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"{vpath}:{lineno}: bad vertex record ({exc})") from None
        if vid != len(ts):
            raise BundleError(f"{vpath}:{lineno}: expected id {len(ts)}, got {vid}")
        if len(p) != 3:
            raise BundleError(f"{vpath}:{lineno}: position needs 3 coordinates")
        if ts and t < ts[-1]:
            raise BundleError(f"{vpath}:{lineno}: timestamps not sorted")
        ts.append(t)
        pos.append(p)

    bpath = d / "descriptors.bin"
    if not bpath.exists():
        raise BundleError(f"{bpath}: missing")
    blob = bpath.read_bytes()
    nbytes = bits // 8
    descriptors, links = [], []
    off = 0
    while off < len(blob):
        if off + _HEAD.size > len(blob):
            raise BundleError(f"{bpath}: truncated header at byte {off}")
        vid, count = _HEAD.unpack_from(blob, off)
        if vid != len(descriptors):
            raise BundleError(f"{bpath}: block at byte {off} has vertex id {vid}, expected {len(descriptors)}")
        off += _HEAD.size
        end = off + count * (nbytes + 8)
        if end > len(blob):
            raise BundleError(f"{bpath}: block for vertex {vid} truncated at byte {off}")
        packed = np.frombuffer(blob, dtype=np.uint8, count=count * nbytes, offset=off).reshape(count, nbytes)
        descriptors.append(unpack_bits(packed, bits))
        off += count * nbytes
        links.append(np.frombuffer(blob, dtype="<i8", count=count, offset=off).astype(np.int64))
        off += count * 8
    if len(descriptors) != len(ts):
        raise BundleError(f"{bpath}: {len(descriptors)} blocks for {len(ts)} vertices")

    observers: dict[int, list[int]] = {}
    lpath = d / "landmarks.jsonl"
    for lineno, rec in _jsonl(lpath):
        try:
            lid, obs = int(rec["id"]), [int(o) for o in rec["observers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"{lpath}:{lineno}: bad landmark record ({exc})") from None
        if lid in observers:
            raise BundleError(f"{lpath}:{lineno}: duplicate landmark {lid}")
        if any(not 0 <= o < len(ts) for o in obs):
            raise BundleError(f"{lpath}:{lineno}: landmark {lid} names an unknown vertex")
        observers[lid] = obs

    bundle = DatasetBundle(
        np.array(ts, dtype=np.float64), np.array(pos, dtype=np.float64).reshape(-1, 3),
        descriptors, links, observers, bits,
    )
    try:
        bundle.check_integrity()
    except BundleError as exc:
        raise BundleError(f"{lpath}: {exc}") from None
    return bundle

