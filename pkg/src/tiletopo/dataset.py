"""Dataset manifests, seeded paired/unpaired splits, and the tiling pipeline.

A corpus starts as fully paired (photo tile, map tile) records. Training
wants only a fraction of those pairs kept intact; the remainder is torn
apart so that each torn pair contributes exactly one image, alternating
sides, and the counterpart image leaves the corpus entirely. Everything is
driven by one seeded shuffle so a manifest is reproducible byte for byte.
"""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .image import crop_grid, read_png, resize
from .validation import ConfigError

MANIFEST_VERSION = 1
GROUPS = ("paired", "unpaired_rs", "unpaired_map")
SUBSETS = ("train", "test")


@dataclass(frozen=True)
class SampleRecord:
    """One corpus entry; paths are relative to the manifest location."""

    id: str
    group: str
    subset: str
    rs_path: str = None
    map_path: str = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"record {self.id!r}: unknown group {self.group!r}")
        if self.subset not in SUBSETS:
            raise ValueError(f"record {self.id!r}: unknown subset {self.subset!r}")
        has_rs = self.rs_path is not None
        has_map = self.map_path is not None
        if self.group == "paired" and not (has_rs and has_map):
            raise ValueError(f"record {self.id!r}: paired records need both paths")
        if self.group == "unpaired_rs" and (not has_rs or has_map):
            raise ValueError(f"record {self.id!r}: unpaired_rs records carry only rs_path")
        if self.group == "unpaired_map" and (not has_map or has_rs):
            raise ValueError(f"record {self.id!r}: unpaired_map records carry only map_path")
        if self.group != "paired" and self.subset == "test":
            raise ValueError(f"record {self.id!r}: test records must be paired")


@dataclass(frozen=True)
class SplitConfig:
    paired_ratio: float
    seed: int
    test_fraction: float

    def __post_init__(self):
        if not (0.0 < self.paired_ratio <= 1.0):
            raise ConfigError(f"paired_ratio must lie in (0, 1], got {self.paired_ratio!r}")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    seed: int
    records: tuple

    def by_subset(self, subset):
        return [r for r in self.records if r.subset == subset]

    def by_group(self, group):
        return [r for r in self.records if r.group == group]


def _round_half_up(x):
    return int(x + 0.5)


def _record_id(rs_path):
    return PurePosixPath(str(rs_path).replace("\\", "/")).stem


def split(samples, cfg):
    """Split fully paired samples into a train/test manifest.

    Parameters
    ----------
    samples : list of (rs_path, map_path)
        The paired source corpus. Record ids are the rs file stems and
        must be unique.
    cfg : SplitConfig

    Returns
    -------
    DatasetManifest
        ``round(test_fraction * n)`` samples become the fully paired test
        subset. Of the remaining train samples,
        ``round(paired_ratio * n_train)`` stay paired; the rest alternate
        between keeping only the photo and only the map, so no underlying
        image appears on both sides. Records are ordered by id.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot split an empty sample list")
    ids = [_record_id(rs) for rs, _ in samples]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate sample ids: {dupes}")

    order = list(range(len(samples)))
    rng = random.Random(cfg.seed)
    rng.shuffle(order)

    n = len(samples)
    n_test = _round_half_up(cfg.test_fraction * n)
    if n_test >= n:
        raise ConfigError(
            f"test_fraction {cfg.test_fraction} leaves no training samples for n={n}"
        )
    test_idx = order[:n_test]
    train_idx = order[n_test:]
    n_paired = _round_half_up(cfg.paired_ratio * len(train_idx))

    records = []
    for idx in test_idx:
        rs, mp = samples[idx]
        records.append(SampleRecord(
            id=ids[idx], group="paired", subset="test",
            rs_path=str(rs), map_path=str(mp)))
    for pos, idx in enumerate(train_idx):
        rs, mp = samples[idx]
        if pos < n_paired:
            records.append(SampleRecord(
                id=ids[idx], group="paired", subset="train",
                rs_path=str(rs), map_path=str(mp)))
        elif (pos - n_paired) % 2 == 0:
            records.append(SampleRecord(
                id=ids[idx], group="unpaired_rs", subset="train", rs_path=str(rs)))
        else:
            records.append(SampleRecord(
                id=ids[idx], group="unpaired_map", subset="train", map_path=str(mp)))
    records.sort(key=lambda r: r.id)
    return DatasetManifest(version=MANIFEST_VERSION, seed=cfg.seed, records=tuple(records))


def save_manifest(manifest, path):
    """Write a manifest as deterministic JSON (sorted keys, fixed indent)."""
    doc = {
        "version": manifest.version,
        "seed": manifest.seed,
        "records": [
            {k: v for k, v in (
                ("id", r.id), ("group", r.group), ("subset", r.subset),
                ("rs_path", r.rs_path), ("map_path", r.map_path),
            ) if v is not None}
            for r in manifest.records
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path):
    """Load and validate a manifest written by :func:`save_manifest`."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"manifest {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"manifest {path}: expected a JSON object at top level")
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise ValueError(
            f"manifest {path}: unsupported version {version!r} "
            f"(expected {MANIFEST_VERSION})"
        )
    if "seed" not in doc or not isinstance(doc["seed"], int):
        raise ValueError(f"manifest {path}: missing or non-integer seed")
    raw = doc.get("records")
    if not isinstance(raw, list):
        raise ValueError(f"manifest {path}: records must be a list")
    records = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "id" not in item:
            raise ValueError(f"manifest {path}: record #{i} lacks an id")
        rid = item["id"]
        try:
            records.append(SampleRecord(
                id=rid,
                group=item.get("group"),
                subset=item.get("subset"),
                rs_path=item.get("rs_path"),
                map_path=item.get("map_path"),
            ))
        except ValueError as exc:
            raise ValueError(f"manifest {path}: {exc}") from exc
    return DatasetManifest(version=version, seed=doc["seed"], records=tuple(records))


def resolve_path(manifest_path, rel_path):
    """Resolve a record path against the manifest's directory."""
    return Path(manifest_path).parent / rel_path


def scan_pairs(rs_dir, map_dir, suffix=".png"):
    """Pair up files from two directories by filename stem.

    Returns (rs_path, map_path) tuples sorted by stem. Stems present on
    only one side are an error naming the orphans.
    """
    rs_files = {p.stem: p for p in sorted(Path(rs_dir).glob(f"*{suffix}"))}
    map_files = {p.stem: p for p in sorted(Path(map_dir).glob(f"*{suffix}"))}
    orphans = sorted(set(rs_files) ^ set(map_files))
    if orphans:
        raise ValueError(f"unmatched tile stems between {rs_dir} and {map_dir}: {orphans}")
    if not rs_files:
        raise ValueError(f"no {suffix} files found in {rs_dir}")
    return [(rs_files[s], map_files[s]) for s in sorted(rs_files)]


def tile_pipeline(big_image, k, work_size=256):
    """Cut a large image into a k-by-k grid of working-resolution tiles.

    ``big_image`` may be a path or an array. Each tile is bilinearly
    resized to ``work_size`` per side; pass ``work_size=None`` (or 0) to
    keep native tile resolution, which makes crop followed by stitch an
    exact inverse.
    """
    img = read_png(big_image) if isinstance(big_image, (str, Path)) else big_image
    grid = crop_grid(img, k)
    if not work_size:
        return grid
    return grid.map(lambda t: resize(t, int(work_size)))
