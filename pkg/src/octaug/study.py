"""Blinded study-set construction.

Takes a pool of source scans and a list of sigma-band categories, and turns
each source into an (original, modified) pair: the original re-encoded
under an opaque id, the modified deformed with a sigma drawn uniformly from
the band.  Item ids come from a dedicated seeded stream, so they carry no
information about ground truth, category, or source; a seeded shuffle fixes
the display order.  The whole output is a deterministic function of
(pool order, specs, master_seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import raster_io
from .rng import SplitMix64, derive_seed
from .warpfield import BorderPolicy, deform

ORIGINAL = "original"
MODIFIED = "modified"

MANIFEST_NAME = "manifest.json"
IMAGES_DIR = "images"


@dataclass(frozen=True)
class CategorySpec:
    """One sigma band of the study design."""

    name: str
    sigma_min: float
    sigma_max: float
    pair_count: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("category name must be non-empty")
        if not (0.0 < self.sigma_min <= self.sigma_max):
            raise ValueError(
                f"{self.name}: need 0 < sigma_min <= sigma_max, "
                f"got [{self.sigma_min}, {self.sigma_max}]"
            )
        if self.pair_count < 1:
            raise ValueError(f"{self.name}: pair_count must be >= 1")


@dataclass(frozen=True)
class StudyItem:
    item_id: str
    category: str
    ground_truth: str            # ORIGINAL or MODIFIED
    sigma_used: float | None     # present iff modified
    source_ref: str


@dataclass
class StudyManifest:
    """Everything needed to serve, unblind, and analyze one study."""

    study_id: str
    categories: list[CategorySpec]
    items: list[StudyItem]
    display_order: list[int]     # display position k shows items[display_order[k]]
    master_seed: int
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._by_id = {it.item_id: it for it in self.items}
        if len(self._by_id) != len(self.items):
            raise ValueError("duplicate item ids in manifest")
        if sorted(self.display_order) != list(range(len(self.items))):
            raise ValueError("display_order is not a permutation of item indices")

    @property
    def item_count(self) -> int:
        return len(self.items)

    def item_at_display_index(self, index: int) -> StudyItem:
        return self.items[self.display_order[index]]

    def reveal(self, item_id: str) -> tuple[str, float | None]:
        """Admin-only unblinding: (ground_truth, sigma_used) for an item."""
        try:
            item = self._by_id[item_id]
        except KeyError:
            raise KeyError(f"unknown item id: {item_id}") from None
        return item.ground_truth, item.sigma_used

    def to_json_dict(self) -> dict:
        items = []
        for it in self.items:
            d = {
                "item_id": it.item_id,
                "category": it.category,
                "ground_truth": it.ground_truth,
                "source_ref": it.source_ref,
            }
            if it.sigma_used is not None:
                d["sigma_used"] = it.sigma_used
            items.append(d)
        return {
            "study_id": self.study_id,
            "master_seed": self.master_seed,
            "categories": [
                {
                    "name": c.name,
                    "sigma_min": c.sigma_min,
                    "sigma_max": c.sigma_max,
                    "pair_count": c.pair_count,
                }
                for c in self.categories
            ],
            "items": items,
            "display_order": self.display_order,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "StudyManifest":
        return cls(
            study_id=d["study_id"],
            categories=[
                CategorySpec(
                    name=c["name"],
                    sigma_min=c["sigma_min"],
                    sigma_max=c["sigma_max"],
                    pair_count=c["pair_count"],
                )
                for c in d["categories"]
            ],
            items=[
                StudyItem(
                    item_id=i["item_id"],
                    category=i["category"],
                    ground_truth=i["ground_truth"],
                    sigma_used=i.get("sigma_used"),
                    source_ref=i["source_ref"],
                )
                for i in d["items"]
            ],
            display_order=list(d["display_order"]),
            master_seed=d["master_seed"],
        )

    def save(self, path: str | os.PathLike) -> None:
        text = json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "StudyManifest":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_study_dir(study_dir: str | os.PathLike) -> StudyManifest:
    return StudyManifest.load(Path(study_dir) / MANIFEST_NAME)


def item_image_path(study_dir: str | os.PathLike, item_id: str) -> Path:
    return Path(study_dir) / IMAGES_DIR / f"{item_id}.png"


def build_study(
    pool: list[str | os.PathLike],
    specs: list[CategorySpec],
    master_seed: int,
    out_dir: str | os.PathLike,
    border: BorderPolicy = BorderPolicy.CLAMP,
) -> StudyManifest:
    """Build a blinded study set under ``out_dir``.

    Each pair consumes one pool image, in pool order: the original is
    re-encoded as PNG under an opaque id, the modified counterpart is
    deformed with sigma drawn uniformly from the pair's category band.
    Per-pair sigma draws and warp seeds are derived by hashing
    (master_seed, pair index), so results do not depend on build order.
    """
    total_pairs = sum(s.pair_count for s in specs)
    if len(pool) < total_pairs:
        raise ValueError(
            f"pool has {len(pool)} images but the design needs {total_pairs} pairs"
        )
    if len({s.name for s in specs}) != len(specs):
        raise ValueError("category names must be unique")

    out = Path(out_dir)
    images_dir = out / IMAGES_DIR
    images_dir.mkdir(parents=True, exist_ok=True)

    study_id = SplitMix64(derive_seed(master_seed, "study-id")).token()
    ids_rng = SplitMix64(derive_seed(master_seed, "item-ids"))
    seen_ids: set[str] = set()

    def fresh_id() -> str:
        tok = ids_rng.token()
        while tok in seen_ids:
            tok = ids_rng.token()
        seen_ids.add(tok)
        return tok

    items: list[StudyItem] = []
    pair_index = 0
    for spec in specs:
        for _ in range(spec.pair_count):
            source = Path(pool[pair_index])
            image = raster_io.load_image(source)

            u = SplitMix64(derive_seed(master_seed, "sigma", pair_index)).next_float()
            sigma = spec.sigma_min + u * (spec.sigma_max - spec.sigma_min)
            warp_seed = derive_seed(master_seed, "warp", pair_index)

            orig_id = fresh_id()
            raster_io.save_image(image, item_image_path(out, orig_id))
            items.append(
                StudyItem(
                    item_id=orig_id,
                    category=spec.name,
                    ground_truth=ORIGINAL,
                    sigma_used=None,
                    source_ref=source.name,
                )
            )

            mod_id = fresh_id()
            result = deform(image, sigma, warp_seed, border=border)
            raster_io.save_image(result.image, item_image_path(out, mod_id))
            items.append(
                StudyItem(
                    item_id=mod_id,
                    category=spec.name,
                    ground_truth=MODIFIED,
                    sigma_used=sigma,
                    source_ref=source.name,
                )
            )
            pair_index += 1

    display_order = list(range(len(items)))
    SplitMix64(derive_seed(master_seed, "display-shuffle")).shuffle(display_order)

    manifest = StudyManifest(
        study_id=study_id,
        categories=list(specs),
        items=items,
        display_order=display_order,
        master_seed=master_seed,
    )
    manifest.save(out / MANIFEST_NAME)
    return manifest
