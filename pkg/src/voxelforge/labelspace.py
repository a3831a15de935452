"""Global/local class-index mapping for partially labeled datasets.

Every dataset carries its own local label indices; the engine works in a
global index space of up to 127 classes. The sidecar JSON format is::

    {"version": 1,
     "classes": [{"index": 1, "name": "..."}, ...],
     "datasets": {"<id>": {"map": {"<local>": <global>}, "label_set": [<global>, ...]}}}

The shipped 127-name table is a best-effort configuration, not a normative
list; swap in your own sidecar for real deployments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import MappingError
from .grid import LabelVolume

MAX_GLOBAL_INDEX = 127


@dataclass(frozen=True)
class DatasetMapping:
    local_to_global: dict[int, int]
    label_set: frozenset[int]

    def __post_init__(self):
        m = {int(k): int(v) for k, v in self.local_to_global.items()}
        if len(set(m.values())) != len(m):
            raise ValueError("local->global map must be injective")
        for g in m.values():
            if not 1 <= g <= MAX_GLOBAL_INDEX:
                raise ValueError(f"global index {g} outside 1..{MAX_GLOBAL_INDEX}")
        label_set = frozenset(int(v) for v in self.label_set)
        if label_set != set(m.values()):
            raise ValueError("label_set must equal the image of the local->global map")
        object.__setattr__(self, "local_to_global", m)
        object.__setattr__(self, "label_set", label_set)


@dataclass(frozen=True)
class LabelSpace:
    """Ordered global class names plus per-dataset local-index mappings."""

    global_names: dict[int, str]
    per_dataset: dict[str, DatasetMapping] = field(default_factory=dict)

    def __post_init__(self):
        names = {int(k): str(v) for k, v in self.global_names.items()}
        for idx in names:
            if not 1 <= idx <= MAX_GLOBAL_INDEX:
                raise ValueError(f"class index {idx} outside 1..{MAX_GLOBAL_INDEX}")
        object.__setattr__(self, "global_names", names)

    def name_of(self, index: int) -> str:
        return self.global_names.get(int(index), f"class_{int(index)}")

    def dataset(self, dataset_id: str) -> DatasetMapping:
        try:
            return self.per_dataset[dataset_id]
        except KeyError:
            raise KeyError(f"dataset '{dataset_id}' not registered in label space") from None


def load_labelspace(path) -> LabelSpace:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return labelspace_from_dict(doc)


def labelspace_from_dict(doc: dict) -> LabelSpace:
    names = {int(c["index"]): c["name"] for c in doc.get("classes", [])}
    datasets = {}
    for ds_id, entry in doc.get("datasets", {}).items():
        mapping = {int(k): int(v) for k, v in entry["map"].items()}
        label_set = entry.get("label_set", sorted(set(mapping.values())))
        datasets[ds_id] = DatasetMapping(mapping, frozenset(int(v) for v in label_set))
    return LabelSpace(global_names=names, per_dataset=datasets)


def labelspace_to_dict(space: LabelSpace) -> dict:
    return {
        "version": 1,
        "classes": [{"index": i, "name": space.global_names[i]} for i in sorted(space.global_names)],
        "datasets": {
            ds_id: {
                "map": {str(k): v for k, v in sorted(m.local_to_global.items())},
                "label_set": sorted(m.label_set),
            }
            for ds_id, m in sorted(space.per_dataset.items())
        },
    }


def default_labelspace() -> LabelSpace:
    """The packaged best-effort 127-class table."""
    text = resources.files("voxelforge.data").joinpath("global_labels.json").read_text("utf-8")
    return labelspace_from_dict(json.loads(text))


def remap_labels(local: LabelVolume, space: LabelSpace, dataset_id: str) -> LabelVolume:
    """Substitute a dataset's local indices with their global indices.

    Zeros pass through; any nonzero value without a map entry raises a
    MappingError naming the offending value.
    """
    mapping = space.dataset(dataset_id)
    data = local.data
    present = np.unique(data)
    lut_size = int(present.max()) + 1 if present.size else 1
    lut = np.full(lut_size, -1, dtype=np.int32)
    lut[0] = 0
    for loc, glob in mapping.local_to_global.items():
        if loc < lut_size:
            lut[loc] = glob
    for v in present:
        if lut[int(v)] < 0:
            raise MappingError(int(v), dataset_id)
    out = lut[data]
    return LabelVolume(
        out,
        spacing=local.spacing,
        origin=local.origin,
        label_set=mapping.label_set,
    )
