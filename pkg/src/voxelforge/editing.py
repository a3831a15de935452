"""Click-anchored merging of interactive output into an existing mask,
plus stateful editing sessions with undo.

The merge touches only connected components that contain a click, so a
correction can never destroy distant regions that were already right.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nifti
from .components import ComponentMap, connected_components
from .errors import StateError
from .grid import BinaryMask, LabelVolume, Volume
from .predictors import Predictor
from .prompts import ClassPrompt, PointPrompt, PromptContext
from .sliding import point_local_inference

Coord = tuple[int, int, int]


@dataclass(frozen=True)
class MergeInput:
    automatic: BinaryMask
    interactive: BinaryMask
    pos_points: tuple[Coord, ...] = ()
    neg_points: tuple[Coord, ...] = ()
    connectivity: int = 26

    def __post_init__(self):
        if self.automatic.dims != self.interactive.dims:
            raise ValueError(
                f"mask dims differ: {self.automatic.dims} vs {self.interactive.dims}"
            )
        dims = self.automatic.dims
        pos = tuple(tuple(int(c) for c in p) for p in self.pos_points)
        neg = tuple(tuple(int(c) for c in p) for p in self.neg_points)
        for p in pos + neg:
            if any(not 0 <= c < d for c, d in zip(p, dims)):
                raise ValueError(f"click {p} outside dims {dims}")
        object.__setattr__(self, "pos_points", pos)
        object.__setattr__(self, "neg_points", neg)


def _selected_union(cmap: ComponentMap, points: Sequence[Coord]) -> np.ndarray:
    selected = np.zeros(cmap.count + 1, dtype=bool)
    for p in points:
        selected[cmap.labels[p]] = True
    selected[0] = False
    return selected[cmap.labels]


def merge_interactive(inp: MergeInput) -> BinaryMask:
    """Edit the automatic mask using the interactive mask, guided by clicks.

    Addition candidates are the components of (interactive - automatic);
    when any positive click already lies inside the automatic mask, the
    components of the whole interactive mask join the candidate pool.
    Removal candidates are the components of (automatic - interactive).
    Only candidates containing a click of the matching polarity are applied:
    additions are unioned in, then removals are subtracted.
    """
    m_a = inp.automatic.data
    m_p = inp.interactive.data
    conn = inp.connectivity

    add_cands = connected_components(BinaryMask(m_p & ~m_a), conn)
    final_add = _selected_union(add_cands, inp.pos_points)
    if any(m_a[p] for p in inp.pos_points):
        mp_cands = connected_components(inp.interactive, conn)
        final_add |= _selected_union(mp_cands, inp.pos_points)

    rm_cands = connected_components(BinaryMask(m_a & ~m_p), conn)
    final_rm = _selected_union(rm_cands, inp.neg_points)

    return BinaryMask((m_a | final_add) & ~final_rm)


@dataclass
class SegmentationSession:
    """One editing session: an automatic mask refined by an ordered click log.

    The current mask always equals folding ``merge_interactive`` over the
    click log starting from the automatic mask; ``history`` holds one prior
    mask per applied click so undo is exact.
    """

    volume: Volume
    predictor: Predictor
    context: PromptContext = field(default_factory=PromptContext.zero_shot)
    automatic: BinaryMask | None = None
    patch_size: Coord = (128, 128, 128)
    connectivity: int = 26
    threshold: float = 0.5
    clicks: list[PointPrompt] = field(default_factory=list)
    current: BinaryMask = field(init=False)
    _history: list[BinaryMask] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.automatic is None:
            self.automatic = BinaryMask(np.zeros(self.volume.dims, dtype=bool))
        if self.automatic.dims != self.volume.dims:
            raise ValueError("automatic mask dims must match the volume")
        self.current = self.automatic

    @property
    def class_prompt(self) -> ClassPrompt | None:
        if self.context.class_index is None:
            return None
        return ClassPrompt(self.context.class_index)

    def make_click(self, position: Coord, positive: bool) -> PointPrompt:
        return PointPrompt(position=position, positive=positive, context=self.context)

    def apply_click(self, click: PointPrompt) -> "SegmentationSession":
        """Run patch-local inference with the full click log and merge."""
        for c, d in zip(click.position, self.volume.dims):
            if not 0 <= c < d:
                raise ValueError(f"click {click.position} outside dims {self.volume.dims}")
        all_clicks = self.clicks + [click]
        interactive, _origin = point_local_inference(
            self.volume, all_clicks, self.predictor, self.patch_size, self.threshold
        )
        merged = merge_interactive(
            MergeInput(
                automatic=self.current,
                interactive=interactive,
                pos_points=tuple(p.position for p in all_clicks if p.positive),
                neg_points=tuple(p.position for p in all_clicks if not p.positive),
                connectivity=self.connectivity,
            )
        )
        self._history.append(self.current)
        self.clicks = all_clicks
        self.current = merged
        return self

    def undo(self) -> "SegmentationSession":
        if not self._history:
            raise StateError("nothing to undo")
        self.current = self._history.pop()
        self.clicks = self.clicks[:-1]
        return self

    def reset_with_automatic(self, mask: BinaryMask) -> "SegmentationSession":
        """Adopt a freshly computed automatic mask, dropping clicks and history."""
        if mask.dims != self.volume.dims:
            raise ValueError("automatic mask dims must match the volume")
        self.automatic = mask
        self.current = mask
        self.clicks = []
        self._history.clear()
        return self

    @property
    def history_depth(self) -> int:
        return len(self._history)

    def replay(self) -> BinaryMask:
        """Recompute the current mask from the automatic mask and click log."""
        mask = self.automatic
        for i in range(len(self.clicks)):
            prefix = self.clicks[: i + 1]
            interactive, _ = point_local_inference(
                self.volume, prefix, self.predictor, self.patch_size, self.threshold
            )
            mask = merge_interactive(
                MergeInput(
                    automatic=mask,
                    interactive=interactive,
                    pos_points=tuple(p.position for p in prefix if p.positive),
                    neg_points=tuple(p.position for p in prefix if not p.positive),
                    connectivity=self.connectivity,
                )
            )
        return mask

    def export(self, directory, stem: str = "session") -> tuple[str, str]:
        """Write <stem>.nii (current mask, uint8) + <stem>.json (click log)."""
        mask_path = os.path.join(directory, f"{stem}.nii")
        json_path = os.path.join(directory, f"{stem}.json")
        nifti.write_nifti(
            LabelVolume(
                self.current.data.astype(np.uint8), self.volume.spacing, self.volume.origin
            ),
            mask_path,
        )
        doc = {
            "clicks": [{"xyz": list(p.position), "polarity": p.polarity} for p in self.clicks],
            "class": self.context.class_index,
        }
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1)
        return mask_path, json_path
