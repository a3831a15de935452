"""Predictor contract and the deterministic reference predictors.

A predictor maps a patch plus a prompt to a probability patch in [0, 1].
Click positions are passed in global voxel coordinates; the patch carries
its own origin. Predictors either tolerate concurrent patch calls or set
``concurrent_safe = False`` so the engine serializes them.
"""

from __future__ import annotations

import base64
import json
import subprocess
import threading
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import ndimage

from .components import ComponentMap, connected_components, structuring_element
from .errors import ContractError, UnsupportedCapabilityError
from .grid import BinaryMask, LabelVolume, Patch, crop_array
from .prompts import ClassPrompt, PointPrompt


@runtime_checkable
class Predictor(Protocol):
    concurrent_safe: bool

    def auto(self, patch: Patch, prompt: ClassPrompt) -> np.ndarray: ...

    def interactive(self, patch: Patch, points: Sequence[PointPrompt]) -> np.ndarray: ...


class ConstantPredictor:
    """Returns a fixed probability everywhere; handy for wiring tests."""

    concurrent_safe = True

    def __init__(self, probability: float):
        if not 0.0 <= probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")
        self.probability = float(probability)

    def auto(self, patch: Patch, prompt: ClassPrompt) -> np.ndarray:
        return np.full(patch.size, self.probability, dtype=np.float32)

    def interactive(self, patch: Patch, points: Sequence[PointPrompt]) -> np.ndarray:
        return np.full(patch.size, self.probability, dtype=np.float32)


class OraclePredictor:
    """Ground-truth-backed predictor for tests and simulated sessions.

    auto: 1.0 exactly where the ground truth equals the prompted class.
    interactive: the union of ground-truth components (of the class under
    the first positive click) that contain a positive click, minus
    components containing a negative click.
    """

    concurrent_safe = True

    def __init__(self, gt: LabelVolume | BinaryMask, connectivity: int = 26):
        if isinstance(gt, BinaryMask):
            gt = LabelVolume(gt.data.astype(np.uint8))
        self.gt = gt
        self.connectivity = connectivity
        self._components: dict[int, ComponentMap] = {}
        self._lock = threading.Lock()

    def _class_components(self, class_index: int) -> ComponentMap:
        with self._lock:
            cmap = self._components.get(class_index)
            if cmap is None:
                cmap = connected_components(
                    BinaryMask(self.gt.data == class_index), self.connectivity
                )
                self._components[class_index] = cmap
            return cmap

    def _check_point(self, p: PointPrompt):
        for c, d in zip(p.position, self.gt.dims):
            if not 0 <= c < d:
                raise ValueError(f"point {p.position} outside dims {self.gt.dims}")

    def auto(self, patch: Patch, prompt: ClassPrompt) -> np.ndarray:
        region = self.gt.data == prompt.class_index
        window, _ = crop_array(region, patch.origin, patch.size)
        return window.astype(np.float32)

    def interactive(self, patch: Patch, points: Sequence[PointPrompt]) -> np.ndarray:
        for p in points:
            self._check_point(p)
        positives = [p for p in points if p.positive]
        if not positives:
            return np.zeros(patch.size, dtype=np.float32)
        class_index = int(self.gt.data[positives[0].position])
        if class_index == 0:
            return np.zeros(patch.size, dtype=np.float32)
        cmap = self._class_components(class_index)
        selected = np.zeros(cmap.count + 1, dtype=bool)
        for p in positives:
            selected[cmap.labels[p.position]] = True
        for p in points:
            if not p.positive:
                selected[cmap.labels[p.position]] = False
        selected[0] = False
        region = selected[cmap.labels]
        window, _ = crop_array(region, patch.origin, patch.size)
        return window.astype(np.float32)


class RegionGrowPredictor:
    """Intensity flood fill from clicks; interactive-only baseline.

    Positive clicks grow over voxels within ``tolerance`` of the seed
    intensity (inside the patch, padding excluded); regions grown the same
    way from negative clicks are subtracted.
    """

    concurrent_safe = True

    def __init__(self, tolerance: float = 50.0, connectivity: int = 26):
        if tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        self.tolerance = float(tolerance)
        self.connectivity = connectivity

    def auto(self, patch: Patch, prompt: ClassPrompt) -> np.ndarray:
        raise UnsupportedCapabilityError("region-grow predictor has no automatic mode")

    def _grow(self, patch: Patch, local: tuple[int, int, int]) -> np.ndarray:
        seed_value = float(patch.data[local])
        eligible = (np.abs(patch.data.astype(np.float64) - seed_value) <= self.tolerance) & ~patch.pad_mask
        labeled, _ = ndimage.label(eligible, structure=structuring_element(self.connectivity))
        seed_label = labeled[local]
        if seed_label == 0:
            return np.zeros(patch.size, dtype=bool)
        return labeled == seed_label

    def interactive(self, patch: Patch, points: Sequence[PointPrompt]) -> np.ndarray:
        grown_pos = np.zeros(patch.size, dtype=bool)
        grown_neg = np.zeros(patch.size, dtype=bool)
        for p in points:
            local = tuple(c - o for c, o in zip(p.position, patch.origin))
            if any(not 0 <= c < s for c, s in zip(local, patch.size)):
                continue
            if patch.pad_mask[local]:
                continue
            target = grown_pos if p.positive else grown_neg
            target |= self._grow(patch, local)
        return (grown_pos & ~grown_neg).astype(np.float32)


class ExternalPredictor:
    """Predictor running as a child process speaking line-delimited JSON.

    Request: ``{"op": "auto"|"interactive", "patch": {"size": [px,py,pz],
    "origin": [x,y,z], "data": "<b64 float32 x-fastest>"},
    "prompt": {"class_index": i} | {"points": [{"xyz": [x,y,z],
    "polarity": "pos"|"neg", "context": "...", "class_index": i|null}]}}``

    Response: ``{"prob": "<b64 float32 x-fastest>"}`` or ``{"error": "..."}``.
    """

    concurrent_safe = False

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _roundtrip(self, request: dict, size) -> np.ndarray:
        with self._lock:
            if self._proc.poll() is not None:
                raise ContractError(f"external predictor {self.command} exited")
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise ContractError(f"external predictor {self.command} closed its output")
        reply = json.loads(line)
        if "error" in reply:
            raise ContractError(f"external predictor error: {reply['error']}")
        raw = base64.b64decode(reply["prob"])
        prob = np.frombuffer(raw, dtype="<f4")
        if prob.size != int(np.prod(size)):
            raise ContractError(
                f"external predictor returned {prob.size} values, expected {int(np.prod(size))}"
            )
        return prob.reshape(size, order="F")

    def _patch_payload(self, patch: Patch) -> dict:
        data = patch.data.astype("<f4", copy=False)
        return {
            "size": list(patch.size),
            "origin": list(patch.origin),
            "data": base64.b64encode(data.tobytes(order="F")).decode("ascii"),
        }

    def auto(self, patch: Patch, prompt: ClassPrompt) -> np.ndarray:
        request = {
            "op": "auto",
            "patch": self._patch_payload(patch),
            "prompt": {"class_index": prompt.class_index},
        }
        return self._roundtrip(request, patch.size)

    def interactive(self, patch: Patch, points: Sequence[PointPrompt]) -> np.ndarray:
        request = {
            "op": "interactive",
            "patch": self._patch_payload(patch),
            "prompt": {
                "points": [
                    {
                        "xyz": list(p.position),
                        "polarity": p.polarity,
                        "context": p.context.kind,
                        "class_index": p.context.class_index,
                    }
                    for p in points
                ]
            },
        }
        return self._roundtrip(request, patch.size)


def resolve_predictor(
    name: str,
    gt: LabelVolume | BinaryMask | None = None,
    tolerance: float = 50.0,
    external_commands: dict[str, Sequence[str]] | None = None,
):
    """Instantiate a predictor from its registered name."""
    if name == "region_grow":
        return RegionGrowPredictor(tolerance=tolerance)
    if name == "oracle":
        if gt is None:
            raise ValueError("oracle predictor requires ground-truth labels")
        return OraclePredictor(gt)
    if name.startswith("constant:"):
        return ConstantPredictor(float(name.split(":", 1)[1]))
    if name.startswith("external:"):
        key = name.split(":", 1)[1]
        commands = external_commands or {}
        if key in commands:
            return ExternalPredictor(commands[key])
        # fall back to treating the suffix as a shell-style command line
        import shlex

        cmd = shlex.split(key)
        if not cmd:
            raise ValueError(f"no external predictor named {key!r}")
        return ExternalPredictor(cmd)
    raise ValueError(f"unknown predictor {name!r}")
