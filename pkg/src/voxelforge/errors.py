"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all voxelforge errors."""


class NiftiFormatError(EngineError):
    """Malformed or truncated NIfTI-1 file."""


class UnsupportedDatatypeError(EngineError):
    """NIfTI datatype code outside the supported set."""


class DimensionalityError(EngineError):
    """File does not describe a 3D volume."""


class MappingError(EngineError):
    """A label value has no entry in the requested dataset map."""

    def __init__(self, value: int, dataset_id: str):
        self.value = int(value)
        self.dataset_id = dataset_id
        super().__init__(f"label value {value} has no mapping for dataset '{dataset_id}'")


class ContractError(EngineError):
    """A pluggable component (predictor, extractor) violated its contract."""


class UnsupportedCapabilityError(EngineError):
    """Predictor does not implement the requested operation."""


class NoSampleError(EngineError):
    """Sampler was given nothing to sample from."""


class StateError(EngineError):
    """Operation invalid in the current session state (e.g. undo on empty history)."""
