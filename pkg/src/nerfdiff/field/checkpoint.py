from __future__ import annotations

from nerfdiff.field.model import RadianceField
from nerfdiff.numerics import OptimState, load_arrays, save_arrays


def save_field(path, field: RadianceField, state: OptimState | None = None) -> None:
    arrays = dict(field.to_arrays())
    if state is not None:
        arrays.update(state.to_arrays())
    save_arrays(path, arrays)


def load_field(path) -> tuple[RadianceField, OptimState | None]:
    arrays = load_arrays(path)
    state = OptimState.from_arrays(arrays) if any(k.startswith("adam.") for k in arrays) else None
    return RadianceField.from_arrays(arrays), state
