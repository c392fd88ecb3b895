"""Base class for result dataclasses with provenance tracking.

Results record, next to selected fields, where the value came from and how
it was obtained (e.g. alpha taken from the config vs. estimated on probe
contexts with oracle access). to_dict() flattens this into `<field>_source`
and `<field>_method` keys next to the value.
"""

from dataclasses import fields
from typing import Any

import numpy as np


def plain(value: Any) -> Any:
    """Convert numpy scalars/arrays (possibly nested) into JSON-friendly values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [plain(v) for v in value]
    return value


class ReportBase:
    """Mixin class for result dataclasses.

    Provides:
    - add_metadata() for tracking where a field's value came from
    - to_dict() that converts the dataclass to a dict with provenance keys

    Usage:
        @dataclass
        class MyReport(ReportBase):
            alpha: float
            _source: dict[str, str] = field(default_factory=dict)
            _method: dict[str, str] = field(default_factory=dict)

            def _convert_complex_field(self, key: str, value: Any) -> tuple[bool, Any]:
                if key == "trials":
                    return True, [trial.to_dict() for trial in value]
                return False, None
    """

    _source: dict[str, str]
    _method: dict[str, str]

    def add_metadata(self, field_name: str, source: str, method: str) -> None:
        """Record provenance for a field.

        Args:
            field_name: Name of the field
            source: Where the value came from (e.g. "config", "probe-estimate")
            method: How it was obtained (e.g. "compute_alpha over 10000 probes")
        """
        self._source[field_name] = source
        self._method[field_name] = method

    def _convert_complex_field(self, key: str, value: Any) -> tuple[bool, Any]:  # noqa: ARG002
        """Convert a complex field to a serializable format.

        Subclasses override this for nested result types.

        Returns:
            Tuple of (handled, converted_value)
        """
        return False, None

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary with provenance keys.

        None fields, private fields and fields declared with
        metadata={"report": False} are skipped.
        """
        result: dict[str, Any] = {}

        for fld in fields(self):  # type: ignore[arg-type]
            key = fld.name
            if key.startswith("_") or not fld.metadata.get("report", True):
                continue

            value = getattr(self, key)
            if value is None:
                continue

            handled, converted = self._convert_complex_field(key, value)
            result[key] = converted if handled else plain(value)

            if key in self._source:
                result[f"{key}_source"] = self._source[key]
            if key in self._method:
                result[f"{key}_method"] = self._method[key]

        return result
