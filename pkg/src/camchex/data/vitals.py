"""Deterministic text serialization of vital signs.

Absent fields render as the literal token ``NA`` so the text pathway stays
uniform for partially missing records; an entirely missing vitals record is
handled upstream by the learned placeholder block instead.
"""

from __future__ import annotations

from .types import Gender, VitalSigns

_TEMPLATE = (
    "Temperature: {temperature} | Heart rate: {heart_rate} | "
    "Respiratory rate: {respiratory_rate} | O2 Saturation: {o2_saturation} | "
    "Systolic BP: {systolic_bp} | Diastolic BP: {diastolic_bp} | Gender: {gender}"
)


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.1f}"


def render_vitals_text(vitals: VitalSigns) -> str:
    """Serialize a vitals record into the fixed one-decimal pipe format."""
    gender = "NA" if vitals.gender is Gender.UNKNOWN else vitals.gender.value
    return _TEMPLATE.format(
        temperature=_fmt(vitals.temperature),
        heart_rate=_fmt(vitals.heart_rate),
        respiratory_rate=_fmt(vitals.respiratory_rate),
        o2_saturation=_fmt(vitals.o2_saturation),
        systolic_bp=_fmt(vitals.systolic_bp),
        diastolic_bp=_fmt(vitals.diastolic_bp),
        gender=gender,
    )
