"""Plate string grammar shared by the renderer, the reader and the registry."""

from __future__ import annotations

import re

# two letters, two digits, one or two letters, four digits
PLATE_PATTERN = re.compile(r"^[A-Z]{2}[0-9]{2}[A-Z]{1,2}[0-9]{4}$")

PHONE_PATTERN = re.compile(r"^\+[1-9][0-9]{6,14}$")


def valid_plate_text(text: str) -> bool:
    return PLATE_PATTERN.match(text) is not None


def valid_phone(phone: str) -> bool:
    return PHONE_PATTERN.match(phone) is not None


def position_kinds(length: int) -> str | None:
    """Letter/digit layout for a given plate length, None if impossible."""
    if length == 9:
        return "LLDDLDDDD"
    if length == 10:
        return "LLDDLLDDDD"
    return None
