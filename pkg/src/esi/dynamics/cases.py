"""Bundled network descriptions."""
from __future__ import annotations

import json
from importlib import resources


def available_cases() -> list[str]:
    root = resources.files(__package__) / "cases"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_case(name: str) -> dict:
    """Network description of a bundled case, as a fresh dict."""
    if name not in available_cases():
        raise KeyError(f"unknown case {name!r}; available: {available_cases()}")
    text = (resources.files(__package__) / "cases" / f"{name}.json").read_text()
    return json.loads(text)
