"""Text templates with ``{{placeholder}}`` slots, one file per template."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_SLOT_RE = re.compile(r"\{\{(\w+)\}\}")


@lru_cache(maxsize=None)
def load(name: str) -> str:
    return (
        resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    )


def render(template_name: str, **values: str) -> str:
    """Substitute every slot; unknown slots are an error, extras ignored."""
    template = load(template_name)

    def fill(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"template {template_name!r} needs a value for {key!r}")
        return values[key]

    return _SLOT_RE.sub(fill, template)
