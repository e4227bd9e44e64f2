"""Loading and rendering of the plain-text prompt assets."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def _builtin(name: str) -> str:
    return resources.files("hdlrefine").joinpath("prompts", f"{name}.txt").read_text()


def load_template(name: str, directory: Optional[Path] = None) -> str:
    """Return template ``name``; a file in ``directory`` overrides the built-in one."""
    if directory is not None:
        candidate = Path(directory) / f"{name}.txt"
        if candidate.exists():
            return candidate.read_text()
    return _builtin(name)


def render(template: str, **values: object) -> str:
    """Substitute ``{name}`` placeholders.

    Unknown placeholders and other braces are left untouched, so HDL text
    with concatenation braces is safe both in templates and in values.
    """

    def substitute(match: re.Match) -> str:
        key = match.group(1)
        return str(values[key]) if key in values else match.group(0)

    return _PLACEHOLDER_RE.sub(substitute, template)
