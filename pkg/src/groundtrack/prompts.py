"""Prompt template loading and rendering.

Wording lives in versioned template files under groundtrack/prompts/, not in
code, so every model sees identical prompts and experiments stay comparable.
Placeholders use {{name}} syntax.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")

TEMPLATE_NAMES = ("describe", "attribute", "validate", "define")


def load_template(name: str, override_path: str | Path | None = None) -> str:
    if override_path is not None:
        return Path(override_path).read_text()
    return resources.files("groundtrack").joinpath(f"prompts/{name}.txt").read_text()


def render(template: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"template placeholder {{{{{key}}}}} has no value")
        return str(values[key])

    return _PLACEHOLDER_RE.sub(sub, template)
