"""Prompt template assets, one file per model role.

Templates are plain text with ``$name`` placeholders (string.Template), so
operators can edit them without touching code or fighting brace escaping.
A custom directory overrides the packaged defaults per role.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template

from .llm_gateway import ROLE_TAGS

_cache: dict[str, dict[str, Template]] = {}


def _load_packaged(role: str) -> Template:
    text = resources.files("faqpilot").joinpath(f"templates/{role}.txt").read_text("utf-8")
    return Template(text)


def load_templates(templates_dir: str | Path | None = None) -> dict[str, Template]:
    """Templates for every role, overlaying ``templates_dir`` when given."""
    key = str(templates_dir) if templates_dir else ""
    if key in _cache:
        return _cache[key]
    templates = {role: _load_packaged(role) for role in ROLE_TAGS}
    if templates_dir is not None:
        base = Path(templates_dir)
        for role in ROLE_TAGS:
            override = base / f"{role}.txt"
            if override.exists():
                templates[role] = Template(override.read_text("utf-8"))
    _cache[key] = templates
    return templates


def render(role: str, templates_dir: str | Path | None = None, **fields: str) -> str:
    return load_templates(templates_dir)[role].substitute(**fields)
