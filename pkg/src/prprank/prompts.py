"""
Prompt templates for single-token pairwise comparison.

A template names the two answers it expects (``A``/``B`` by default); the
first label always means the passage rendered into ``{doc1}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from prprank.base import PromptTemplateError

PLACEHOLDERS = ("query", "doc1", "doc2")
DEFAULT_TEMPLATE_NAME = "Final Version"

_PLACEHOLDER_RE = re.compile(r"\{(query|doc1|doc2)\}")
_ASCII_WHITESPACE = " \t\n\r\x0b\x0c"


class Slot(str, Enum):
    """Which prompt slot an answer points at."""

    A = "A"
    B = "B"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    expected_labels: Tuple[str, str] = ("A", "B")

    def __post_init__(self):
        object.__setattr__(self, "expected_labels", tuple(self.expected_labels))
        if not self.name:
            raise PromptTemplateError("template name must be non-empty")
        for placeholder in PLACEHOLDERS:
            count = self.body.count("{" + placeholder + "}")
            if count != 1:
                raise PromptTemplateError(
                    f"template {self.name!r} must contain {{{placeholder}}} exactly once, found {count}"
                )
        if len(self.expected_labels) != 2:
            raise PromptTemplateError(f"template {self.name!r} needs exactly two labels")
        normalized = [normalize_response(label) for label in self.expected_labels]
        if any(len(label) != 1 for label in normalized):
            raise PromptTemplateError(
                f"template {self.name!r} labels must be single characters: {self.expected_labels}"
            )
        if normalized[0] == normalized[1]:
            raise PromptTemplateError(f"template {self.name!r} labels must differ")

    def render(self, query: str, doc1: str, doc2: str) -> str:
        """Substitute placeholders verbatim in a single pass.

        Braces inside the query or passages are left untouched.
        """
        values = {"query": query, "doc1": doc1, "doc2": doc2}
        return _PLACEHOLDER_RE.sub(lambda match: values[match.group(1)], self.body)

    def parse(self, response: str) -> Slot:
        """Map a raw single-token response to a slot; anything else is undecided."""
        token = normalize_response(response)
        first, second = (normalize_response(label) for label in self.expected_labels)
        if token == first:
            return Slot.A
        if token == second:
            return Slot.B
        return Slot.UNDECIDED

    def label_for(self, slot: Slot) -> str:
        if slot == Slot.A:
            return self.expected_labels[0]
        if slot == Slot.B:
            return self.expected_labels[1]
        raise ValueError("undecided has no label")

    @classmethod
    def from_dict(cls, data: Dict) -> "PromptTemplate":
        try:
            return cls(
                name=data["name"],
                body=data["body"],
                expected_labels=tuple(data.get("expected_labels", ("A", "B"))),
            )
        except KeyError as e:
            raise PromptTemplateError(f"template is missing field {e}") from e


def normalize_response(text: str) -> str:
    return text.strip(_ASCII_WHITESPACE).casefold()


def load_templates(path: Optional[Union[str, Path]] = None) -> List[PromptTemplate]:
    """Load templates from a JSON array, or the bundled set when no path is given."""
    try:
        if path is None:
            raw = resources.files("prprank").joinpath("templates.json").read_text("utf-8")
        else:
            raw = Path(path).read_text(encoding="utf-8")
        data = json.loads(raw)
    except (OSError, json.JSONDecodeError) as e:
        raise PromptTemplateError(f"cannot read templates from {path or 'package'}: {e}") from e
    if not isinstance(data, list) or not data:
        raise PromptTemplateError("template file must be a non-empty JSON array")
    templates = [PromptTemplate.from_dict(item) for item in data]
    names = [t.name for t in templates]
    if len(set(names)) != len(names):
        raise PromptTemplateError(f"duplicate template names in {names}")
    return templates


def get_template(name: str, templates: Optional[List[PromptTemplate]] = None) -> PromptTemplate:
    for template in templates if templates is not None else load_templates():
        if template.name == name:
            return template
    raise PromptTemplateError(f"unknown prompt template {name!r}")
