"""Bundled fixture data: a nine-code demonstration codebook."""

from __future__ import annotations

from importlib import resources

from ..codebook import Codebook, parse_codebook


def dubois_codebook() -> Codebook:
    """The bundled Du Bois characterization codebook (9 codes, 3 categories)."""
    data = resources.files(__package__).joinpath("dubois_codebook.json").read_bytes()
    return parse_codebook(data)
