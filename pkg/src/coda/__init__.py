"""coda: a workbench for machine-assisted qualitative coding.

Renders codebooks into chat prompts, collects and parses model decisions,
scores them against a human gold standard, and supports the definition /
evaluation / refinement cycle through a CLI and a local review service.
"""

__version__ = "0.1.0"
