"""File-backed workspace shared by the CLI and the review service.

Layout under the workspace root:

    codebooks/<id>/versions.json   ordered list of version digests
    codebooks/<id>/<digest>.json   one immutable codebook document per version
    runs/<run_id>.json             immutable run records
    cache/                         completion cache
    corpus.jsonl                   the passage corpus the service codes
    gold.csv                       the gold-standard labels

Dropping a plain codebooks/<id>.json file into the workspace seeds that
codebook's version store on first access. All writes are create-new-then-
rename so concurrent readers never observe partial files; versions and runs
are append-only.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import replace
from pathlib import Path

from .codebook import Codebook, CodebookError, parse_codebook, serialize_codebook
from .corpus import GoldLabels, Passage, load_gold, load_passages_jsonl
from .experiment import RunRecord, run_from_json, run_to_json

__all__ = ["Workspace", "WorkspaceError", "UnknownResourceError", "NoChangeError"]

WORKSPACE_ENV = "CODA_WORKSPACE"
DEFAULT_WORKSPACE = ".coda-workspace"


class WorkspaceError(Exception):
    pass


class UnknownResourceError(WorkspaceError):
    """A codebook, version, run, code, or passage that does not exist."""


class NoChangeError(WorkspaceError):
    """An edit that would produce a byte-identical version."""


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class Workspace:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root if root is not None else os.environ.get(WORKSPACE_ENV, DEFAULT_WORKSPACE))
        self.codebooks_dir = self.root / "codebooks"
        self.runs_dir = self.root / "runs"
        self.cache_dir = self.root / "cache"
        self.run_lock = threading.Lock()  # serializes run creation

    # -- codebooks ----------------------------------------------------------

    def _cb_dir(self, cb_id: str) -> Path:
        return self.codebooks_dir / cb_id

    def _versions_file(self, cb_id: str) -> Path:
        return self._cb_dir(cb_id) / "versions.json"

    def _maybe_seed(self, cb_id: str) -> None:
        """Materialize the version store from a dropped-in <id>.json file."""
        if self._versions_file(cb_id).exists():
            return
        seed = self.codebooks_dir / f"{cb_id}.json"
        if seed.exists():
            self.import_codebook(cb_id, seed.read_bytes())

    def import_codebook(self, cb_id: str, document: bytes) -> Codebook:
        cb = parse_codebook(document)
        self._append_version(cb_id, cb)
        return cb

    def _append_version(self, cb_id: str, cb: Codebook) -> None:
        versions = []
        if self._versions_file(cb_id).exists():
            versions = json.loads(self._versions_file(cb_id).read_text(encoding="utf-8"))
        _atomic_write(self._cb_dir(cb_id) / f"{cb.version}.json", serialize_codebook(cb))
        if cb.version not in versions:
            versions.append(cb.version)
            _atomic_write(
                self._versions_file(cb_id),
                (json.dumps(versions, indent=2) + "\n").encode("utf-8"),
            )

    def codebook_ids(self) -> list[str]:
        if not self.codebooks_dir.exists():
            return []
        ids = {p.name for p in self.codebooks_dir.iterdir() if p.is_dir()}
        ids |= {p.stem for p in self.codebooks_dir.glob("*.json")}
        return sorted(ids)

    def codebook_versions(self, cb_id: str) -> list[str]:
        self._maybe_seed(cb_id)
        path = self._versions_file(cb_id)
        if not path.exists():
            raise UnknownResourceError(f"unknown codebook {cb_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def load_codebook(self, cb_id: str, version: str | None = None) -> Codebook:
        versions = self.codebook_versions(cb_id)
        if version is None:
            version = versions[-1]
        elif version not in versions:
            raise UnknownResourceError(f"unknown version {version!r} of codebook {cb_id!r}")
        data = (self._cb_dir(cb_id) / f"{version}.json").read_bytes()
        return parse_codebook(data)

    def update_code(self, cb_id: str, code_id: str, fields: dict) -> tuple[str, str]:
        """Create a new codebook version with one code edited.

        Returns (old_version, new_version). Raises UnknownResourceError for a
        missing codebook/code, NoChangeError for a no-op edit, CodebookError
        when the edited codebook fails validation.
        """
        editable = {"title", "definition", "category", "notes"}
        unknown_fields = set(fields) - editable
        if unknown_fields:
            raise CodebookError(f"uneditable fields: {sorted(unknown_fields)}")
        cb = self.load_codebook(cb_id)
        code = cb.get(code_id)
        if code is None:
            raise UnknownResourceError(f"unknown code {code_id!r} in codebook {cb_id!r}")
        updated = replace(code, **fields)
        if updated == code:
            raise NoChangeError(f"edit leaves code {code_id!r} unchanged")
        codes = tuple(updated if c.id == code_id else c for c in cb.codes)
        candidate = Codebook(name=cb.name, preamble=cb.preamble, codes=codes).with_version()
        # Re-parse through the document path so every invariant is enforced.
        candidate = parse_codebook(serialize_codebook(candidate))
        self._append_version(cb_id, candidate)
        return cb.version, candidate.version

    # -- corpus and gold ----------------------------------------------------

    def load_corpus(self) -> list[Passage]:
        path = self.root / "corpus.jsonl"
        if not path.exists():
            raise UnknownResourceError(f"no corpus.jsonl in workspace {self.root}")
        return load_passages_jsonl(path.read_bytes())

    def load_gold(self) -> GoldLabels:
        path = self.root / "gold.csv"
        if not path.exists():
            raise UnknownResourceError(f"no gold.csv in workspace {self.root}")
        return load_gold(path.read_bytes())

    # -- runs ----------------------------------------------------------------

    def save(self, record: RunRecord) -> Path:
        path = self.runs_dir / f"{record.run_id}.json"
        _atomic_write(path, run_to_json(record).encode("utf-8"))
        return path

    def load_run(self, run_id: str) -> RunRecord:
        path = self.runs_dir / f"{run_id}.json"
        if not path.exists():
            raise UnknownResourceError(f"unknown run {run_id!r}")
        return run_from_json(path.read_bytes())

    def list_runs(self) -> list[RunRecord]:
        """Runs ordered by creation time (file mtime, then id)."""
        if not self.runs_dir.exists():
            return []
        paths = sorted(
            self.runs_dir.glob("*.json"), key=lambda p: (p.stat().st_mtime_ns, p.name)
        )
        return [run_from_json(p.read_bytes()) for p in paths]
