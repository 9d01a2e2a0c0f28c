"""Small file helpers shared by the I/O layers."""

from __future__ import annotations

import contextlib
import os
import tempfile
from pathlib import Path


@contextlib.contextmanager
def atomic_open(path, mode: str = "w", encoding: str | None = "utf-8"):
    """Open a temporary sibling of ``path`` and rename it into place on success.

    Interrupted writers leave the previous file (or nothing) behind, never a
    truncated one.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        if "b" in mode:
            f = os.fdopen(fd, mode)
        else:
            f = os.fdopen(fd, mode, encoding=encoding, newline="")
        with f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


class LineDecodeError(ValueError):
    def __init__(self, path, line: int):
        self.path = path
        self.line = line
        super().__init__(f"{path}: line {line}: invalid UTF-8")


def read_lines(path) -> list[str]:
    """Read a UTF-8 text file as lines with trailing CR/LF removed."""
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw[: e.start].count(b"\n") + 1
        raise LineDecodeError(path, line) from None
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return [ln.rstrip("\r") for ln in lines]


def write_lines(path, lines) -> None:
    with atomic_open(path) as f:
        for ln in lines:
            f.write(ln)
            f.write("\n")
