"""Run artifact plumbing: atomic writes, CSV emission, config parsing, and
run manifests.

Every experiment directory is anchored by a `manifest.txt` holding the exact
parameter set (17-significant-digit floats), the code version, and content
hashes of any input files, so a run can be reproduced bit-for-bit from its
manifest alone.  All writers go through write-then-rename so a crash never
leaves a half-written artifact behind.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "write_csv",
    "sha256_bytes",
    "sha256_file",
    "fmt_value",
    "parse_config_text",
    "parse_config_file",
    "apply_overrides",
    "RunManifest",
]


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to `path` via a same-directory temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def fmt_value(value) -> str:
    """Canonical string form: floats at 17 significant digits (round-trip
    exact), everything else via str."""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header: str, rows, comments=()) -> None:
    """Emit a CSV atomically: optional # comment lines, one header line, then
    rows of values formatted with `fmt_value`."""
    lines = [f"# {c}" for c in comments]
    lines.append(header)
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_config_text(text: str) -> dict:
    """key=value lines; blank lines and #-comments ignored; later keys win."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_config_file(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def apply_overrides(config: dict, assignments) -> dict:
    """Overlay command-line key=value assignments on a config dict."""
    merged = dict(config)
    for item in assignments or ():
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    return merged


@dataclass
class RunManifest:
    """Flat key=value record that pins down one run completely.

    Conventions: floats are stored at 17 significant digits; input files are
    recorded as `hash.<name>` entries with their sha256; `version` carries the
    package version.  Two runs with identical manifests must produce
    bit-identical snapshot artifacts.
    """

    entries: dict = field(default_factory=dict)

    def set(self, key: str, value) -> None:
        self.entries[str(key)] = fmt_value(value)

    def get(self, key: str, default=None) -> str:
        return self.entries.get(key, default)

    def text(self) -> str:
        lines = ["# run manifest"]
        for key in sorted(self.entries):
            lines.append(f"{key}={self.entries[key]}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.text())

    def sha(self) -> str:
        return sha256_bytes(self.text().encode())

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(entries=parse_config_file(path))
