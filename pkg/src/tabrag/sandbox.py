"""Isolated subprocess execution of model-generated fact-expansion programs.

The program must define ``expand_facts(dataframe, patterns)`` returning a
list of strings; an optional ``extract_patterns(dataframe, source_facts)``
seeds the patterns.  The program runs under ``python -I`` in a scratch
directory against a read-only dump of the tables, with a wall-clock timeout
and an address-space cap.
"""

from __future__ import annotations

import json
import resource
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .tables import Table

DEFAULT_TIMEOUT_S = 5.0
DEFAULT_MEMORY_MB = 256

ENTRY_POINT = "expand_facts"

_DRIVER = """\
import json
import sys
from pathlib import Path

spec_dir = Path(sys.argv[1])
tables = json.loads((spec_dir / "tables.json").read_text(encoding="utf-8"))
facts = json.loads((spec_dir / "facts.json").read_text(encoding="utf-8"))
source = (spec_dir / "program.py").read_text(encoding="utf-8")

namespace = {}
exec(compile(source, "program.py", "exec"), namespace)
expand = namespace.get("expand_facts")
if expand is None:
    print("missing expand_facts entry point", file=sys.stderr)
    sys.exit(3)
extract = namespace.get("extract_patterns")

def frame(table):
    if "pandas" in source:
        try:
            import pandas as pd
            return pd.DataFrame(table["rows"], columns=table["headers"])
        except ImportError:
            pass
    return {h: [row[i] for row in table["rows"]] for i, h in enumerate(table["headers"])}

out = []
for table in tables:
    df = frame(table)
    patterns = extract(df, facts) if extract is not None else list(facts)
    result = expand(df, patterns)
    if not isinstance(result, list) or not all(isinstance(x, str) for x in result):
        print("expand_facts must return a list of strings", file=sys.stderr)
        sys.exit(4)
    out.extend(result)
json.dump(out, sys.stdout)
"""


class SandboxError(RuntimeError):
    pass


class SandboxTimeout(SandboxError):
    pass


@dataclass(frozen=True)
class ExpansionProgram:
    script_text: str
    runtime: str = "python3"

    def __post_init__(self):
        if ENTRY_POINT not in self.script_text:
            raise ValueError(f"program does not define {ENTRY_POINT!r}")


def extract_code_block(text: str) -> str:
    """The body of the first ```python block, or the raw text when unfenced."""
    marker = "```python"
    start = text.find(marker)
    if start < 0:
        marker = "```"
        start = text.find(marker)
        if start < 0:
            return text.strip()
    start += len(marker)
    end = text.find("```", start)
    if end < 0:
        end = len(text)
    return text[start:end].strip()


class SandboxExecutor:
    def __init__(
        self,
        python_cmd: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        memory_mb: int = DEFAULT_MEMORY_MB,
    ):
        self.python_cmd = python_cmd or sys.executable
        self.timeout_s = timeout_s
        self.memory_mb = memory_mb

    def run(
        self,
        program: ExpansionProgram,
        tables: Sequence[Table],
        seed_facts: Sequence[str],
    ) -> list[str]:
        with tempfile.TemporaryDirectory(prefix="tabrag-sandbox-") as scratch:
            scratch_path = Path(scratch)
            (scratch_path / "program.py").write_text(program.script_text, encoding="utf-8")
            (scratch_path / "tables.json").write_text(
                json.dumps(
                    [
                        {"title": t.title, "headers": list(t.headers), "rows": [list(r) for r in t.rows]}
                        for t in tables
                    ]
                ),
                encoding="utf-8",
            )
            (scratch_path / "facts.json").write_text(json.dumps(list(seed_facts)), encoding="utf-8")
            driver = scratch_path / "driver.py"
            driver.write_text(_DRIVER, encoding="utf-8")

            limit_bytes = self.memory_mb * 1024 * 1024

            def set_limits():
                resource.setrlimit(resource.RLIMIT_AS, (limit_bytes, limit_bytes))
                resource.setrlimit(resource.RLIMIT_NPROC, (64, 64))

            try:
                proc = subprocess.run(
                    [self.python_cmd, "-I", str(driver), str(scratch_path)],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                    cwd=scratch,
                    env={"PATH": "/usr/bin:/bin"},
                    preexec_fn=set_limits,
                )
            except subprocess.TimeoutExpired:
                raise SandboxTimeout(f"program exceeded {self.timeout_s}s wall clock")
            if proc.returncode != 0:
                raise SandboxError(
                    f"program exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            try:
                result = json.loads(proc.stdout)
            except json.JSONDecodeError as exc:
                raise SandboxError(f"program produced non-JSON output: {exc}") from exc
            if not isinstance(result, list) or not all(isinstance(x, str) for x in result):
                raise SandboxError("program output is not a list of strings")
            return result


def fallback_expand(tables: Sequence[Table]) -> list[str]:
    """Deterministic templated expansion: one fact per (row, column), keyed
    by the row's first cell."""
    facts = []
    for table in tables:
        if not table.headers:
            continue
        for row in table.rows:
            key = row[0]
            for header, cell in zip(table.headers, row):
                facts.append(f"In {table.title}, {header}={cell} for {key}")
    return facts
