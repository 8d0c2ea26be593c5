"""Plain check reports shared by the verification surfaces."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckLine:
    label: str
    ok: bool
    detail: str = ""

    def __str__(self) -> str:
        verdict = "pass" if self.ok else "FAIL"
        return f"{self.label}: {verdict}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class Report:
    lines: list[CheckLine] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(line.ok for line in self.lines)

    def add(self, label: str, ok: bool, detail: str = "") -> None:
        self.lines.append(CheckLine(label, ok, detail))

    def extend(self, other: "Report") -> None:
        self.lines.extend(other.lines)

    def first_failure(self) -> CheckLine | None:
        for line in self.lines:
            if not line.ok:
                return line
        return None

    def __str__(self) -> str:
        body = "\n".join(str(line) for line in self.lines)
        return body + ("\n" if body else "") + f"overall: {'pass' if self.ok else 'FAIL'}"
