"""Evaluation harness: score answers against labeled sources and keywords.

Cases carry the chunk ids an answer should cite and keywords its text should
contain; metrics are pure set arithmetic over (answer, case) so re-running on
stored answers reproduces the report exactly. Reports are written as JSON,
printed as an aligned text table, and rendered as figures alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .query import Answer, QueryEngine


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    question: str
    expected_chunk_ids: frozenset[str]
    expected_keywords: tuple[str, ...]
    expected_risk_class: str | None = None

    @classmethod
    def from_record(cls, rec: dict) -> "EvalCase":
        keywords = tuple(rec["expected_keywords"])
        if not keywords:
            raise EvalError(f"case {rec.get('case_id')!r} has no keywords")
        risk = rec.get("expected_risk_class")
        if risk is not None and risk not in ("unacceptable", "high", "limited", "minimal"):
            raise EvalError(f"case {rec.get('case_id')!r} has invalid risk class {risk!r}")
        return cls(
            case_id=rec["case_id"],
            question=rec["question"],
            expected_chunk_ids=frozenset(rec["expected_chunk_ids"]),
            expected_keywords=keywords,
            expected_risk_class=risk,
        )


def load_cases(path: str | Path) -> list[EvalCase]:
    cases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            cases.append(EvalCase.from_record(json.loads(line)))
    return cases


@dataclass
class CaseResult:
    case_id: str
    hit: bool
    citation_precision: float
    citation_recall: float
    keyword_coverage: float
    tokens_used: int
    cited: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "hit": self.hit,
            "citation_precision": self.citation_precision,
            "citation_recall": self.citation_recall,
            "keyword_coverage": self.keyword_coverage,
            "tokens_used": self.tokens_used,
            "cited": self.cited,
        }


@dataclass
class EvalReport:
    mode: str
    results: list[CaseResult] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def aggregates(self) -> dict:
        n = len(self.results)
        if n == 0:
            return {"cases": 0, "hit_rate": 0.0, "citation_precision": 0.0,
                    "citation_recall": 0.0, "keyword_coverage": 0.0,
                    "tokens_total": 0, "tokens_mean": 0.0}
        return {
            "cases": n,
            "hit_rate": sum(r.hit for r in self.results) / n,
            "citation_precision": sum(r.citation_precision for r in self.results) / n,
            "citation_recall": sum(r.citation_recall for r in self.results) / n,
            "keyword_coverage": sum(r.keyword_coverage for r in self.results) / n,
            "tokens_total": sum(r.tokens_used for r in self.results),
            "tokens_mean": sum(r.tokens_used for r in self.results) / n,
        }

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "aggregates": self.aggregates,
            "per_case": [r.to_record() for r in self.results],
            "skipped": self.skipped,
        }


def score_answer(case: EvalCase, answer: Answer) -> CaseResult:
    """Metrics for one answered case.

    Precision of an empty citation set is recorded as 0 so aggregates stay
    defined. Hit means the answer cited at least one expected chunk.
    """
    cited = {c["ref_id"] for c in answer.citations}
    overlap = case.expected_chunk_ids & cited
    precision = len(overlap) / len(cited) if cited else 0.0
    recall = len(overlap) / len(case.expected_chunk_ids) if case.expected_chunk_ids else 0.0
    text = answer.text.casefold()
    coverage = sum(1 for kw in case.expected_keywords if kw.casefold() in text)
    coverage /= len(case.expected_keywords)
    tokens = sum(stage.get("total_tokens", 0) for stage in answer.trace)
    return CaseResult(
        case_id=case.case_id,
        hit=bool(overlap),
        citation_precision=precision,
        citation_recall=recall,
        keyword_coverage=coverage,
        tokens_used=tokens,
        cited=sorted(cited),
    )


def run_eval(cases: list[EvalCase], mode: str, engine: QueryEngine,
             seed: int = 0, budget_tokens: int = 6000,
             map_chunk_tokens: int = 2000, k: int = 5) -> EvalReport:
    """Evaluate every case in ``mode``; cases whose expected chunk ids do not
    resolve in the corpus are skipped with a diagnostic entry."""
    report = EvalReport(mode=mode)
    for case in cases:
        if case.expected_chunk_ids and not case.expected_chunk_ids <= set(engine.chunks):
            report.skipped.append(case.case_id)
            continue
        answer = engine.answer(case.question, mode, k=k, seed=seed,
                               map_chunk_tokens=map_chunk_tokens,
                               budget_tokens=budget_tokens)
        report.results.append(score_answer(case, answer))
    return report


def compare_modes(cases: list[EvalCase], modes: list[str], engine: QueryEngine,
                  seed: int = 0, budget_tokens: int = 6000,
                  map_chunk_tokens: int = 2000, k: int = 5) -> dict[str, EvalReport]:
    return {mode: run_eval(cases, mode, engine, seed=seed, budget_tokens=budget_tokens,
                           map_chunk_tokens=map_chunk_tokens, k=k)
            for mode in modes}


_COLUMNS = ("mode", "cases", "hit_rate", "precision", "recall", "coverage",
            "tokens_total", "tokens_mean")


def format_table(reports: dict[str, EvalReport]) -> str:
    """Aligned-column comparison of per-mode aggregates."""
    rows = [_COLUMNS]
    for mode in reports:
        agg = reports[mode].aggregates
        rows.append((
            mode, str(agg["cases"]), f"{agg['hit_rate']:.3f}",
            f"{agg['citation_precision']:.3f}", f"{agg['citation_recall']:.3f}",
            f"{agg['keyword_coverage']:.3f}", str(agg["tokens_total"]),
            f"{agg['tokens_mean']:.1f}",
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(_COLUMNS))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(row))))
    return "\n".join(lines)


def write_report(reports: dict[str, EvalReport], path: str | Path) -> None:
    payload = {mode: report.to_record() for mode, report in reports.items()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
