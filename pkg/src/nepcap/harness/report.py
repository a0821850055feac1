"""Fixed-width comparison table of grid results and published reference scores."""

import csv
import io
from dataclasses import dataclass
from importlib import resources

BASELINE_NOTE = "reference (published, not reproduced)"
COLUMNS = ("Model", "Hidden dim.", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "Note")


@dataclass(frozen=True)
class Baseline:
    model: str
    hidden_dim: int
    bleu: dict
    meteor: float


def load_baselines(text=None):
    """Parse the packaged baseline table (or ``text`` in the same TSV layout)."""
    if text is None:
        text = resources.files("nepcap").joinpath("data/baselines.tsv").read_text(encoding="utf-8")
    rows = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    out = []
    for row in csv.DictReader(io.StringIO("\n".join(rows)), delimiter="\t"):
        out.append(
            Baseline(
                row["model"],
                int(row["hidden_dim"]),
                {n: float(row[f"bleu{n}"]) for n in range(1, 5)},
                float(row["meteor"]),
            )
        )
    return out


def _fmt(x):
    return f"{x:.2f}"


def _sort_key(record):
    return (-record.report.bleu[4], -record.report.meteor, record.label)


def render_report(records, baselines=None):
    """Render ``records`` sorted by BLEU-4, then METEOR (both descending), then label.

    Baseline rows follow the measured rows in their packaged order and carry
    a note marking them as reference values.
    """
    rows = []
    for r in sorted(records, key=_sort_key):
        b = r.report.bleu
        rows.append((r.model_name, str(r.hidden_dim), *(_fmt(b[n]) for n in range(1, 5)),
                     _fmt(r.report.meteor), r.label))
    for bl in baselines or ():
        rows.append((bl.model, str(bl.hidden_dim), *(_fmt(bl.bleu[n]) for n in range(1, 5)),
                     _fmt(bl.meteor), BASELINE_NOTE))

    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c) for i, c in enumerate(COLUMNS)]

    def line(cells):
        parts = [cells[0].ljust(widths[0])]
        parts += [cell.rjust(w) for cell, w in zip(cells[1:7], widths[1:7])]
        parts.append(cells[7].ljust(widths[7]))
        return "  ".join(parts).rstrip()

    out = [line(COLUMNS), "  ".join("-" * w for w in widths)]
    out += [line(row) for row in rows]
    return "\n".join(out) + "\n"
